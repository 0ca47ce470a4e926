import json
import math

import numpy as np
import pytest

from perfshift.detect import DetectionConfig
from perfshift.errors import PerfShiftError
from perfshift.simgen import (
    PlantedSpec,
    Segment,
    estimate_rates,
    generate,
    run_reps,
    summarize_reps,
)


def test_degenerate_rate_gives_all_ones():
    s = generate(PlantedSpec("bernoulli", [Segment(10, p=1.0)], seed=3))
    assert s.kind == "binary"
    assert s.values.tolist() == [1.0] * 10


def test_gaussian_halves_near_planted_means():
    spec = PlantedSpec("gaussian", [Segment(300, mu=95, sigma=1.2), Segment(300, mu=89.5, sigma=1.2)], seed=11)
    v = generate(spec).values
    tol = 3 * 1.2 / math.sqrt(300)
    assert abs(v[:300].mean() - 95) < tol
    assert abs(v[300:].mean() - 89.5) < tol


def test_generate_is_deterministic():
    spec = PlantedSpec("bernoulli", [Segment(50, p=0.3), Segment(50, p=0.7)], seed=5)
    assert np.array_equal(generate(spec).values, generate(spec).values)
    other = generate(PlantedSpec("bernoulli", spec.segments, seed=6)).values
    assert not np.array_equal(generate(spec).values, other)


def test_spec_properties_and_round_trip():
    spec = PlantedSpec("gaussian", [{"length": 100, "mu": 0, "sigma": 1}, {"length": 50, "mu": 2, "sigma": 1}], seed=2)
    assert spec.n == 150
    assert spec.changepoints == [100]
    again = PlantedSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec


@pytest.mark.parametrize(
    "kind, seg",
    [
        ("bernoulli", Segment(10, p=1.5)),
        ("bernoulli", Segment(10)),
        ("gaussian", Segment(10, mu=0, sigma=0)),
        ("gaussian", Segment(0, mu=0, sigma=1)),
        ("poisson", Segment(10, p=0.5)),
    ],
)
def test_invalid_specs_rejected(kind, seg):
    with pytest.raises(PerfShiftError):
        PlantedSpec(kind, [seg])


def test_empty_spec_rejected():
    with pytest.raises(PerfShiftError):
        PlantedSpec("bernoulli", [])


def test_reps_must_be_positive():
    with pytest.raises(PerfShiftError):
        estimate_rates(PlantedSpec("bernoulli", [Segment(200, p=0.3)]), DetectionConfig(), reps=0)


def test_null_rate_has_no_localization():
    est = estimate_rates(PlantedSpec("bernoulli", [Segment(400, p=0.3)]), DetectionConfig(), reps=200)
    assert est.localization_mae is None
    assert est.flag_rate <= 0.05 + 2 * math.sqrt(0.05 * 0.95 / 200)
    assert est.mc_stderr == pytest.approx(math.sqrt(est.flag_rate * (1 - est.flag_rate) / 200))


def test_planted_change_power_and_localization():
    spec = PlantedSpec("bernoulli", [Segment(200, p=0.1), Segment(200, p=0.6)])
    est = estimate_rates(spec, DetectionConfig(), reps=100, seed=4)
    assert est.flag_rate >= 0.95
    assert est.localization_mae <= 40


def test_composite_null_calibration():
    cfg = DetectionConfig(delta=1.0, n_perm=500)
    bound = 0.05 + 2 * math.sqrt(0.05 * 0.95 / 200)
    flat = PlantedSpec("gaussian", [Segment(600, mu=94, sigma=1.2)])
    rise = PlantedSpec("gaussian", [Segment(300, mu=94, sigma=1.2), Segment(300, mu=94.12, sigma=1.2)])
    assert estimate_rates(flat, cfg, reps=200).flag_rate <= bound
    assert estimate_rates(rise, cfg, reps=200).flag_rate <= bound


def test_parallel_equals_serial():
    spec = PlantedSpec("bernoulli", [Segment(150, p=0.2), Segment(150, p=0.45)])
    cfg = DetectionConfig(min_segment=30)
    assert run_reps(spec, cfg, 24, seed=9, jobs=1) == run_reps(spec, cfg, 24, seed=9, jobs=4)


def test_summary_single_change_uses_nearest_flag():
    est = summarize_reps([[190, 260], [], [205]], [200])
    assert (est.flag_rate, est.localization_mae, est.reps) == (2 / 3, 7.5, 3)
    assert est.mc_stderr == pytest.approx(math.sqrt((2 / 3) * (1 / 3) / 3))


def test_summary_multi_change_matches_each_flag():
    est = summarize_reps([[95, 210], [300]], [100, 200])
    assert est.localization_mae == pytest.approx((5 + 10 + 100) / 3)
