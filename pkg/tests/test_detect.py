import json
from dataclasses import replace
import math

import numpy as np
import pytest

from perfshift.detect import (
    DetectionConfig,
    cohort_summary,
    derive_seed,
    detect_cohort,
    detect_multiple,
    detect_single,
    player_config,
    results_to_json,
    results_to_rows,
)
from perfshift.errors import ConfigError, DuplicateEntityError, SeriesTooShortError
from perfshift.series import new_metric_series
from perfshift.simgen import PlantedSpec, Segment, generate


def bern(segments, seed, entity=None):
    return generate(PlantedSpec("bernoulli", [Segment(n, p=p) for n, p in segments], seed), entity)


def gauss(segments, seed, entity=None):
    return generate(PlantedSpec("gaussian", [Segment(n, mu=m, sigma=s) for n, m, s in segments], seed), entity)


def test_config_validation():
    with pytest.raises(ConfigError):
        DetectionConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        DetectionConfig(test="t_test")
    with pytest.raises(ConfigError):
        DetectionConfig(test="fisher_exact", delta=1.0)
    with pytest.raises(ConfigError):
        DetectionConfig.from_dict({"alpha": 0.1, "bogus": 1})


def test_auto_test_resolution():
    assert DetectionConfig().resolve_test("binary") == "fisher_exact"
    assert DetectionConfig(delta=0.02).resolve_test("binary") == "permutation_shift"
    assert DetectionConfig().resolve_test("continuous") == "permutation_shift"
    with pytest.raises(ConfigError):
        DetectionConfig(test="fisher_exact").resolve_test("continuous")


def test_step_series_flagged():
    s = new_metric_series([0] * 200 + [1] * 200, "binary", "b", "whiff")
    r = detect_single(s, DetectionConfig())
    assert len(r.changepoints) == 1
    cp = r.changepoints[0]
    assert cp.t_original in (199, 200)
    assert cp.p_value < 1e-20
    assert cp.mean_before == 0.0 and cp.mean_after == pytest.approx(200 / 201)
    assert r.audit[0].method == "fisher_exact"
    assert (r.audit[0].n_before, r.audit[0].n_after) == (99, 101)


def test_constant_binary_not_flagged():
    r = detect_single(new_metric_series([1] * 400, "binary"), DetectionConfig())
    assert r.changepoints == []
    assert r.audit[0].p_value == 1.0


def test_velocity_drop_with_shift():
    s = gauss([(300, 95, 1.2), (300, 89.5, 1.2)], seed=17)
    r = detect_single(s, DetectionConfig(delta=5, seed=3))
    assert len(r.changepoints) == 1
    cp = r.changepoints[0]
    assert 5.0 <= cp.mean_before - cp.mean_after <= 6.0
    assert abs(cp.t_original - 300) <= 10


def test_too_short_for_single():
    with pytest.raises(SeriesTooShortError):
        detect_single(new_metric_series([0, 1] * 40, "binary"), DetectionConfig(min_segment=50))


def test_untestable_candidate():
    s = new_metric_series([0, 0, 1, 1], "binary")
    r = detect_single(s, DetectionConfig(min_segment=1))
    assert r.changepoints == []
    assert r.audit[0].decision == "untestable"
    assert r.audit[0].candidate == 1


def test_no_split_uses_full_series():
    s = new_metric_series([0] * 60 + [1] * 60, "binary")
    r = detect_single(s, DetectionConfig(use_split=False))
    assert r.changepoints[0].t_original == 60
    assert (r.audit[0].n_before, r.audit[0].n_after) == (60, 60)


def test_single_is_deterministic():
    s = gauss([(150, 90, 1), (150, 91, 1)], seed=2)
    cfg = DetectionConfig(delta=0.5, seed=4, n_perm=300)
    assert detect_single(s, cfg) == detect_single(s, cfg)


def test_multiple_constant_empty():
    r = detect_multiple(new_metric_series([0.0] * 300, "continuous"), DetectionConfig(n_perm=200))
    assert r.changepoints == []


def test_multiple_short_series_never_tested():
    s = new_metric_series([0, 1] * 75, "binary")
    r = detect_multiple(s, DetectionConfig(min_segment=100))
    assert r.changepoints == []
    assert [a.decision for a in r.audit] == ["skipped"]


def test_multiple_two_changes_recovered():
    hits = 0
    reps = 200
    for seed in range(reps):
        s = bern([(200, 0.1), (200, 0.5), (200, 0.1)], seed)
        locs = detect_multiple(s, DetectionConfig()).locations
        if all(any(abs(t - planted) <= 40 for t in locs) for planted in (200, 400)):
            hits += 1
    assert hits / reps >= 0.90


def test_multiple_segment_guards():
    for seed in range(40):
        s = bern([(150, 0.1), (120, 0.6), (130, 0.2), (200, 0.7)], seed)
        cfg = DetectionConfig(min_segment=50)
        r = detect_multiple(s, cfg)
        locs = r.locations
        assert locs == sorted(set(locs))
        bounds = [0] + locs + [len(s)]
        assert all(b - a >= cfg.min_segment for a, b in zip(bounds, bounds[1:]))
        for a in r.audit:
            if a.decision == "flagged":
                assert a.candidate - a.segment_start + 1 >= cfg.min_segment
                assert a.segment_end - a.candidate >= cfg.min_segment


def test_bonferroni_divides_by_running_count():
    s = bern([(200, 0.1), (200, 0.6), (200, 0.1)], seed=5)
    r = detect_multiple(s, DetectionConfig(correction="bonferroni"))
    tested = [a for a in r.audit if a.p_value is not None]
    assert len(tested) >= 2
    for k, a in enumerate(tested, start=1):
        assert a.alpha_used == pytest.approx(0.05 / k)
    for cp in r.changepoints:
        entry = next(a for a in tested if a.candidate == cp.t_original)
        assert cp.p_value <= entry.alpha_used


def test_flagged_p_values_below_alpha():
    for seed in range(20):
        r = detect_multiple(bern([(300, 0.2), (300, 0.35)], seed), DetectionConfig())
        assert all(cp.p_value <= 0.05 for cp in r.changepoints)


def test_timestamp_carried():
    values = [0] * 100 + [1] * 100
    stamps = [f"2023-{4 + i // 40:02d}-01" for i in range(200)]
    s = new_metric_series(values, "binary", "b", "whiff", timestamps=stamps)
    cp = detect_single(s, DetectionConfig()).changepoints[0]
    assert cp.timestamp == stamps[cp.t_original - 1]


def test_derive_seed_stable():
    assert derive_seed(7, "abc") == derive_seed(7, "abc")
    assert derive_seed(7, "abc") != derive_seed(7, "abd")
    assert 0 <= derive_seed(1, 2, 3) < 2**63


def test_cohort_matches_serial_detect_multiple():
    players = [gauss([(100, 90, 1), (100, 91.5, 1)], seed=i, entity=f"p{i}") for i in range(6)]
    cfg = DetectionConfig(delta=0.5, n_perm=200)
    res = detect_cohort(players, cfg)
    for p in players:
        assert res[p.entity_id] == detect_multiple(p, player_config(cfg, p.entity_id))


def test_cohort_duplicate_ids():
    s = new_metric_series([0, 1] * 100, "binary", "same")
    with pytest.raises(DuplicateEntityError):
        detect_cohort([s, s], DetectionConfig())


def test_cohort_parallel_identical():
    players = [bern([(150, 0.2), (150, 0.2 + 0.05 * (i % 5))], seed=i, entity=f"b{i}") for i in range(40)]
    cfg = DetectionConfig(seed=7)
    serial = detect_cohort(players, cfg, 1)
    parallel = detect_cohort(players, cfg, 8)
    assert list(serial) == list(parallel)
    assert results_to_json(list(serial.values())) == results_to_json(list(parallel.values()))


def test_cohort_null_and_no_split():
    players = [bern([(400, 0.3)], seed=10_000 + i, entity=f"n{i}") for i in range(1000)]
    split = cohort_summary(detect_cohort(players, DetectionConfig(seed=1)))
    assert split["players"] == 1000
    assert split["flagged_fraction"] <= 0.05 + 2 * math.sqrt(0.05 * 0.95 / 1000)
    nosplit = cohort_summary(detect_cohort(players, DetectionConfig(seed=1, use_split=False)))
    assert nosplit["flagged_fraction"] >= 3 * split["flagged_fraction"]


def test_null_calibration_gaussian():
    reps = 300
    flags = sum(
        detect_multiple(gauss([(300, 93, 1.1)], seed=500 + i), DetectionConfig(n_perm=500, seed=i)).flagged
        for i in range(reps)
    )
    rate = flags / reps
    assert rate <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / reps)


def test_observed_direction_inflates_null_rate():
    reps = 300
    cfg = DetectionConfig(n_perm=500, perm_alternative="observed")
    flags = sum(
        detect_multiple(gauss([(300, 93, 1.1)], seed=500 + i), replace(cfg, seed=i)).flagged
        for i in range(reps)
    )
    assert flags / reps > 0.07


def test_power_monotone_grid():
    reps = 150
    grid = {}
    for effect in (0.05, 0.1, 0.2):
        for n in (200, 400, 800):
            grid[effect, n] = sum(
                detect_multiple(bern([(n // 2, 0.3), (n // 2, 0.3 + effect)], seed), DetectionConfig()).flagged
                for seed in range(reps)
            ) / reps
    slack = 2 * math.sqrt(0.25 / reps)
    for n in (200, 400, 800):
        assert grid[0.05, n] <= grid[0.1, n] + slack <= grid[0.2, n] + 2 * slack
    for effect in (0.05, 0.1, 0.2):
        assert grid[effect, 200] <= grid[effect, 400] + slack <= grid[effect, 800] + 2 * slack
    assert grid[0.2, 800] > 0.9


def test_serialization_shapes():
    s = new_metric_series([0] * 200 + [1] * 200, "binary", "b9", "chase")
    r = detect_multiple(s, DetectionConfig())
    doc = json.loads(results_to_json([r], manifest="manifest.json"))
    entry = doc["results"][0]
    assert set(entry) == {"entity_id", "metric", "changepoints", "audit", "config"}
    assert entry["config"]["alpha"] == 0.05
    rows = results_to_rows([r])
    assert rows[0][:3] == ["b9", "chase", 199]
