"""Synthetic streams with planted changepoints and a seeded Monte Carlo harness."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from perfshift.detect import DetectionConfig, derive_seed, detect_multiple
from perfshift.errors import PerfShiftError
from perfshift.series import BINARY, CONTINUOUS, MetricSeries, new_metric_series

BERNOULLI = "bernoulli"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class Segment:
    """A run of ``length`` draws: Bernoulli(``p``) or Normal(``mu``, ``sigma``)."""

    length: int
    p: Optional[float] = None
    mu: Optional[float] = None
    sigma: Optional[float] = None


@dataclass(frozen=True)
class PlantedSpec:
    kind: str
    segments: Tuple[Segment, ...]
    seed: int = 0

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(**s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if self.kind not in (BERNOULLI, GAUSSIAN):
            raise PerfShiftError(f"unknown kind {self.kind!r}")
        if not segs:
            raise PerfShiftError("spec needs at least one segment")
        for s in segs:
            if s.length < 1:
                raise PerfShiftError("segment length must be positive")
            if self.kind == BERNOULLI:
                if s.p is None or not 0.0 <= s.p <= 1.0:
                    raise PerfShiftError(f"bernoulli segment needs p in [0, 1], got {s.p}")
            else:
                if s.mu is None or s.sigma is None or not s.sigma > 0:
                    raise PerfShiftError("gaussian segment needs mu and sigma > 0")

    @property
    def n(self) -> int:
        return sum(s.length for s in self.segments)

    @property
    def changepoints(self) -> List[int]:
        """Planted locations: the last index of every segment but the final one."""
        return np.cumsum([s.length for s in self.segments])[:-1].tolist()

    @classmethod
    def from_dict(cls, data: dict) -> "PlantedSpec":
        return cls(kind=data["kind"], segments=tuple(data["segments"]), seed=data.get("seed", 0))

    def to_dict(self) -> dict:
        segs = [{k: v for k, v in vars(s).items() if v is not None} for s in self.segments]
        return {"kind": self.kind, "segments": segs, "seed": self.seed}


@dataclass(frozen=True)
class RateEstimate:
    flag_rate: float
    localization_mae: Optional[float]
    reps: int
    mc_stderr: float


def generate(spec: PlantedSpec, entity_id: Optional[str] = None) -> MetricSeries:
    rng = np.random.default_rng(spec.seed)
    parts = []
    for s in spec.segments:
        if spec.kind == BERNOULLI:
            parts.append((rng.random(s.length) < s.p).astype(float))
        else:
            parts.append(rng.normal(s.mu, s.sigma, s.length))
    kind = BINARY if spec.kind == BERNOULLI else CONTINUOUS
    return new_metric_series(
        np.concatenate(parts), kind, entity_id=entity_id or f"sim-{spec.seed}", label=spec.kind
    )


def _nearest_errors(flags: Sequence[int], planted: Sequence[int]) -> List[int]:
    return [min(abs(f - p) for p in planted) for f in flags]


def _one_rep(args):
    spec, cfg, seed, rep = args
    rep_spec = replace(spec, seed=derive_seed(seed, "data", rep))
    rep_cfg = replace(cfg, seed=derive_seed(seed, "test", rep))
    return detect_multiple(generate(rep_spec), rep_cfg).locations


def run_reps(
    spec: PlantedSpec, cfg: DetectionConfig, reps: int, seed: int = 0, jobs: int = 1
) -> List[List[int]]:
    """Flag locations from ``reps`` independent draws; rep ``i`` is seeded from ``(seed, i)``."""
    if reps < 1:
        raise PerfShiftError("reps must be positive")
    work = [(spec, cfg, seed, i) for i in range(reps)]
    if jobs <= 1:
        return [_one_rep(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_one_rep, work, chunksize=max(1, reps // (4 * jobs))))


def summarize_reps(flags: List[List[int]], planted: Sequence[int]) -> RateEstimate:
    reps = len(flags)
    hits = [f for f in flags if f]
    rate = len(hits) / reps
    mae = None
    if planted and hits:
        if len(planted) == 1:
            # per flagged rep, the flag closest to the single planted point
            errs = [min(_nearest_errors(f, planted)) for f in hits]
        else:
            errs = [e for f in hits for e in _nearest_errors(f, planted)]
        mae = float(np.mean(errs))
    return RateEstimate(rate, mae, reps, math.sqrt(rate * (1.0 - rate) / reps))


def estimate_rates(
    spec: PlantedSpec, cfg: DetectionConfig, reps: int, seed: int = 0, jobs: int = 1
) -> RateEstimate:
    """Flag rate (fraction of reps with at least one flag) and localization error.

    ``localization_mae`` is ``None`` for specs without a planted change or when
    nothing was flagged.
    """
    return summarize_reps(run_reps(spec, cfg, reps, seed, jobs), spec.changepoints)
