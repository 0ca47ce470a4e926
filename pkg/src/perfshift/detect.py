"""Split-sample changepoint detection and binary segmentation.

A segment is tested by locating the likelihood-ratio candidate on its
odd-position observations and confirming it with a hypothesis test on the
even-position observations, which are split at the candidate's original
index. Binary segmentation repeats this on the pieces left and right of every
confirmed changepoint.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from perfshift.errors import ConfigError, DuplicateEntityError, SeriesTooShortError
from perfshift.hypotests import (
    FISHER,
    PERMUTATION,
    ContingencyTable,
    fisher_exact,
    perm_test_shift,
)
from perfshift.loglik import DEFAULT_MIN_SIDE, argmax_candidate, lambda_profile
from perfshift.series import BINARY, MetricSeries, split_odd_even

AUTO = "auto"
TESTS = (FISHER, PERMUTATION, AUTO)
CORRECTIONS = ("none", "bonferroni")
PERM_ALTERNATIVES = ("two-sided", "observed")

FLAGGED = "flagged"
NOT_SIGNIFICANT = "not_significant"
UNTESTABLE = "untestable"
SKIPPED = "skipped"


@dataclass(frozen=True)
class DetectionConfig:
    """Settings shared by every test in a detection run.

    Parameters
    ----------
    alpha : float
        Level of each confirmation test.
    delta : float
        Shift in metric units; only changes larger than this are flagged.
    test : {"auto", "fisher_exact", "permutation_shift"}
        ``auto`` uses Fisher for binary data with ``delta == 0`` and the
        shifted permutation test otherwise.
    min_segment : int
        Binary segmentation never creates a segment shorter than this, and a
        candidate must leave at least this many observations on each side.
    min_side : int, optional
        Minimum points per side inside the likelihood scan. Defaults to 1 for
        binary and 2 for continuous series.
    n_perm : int
        Monte Carlo draws when a permutation test is too large to enumerate.
    seed : int
    use_split : bool
        ``False`` scans and tests on the same observations (the no-splitting
        baseline).
    correction : {"none", "bonferroni"}
        Bonferroni divides ``alpha`` by the number of tests performed so far
        on the series, counting the current one.
    exact_cutoff : int
        Largest number of relabelings the permutation test enumerates.
    perm_alternative : {"two-sided", "observed"}
        Sidedness of the permutation test. ``observed`` tests one-sided in the
        direction the held-out data moved, which can flag up to ``2 * alpha``
        of null series when ``delta`` is 0.
    """

    alpha: float = 0.05
    delta: float = 0.0
    test: str = AUTO
    min_segment: int = 50
    min_side: Optional[int] = None
    n_perm: int = 2000
    seed: int = 0
    use_split: bool = True
    correction: str = "none"
    exact_cutoff: int = 20000
    perm_alternative: str = "two-sided"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha={self.alpha} must lie in (0, 1)")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.test not in TESTS:
            raise ConfigError(f"test must be one of {TESTS}, got {self.test!r}")
        if self.correction not in CORRECTIONS:
            raise ConfigError(f"correction must be one of {CORRECTIONS}, got {self.correction!r}")
        if self.min_segment < 1:
            raise ConfigError("min_segment must be positive")
        if self.min_side is not None and self.min_side < 1:
            raise ConfigError("min_side must be positive")
        if self.n_perm < 1:
            raise ConfigError("n_perm must be positive")
        if self.exact_cutoff < 0:
            raise ConfigError("exact_cutoff must be nonnegative")
        if self.perm_alternative not in PERM_ALTERNATIVES:
            raise ConfigError(f"perm_alternative must be one of {PERM_ALTERNATIVES}")
        if self.test == FISHER and self.delta > 0:
            raise ConfigError("fisher_exact cannot test a shifted null; use permutation_shift")

    def resolve_test(self, kind: str) -> str:
        if self.test == AUTO:
            return FISHER if kind == BINARY and self.delta == 0 else PERMUTATION
        if self.test == FISHER and kind != BINARY:
            raise ConfigError("fisher_exact needs a binary series")
        return self.test

    def resolve_min_side(self, kind: str) -> int:
        scan_kind = "bernoulli" if kind == BINARY else "gaussian"
        side = DEFAULT_MIN_SIDE[scan_kind] if self.min_side is None else self.min_side
        if scan_kind == "gaussian" and side < 2:
            raise ConfigError("continuous series need min_side >= 2")
        return side

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DetectionConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Changepoint:
    t_original: int
    p_value: float
    mean_before: float
    mean_after: float
    candidate_lambda: float
    timestamp: Optional[str] = None


@dataclass(frozen=True)
class AuditEntry:
    """One segment visited by the detector and what happened to it."""

    segment_start: int
    segment_end: int
    decision: str
    candidate: Optional[int] = None
    candidate_lambda: Optional[float] = None
    p_value: Optional[float] = None
    alpha_used: Optional[float] = None
    method: Optional[str] = None
    n_before: Optional[int] = None
    n_after: Optional[int] = None
    note: str = ""


@dataclass(frozen=True)
class DetectionResult:
    entity_id: str
    metric: str
    changepoints: List[Changepoint] = field(default_factory=list)
    audit: List[AuditEntry] = field(default_factory=list)
    config: Optional[DetectionConfig] = None

    @property
    def flagged(self) -> bool:
        return bool(self.changepoints)

    @property
    def locations(self) -> List[int]:
        return [cp.t_original for cp in self.changepoints]

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "metric": self.metric,
            "changepoints": [asdict(cp) for cp in self.changepoints],
            "audit": [asdict(a) for a in self.audit],
            "config": self.config.to_dict() if self.config else None,
        }


CSV_COLUMNS = (
    "entity_id",
    "metric",
    "t_original",
    "timestamp",
    "p_value",
    "mean_before",
    "mean_after",
    "candidate_lambda",
)


def results_to_json(results: Sequence[DetectionResult], **extra) -> str:
    """Serialize results; identical inputs always give identical text."""
    doc = dict(extra)
    doc["results"] = [r.to_dict() for r in results]
    return json.dumps(doc, indent=2, sort_keys=True)


def results_to_rows(results: Sequence[DetectionResult]) -> List[list]:
    """Flat rows, one per flagged changepoint, in :data:`CSV_COLUMNS` order."""
    rows = []
    for r in results:
        for cp in r.changepoints:
            rows.append(
                [r.entity_id, r.metric, cp.t_original, cp.timestamp or "", cp.p_value,
                 cp.mean_before, cp.mean_after, cp.candidate_lambda]
            )
    return rows


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts (not Python's salted hash)."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def _test_segment(seg: MetricSeries, cfg: DetectionConfig, alpha: float):
    """Run one split-sample test on ``seg``; return (audit entry, changepoint or None)."""
    start, end = int(seg.original_index[0]), int(seg.original_index[-1])
    method = cfg.resolve_test(seg.kind)
    side = cfg.resolve_min_side(seg.kind)
    m = cfg.min_segment
    L = len(seg)

    def untestable(note, **kw):
        entry = AuditEntry(start, end, UNTESTABLE, alpha_used=alpha, method=method, note=note, **kw)
        return entry, None

    if cfg.use_split:
        halves = split_odd_even(seg)
        scan, held_out = halves.odd, halves.even
    else:
        scan = held_out = seg
    if len(scan) < 2 * side:
        return untestable("scan half too short for the likelihood profile")

    profile = lambda_profile(scan, side)
    # candidate must leave >= m observations of the full segment on each side
    seg_pos = np.searchsorted(seg.original_index, scan.original_index) + 1
    lo = int(np.searchsorted(seg_pos, m, side="left")) + 1
    hi = int(np.searchsorted(seg_pos, L - m, side="right"))
    profile = profile.restrict(lo, hi)
    if len(profile) == 0:
        return untestable("no admissible split leaves min_segment points per side")
    cand = argmax_candidate(profile, scan)

    before_mask = held_out.original_index <= cand.t_original
    before, after = held_out.values[before_mask], held_out.values[~before_mask]
    if before.size == 0 or after.size == 0:
        return untestable(
            "held-out observations all fall on one side of the candidate",
            candidate=cand.t_original,
            candidate_lambda=cand.lambda_max,
        )

    if method == FISHER:
        outcome = fisher_exact(ContingencyTable.from_samples(before, after))
    else:
        outcome = perm_test_shift(
            before,
            after,
            delta=cfg.delta,
            n_perm=cfg.n_perm,
            seed=derive_seed(cfg.seed, start, end),
            exact_cutoff=cfg.exact_cutoff,
            alternative=cfg.perm_alternative,
        )
    flagged = outcome.p_value <= alpha
    entry = AuditEntry(
        segment_start=start,
        segment_end=end,
        decision=FLAGGED if flagged else NOT_SIGNIFICANT,
        candidate=cand.t_original,
        candidate_lambda=cand.lambda_max,
        p_value=outcome.p_value,
        alpha_used=alpha,
        method=method,
        n_before=int(before.size),
        n_after=int(after.size),
    )
    if not flagged:
        return entry, None
    full_before = seg.original_index <= cand.t_original
    cp = Changepoint(
        t_original=cand.t_original,
        p_value=outcome.p_value,
        mean_before=float(seg.values[full_before].mean()),
        mean_after=float(seg.values[~full_before].mean()),
        candidate_lambda=cand.lambda_max,
        timestamp=seg.timestamp_at(cand.t_original),
    )
    return entry, cp


def _min_length(s: MetricSeries, cfg: DetectionConfig) -> int:
    return 2 * max(cfg.min_segment, cfg.resolve_min_side(s.kind), 2)


def detect_single(s: MetricSeries, cfg: DetectionConfig = DetectionConfig()) -> DetectionResult:
    """Test the whole series for one changepoint.

    Raises
    ------
    SeriesTooShortError
        If ``s`` has fewer than ``2 * max(min_segment, min_side, 2)`` points.
    """
    need = _min_length(s, cfg)
    if len(s) < need:
        raise SeriesTooShortError(f"series of length {len(s)} needs at least {need} points")
    entry, cp = _test_segment(s, cfg, cfg.alpha)
    return DetectionResult(
        entity_id=s.entity_id,
        metric=s.label,
        changepoints=[cp] if cp else [],
        audit=[entry],
        config=cfg,
    )


def detect_multiple(s: MetricSeries, cfg: DetectionConfig = DetectionConfig()) -> DetectionResult:
    """Binary segmentation over ``s``.

    Segments are processed first-in first-out. A segment shorter than
    ``2 * min_segment`` is skipped; a flagged split at ``t`` queues
    ``(start, t)`` and ``(t + 1, end)`` when each has at least
    ``min_segment`` points. Series too short for even the root test yield an
    empty result rather than an error.
    """
    cfg.resolve_test(s.kind)
    m = cfg.min_segment
    queue = deque([(1, len(s))])
    found: List[Changepoint] = []
    audit: List[AuditEntry] = []
    n_tests = 0
    while queue:
        a, b = queue.popleft()
        if b - a + 1 < 2 * m:
            audit.append(
                AuditEntry(int(s.original_index[a - 1]), int(s.original_index[b - 1]), SKIPPED,
                           note="segment shorter than 2*min_segment")
            )
            continue
        seg = s.segment(a, b)
        alpha = cfg.alpha
        if cfg.correction == "bonferroni":
            alpha = cfg.alpha / (n_tests + 1)
        entry, cp = _test_segment(seg, cfg, alpha)
        if entry.p_value is not None:
            n_tests += 1
        audit.append(entry)
        if cp is None:
            continue
        t = s.position_of(cp.t_original)
        if t - a + 1 >= m:
            queue.append((a, t))
        if b - t >= m:
            queue.append((t + 1, b))
        found.append(cp)
    found.sort(key=lambda cp: cp.t_original)
    return DetectionResult(
        entity_id=s.entity_id, metric=s.label, changepoints=found, audit=audit, config=cfg
    )


def player_config(cfg: DetectionConfig, entity_id: str) -> DetectionConfig:
    """Config with the per-entity seed used by :func:`detect_cohort`."""
    return replace(cfg, seed=derive_seed(cfg.seed, entity_id))


def _detect_player(args):
    s, cfg = args
    return detect_multiple(s, player_config(cfg, s.entity_id))


def detect_cohort(
    players: Sequence[MetricSeries], cfg: DetectionConfig = DetectionConfig(), parallelism: int = 1
) -> Dict[str, DetectionResult]:
    """Binary segmentation for every player, optionally across processes.

    Each player runs with a seed derived from ``(cfg.seed, entity_id)``, so the
    returned mapping (in input order) is the same for any ``parallelism``.
    """
    ids = [p.entity_id for p in players]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateEntityError(f"duplicate entity_id(s): {dupes}")
    if parallelism < 1:
        raise ConfigError("parallelism must be positive")
    work = [(p, cfg) for p in players]
    if parallelism == 1 or len(work) < 2:
        results = [_detect_player(w) for w in work]
    else:
        chunk = max(1, len(work) // (4 * parallelism))
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_detect_player, work, chunksize=chunk))
    return dict(zip(ids, results))


def cohort_summary(results: Dict[str, DetectionResult]) -> dict:
    """Counts of flagged players and changepoints."""
    n = len(results)
    flagged = sum(r.flagged for r in results.values())
    return {
        "players": n,
        "flagged_players": flagged,
        "flagged_fraction": flagged / n if n else 0.0,
        "changepoints": sum(len(r.changepoints) for r in results.values()),
    }
