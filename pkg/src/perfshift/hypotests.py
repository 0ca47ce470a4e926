"""Confirmation tests for a candidate split.

``fisher_exact`` compares before/after success counts of a binary stream.
``perm_test_shift`` is a two-sample permutation test whose null allows the
after-sample mean to differ from the before-sample mean by up to ``delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import gammaln

from perfshift.errors import DegenerateTableError, EmptySampleError, PerfShiftError

FISHER = "fisher_exact"
PERMUTATION = "permutation_shift"
EXACT = "exact"

EXACT_CUTOFF = 20000
# relative slack for "no more likely than observed" and "at least as extreme"
_REL_TOL = 1e-7


@dataclass(frozen=True)
class ContingencyTable:
    """2x2 counts. Rows are before/after the split, columns success/failure.

    ::

        [[a, b],
         [c, d]]
    """

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise PerfShiftError(f"table entry {name}={v} must be a nonnegative integer")
            object.__setattr__(self, name, int(v))

    @classmethod
    def from_samples(cls, before, after) -> "ContingencyTable":
        before = np.asarray(before)
        after = np.asarray(after)
        a = int(before.sum())
        c = int(after.sum())
        return cls(a, before.size - a, c, after.size - c)

    @property
    def rows(self):
        return [[self.a, self.b], [self.c, self.d]]


@dataclass(frozen=True)
class TestOutcome:
    """p-value plus enough metadata to reproduce it.

    ``statistic`` is the after-minus-before mean difference, with the shift
    already applied for the permutation test. ``permutations_used`` is
    ``"exact"`` when every relabeling was enumerated.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    p_value: float
    statistic: float
    method: str
    alternative: str
    permutations_used: Union[int, str]
    seed: Optional[int] = None
    delta: float = 0.0


def _log_comb(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def hypergeom_pmf(a_values, row1: int, row2: int, col1: int) -> np.ndarray:
    """P(top-left cell = a) for a 2x2 table with the given margins."""
    k = np.asarray(a_values, dtype=float)
    n = row1 + row2
    return np.exp(_log_comb(row1, k) + _log_comb(row2, col1 - k) - _log_comb(n, col1))


def fisher_exact(table: ContingencyTable) -> TestOutcome:
    """Two-sided Fisher exact test.

    The p-value sums the hypergeometric probabilities of every table with the
    observed margins that is no more likely than the observed one.

    Raises
    ------
    DegenerateTableError
        If either row is empty, so there is no before or no after sample.
    """
    a, b, c, d = table.a, table.b, table.c, table.d
    row1, row2 = a + b, c + d
    if row1 == 0 or row2 == 0:
        raise DegenerateTableError(f"table {table.rows} has an empty row")
    col1 = a + c
    lo, hi = max(0, col1 - row2), min(row1, col1)
    support = np.arange(lo, hi + 1)
    probs = hypergeom_pmf(support, row1, row2, col1)
    p_obs = probs[a - lo]
    p = float(probs[probs <= p_obs * (1.0 + _REL_TOL)].sum())
    return TestOutcome(
        p_value=min(1.0, p),
        statistic=c / row2 - a / row1,
        method=FISHER,
        alternative="two-sided",
        permutations_used=EXACT,
    )


def n_relabelings(nx: int, ny: int) -> int:
    return math.comb(nx + ny, ny)


ALTERNATIVES = ("observed", "two-sided", "greater", "less")


def _one_sided(x, y, direction, delta, n_perm, seed, exact_cutoff):
    """p-value for the after-minus-before difference exceeding ``delta`` in ``direction``.

    ``y`` is shifted by ``delta`` against ``direction`` before relabeling.
    Returns ``(p, shifted statistic, permutations used)``.
    """
    y_shift = y - direction * delta
    nx, ny = x.size, y.size
    pooled = np.concatenate([x, y_shift])
    # difference in means is increasing in the sum of the y-labeled group,
    # so comparing (signed) group sums is equivalent and cheaper
    total = pooled.sum()
    observed = direction * y_shift.sum()
    tol = _REL_TOL * max(1.0, float(np.abs(pooled).max()) * ny)
    statistic = float(y_shift.mean() - x.mean())

    if n_relabelings(nx, ny) <= exact_cutoff:
        # enumerate the smaller group; its sum determines the other
        k = min(nx, ny)
        combos = np.fromiter(
            (i for combo in combinations(range(nx + ny), k) for i in combo),
            dtype=np.int64,
        ).reshape(-1, k)
        sums = pooled[combos].sum(axis=1)
        if k != ny:
            sums = total - sums
        hits = np.count_nonzero(direction * sums >= observed - tol)
        return hits / combos.shape[0], statistic, EXACT

    rng = np.random.default_rng(seed)
    hits = 0
    remaining = n_perm
    batch = max(1, min(n_perm, 2_000_000 // (nx + ny)))
    while remaining:
        m = min(batch, remaining)
        draws = rng.permuted(np.broadcast_to(pooled, (m, nx + ny)), axis=1)
        sums = draws[:, :ny].sum(axis=1)
        hits += int(np.count_nonzero(direction * sums >= observed - tol))
        remaining -= m
    return (1 + hits) / (1 + n_perm), statistic, n_perm


def perm_test_shift(
    x: Sequence[float],
    y: Sequence[float],
    delta: float = 0.0,
    n_perm: int = 2000,
    seed: Optional[int] = 0,
    exact_cutoff: int = EXACT_CUTOFF,
    alternative: str = "observed",
) -> TestOutcome:
    """Permutation test of "after differs from before by more than ``delta``".

    With ``alternative="observed"`` the after sample ``y`` is moved toward
    the before sample ``x`` by ``delta`` along the sign of the observed
    difference, and the shifted difference in means is compared, one-sided
    in that direction, against relabelings of the pooled values.
    ``"greater"``/``"less"`` fix the direction instead. ``"two-sided"``
    returns twice the smaller of the two one-sided p-values, which keeps the
    level at ``alpha`` when the direction is not known in advance; the
    data-chosen ``"observed"`` direction alone can reach ``2 * alpha`` when
    ``delta`` is 0.

    Relabelings are enumerated when there are at most ``exact_cutoff`` of
    them; otherwise ``n_perm`` are drawn with the given seed and the add-one
    estimate ``(1 + hits) / (1 + n_perm)`` is used.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise EmptySampleError("both samples need at least one value")
    if delta < 0:
        raise PerfShiftError("delta must be nonnegative")
    if n_perm < 1:
        raise PerfShiftError("n_perm must be positive")
    if alternative not in ALTERNATIVES:
        raise PerfShiftError(f"alternative must be one of {ALTERNATIVES}")

    observed_dir = 1.0 if y.mean() - x.mean() >= 0 else -1.0
    if alternative == "two-sided":
        p_up, stat_up, used = _one_sided(x, y, 1.0, delta, n_perm, seed, exact_cutoff)
        p_down, stat_down, _ = _one_sided(x, y, -1.0, delta, n_perm, seed, exact_cutoff)
        p = 2.0 * min(p_up, p_down)
        statistic = stat_up if observed_dir > 0 else stat_down
        label = "two-sided"
    else:
        if alternative == "observed":
            direction = observed_dir
        else:
            direction = 1.0 if alternative == "greater" else -1.0
        p, statistic, used = _one_sided(x, y, direction, delta, n_perm, seed, exact_cutoff)
        label = "greater" if direction > 0 else "less"

    return TestOutcome(
        p_value=float(min(1.0, p)),
        statistic=statistic,
        method=PERMUTATION,
        alternative=label,
        permutations_used=used,
        seed=seed if used != EXACT else None,
        delta=float(delta),
    )
