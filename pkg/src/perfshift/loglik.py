"""Two-segment likelihood-ratio profiles for Bernoulli and Gaussian streams.

For a split after position ``t`` the profile value is the log-likelihood of
separate MLE fits to ``y[1..t]`` and ``y[t+1..T]`` minus the log-likelihood of
one pooled fit. Both kinds are evaluated for every split at once from prefix
sums, so a profile costs O(T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from perfshift.errors import PerfShiftError, SeriesTooShortError
from perfshift.series import MetricSeries

BERNOULLI = "bernoulli"
GAUSSIAN = "gaussian"

VARIANCE_FLOOR = 1e-9
DEFAULT_MIN_SIDE = {BERNOULLI: 1, GAUSSIAN: 2}


@dataclass(frozen=True, eq=False)
class LambdaProfile:
    """Profile values for splits ``t_min..t_max`` (positions in the scanned series)."""

    lam: np.ndarray
    t_min: int
    t_max: int
    kind: str

    @property
    def t_range(self):
        return (self.t_min, self.t_max)

    @property
    def splits(self) -> np.ndarray:
        return np.arange(self.t_min, self.t_max + 1)

    def __len__(self) -> int:
        return int(self.lam.size)

    def restrict(self, lo: int, hi: int) -> "LambdaProfile":
        """Keep only splits in ``[lo, hi]``; the result may be empty."""
        lo, hi = max(lo, self.t_min), min(hi, self.t_max)
        if hi < lo:
            return LambdaProfile(np.empty(0), lo, lo - 1, self.kind)
        return LambdaProfile(self.lam[lo - self.t_min : hi - self.t_min + 1], lo, hi, self.kind)


@dataclass(frozen=True)
class CandidateChangepoint:
    t_local: int
    t_original: int
    lambda_max: float


def _bernoulli_loglik(k, n):
    # sum log-likelihood at the MLE k/n, with 0 log 0 = 0
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    return xlogy(k, k / n) + xlogy(n - k, (n - k) / n)


def bernoulli_lambda_profile(bits: MetricSeries, min_side: int = 1) -> LambdaProfile:
    """Bernoulli profile for every split leaving ``min_side`` points per side."""
    if min_side < 1:
        raise PerfShiftError("min_side must be at least 1")
    y = bits.values
    if bits.kind != "binary":
        raise PerfShiftError("bernoulli profile needs a binary series")
    T = y.size
    if T < 2 * min_side:
        raise SeriesTooShortError(f"series of length {T} is shorter than 2*min_side={2 * min_side}")
    t = np.arange(min_side, T - min_side + 1)
    csum = np.cumsum(y)
    total = csum[-1]
    left_k = csum[t - 1]
    lam = (
        _bernoulli_loglik(left_k, t)
        + _bernoulli_loglik(total - left_k, T - t)
        - _bernoulli_loglik(total, T)
    )
    return LambdaProfile(lam, int(t[0]), int(t[-1]), BERNOULLI)


def _running_m2(y: np.ndarray) -> np.ndarray:
    """Sum of squared deviations about the mean of every prefix of ``y``.

    Welford's increments are nonnegative, so their cumulative sum avoids the
    cancellation in ``sum(y**2) - n * mean**2`` when a prefix is nearly constant.
    """
    k = np.arange(1, y.size + 1)
    means = np.cumsum(y) / k
    prev = np.concatenate(([0.0], means[:-1]))
    return np.cumsum((y - prev) * (y - means))


def gaussian_lambda_profile(values: MetricSeries, min_side: int = 2) -> LambdaProfile:
    """Gaussian mean-and-variance profile with MLE variances floored at 1e-9."""
    if min_side < 2:
        raise PerfShiftError("min_side must be at least 2 for a Gaussian scan")
    T = len(values)
    if T < 2 * min_side:
        raise SeriesTooShortError(f"series of length {T} is shorter than 2*min_side={2 * min_side}")
    y = values.values - values.values.mean()
    t = np.arange(min_side, T - min_side + 1)
    m2_prefix = _running_m2(y)
    m2_suffix = _running_m2(y[::-1])[::-1]
    n_left = t.astype(float)
    n_right = float(T) - n_left
    var_left = m2_prefix[t - 1] / n_left
    var_right = m2_suffix[t] / n_right
    var_all = m2_prefix[-1] / T
    var_left = np.maximum(var_left, VARIANCE_FLOOR)
    var_right = np.maximum(var_right, VARIANCE_FLOOR)
    var_all = max(var_all, VARIANCE_FLOOR)
    # the 2*pi and T/2 terms cancel between the split and pooled fits
    lam = 0.5 * (T * np.log(var_all) - n_left * np.log(var_left) - n_right * np.log(var_right))
    return LambdaProfile(lam, int(t[0]), int(t[-1]), GAUSSIAN)


def lambda_profile(s: MetricSeries, min_side: int | None = None) -> LambdaProfile:
    """Dispatch on series kind: binary -> Bernoulli, continuous -> Gaussian."""
    kind = BERNOULLI if s.kind == "binary" else GAUSSIAN
    if min_side is None:
        min_side = DEFAULT_MIN_SIDE[kind]
    if kind == BERNOULLI:
        return bernoulli_lambda_profile(s, min_side)
    return gaussian_lambda_profile(s, min_side)


def argmax_candidate(profile: LambdaProfile, series: MetricSeries) -> CandidateChangepoint:
    """Split with the largest profile value; ties go to the earliest split."""
    if len(profile) == 0:
        raise PerfShiftError("profile is empty")
    i = int(np.argmax(profile.lam))
    t_local = profile.t_min + i
    return CandidateChangepoint(
        t_local=t_local,
        t_original=int(series.original_index[t_local - 1]),
        lambda_max=float(profile.lam[i]),
    )
