"""Stabilization points and Hoeffding confidence intervals for bounded metrics."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from perfshift.errors import (
    NegativeLatentVarianceError,
    OutOfBoundsError,
    PerfShiftError,
    TooFewPlayersError,
    UnstableMetricError,
)
from perfshift.series import MetricSeries

# relative slack when comparing sigma_obs**2 with sigma_samp**2
_VAR_RTOL = 1e-9

TABLE_COLUMNS = ("metric", "p_hat", "sigma_obs", "sigma_samp", "sigma_latent", "n_stable")


@dataclass(frozen=True)
class StabilizationReport:
    metric: str
    p_hat: float
    sigma_obs: float
    sigma_samp: float
    sigma_latent: float
    n_stable: int
    player_count: int

    def as_row(self) -> list:
        """One CSV row in the column order of :data:`TABLE_COLUMNS`."""
        return list(astuple(self)[:6])


@dataclass(frozen=True)
class ConfidenceInterval:
    """Interval around a running mean after ``t`` observations.

    ``half_width`` is the unclipped radius; ``lower``/``upper`` are clipped to
    ``bounds``.
    """

    center: float
    lower: float
    upper: float
    t: int
    alpha: float
    bounds: Tuple[float, float]
    half_width: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def latent_sd(sigma_obs: float, sigma_samp: float) -> float:
    """Spread of true talent once sampling noise is removed.

    Returns ``sqrt(sigma_obs**2 - sigma_samp**2)``. A difference within
    rounding of zero is treated as exactly zero.
    """
    if sigma_obs < 0 or sigma_samp < 0:
        raise PerfShiftError("standard deviations must be nonnegative")
    obs2, samp2 = sigma_obs * sigma_obs, sigma_samp * sigma_samp
    diff = obs2 - samp2
    if diff < 0:
        if -diff > _VAR_RTOL * max(obs2, samp2):
            raise NegativeLatentVarianceError(
                f"sigma_samp={sigma_samp:.6g} exceeds sigma_obs={sigma_obs:.6g}: "
                "observed spread is below pure sampling noise"
            )
        return 0.0
    return math.sqrt(diff)


def stabilization_point(p_hat: float, sigma_latent: float) -> int:
    """Smallest event count whose RMSE for a rate near ``p_hat`` is within ``sigma_latent``."""
    if not 0.0 <= p_hat <= 1.0:
        raise PerfShiftError(f"p_hat={p_hat} is not a rate")
    if sigma_latent < 0:
        raise PerfShiftError("sigma_latent must be nonnegative")
    if p_hat in (0.0, 1.0):
        return 1
    if sigma_latent == 0:
        raise UnstableMetricError("latent spread is zero; the metric never stabilizes")
    ratio = p_hat * (1.0 - p_hat) / (sigma_latent * sigma_latent)
    # guard against ratio landing a few ulps above an integer
    n = math.ceil(ratio - 1e-9 * ratio)
    return max(n, 1)


def cohort_stabilization(
    per_player: Sequence[Tuple[int, int]], metric: str = ""
) -> StabilizationReport:
    """Decompose across-player spread of a rate and derive its stabilization point.

    Parameters
    ----------
    per_player : sequence of (success_count, trial_count)
    metric : str
        Name echoed into the report.

    Notes
    -----
    ``sigma_samp`` is the root of the mean per-player sampling variance
    ``p_i (1 - p_i) / n_i``; ``sigma_obs`` uses the ``n - 1`` denominator.
    """
    if len(per_player) < 2:
        raise TooFewPlayersError("need at least 2 players")
    counts = np.asarray(per_player, dtype=float)
    successes, trials = counts[:, 0], counts[:, 1]
    if np.any(trials <= 0):
        raise PerfShiftError("every trial_count must be positive")
    if np.any(successes < 0) or np.any(successes > trials):
        raise PerfShiftError("success_count must lie in [0, trial_count]")
    rates = successes / trials
    p_hat = float(rates.mean())
    sigma_obs = float(rates.std(ddof=1))
    sigma_samp = float(math.sqrt(np.mean(rates * (1.0 - rates) / trials)))
    sigma_latent = latent_sd(sigma_obs, sigma_samp)
    return StabilizationReport(
        metric=metric,
        p_hat=p_hat,
        sigma_obs=sigma_obs,
        sigma_samp=sigma_samp,
        sigma_latent=sigma_latent,
        n_stable=stabilization_point(p_hat, sigma_latent),
        player_count=len(per_player),
    )


def hoeffding_half_width(t, alpha: float, bounds=(0.0, 1.0)):
    """``(b - a) * sqrt(log(2 / alpha) / (2 t))``; ``t`` may be an array."""
    a, b = bounds
    return (b - a) * np.sqrt(math.log(2.0 / alpha) / (2.0 * np.asarray(t, dtype=float)))


def _check_interval_args(alpha: float, bounds) -> Tuple[float, float]:
    if not 0.0 < alpha < 1.0:
        raise PerfShiftError(f"alpha={alpha} must lie in (0, 1)")
    a, b = float(bounds[0]), float(bounds[1])
    if not a < b:
        raise PerfShiftError(f"bounds {bounds} must satisfy a < b")
    return a, b


def hoeffding_interval(
    mean: float, t: int, alpha: float = 0.05, bounds=(0.0, 1.0)
) -> ConfidenceInterval:
    """Hoeffding interval for the mean of ``t`` observations bounded in ``bounds``."""
    a, b = _check_interval_args(alpha, bounds)
    if t < 1:
        raise PerfShiftError("t must be at least 1")
    if not a <= mean <= b:
        raise OutOfBoundsError(f"mean {mean} outside bounds [{a}, {b}]")
    hw = float(hoeffding_half_width(t, alpha, (a, b)))
    return ConfidenceInterval(
        center=float(mean),
        lower=max(a, mean - hw),
        upper=min(b, mean + hw),
        t=int(t),
        alpha=alpha,
        bounds=(a, b),
        half_width=hw,
    )


def confidence_sequence(
    s: MetricSeries, alpha: float = 0.05, bounds=(0.0, 1.0), union_bound: bool = False
) -> List[ConfidenceInterval]:
    """Interval around the running mean after every prefix of ``s``.

    The default intervals hold pointwise in ``t``. With ``union_bound=True``
    the level at step ``t`` is ``alpha / (t (t + 1))``, which sums to ``alpha``
    and so covers every ``t`` simultaneously.
    """
    a, b = _check_interval_args(alpha, bounds)
    values = s.values
    if values.min() < a or values.max() > b:
        raise OutOfBoundsError(f"series values fall outside bounds [{a}, {b}]")
    t = np.arange(1, values.size + 1)
    means = np.clip(np.cumsum(values) / t, a, b)
    out = []
    for step, mean in zip(t.tolist(), means.tolist()):
        level = alpha / (step * (step + 1)) if union_bound else alpha
        out.append(hoeffding_interval(mean, step, level, (a, b)))
    return out


def confidence_sequence_rows(entity_id: str, intervals: Iterable[ConfidenceInterval]) -> list:
    return [[entity_id, ci.t, ci.center, ci.lower, ci.upper] for ci in intervals]
