"""Seasonal Fourier baseline: trend, constant, and day/week/year harmonics."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator

from .validation import check_series

__all__ = [
    "PeriodSet",
    "HarmonicCounts",
    "BaselineModel",
    "SeasonalBaseline",
    "PRESETS",
    "design_row",
    "design_matrix",
    "fit_baseline",
    "eval_baseline",
    "predict_baseline",
    "harmonic_ranges",
]

DEFAULT_GAMMA = 1e-8
SEASONS = ("day", "week", "year")
K_WEEK_MAX = 6
K_YEAR_MAX = 51


@dataclass(frozen=True)
class PeriodSet:
    """Season lengths measured in grid steps."""

    day: float
    week: float
    year: float

    def __post_init__(self):
        if not 0 < self.day < self.week < self.year:
            raise ValueError(f"periods must satisfy 0 < day < week < year, got {self}")

    def __iter__(self):
        return iter((self.day, self.week, self.year))


PRESETS = {
    "hourly": PeriodSet(24.0, 168.0, 8766.0),
    "daily": PeriodSet(1.0, 7.0, 365.25),
}


@dataclass(frozen=True)
class HarmonicCounts:
    trend: int = 0
    day: int = 0
    week: int = 0
    year: int = 0

    def __post_init__(self):
        if self.trend not in (0, 1):
            raise ValueError(f"trend count must be 0 or 1, got {self.trend}")
        if self.day < 0:
            raise ValueError(f"day harmonics must be nonnegative, got {self.day}")
        if not 0 <= self.week <= K_WEEK_MAX:
            raise ValueError(f"week harmonics must lie in 0..{K_WEEK_MAX}, got {self.week}")
        if not 0 <= self.year <= K_YEAR_MAX:
            raise ValueError(f"year harmonics must lie in 0..{K_YEAR_MAX}, got {self.year}")

    @property
    def seasonal(self):
        return (self.day, self.week, self.year)

    @property
    def n_coef(self):
        return 1 + self.trend + 2 * sum(self.seasonal)

    def as_dict(self):
        return {"trend": self.trend, "day": self.day, "week": self.week, "year": self.year}


def harmonic_ranges(periods):
    """Search ranges for (trend, day, week, year), each capped at the grid's Nyquist limit."""
    nyquist = [int(np.floor(p / 2)) for p in periods]
    return {
        "trend": [0, 1],
        "day": list(range(nyquist[0] + 1)),
        "week": list(range(min(K_WEEK_MAX, nyquist[1]) + 1)),
        "year": list(range(min(K_YEAR_MAX, nyquist[2]) + 1)),
    }


@dataclass(frozen=True, eq=False)
class BaselineModel:
    """Fitted coefficients, laid out in :func:`design_row` feature order."""

    counts: HarmonicCounts
    periods: PeriodSet
    coef: np.ndarray = field(repr=False)

    def __post_init__(self):
        coef = np.array(self.coef, dtype=np.float64)
        if coef.shape != (self.counts.n_coef,):
            raise ValueError(f"expected {self.counts.n_coef} coefficients, got {coef.shape}")
        coef.flags.writeable = False
        object.__setattr__(self, "coef", coef)

    @classmethod
    def zero(cls, counts, periods):
        return cls(counts, periods, np.zeros(counts.n_coef))

    @property
    def beta_0(self):
        return float(self.coef[0])

    @property
    def alpha_0(self):
        return float(self.coef[1]) if self.counts.trend else 0.0

    def seasonal_coef(self, season):
        """``(alpha_k, beta_k)`` arrays (sine, cosine) for one season."""
        start = 1 + self.counts.trend
        for name, K in zip(SEASONS, self.counts.seasonal):
            if name == season:
                block = self.coef[start:start + 2 * K]
                return block[0::2].copy(), block[1::2].copy()
            start += 2 * K
        raise KeyError(season)


def design_matrix(t, counts, periods):
    """Feature rows for the integer times ``t``.

    Columns: constant, trend (when active), then for day, week and year the
    pairs ``sin(2 pi t k / P), cos(2 pi t k / P)`` for ``k = 1..K``.
    """
    t = np.asarray(t, dtype=np.float64).ravel()
    blocks = [np.ones((t.size, 1))]
    if counts.trend:
        blocks.append(t[:, None])
    for K, period in zip(counts.seasonal, periods):
        if K == 0:
            continue
        phase = 2 * np.pi * np.outer(t, np.arange(1, K + 1)) / period
        pair = np.empty((t.size, 2 * K))
        pair[:, 0::2] = np.sin(phase)
        pair[:, 1::2] = np.cos(phase)
        blocks.append(pair)
    return np.hstack(blocks)


def design_row(t, counts, periods):
    return design_matrix([t], counts, periods)[0]


def _penalty(counts, gamma):
    penalty = np.full(counts.n_coef, float(gamma))
    penalty[0] = 0.0
    return penalty


def fit_baseline(series, counts, periods, gamma=DEFAULT_GAMMA, t0=0):
    """Ridge least squares over observed points, leaving the constant unpenalized.

    ``series[i]`` sits at grid row ``t0 + i``. An all-missing series gives the
    zero model.
    """
    series = check_series(series)
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    seen = ~np.isnan(series)
    if not seen.any():
        return BaselineModel.zero(counts, periods)
    t = t0 + np.flatnonzero(seen)
    X = design_matrix(t, counts, periods)
    y = series[seen]
    gram = X.T @ X
    gram[np.diag_indices_from(gram)] += _penalty(counts, gamma)
    # Jacobi scaling keeps the raw trend column from wrecking the factorization.
    diag = np.diag(gram).copy()
    diag[diag <= 0] = 1.0
    scale = 1.0 / np.sqrt(diag)
    factor = cho_factor(gram * np.outer(scale, scale), lower=True)
    coef = scale * cho_solve(factor, scale * (X.T @ y))
    return BaselineModel(counts, periods, coef)


def predict_baseline(model, t_from, t_to):
    """Baseline values at grid rows ``t_from..t_to`` inclusive."""
    if t_from > t_to:
        raise ValueError(f"t_from ({t_from}) must not exceed t_to ({t_to})")
    t = np.arange(t_from, t_to + 1)
    return design_matrix(t, model.counts, model.periods) @ model.coef


def baseline_at(model, t):
    t = np.asarray(t)
    return design_matrix(t, model.counts, model.periods) @ model.coef


def eval_baseline(series, model, t0=0):
    """Sum of squared deviations over observed points; 0 if none are observed."""
    series = check_series(series)
    seen = ~np.isnan(series)
    if not seen.any():
        return 0.0
    t = t0 + np.flatnonzero(seen)
    diff = series[seen] - baseline_at(model, t)
    return float(diff @ diff)


def train_objective(series, model, gamma=DEFAULT_GAMMA, t0=0):
    """Value of the fitting objective (squared loss plus penalty) at ``model``."""
    penalty = _penalty(model.counts, gamma)
    return eval_baseline(series, model, t0) + float(penalty @ model.coef**2)


class SeasonalBaseline(BaseEstimator):
    """Estimator wrapper around :func:`fit_baseline` for one scalar series.

    ``fit`` takes a 1-D array (``nan`` marks missing) whose entries sit at grid
    rows ``t0, t0+1, ...``; ``predict`` maps grid rows to baseline values.
    """

    def __init__(self, trend=0, day=0, week=0, year=0, preset="hourly", periods=None,
                 gamma=DEFAULT_GAMMA):
        self.trend = trend
        self.day = day
        self.week = week
        self.year = year
        self.preset = preset
        self.periods = periods
        self.gamma = gamma

    def _periods(self):
        if self.periods is not None:
            return self.periods if isinstance(self.periods, PeriodSet) else PeriodSet(*self.periods)
        return PRESETS[self.preset]

    def fit(self, X, y=None, t0=0):
        counts = HarmonicCounts(self.trend, self.day, self.week, self.year)
        self.model_ = fit_baseline(X, counts, self._periods(), self.gamma, t0)
        return self

    def predict(self, t):
        return baseline_at(self.model_, t)

    def score(self, X, y=None, t0=0):
        """Negated squared-error loss so that larger is better, as sklearn expects."""
        return -eval_baseline(X, self.model_, t0)
