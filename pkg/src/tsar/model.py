"""End-to-end forecaster: seasonal baselines plus a Gaussian process on residuals."""

import logging
import os
import warnings
from datetime import datetime

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baseline import (
    DEFAULT_GAMMA,
    PRESETS,
    HarmonicCounts,
    PeriodSet,
    baseline_at,
    eval_baseline,
    fit_baseline,
    harmonic_ranges,
)
from .frame import SeriesFrame, SplitSpec, TimeGrid, parse_timestamp, split_train_test
from .ggs import HyperRange, greedy_grid_search
from .lowrank import build_lr_bd, top_r_directions
from .residual import (
    DEFAULT_ALPHA,
    DEFAULT_GRID_SIZE,
    NotPositiveDefiniteError,
    compute_sigma,
    estimate_correlations,
    evaluate_gp,
    lambda_grid,
    normalize,
    schur_infer,
)
from .validation import check_count, check_frame, check_real

__all__ = ["TsarForecaster", "HYPER_NAMES"]

logger = logging.getLogger(__name__)

HYPER_NAMES = ("trend", "day", "week", "year")


def _threads(n_jobs):
    cap = os.environ.get("TSAR_THREADS")
    if cap:
        cap = max(int(cap), 1)
        return cap if n_jobs is None else min(n_jobs, cap)
    return n_jobs


def _as_timestamp(t):
    if isinstance(t, str):
        return parse_timestamp(t)
    if isinstance(t, datetime):
        return parse_timestamp(t.isoformat())
    if hasattr(t, "timestamp") and not isinstance(t, (int, np.integer)):
        return int(t.timestamp())
    return int(t)


class TsarForecaster(BaseEstimator):
    """Forecast and impute a vector time series with arbitrary missing values.

    Each column gets a seasonal Fourier baseline; the residuals are modeled
    jointly by a zero-mean Gaussian process over windows of ``past`` +
    ``future`` steps whose kernel is low-rank across components plus exact
    per-component blocks. Any hyper-parameter left as ``None`` is chosen by
    greedy grid search on a positional train/test split, after which every
    piece is re-fitted on all the data. When nothing is left to search the
    split is skipped.

    Parameters
    ----------
    past, future : int
        Window memory ``P`` and horizon ``F``.
    ratio : float
        Fraction of rows used for training during the search.
    width : int
        Search width of the greedy grid search.
    alpha : float
        Ratio between consecutive values of the regularization grid.
    n_lambdas : int
        Length of the regularization grid.
    preset : {"hourly", "daily"}
        Season lengths in grid steps, ignored when ``periods`` is given.
    periods : tuple of float, optional
        ``(day, week, year)`` lengths in grid steps.
    gamma : float
        Ridge constant of the baseline fit.
    k_trend, k_day, k_week, k_year : int, optional
        Harmonic counts fixed for every column.
    fixed : dict, optional
        Per-column overrides, ``{column: {"trend": 0, "week": 2, ...}}``.
    rank : int, optional
        Number of principal directions ``R``.
    lam : float, optional
        Regularization added to the observed kernel block.
    n_jobs : int, optional
        Threads for grid-search evaluations; capped by ``TSAR_THREADS``.
    """

    def __init__(self, past=24, future=24, ratio=2 / 3, width=1, alpha=DEFAULT_ALPHA,
                 n_lambdas=DEFAULT_GRID_SIZE, preset="hourly", periods=None, gamma=DEFAULT_GAMMA,
                 k_trend=None, k_day=None, k_week=None, k_year=None, fixed=None, rank=None,
                 lam=None, n_jobs=None):
        self.past = past
        self.future = future
        self.ratio = ratio
        self.width = width
        self.alpha = alpha
        self.n_lambdas = n_lambdas
        self.preset = preset
        self.periods = periods
        self.gamma = gamma
        self.k_trend = k_trend
        self.k_day = k_day
        self.k_week = k_week
        self.k_year = k_year
        self.fixed = fixed
        self.rank = rank
        self.lam = lam
        self.n_jobs = n_jobs

    # -- configuration -------------------------------------------------

    def _periods(self):
        if self.periods is not None:
            return self.periods if isinstance(self.periods, PeriodSet) else PeriodSet(*self.periods)
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        return PRESETS[self.preset]

    def _validate_params(self):
        check_count(self.past, "past")
        check_count(self.future, "future")
        check_real(self.ratio, "ratio", 0, 1, low_open=True, high_open=True)
        check_count(self.width, "width")
        check_real(self.alpha, "alpha", 1, low_open=True)
        check_count(self.n_lambdas, "n_lambdas")
        check_real(self.gamma, "gamma", 0, low_open=True)
        if self.lam is not None:
            check_real(self.lam, "lam", 0)
        if self.rank is not None:
            check_count(self.rank, "rank", minimum=0)

    def _fixed_counts(self, columns):
        """Per-column dict of fixed harmonic counts (absent key means searched)."""
        shared = {
            name: value
            for name, value in zip(HYPER_NAMES, (self.k_trend, self.k_day, self.k_week, self.k_year))
            if value is not None
        }
        fixed = {col: dict(shared) for col in columns}
        for col, overrides in (self.fixed or {}).items():
            if col not in fixed:
                raise ValueError(f"fixed hyper-parameters given for unknown column {col!r}")
            for name, value in overrides.items():
                name = name[2:] if name.startswith("k_") else name
                if name not in HYPER_NAMES:
                    raise ValueError(f"unknown baseline hyper-parameter {name!r} for column {col!r}")
                fixed[col][name] = value
        return fixed

    def _baseline_ranges(self, fixed, periods, column):
        full = harmonic_ranges(periods)
        ranges = []
        for name in HYPER_NAMES:
            if name in fixed:
                value = check_count(fixed[name], f"{column}.{name}", minimum=0)
                if value not in full[name]:
                    raise ValueError(
                        f"column {column!r}: {name} harmonics {value} outside 0..{full[name][-1]}"
                    )
                ranges.append(HyperRange(name, (value,)))
            else:
                ranges.append(HyperRange(name, tuple(full[name])))
        return ranges

    # -- fitting -------------------------------------------------------

    def fit(self, X, y=None):
        """Fit baselines and the residual kernel on ``X``.

        ``X`` is a :class:`~tsar.frame.SeriesFrame`, a pandas DataFrame with a
        datetime index, or a 2-D array on a unit grid.
        """
        self._validate_params()
        frame = check_frame(X)
        P, F = self.past, self.future
        periods = self._periods()
        columns = frame.columns
        M = len(columns)
        fixed = self._fixed_counts(columns)
        all_fixed = (
            all(len(fixed[c]) == len(HYPER_NAMES) for c in columns)
            and self.rank is not None
            and self.lam is not None
        )
        if self.rank is not None and self.rank > M:
            raise ValueError(f"rank {self.rank} exceeds the number of components {M}")
        n_jobs = _threads(self.n_jobs)

        ranges = {c: self._baseline_ranges(fixed[c], periods, c) for c in columns}
        self.baseline_reports_ = {}
        self.test_losses_ = {}
        if all_fixed:
            n_train = None
            counts = {c: HarmonicCounts(**fixed[c]) for c in columns}
        else:
            train, test = split_train_test(frame, SplitSpec(self.ratio))
            n_train = len(train)
            counts = {}
            for i, col in enumerate(columns):
                try:
                    report = self._search_baseline(
                        train.values[:, i], test.values[:, i], n_train, ranges[col], periods, n_jobs
                    )
                except Exception as exc:
                    raise RuntimeError(f"baseline search failed for column {col!r}: {exc}") from exc
                self.baseline_reports_[col] = report
                counts[col] = HarmonicCounts(**report.values)
                logger.info("column %s: harmonics %s, test loss %g", col, report.values, report.score)
            self.test_losses_["baseline"] = {c: r.score for c, r in self.baseline_reports_.items()}

        baselines = [
            fit_baseline(frame.values[:, i], counts[c], periods, self.gamma)
            for i, c in enumerate(columns)
        ]
        fitted = np.column_stack([baseline_at(b, np.arange(len(frame))) for b in baselines]) \
            if len(frame) else np.zeros((0, M))
        residuals = frame.values - fitted

        if all_fixed:
            rank, lam = self.rank, float(self.lam)
            self.gp_report_ = None
        else:
            self.gp_report_ = self._search_gp(residuals[:n_train], residuals[n_train:], n_jobs)
            rank, lam = self.gp_report_.values["rank"], self.gp_report_.values["lam"]
            self.test_losses_["gp"] = self.gp_report_.score
            logger.info("residual kernel: rank %d, lambda %g", rank, lam)

        self.normalizer_ = compute_sigma(residuals)
        self.correlations_ = estimate_correlations(normalize(residuals, self.normalizer_), P, F)
        self.directions_ = top_r_directions(self.correlations_.lag0(), rank)
        self.kernel_ = build_lr_bd(self.correlations_, self.directions_)
        lam = self._settle_lambda(lam)
        self.rank_ = rank
        self.lambda_ = lam
        self.columns_ = columns
        self.grid_ = frame.grid
        self.periods_ = periods
        self.counts_ = [counts[c] for c in columns]
        self.baselines_ = baselines
        self.n_features_in_ = M
        return self

    def _settle_lambda(self, lam):
        """Smallest ``lam * alpha**k`` at which the re-fitted kernel is positive definite.

        The search validated ``lam`` against the train-split kernel only. A
        positive definite full kernel makes every observed block positive
        definite, so one check covers every mask seen at prediction time.
        A user-fixed ``lam`` is kept as given, with a warning if it fails.
        """
        everything = np.ones(self.kernel_.size, dtype=bool)
        start = lam
        for _ in range(200):
            try:
                self.kernel_.factor(everything, lam)
                break
            except NotPositiveDefiniteError:
                if self.lam is not None:
                    warnings.warn(
                        f"kernel is not positive definite at the fixed lambda={lam!r}; "
                        "predictions with many observed entries may fail",
                        RuntimeWarning,
                        stacklevel=3,
                    )
                    return lam
                lam = max(lam, np.finfo(float).tiny) * self.alpha
        if lam != start:
            logger.info("raised lambda from %g to %g for the re-fitted kernel", start, lam)
        return float(lam)

    def _search_baseline(self, train, test, n_train, ranges, periods, n_jobs):
        def evaluate(values):
            counts = HarmonicCounts(*values)
            model = fit_baseline(train, counts, periods, self.gamma)
            return eval_baseline(test, model, t0=n_train)

        return greedy_grid_search(ranges, evaluate, self.width, n_jobs)

    def _search_gp(self, train_res, test_res, n_jobs):
        P, F = self.past, self.future
        M = train_res.shape[1]
        sigma = compute_sigma(train_res)
        norm_train = normalize(train_res, sigma)
        norm_test = normalize(test_res, sigma)
        corr = estimate_correlations(norm_train, P, F)
        all_dirs = top_r_directions(corr.lag0(), M)
        kernels = {}

        def kernel_for(rank):
            if rank not in kernels:
                kernels[rank] = build_lr_bd(corr, all_dirs.head(rank))
            return kernels[rank]

        def evaluate(values):
            rank, lam = values
            try:
                return evaluate_gp(norm_test, kernel_for(rank), lam, P, F)
            except NotPositiveDefiniteError:
                return np.inf

        if self.rank is None:
            rank_range = HyperRange("rank", tuple(range(M + 1)))
        else:
            rank_range = HyperRange("rank", (self.rank,))
        if self.lam is None:
            lam_range = HyperRange("lam", tuple(lambda_grid(M, P, F, self.alpha, self.n_lambdas)))
        else:
            lam_range = HyperRange("lam", (float(self.lam),))
        # kernels are built lazily and shared, so evaluate serially
        return greedy_grid_search([rank_range, lam_range], evaluate, self.width)

    # -- inference -----------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "kernel_"):
            raise NotFittedError("this TsarForecaster is not fitted yet; call fit first")

    def _window(self, X, t):
        self._check_fitted()
        frame = check_frame(X, step=self.grid_.step)
        if frame.columns != self.columns_:
            raise ValueError(f"columns {list(frame.columns)} do not match the model's {list(self.columns_)}")
        stamp = _as_timestamp(t)
        n = self.grid_.index_of(stamp)
        P, F = self.past, self.future
        L = P + F
        if len(frame) and not self.grid_.is_aligned(frame.grid):
            raise ValueError("new data is not on the model's time grid")
        if len(frame):
            start = frame.grid.index_of(stamp) - P + 1
            observed = frame.rows(start, start + L)
        else:
            observed = np.full((L, len(self.columns_)), np.nan)
        rows = np.arange(n - P + 1, n + F + 1)
        base = np.column_stack([baseline_at(b, rows) for b in self.baselines_])
        grid = TimeGrid(self.grid_.timestamp(n - P + 1), self.grid_.step, L)
        return grid, observed, base

    def predict_components(self, X, t):
        """Return ``(grid, observed, baseline, residual)`` for rows ``t-P+1..t+F``.

        ``residual`` is the denormalized conditional-mean residual; on observed
        entries it is the observed residual itself.
        """
        grid, observed, base = self._window(X, t)
        sigma = self.normalizer_.sigma
        rho = ((observed - base) / sigma).T.ravel()
        filled = schur_infer(rho, self.kernel_, lam=self.lambda_)
        residual = filled.reshape(len(sigma), -1).T * sigma
        return grid, observed, base, residual

    def predict(self, X, t):
        """Window of ``past + future`` rows ending ``future`` steps after ``t``.

        Values observed in ``X`` are copied through unchanged; all others are
        baseline plus inferred residual. Returns a
        :class:`~tsar.frame.SeriesFrame` with no missing values.
        """
        grid, observed, base, residual = self.predict_components(X, t)
        seen = ~np.isnan(observed)
        values = np.where(seen, observed, base + residual)
        return SeriesFrame(grid, self.columns_, values)

    def baseline(self, t_from, t_to):
        """Baseline values for timestamps ``t_from..t_to`` as a frame."""
        self._check_fitted()
        lo = self.grid_.index_of(_as_timestamp(t_from))
        hi = self.grid_.index_of(_as_timestamp(t_to))
        rows = np.arange(lo, hi + 1)
        values = np.column_stack([baseline_at(b, rows) for b in self.baselines_])
        return SeriesFrame(TimeGrid(self.grid_.timestamp(lo), self.grid_.step, rows.size), self.columns_, values)

    def evaluate(self, X):
        """Losses of the fitted model on ``X``: per-column baseline and residual GP."""
        self._check_fitted()
        frame = check_frame(X, step=self.grid_.step)
        if frame.columns != self.columns_:
            raise ValueError(f"columns {list(frame.columns)} do not match the model's {list(self.columns_)}")
        if len(frame) == 0:
            return {"baseline": {c: 0.0 for c in self.columns_}, "gp": 0.0}
        if not self.grid_.is_aligned(frame.grid):
            raise ValueError("data is not on the model's time grid")
        t0 = self.grid_.index_of(frame.grid.origin)
        rows = np.arange(t0, t0 + len(frame))
        base = np.column_stack([baseline_at(b, rows) for b in self.baselines_])
        losses = {
            c: eval_baseline(frame.values[:, i], self.baselines_[i], t0)
            for i, c in enumerate(self.columns_)
        }
        norm = normalize(frame.values - base, self.normalizer_)
        gp = evaluate_gp(norm, self.kernel_, self.lambda_, self.past, self.future)
        return {"baseline": losses, "gp": gp}
