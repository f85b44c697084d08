"""Zero-mean Gaussian process on normalized residual windows.

The kernel of a window of ``P`` past and ``F`` future steps over ``M``
components is block-Toeplitz, estimated from lagged products of the normalized
residuals over whichever pairs are jointly observed. Missing window entries are
filled with their regularized conditional mean given the observed ones.
"""

import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .frame import ObservationMask, SeriesFrame

__all__ = [
    "Normalizer",
    "LaggedCorrelations",
    "FullKernel",
    "NotPositiveDefiniteError",
    "SolveCache",
    "compute_sigma",
    "normalize",
    "denormalize",
    "estimate_correlations",
    "assemble_kernel",
    "schur_operator",
    "schur_infer",
    "lambda_grid",
    "evaluate_gp",
    "DEFAULT_ALPHA",
    "DEFAULT_GRID_SIZE",
]

DEFAULT_ALPHA = 10 ** (1 / 3)
DEFAULT_GRID_SIZE = 10


class NotPositiveDefiniteError(LinAlgError):
    """The regularized observed block could not be factored; increase lambda."""

    def __init__(self, lam, detail=""):
        self.lam = lam
        msg = f"kernel not positive definite at lambda={lam!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


def _values(data):
    return data.values if isinstance(data, SeriesFrame) else np.asarray(data, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Normalizer:
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=np.float64).ravel()
        if not (sigma > 0).all():
            raise ValueError("every sigma must be positive")
        sigma.flags.writeable = False
        object.__setattr__(self, "sigma", sigma)


def compute_sigma(train_residuals):
    """Per-column root mean square over observed entries.

    All-missing columns get 1; columns whose observed values are all exactly
    zero are promoted to 1 with a warning.
    """
    values = _values(train_residuals)
    seen = ~np.isnan(values)
    count = seen.sum(axis=0)
    total = np.where(seen, values, 0.0)
    total = (total * total).sum(axis=0)
    sigma = np.ones(values.shape[1])
    has = count > 0
    sigma[has] = np.sqrt(total[has] / count[has])
    zero = has & (sigma == 0)
    if zero.any():
        warnings.warn(
            f"residual columns {np.flatnonzero(zero).tolist()} are identically zero; using sigma=1",
            RuntimeWarning,
            stacklevel=2,
        )
        sigma[zero] = 1.0
    return Normalizer(sigma)


def normalize(residuals, normalizer):
    values = _values(residuals)
    if values.shape[-1] != normalizer.sigma.size:
        raise ValueError(f"expected {normalizer.sigma.size} columns, got {values.shape[-1]}")
    out = values / normalizer.sigma
    return residuals.with_values(out) if isinstance(residuals, SeriesFrame) else out


def denormalize(residuals, normalizer):
    values = _values(residuals)
    if values.shape[-1] != normalizer.sigma.size:
        raise ValueError(f"expected {normalizer.sigma.size} columns, got {values.shape[-1]}")
    out = values * normalizer.sigma
    return residuals.with_values(out) if isinstance(residuals, SeriesFrame) else out


@dataclass(frozen=True, eq=False)
class LaggedCorrelations:
    """``coef[i, j, tau + L - 1]`` holds the lag-``tau`` correlation of columns i, j."""

    P: int
    F: int
    coef: np.ndarray = field(repr=False)

    def __post_init__(self):
        coef = np.array(self.coef, dtype=np.float64)
        L = self.P + self.F
        if coef.ndim != 3 or coef.shape[0] != coef.shape[1] or coef.shape[2] != 2 * L - 1:
            raise ValueError(f"coef must have shape (M, M, {2 * L - 1}), got {coef.shape}")
        coef.flags.writeable = False
        object.__setattr__(self, "coef", coef)

    @property
    def M(self):
        return self.coef.shape[0]

    @property
    def L(self):
        return self.P + self.F

    def lag(self, tau):
        """``M x M`` matrix of correlations at lag ``tau``."""
        return self.coef[:, :, tau + self.L - 1]

    def lag0(self):
        return self.lag(0).copy()


def estimate_correlations(norm_train, P, F):
    """Average lagged products over the jointly observed pairs of the window.

    Entries with no overlapping pair are 0. Negative lags are the transposes
    of positive ones, so the symmetry between ``(i, j, tau)`` and
    ``(j, i, -tau)`` is exact.
    """
    if P < 1 or F < 1:
        raise ValueError("P and F must be at least 1")
    values = _values(norm_train)
    T, M = values.shape
    L = P + F
    seen = (~np.isnan(values)).astype(np.float64)
    filled = np.where(seen > 0, values, 0.0)
    coef = np.zeros((M, M, 2 * L - 1))
    for tau in range(L):
        if tau >= T:
            continue
        num = filled[:T - tau].T @ filled[tau:]
        den = seen[:T - tau].T @ seen[tau:]
        c = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        coef[:, :, L - 1 + tau] = c
        if tau:
            coef[:, :, L - 1 - tau] = c.T
    return LaggedCorrelations(P, F, coef)


def assemble_kernel(corr):
    """Dense ``M(P+F)`` block-Toeplitz matrix; block (i, j) entry (a, b) is lag ``b - a``."""
    L, M = corr.L, corr.M
    offsets = np.arange(L)
    lag_index = offsets[None, :] - offsets[:, None] + L - 1
    blocks = corr.coef[:, :, lag_index]
    return blocks.transpose(0, 2, 1, 3).reshape(M * L, M * L)


class SolveCache:
    """Thread-safe LRU map from ``(mask bits, lambda)`` to solve artifacts."""

    def __init__(self, maxsize=256):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_compute(self, key, compute):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
        value = compute()
        with self._lock:
            self.misses += 1
            self._data[key] = value
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value

    def __len__(self):
        return len(self._data)

    def clear(self):
        with self._lock:
            self._data.clear()


def _mask_key(seen, lam):
    seen = np.asarray(seen, dtype=bool)
    return (np.packbits(seen).tobytes(), seen.size, float(lam))


class FullKernel:
    """Dense kernel, optionally backed by the lagged correlations it came from."""

    def __init__(self, matrix, corr=None):
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"kernel must be square, got shape {matrix.shape}")
        matrix.flags.writeable = False
        self.matrix = matrix
        self.corr = corr
        self.cache = SolveCache()

    @classmethod
    def from_correlations(cls, corr):
        return cls(assemble_kernel(corr), corr)

    @property
    def size(self):
        return self.matrix.shape[0]

    def dense(self):
        return self.matrix

    def operator(self, seen, lam):
        """``Sigma_UO (Sigma_OO + lam I)^-1`` for the observed pattern ``seen``."""
        seen = np.asarray(seen, dtype=bool)
        return self.cache.get_or_compute(_mask_key(seen, lam), lambda: _dense_operator(self.matrix, seen, lam))

    def conditional(self, rho_obs, seen, lam):
        """Conditional means at the unobserved entries, one column per window."""
        return self.operator(seen, lam) @ rho_obs


def _dense_operator(matrix, seen, lam):
    obs, unobs = np.flatnonzero(seen), np.flatnonzero(~seen)
    if obs.size == 0:
        return np.zeros((unobs.size, 0))
    block = matrix[np.ix_(obs, obs)] + lam * np.eye(obs.size)
    try:
        factor = cho_factor(block, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NotPositiveDefiniteError(lam, str(exc)) from None
    if not np.isfinite(factor[0]).all():
        raise NotPositiveDefiniteError(lam, "non-finite factor")
    cross = matrix[np.ix_(unobs, obs)]
    return cho_solve(factor, cross.T, check_finite=False).T


def _as_kernel(kernel):
    return kernel if hasattr(kernel, "conditional") else FullKernel(kernel)


def schur_operator(kernel, mask, lam=0.0):
    """The ``|U| x |O|`` map from observed to inferred entries."""
    kernel = _as_kernel(kernel)
    seen = mask.as_bool() if isinstance(mask, ObservationMask) else np.asarray(mask, dtype=bool)
    if hasattr(kernel, "operator"):
        return kernel.operator(seen, lam)
    return kernel.conditional(np.eye(int(seen.sum())), seen, lam)


def schur_infer(rho, kernel, mask=None, lam=0.0):
    """Fill the unobserved entries of ``rho`` with their conditional means.

    Observed entries are copied unchanged; with nothing observed the result is
    the zero prior mean. ``kernel`` is a dense matrix or a kernel object.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    mask = ObservationMask.from_vector(rho) if mask is None else mask
    if mask.size != rho.size:
        raise ValueError(f"mask covers {mask.size} entries, vector has {rho.size}")
    kernel = _as_kernel(kernel)
    seen = mask.as_bool()
    out = np.where(seen, rho, 0.0)
    if mask.unobserved.size and mask.observed.size:
        out[mask.unobserved] = kernel.conditional(rho[mask.observed][:, None], seen, lam)[:, 0]
    return out


def lambda_grid(M, P, F, alpha=DEFAULT_ALPHA, n=DEFAULT_GRID_SIZE):
    """``M(P+F) * alpha**-k`` for ``k = 0..n-1``, largest first."""
    if alpha <= 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if n < 1:
        raise ValueError(f"grid length must be at least 1, got {n}")
    return [M * (P + F) * float(alpha) ** (-k) for k in range(n)]


def _past_windows(values, P, F):
    """Past-only windows and future truths for every row of ``values``.

    Returns ``past`` of shape ``(T, M, P)`` and ``future`` of shape
    ``(T, M, F)``; reads outside the frame are nan.
    """
    T, M = values.shape
    padded = np.full((T + P - 1 + F, M), np.nan)
    padded[P - 1:P - 1 + T] = values
    idx = np.arange(T)[:, None]
    past = padded[idx + np.arange(P)[None, :]]
    future = padded[idx + P + np.arange(F)[None, :]]
    return past.transpose(0, 2, 1), future.transpose(0, 2, 1)


def evaluate_gp(test_norm, kernel, lam, P, F):
    """Sum of squared errors of ``F``-step forecasts made from every test row.

    For each row ``t`` everything after ``t`` is hidden, the window is
    inferred, and predictions at ``t+1..t+F`` are scored where the truth is
    observed. Windows sharing an observation pattern are solved together.
    """
    kernel = _as_kernel(kernel)
    values = _values(test_norm)
    T, M = values.shape
    if T == 0:
        return 0.0
    L = P + F
    past, future = _past_windows(values, P, F)
    past_seen = ~np.isnan(past)
    future_seen = ~np.isnan(future)
    scored = future_seen.reshape(T, -1).any(axis=1)
    if not scored.any():
        return 0.0
    rows = np.flatnonzero(scored)
    patterns, inverse = np.unique(past_seen[rows].reshape(rows.size, -1), axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    total = 0.0
    for g, pattern in enumerate(patterns):
        members = rows[inverse == g]
        seen = np.zeros((M, L), dtype=bool)
        seen[:, :P] = pattern.reshape(M, P)
        future_idx = np.zeros((M, L), dtype=bool)
        future_idx[:, P:] = True
        unobs_future = future_idx.ravel()[~seen.ravel()]
        if seen.any():
            rho_obs = past[members][:, seen[:, :P]].T
            pred_u = kernel.conditional(rho_obs, seen.ravel(), lam)
            pred = pred_u[unobs_future].T.reshape(members.size, M, F)
        else:
            pred = np.zeros((members.size, M, F))
        truth = future[members]
        err = np.where(future_seen[members], pred - np.nan_to_num(truth), 0.0)
        total += float((err * err).sum())
    return total
