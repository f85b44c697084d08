"""Low-rank plus block-diagonal approximation of the block-Toeplitz kernel.

Cross-component structure is kept only along the top ``R`` eigenvectors of
the lag-0 correlation matrix; each component keeps its own exact
autocorrelation block. Inference then costs time linear in ``M``.

Flat window layout is component-major (index ``m * L + s``); the projected
layout is direction-major (index ``k * L + s``). The projection ``V`` is never
formed densely: it acts as ``v @ x`` on ``(M, L)`` shaped windows.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .residual import NotPositiveDefiniteError, SolveCache, _mask_key, schur_infer

__all__ = [
    "PrincipalDirections",
    "LowRankBlockDiagKernel",
    "lag0_matrix",
    "top_r_directions",
    "build_lr_bd",
    "woodbury_solve",
    "schur_infer_lowrank",
    "is_toeplitz",
]

# Eigenvalues of the projected kernel below this fraction of the largest are
# treated as exact zeros in the capacitance system.
NULL_TOL = 1e-12
# Diagonal blocks with an eigenvalue this close to zero (relative) are too
# ill-conditioned for the Woodbury identity.
SINGULAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PrincipalDirections:
    """Rows of ``vectors`` are orthonormal directions in component space."""

    vectors: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        eigenvalues = np.array(self.eigenvalues, dtype=np.float64).ravel()
        if vectors.ndim != 2 or vectors.shape[0] != eigenvalues.size:
            raise ValueError("need one eigenvalue per direction")
        vectors.flags.writeable = False
        eigenvalues.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "eigenvalues", eigenvalues)

    @property
    def R(self):
        return self.vectors.shape[0]

    @property
    def M(self):
        return self.vectors.shape[1]

    def head(self, R):
        return PrincipalDirections(self.vectors[:R], self.eigenvalues[:R])


def lag0_matrix(corr):
    return corr.lag0()


def _sign_normalize(vec):
    k = int(np.argmax(np.abs(vec)))
    return -vec if vec[k] < 0 else vec


def top_r_directions(lag0, R):
    """Eigenpairs of the ``R`` largest eigenvalues, sign-normalized.

    Each vector's largest-magnitude entry (lowest index on ties) is made
    positive. Equal eigenvalues are ordered by the lexicographic order of
    their normalized vectors, largest first.
    """
    lag0 = np.asarray(lag0, dtype=np.float64)
    M = lag0.shape[0]
    if not 0 <= R <= M:
        raise ValueError(f"rank must lie in 0..{M}, got {R}")
    if R == 0:
        return PrincipalDirections(np.zeros((0, M)), np.zeros(0))
    sym = 0.5 * (lag0 + lag0.T)
    values, vectors = np.linalg.eigh(sym)
    vectors = np.array([_sign_normalize(vectors[:, k]) for k in range(M)])
    order = sorted(range(M), key=lambda k: (-values[k], tuple(-vectors[k])))
    order = order[:R]
    return PrincipalDirections(vectors[order], values[order])


def is_toeplitz(matrix, atol=1e-10):
    matrix = np.asarray(matrix)
    n = matrix.shape[0]
    return all(
        np.allclose(np.diagonal(matrix, k), np.diagonal(matrix, k)[0], rtol=0, atol=atol)
        for k in range(-n + 1, n)
    )


def _toeplitz_dense(lags, L):
    """Dense blocks from lag arrays shaped ``(..., 2L-1)``; entry (a, b) uses lag ``b - a``."""
    offsets = np.arange(L)
    return lags[..., offsets[None, :] - offsets[:, None] + L - 1]


@dataclass(frozen=True, eq=False)
class LowRankBlockDiagKernel:
    """Compact store of ``V' S V + D``.

    ``sigma_lr_lags[k, l, tau]`` is the lag-``tau`` entry of the projected
    kernel's ``(k, l)`` block for ``tau >= 0``; negative lags follow from
    symmetry, ``S_kl(-tau) = S_lk(tau)``. ``d_lags[m, tau]`` is lag
    ``tau >= 0`` of component ``m``'s symmetric Toeplitz block.
    """

    P: int
    F: int
    dirs: PrincipalDirections
    sigma_lr_lags: np.ndarray = field(repr=False)
    d_lags: np.ndarray = field(repr=False)
    cache: SolveCache = field(default_factory=SolveCache, repr=False, compare=False)

    def __post_init__(self):
        R, M, L = self.dirs.R, self.dirs.M, self.L
        sigma_lr = np.array(self.sigma_lr_lags, dtype=np.float64).reshape(R, R, L)
        d_lags = np.array(self.d_lags, dtype=np.float64)
        if d_lags.shape != (M, L):
            raise ValueError(f"d_lags must have shape ({M}, {L}), got {d_lags.shape}")
        sigma_lr.flags.writeable = False
        d_lags.flags.writeable = False
        object.__setattr__(self, "sigma_lr_lags", sigma_lr)
        object.__setattr__(self, "d_lags", d_lags)
        d_full = np.concatenate([d_lags[:, :0:-1], d_lags], axis=1)
        object.__setattr__(self, "_d_blocks", _toeplitz_dense(d_full, L))
        lr_full = np.concatenate([sigma_lr.transpose(1, 0, 2)[:, :, :0:-1], sigma_lr], axis=2)
        object.__setattr__(self, "_lr_lags", lr_full)
        object.__setattr__(self, "_sigma_lr", self._dense_sigma_lr())

    @property
    def L(self):
        return self.P + self.F

    @property
    def M(self):
        return self.dirs.M

    @property
    def R(self):
        return self.dirs.R

    @property
    def size(self):
        return self.M * self.L

    @property
    def stored_elements(self):
        """Floats held by V, the projected kernel, and the diagonal blocks."""
        return self.dirs.vectors.size + self.sigma_lr_lags.size + self.d_lags.size

    def _dense_sigma_lr(self):
        R, L = self.R, self.L
        blocks = _toeplitz_dense(self._lr_lags, L)
        return blocks.transpose(0, 2, 1, 3).reshape(R * L, R * L)

    def sigma_lr(self):
        return self._sigma_lr.copy()

    def d_block(self, m):
        return self._d_blocks[m].copy()

    def dense(self):
        """Materialize the full ``M(P+F)`` matrix (for export and testing)."""
        v, L, M = self.dirs.vectors, self.L, self.M
        lr_lags = np.einsum("km,klt,ln->mnt", v, self._lr_lags, v)
        out = _toeplitz_dense(lr_lags, L).transpose(0, 2, 1, 3).reshape(M * L, M * L)
        for m in range(M):
            out[m * L:(m + 1) * L, m * L:(m + 1) * L] += self._d_blocks[m]
        return out

    def factor(self, seen, lam):
        seen = np.asarray(seen, dtype=bool).reshape(self.M, self.L)
        return self.cache.get_or_compute(_mask_key(seen, lam), lambda: _WoodburyFactor(self, seen, lam))

    def conditional(self, rho_obs, seen, lam):
        """Conditional means at the unobserved entries, one column per window."""
        seen = np.asarray(seen, dtype=bool).reshape(self.M, self.L)
        fac = self.factor(seen, lam)
        rho_obs = np.asarray(rho_obs, dtype=np.float64)
        n = rho_obs.shape[1]
        x = fac.solve_embedded(_embed(rho_obs, seen))
        y = self.apply_embedded(x)
        return y[~seen].reshape(-1, n)

    def apply_embedded(self, x):
        """Multiply windows shaped ``(M, L, n)`` by the kernel."""
        v = self.dirs.vectors
        out = np.einsum("mab,mbn->man", self._d_blocks, x)
        if self.R:
            proj = np.einsum("km,man->kan", v, x).reshape(self.R * self.L, -1)
            back = (self._sigma_lr @ proj).reshape(self.R, self.L, -1)
            out += np.einsum("km,kan->man", v, back)
        return out


def _embed(rho_obs, seen):
    """Scatter observed values ``(|O|, n)`` into zero-filled windows ``(M, L, n)``."""
    M, L = seen.shape
    out = np.zeros((M, L, rho_obs.shape[1]))
    out[seen] = rho_obs
    return out


class _WoodburyFactor:
    """Factorization of ``(V' S V + D)_OO + lam I`` for one observed pattern.

    ``A = D_OO + lam I`` is inverted block by block through its eigenvalues,
    so it only has to be nonsingular, not positive definite. The projected
    kernel ``S`` is diagonalized and its null directions dropped, so the
    capacitance ``C = diag(1/s) + Q' V_O A^-1 V_O' Q`` never inverts a singular
    matrix. Haynsworth inertia additivity gives
    ``pos(full) = pos(A) + neg(C) - neg(s)``, which decides positive
    definiteness without forming the full matrix. When some ``A`` block is
    numerically singular the observed block is factored densely instead.
    """

    def __init__(self, kernel, seen, lam):
        M, L, R = kernel.M, kernel.L, kernel.R
        self.seen = seen
        self.dense = None
        self.basis = None
        pair = seen[:, :, None] & seen[:, None, :]
        eye = np.broadcast_to(np.eye(L), (M, L, L))
        blocks = np.where(pair, kernel._d_blocks + lam * eye, eye)
        w, U = np.linalg.eigh(blocks)
        scale = max(np.abs(w).max(), 1.0)
        if (np.abs(w) <= SINGULAR_TOL * scale).any():
            self._factor_dense(kernel, seen, lam)
            return
        ainv = np.einsum("mak,mk,mbk->mab", U, 1.0 / w, U)
        self.ainv = np.where(pair, ainv, 0.0)
        positive = int((w > 0).sum())
        # the padding identity rows add M*L - |O| positive eigenvalues to A
        n_obs = int(seen.sum())
        s = np.zeros(0)
        if R:
            s, Q = np.linalg.eigh(kernel._sigma_lr)
            keep = np.abs(s) > NULL_TOL * (np.abs(s).max() if s.size else 0.0)
            s, Q = s[keep], Q[:, keep]
        if s.size == 0:
            if positive != M * L:
                raise NotPositiveDefiniteError(lam, "indefinite diagonal block")
            return
        v = kernel.dirs.vectors
        # V_O A^-1 V_O' as an (R L x R L) matrix: sum_m v_m v_m' (x) A_m^-1
        inner = np.einsum("km,lm,mab->kalb", v, v, self.ainv).reshape(R * L, R * L)
        cap = np.diag(1.0 / s) + Q.T @ inner @ Q
        cap = 0.5 * (cap + cap.T)
        c, W = np.linalg.eigh(cap)
        if (np.abs(c) <= np.finfo(float).eps * c.size * np.abs(c).max()).any():
            raise NotPositiveDefiniteError(lam, "singular capacitance")
        if positive - (M * L - n_obs) + int((c < 0).sum()) - int((s < 0).sum()) != n_obs:
            raise NotPositiveDefiniteError(lam, "indefinite regularized kernel")
        self.basis = Q
        self.cap_vectors = W
        self.cap_values = c
        self.vectors = v
        self.R, self.L = R, L

    def _factor_dense(self, kernel, seen, lam):
        flat = seen.ravel()
        block = kernel.dense()[np.ix_(flat, flat)] + lam * np.eye(int(flat.sum()))
        try:
            self.dense = cho_factor(block, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise NotPositiveDefiniteError(lam, str(exc)) from None

    def _apply_ainv(self, x):
        return np.einsum("mab,mbn->man", self.ainv, x)

    def solve_embedded(self, b):
        """Solve on windows ``(M, L, n)`` that are zero outside the observed set."""
        if self.dense is not None:
            out = np.zeros_like(b)
            out[self.seen] = cho_solve(self.dense, b[self.seen], check_finite=False)
            return out
        y = self._apply_ainv(b)
        if self.basis is None:
            return y
        n = b.shape[2]
        u = np.einsum("km,man->kan", self.vectors, y).reshape(self.R * self.L, n)
        z = self.basis.T @ u
        w = self.cap_vectors @ ((self.cap_vectors.T @ z) / self.cap_values[:, None])
        back = (self.basis @ w).reshape(self.R, self.L, n)
        return y - self._apply_ainv(np.einsum("km,kan->man", self.vectors, back))


def build_lr_bd(corr, dirs):
    """Project the lagged correlations onto ``dirs`` and keep the exact diagonal blocks.

    Works on lag arrays only; the dense kernel is never formed.
    """
    L, M = corr.L, corr.M
    if dirs.M != M:
        raise ValueError(f"directions live in R^{dirs.M}, correlations have M={M}")
    v = dirs.vectors
    sigma_lr_lags = np.einsum("ki,ijt,lj->klt", v, corr.coef[:, :, L - 1:], v)
    # diagonal block m of V' S V at lag tau: sum_kl v_km v_lm S_kl(tau)
    lr_diag = np.einsum("km,klt,lm->mt", v, sigma_lr_lags, v)
    own = corr.coef[np.arange(M), np.arange(M), L - 1:]
    d_lags = own - lr_diag
    return LowRankBlockDiagKernel(corr.P, corr.F, dirs, sigma_lr_lags, d_lags)


def woodbury_solve(kernel, seen, lam, rhs):
    """``((V' S V + D)_OO + lam I)^-1 rhs`` for ``rhs`` over the observed entries."""
    seen = np.asarray(seen, dtype=bool).reshape(kernel.M, kernel.L)
    rhs = np.asarray(rhs, dtype=np.float64)
    vector = rhs.ndim == 1
    rhs2 = rhs[:, None] if vector else rhs
    if rhs2.shape[0] != seen.sum():
        raise ValueError(f"rhs has {rhs2.shape[0]} rows, mask observes {seen.sum()}")
    x = kernel.factor(seen, lam).solve_embedded(_embed(rhs2, seen))[seen]
    return x[:, 0] if vector else x


def schur_infer_lowrank(rho, kernel, mask=None, lam=0.0):
    """Conditional-mean fill using the Woodbury path of ``kernel``."""
    if not isinstance(kernel, LowRankBlockDiagKernel):
        raise TypeError("schur_infer_lowrank needs a LowRankBlockDiagKernel")
    return schur_infer(rho, kernel, mask, lam)
