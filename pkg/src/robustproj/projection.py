"""Linear feature extractors: dense PCA and sparse PCA with deflation.

Both fits produce a :class:`ProjectionModel` holding the map z = W x + b with
b = -W @ mean, so projecting the training mean gives the zero vector.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .numerics import soft_threshold, spectral_norm, sym_eig

ZERO_ENTRY_TOL = 1e-12  # entries below this magnitude count as zero

PCA = "pca"
SPCA = "spca"


@dataclass(frozen=True)
class ProjectionModel:
    W: np.ndarray          # (r, D) loading vectors as rows
    b: np.ndarray          # (r,), equal to -W @ mean
    mean: np.ndarray       # (D,) training mean the fit was centered on
    kind: str              # PCA or SPCA
    explained_variance: np.ndarray  # (r,) variance captured per component
    converged: bool = True

    def __post_init__(self):
        r = self.W.shape[0]
        if self.kind == PCA:
            gram = self.W @ self.W.T
            if np.abs(gram - np.eye(r)).max() >= 1e-8:
                raise ParameterError("PCA rows are not orthonormal")
        elif self.kind == SPCA:
            row_norms = np.linalg.norm(self.W, axis=1)
            if np.abs(row_norms - 1.0).max() >= 1e-8:
                raise ParameterError("SPCA rows are not unit-norm")
        else:
            raise ParameterError(f"unknown projection kind {self.kind!r}")

    @property
    def r(self):
        return self.W.shape[0]

    @property
    def dim(self):
        return self.W.shape[1]

    @property
    def density(self):
        return float(np.mean(np.abs(self.W) > ZERO_ENTRY_TOL))

    @property
    def col_norms(self):
        return np.linalg.norm(self.W, axis=0)

    @property
    def per_row_nonzeros(self):
        return (np.abs(self.W) > ZERO_ENTRY_TOL).sum(axis=1)


@dataclass(frozen=True)
class SparsityReport:
    density: float
    per_row_nonzeros: np.ndarray
    col_norms: np.ndarray
    col_norm_sum: float
    spectral_norm: float
    l1_norm: float  # sum |W_ij|, the budget form of the sparsity constraint


def _covariance(X_centered):
    X = np.asarray(X_centered, dtype=np.float64)
    return (X.T @ X) / X.shape[0]


def _resolve_mean(mean, D):
    if mean is None:
        return np.zeros(D)
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != (D,):
        raise DimensionError(f"mean has shape {mean.shape}, expected ({D},)")
    return mean


def fit_pca(X_centered, r, mean=None):
    """Top-r eigenvectors of the empirical covariance, as rows of W."""
    X = np.asarray(X_centered, dtype=np.float64)
    N, D = X.shape
    if not 1 <= r <= D:
        raise ParameterError(f"r={r} must be in 1..{D}")
    if r > min(N, D):
        raise ParameterError(f"r={r} exceeds min(N, D)={min(N, D)}")
    S = _covariance(X)
    evals, evecs = sym_eig(S)
    if evals[r - 1] <= max(evals[0], 1.0) * 1e-12:
        warnings.warn(
            f"covariance is rank-deficient below component {r}; "
            "ordering uses the deterministic tie-break",
            stacklevel=2,
        )
    mean = _resolve_mean(mean, D)
    W = evecs[:, :r].T.copy()
    return ProjectionModel(
        W=W, b=-W @ mean, mean=mean, kind=PCA, explained_variance=evals[:r].copy()
    )


def _support_eigvec(S, support):
    """Leading eigenvector of S restricted to a coordinate support."""
    sub = S[np.ix_(support, support)]
    evals, evecs = sym_eig(sub)
    v = np.zeros(S.shape[0])
    v[support] = evecs[:, 0]
    return v, float(evals[0])


def _thresholded_power_support(S, lam, v0, k_candidates, max_iters, tol):
    """Power iteration with soft-thresholding; returns (support, iterate, ok)."""
    v = v0.copy()
    for it in range(max_iters):
        u = S @ v
        u[~k_candidates] = 0.0
        u = soft_threshold(u, lam)
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return np.zeros(len(v), dtype=bool), v0, True
        u /= norm
        if np.linalg.norm(u - v) < tol:
            return np.abs(u) > ZERO_ENTRY_TOL, u, True
        v = u
    return np.abs(v) > ZERO_ENTRY_TOL, v, False


def fit_spca(X_centered, r, target_density, max_iters=200, tol=1e-9, mean=None):
    """Greedy sparse components via thresholded power iteration and deflation.

    Each row is extracted from the deflated covariance by iterating
    v <- normalize(soft_threshold(S v, lam)), with lam bisected until the
    nonzero count matches round(target_density * D); the final row is the exact
    leading eigenvector of the covariance restricted to the found support.
    """
    X = np.asarray(X_centered, dtype=np.float64)
    N, D = X.shape
    if not 0.0 < target_density <= 1.0:
        raise ParameterError(f"target_density={target_density} must be in (0, 1]")
    if not 1 <= r <= D:
        raise ParameterError(f"r={r} must be in 1..{D}")
    k_target = int(round(target_density * D))
    if k_target < 1:
        raise ParameterError(
            f"target_density={target_density} leaves no nonzero entries for D={D}"
        )

    S_def = _covariance(X)
    candidates = np.diag(S_def) > 0.0  # zero-variance columns never enter a support
    if candidates.sum() < k_target:
        raise ParameterError("fewer positive-variance columns than requested nonzeros")

    W = np.zeros((r, D))
    variances = np.zeros(r)
    all_converged = True
    for comp in range(r):
        # deterministic start: unit vector on the largest-variance candidate
        diag = np.where(candidates, np.diag(S_def), -np.inf)
        v0 = np.zeros(D)
        v0[int(np.argmax(diag))] = 1.0

        if k_target >= int(candidates.sum()):
            support = candidates.copy()
        else:
            lam_hi = float(np.abs(S_def @ v0).max()) + 1.0
            lo, hi = 0.0, lam_hi
            best_support, best_gap = None, None
            warm = v0
            for _ in range(60):
                lam = 0.5 * (lo + hi)
                support, warm_next, ok = _thresholded_power_support(
                    S_def, lam, warm, candidates, max_iters, tol
                )
                all_converged &= ok
                nnz = int(support.sum())
                if nnz > 0:
                    warm = warm_next
                gap = abs(nnz - k_target)
                if nnz >= k_target and (best_gap is None or gap < best_gap):
                    best_support, best_gap = support, gap
                if nnz == k_target:
                    break
                if nnz > k_target:
                    lo = lam
                else:
                    hi = lam
            if best_support is None:
                # fall back to the k strongest coordinates of the dense leading vector
                _, vec, ok = _thresholded_power_support(
                    S_def, 0.0, v0, candidates, max_iters, tol
                )
                all_converged &= ok
                best_support = np.zeros(D, dtype=bool)
                best_support[np.argsort(-np.abs(vec))[:k_target]] = True
            support = best_support
            if int(support.sum()) > k_target:
                # trim to the k strongest coordinates of the restricted eigenvector
                vec, _ = _support_eigvec(S_def, np.flatnonzero(support))
                order = np.argsort(-np.abs(vec))
                support = np.zeros(D, dtype=bool)
                support[order[:k_target]] = True

        v, var = _support_eigvec(S_def, np.flatnonzero(support))
        W[comp] = v
        variances[comp] = var
        # projection deflation removes the extracted direction's variance
        P = np.eye(D) - np.outer(v, v)
        S_def = P @ S_def @ P
        S_def = 0.5 * (S_def + S_def.T)

    mean = _resolve_mean(mean, D)
    return ProjectionModel(
        W=W,
        b=-W @ mean,
        mean=mean,
        kind=SPCA,
        explained_variance=variances,
        converged=all_converged,
    )


def project(model, X):
    """Apply z = W x + b to each row of X."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.dim:
        raise DimensionError(f"data has {X.shape[1]} columns, model expects {model.dim}")
    Z = X @ model.W.T + model.b
    return Z[0] if single else Z


def sparsity_report(model):
    """Quantities entering the dual-norm and operator-norm bounds."""
    col_norms = model.col_norms
    return SparsityReport(
        density=model.density,
        per_row_nonzeros=model.per_row_nonzeros,
        col_norms=col_norms,
        col_norm_sum=float(col_norms.sum()),
        spectral_norm=spectral_norm(model.W),
        l1_norm=float(np.abs(model.W).sum()),
    )
