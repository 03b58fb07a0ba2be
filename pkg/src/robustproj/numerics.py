"""Dense linear-algebra and random-number primitives used by every other module.

Matrices and vectors are plain float64 numpy arrays. Randomness always flows
through a generator created by :func:`make_rng`; the underlying algorithm is
numpy's PCG64, which is fully specified and produces identical streams for a
given seed on every platform.
"""

import numpy as np

from .errors import DimensionError, ParameterError

SYMMETRY_TOL = 1e-10
SPECTRAL_REL_TOL = 1e-9
SPECTRAL_MAX_ITERS = 10_000


def make_rng(seed):
    """Seeded PCG64 generator; same seed, same stream, every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def sym_eig(S):
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending and
    eigenvectors as orthonormal columns. Each eigenvector is sign-normalized so
    that its largest-magnitude entry is positive, making the decomposition
    deterministic across runs.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if float(np.abs(S - S.T).max(initial=0.0)) > SYMMETRY_TOL * scale:
        raise DimensionError("matrix is not symmetric within tolerance")
    evals, evecs = np.linalg.eigh(S)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    # sign convention: largest-magnitude entry of each column made positive
    for j in range(evecs.shape[1]):
        k = int(np.argmax(np.abs(evecs[:, j])))
        if evecs[k, j] < 0:
            evecs[:, j] = -evecs[:, j]
    return evals, evecs


def spectral_norm(W):
    """Largest singular value of W via power iteration on the Gram matrix.

    Deterministic: the iteration starts from the all-ones vector (falling back
    to e1 if that lies in the null space) and stops when the Rayleigh quotient
    is stable to a 1e-9 relative tolerance.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.size == 0:
        raise DimensionError(f"expected a non-empty matrix, got shape {W.shape}")
    # iterate on the smaller Gram matrix
    G = W @ W.T if W.shape[0] <= W.shape[1] else W.T @ W
    n = G.shape[0]
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(SPECTRAL_MAX_ITERS):
        w = G @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            # v is in the null space; restart from e1 once, else W could be 0
            if v[0] == 1.0:
                return 0.0
            v = np.zeros(n)
            v[0] = 1.0
            continue
        v = w / norm
        lam_new = float(v @ (G @ v))
        if abs(lam_new - lam) <= SPECTRAL_REL_TOL * max(lam_new, 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def soft_threshold(v, lam):
    """Entrywise shrinkage sign(v) * max(|v| - lam, 0)."""
    if lam < 0:
        raise ParameterError(f"threshold must be >= 0, got {lam}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def rng_uniform(rng, lo, hi, n):
    """n uniform samples on [lo, hi], reproducible per seed."""
    if lo > hi:
        raise ParameterError(f"invalid range [{lo}, {hi}]")
    return rng.uniform(lo, hi, int(n))


def rng_normal(rng, mean, std, n):
    """n Gaussian samples, reproducible per seed."""
    if std < 0:
        raise ParameterError(f"std must be >= 0, got {std}")
    return rng.normal(mean, std, int(n))
