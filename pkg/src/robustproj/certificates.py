"""Exact robustness certificates for linear heads and operator-norm diagnostics.

For a binary linear head with weight u on features z = Wx + b, the prediction
is provably invariant to any perturbation delta with ||delta||_inf <= eps as
long as the margin exceeds eps * ||W^T u||_1, and likewise with the l2 norm
pair. The certified radius is the margin divided by the matching dual norm.
The certificates use the pure norm-ball threat model; they deliberately ignore
the [0,1] pixel box, which only makes them conservative.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, UnsupportedHeadError
from .heads import LinearHead, forward, lipschitz_upper_bound
from .numerics import spectral_norm
from .projection import project

LINF = "inf"
L2 = "2"
EXACT_NORM_MAX_DIM = 20


@dataclass(frozen=True)
class ThreatModel:
    p: str           # LINF or L2
    epsilon: float

    def __post_init__(self):
        if self.p not in (LINF, L2):
            raise ParameterError(f"norm must be {LINF!r} or {L2!r}, got {self.p!r}")
        if self.epsilon < 0:
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class CertificateRecord:
    index: int
    clean_pred: int
    label: int
    margin: float
    dual_norm: float
    radius: float
    norm_p: str

    @property
    def correct(self):
        return self.clean_pred == self.label


def dual_norms(W, v):
    """(l1, l2) norms of W^T v, the two duals entering the certificates."""
    W = np.asarray(W, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (W.shape[0],):
        raise DimensionError(f"v has shape {v.shape}, expected ({W.shape[0]},)")
    w = W.T @ v
    return float(np.abs(w).sum()), float(np.linalg.norm(w))


def _radius(margin, dual):
    if margin <= 0.0:
        return 0.0
    if dual == 0.0:
        return float("inf")  # the input cannot move this logit at all
    return margin / dual


def certified_radius_binary(W, u, b_head, x, y, p, b_proj=None):
    """Certified radius for a binary linear head; y must be -1 or +1."""
    if y not in (-1, 1):
        raise ParameterError(f"y must be -1 or +1, got {y}")
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    z = W @ x if b_proj is None else W @ x + np.asarray(b_proj)
    margin = y * (float(np.dot(u, z)) + b_head)
    l1, l2 = dual_norms(W, u)
    return _radius(margin, l1 if p == LINF else l2)


def certified_radius_multiclass(W, U, biases, x, p):
    """Predicted class and its certified radius under the pairwise-margin rule."""
    W = np.asarray(W, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    K = U.shape[1]
    if K < 2:
        raise DimensionError("need at least 2 classes")
    z = W @ np.asarray(x, dtype=np.float64)
    logits = U.T @ z + biases
    k_star = int(np.argmax(logits))
    radius = float("inf")
    for k in range(K):
        if k == k_star:
            continue
        gamma = float(logits[k_star] - logits[k])
        l1, l2 = dual_norms(W, U[:, k_star] - U[:, k])
        radius = min(radius, _radius(gamma, l1 if p == LINF else l2))
        if radius == 0.0:
            break
    return k_star, radius


def certify_dataset(model, head, dataset, p):
    """Per-example certificate records for a linear head on raw inputs.

    The projection bias is folded into the head biases, so the certificate is
    over the end-to-end map x -> U^T (Wx + b) + biases.
    """
    if not isinstance(head, LinearHead):
        raise UnsupportedHeadError(
            "exact certificates cover linear heads only; use sensitivity_bound "
            "for MLP heads"
        )
    Z = project(model, dataset.X)
    logits = forward(head, Z)
    preds = np.argmax(logits, axis=1)
    K = head.n_classes

    duals = np.empty((K, K))
    for a in range(K):
        for b in range(a + 1, K):
            l1, l2 = dual_norms(model.W, head.U[:, a] - head.U[:, b])
            duals[a, b] = duals[b, a] = l1 if p == LINF else l2

    records = []
    for i in range(dataset.n):
        k_star = int(preds[i])
        best_rad = float("inf")
        best_gamma = float("inf")
        best_dual = 0.0
        for k in range(K):
            if k == k_star:
                continue
            gamma = float(logits[i, k_star] - logits[i, k])
            rad = _radius(gamma, duals[k_star, k])
            if rad < best_rad or best_dual == 0.0:
                best_rad, best_gamma, best_dual = rad, gamma, duals[k_star, k]
        correct = k_star == int(dataset.y[i])
        records.append(
            CertificateRecord(
                index=i,
                clean_pred=k_star,
                label=int(dataset.y[i]),
                margin=best_gamma,
                dual_norm=best_dual,
                radius=best_rad if correct and best_gamma > 0 else 0.0,
                norm_p=p,
            )
        )
    return records


def certified_accuracy_curve(model, head, dataset, p, epsilons):
    """Fraction of test points certified-and-correct at each radius."""
    epsilons = list(epsilons)
    if any(b < a for a, b in zip(epsilons, epsilons[1:])):
        raise ParameterError("epsilons must be sorted ascending")
    records = certify_dataset(model, head, dataset, p)
    radii = np.array([rec.radius if rec.correct else 0.0 for rec in records])
    return [(eps, float(np.mean(radii > eps))) for eps in epsilons]


def exact_linf_to_l2_norm(W):
    """||W||_{inf->2} by enumerating sign vectors; only feasible for small D."""
    W = np.asarray(W, dtype=np.float64)
    D = W.shape[1]
    if D > EXACT_NORM_MAX_DIM:
        raise ParameterError(f"exact inf->2 norm needs D <= {EXACT_NORM_MAX_DIM}, got {D}")
    best = 0.0
    # fix the first sign to +1: the norm is symmetric under global sign flip
    for bits in range(1 << (D - 1)):
        signs = np.ones(D)
        for j in range(D - 1):
            if bits >> j & 1:
                signs[j + 1] = -1.0
        best = max(best, float(np.linalg.norm(W @ signs)))
    return best


@dataclass(frozen=True)
class OperatorNormDiagnostics:
    max_col_norm: float
    col_norm_sum: float
    spectral: float
    sqrt_d_spectral: float
    exact_linf_to_l2: float | None  # only computed for D <= 20


def operator_norm_diagnostics(W, compute_exact=None):
    """All quantities in the operator-norm sandwich, plus the exact norm when cheap."""
    W = np.asarray(W, dtype=np.float64)
    D = W.shape[1]
    col_norms = np.linalg.norm(W, axis=0)
    spec = spectral_norm(W)
    if compute_exact is None:
        compute_exact = D <= EXACT_NORM_MAX_DIM
    exact = exact_linf_to_l2_norm(W) if compute_exact else None
    return OperatorNormDiagnostics(
        max_col_norm=float(col_norms.max()),
        col_norm_sum=float(col_norms.sum()),
        spectral=spec,
        sqrt_d_spectral=float(np.sqrt(D)) * spec,
        exact_linf_to_l2=exact,
    )


def sensitivity_bound(model, head):
    """Lipschitz bounds on the end-to-end map for each threat norm.

    Returns (l2_bound, linf_bound): L_C * ||W||_{2->2} for l2 perturbations and
    the column-norm-sum surrogate L_C * sum_j ||w_j||_2 for l-infinity ones.
    """
    L = lipschitz_upper_bound(head)
    col_sum = float(np.linalg.norm(model.W, axis=0).sum())
    return L * spectral_norm(model.W), L * col_sum
