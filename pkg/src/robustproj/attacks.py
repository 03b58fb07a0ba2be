"""White-box (FGSM, PGD, MIM) and black-box (Square) attacks on projected
classifiers, plus robust-accuracy evaluation.

All attacks constrain the perturbation to the threat model's norm ball and,
by default, clip iterates to the valid pixel box [0, 1]. Clipping can be
disabled so that the threat model matches the pure norm-ball setting the
certificates are stated in. Every attack is deterministic given its seed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .certificates import L2, LINF, ThreatModel
from .errors import ParameterError
from .heads import feature_gradient, forward, softmax
from .numerics import make_rng
from .projection import project

FGSM = "fgsm"
PGD = "pgd"
MIM = "mim"
SQUARE = "square"

# Square-attack schedule constants, frozen for reproducibility: the window
# starts at a 0.3 area fraction and halves each time the spent query budget
# crosses one of these fractions.
SQUARE_INIT_FRACTION = 0.3
SQUARE_SCHEDULE = (0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    threat: ThreatModel
    steps: int | None = None      # defaults: PGD 40, MIM 20
    momentum: float = 1.0
    budget: int = 5000
    seed: int = 0
    clip_to_unit_box: bool = True

    def __post_init__(self):
        if self.kind not in (FGSM, PGD, MIM, SQUARE):
            raise ParameterError(f"unknown attack kind {self.kind!r}")
        if self.steps is not None and self.steps < 1:
            raise ParameterError("steps must be >= 1")
        if self.kind == SQUARE and self.budget < 1:
            raise ParameterError("query budget must be >= 1")


@dataclass(frozen=True)
class AttackResult:
    x_adv: np.ndarray
    success: np.ndarray        # prediction != label, per example
    queries: np.ndarray        # model evaluations consumed, per example
    norms: np.ndarray          # achieved ||x' - x||_p, per example
    zero_gradient: np.ndarray = field(default=None)


class ProjectedClassifier:
    """Read-only view of (projection, head) exposing what attacks need."""

    def __init__(self, model, head):
        self.model = model
        self.head = head

    def logits(self, X):
        return forward(self.head, project(self.model, X))

    def predict(self, X):
        return np.argmax(self.logits(X), axis=1)

    def probabilities(self, X):
        return softmax(self.logits(X))

    def per_example_loss(self, X, y):
        logits = self.logits(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        return logz - shifted[np.arange(len(y)), y]

    def input_grad(self, X, y):
        dZ = feature_gradient(self.head, project(self.model, X), y)
        return dZ @ self.model.W


def _as_batch(x, y):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    return X, y, single


def _pert_norm(delta, p):
    if p == LINF:
        return np.abs(delta).max(axis=1, initial=0.0)
    return np.linalg.norm(delta, axis=1)


def _project_ball(delta, eps, p):
    if p == LINF:
        return np.clip(delta, -eps, eps)
    norms = np.linalg.norm(delta, axis=1, keepdims=True)
    scale = np.minimum(1.0, eps / np.maximum(norms, 1e-300))
    return delta * scale


def _step_direction(grad, p):
    """Unit-size ascent direction: sign for l-inf, normalized for l2."""
    if p == LINF:
        return np.sign(grad)
    norms = np.linalg.norm(grad, axis=1, keepdims=True)
    return np.divide(grad, norms, out=np.zeros_like(grad), where=norms > 0)


def _finish(clf, X, X_adv, y, p, queries):
    preds = np.argmax(clf.logits(X_adv), axis=1)
    return AttackResult(
        x_adv=X_adv,
        success=preds != y,
        queries=np.full(len(y), queries),
        norms=_pert_norm(X_adv - X, p),
    )


def fgsm(clf, x, y, threat, clip=True):
    """Single-step attack: the sign of the gradient for l-inf, the normalized
    gradient for l2."""
    X, y, single = _as_batch(x, y)
    eps = threat.epsilon
    grad = clf.input_grad(X, y)
    zero = np.all(grad == 0.0, axis=1)
    X_adv = X + eps * _step_direction(grad, threat.p)
    X_adv[zero] = X[zero]
    if clip:
        X_adv = np.clip(X_adv, 0.0, 1.0)
    result = _finish(clf, X, X_adv, y, threat.p, queries=1)
    return AttackResult(
        x_adv=result.x_adv[0] if single else result.x_adv,
        success=result.success,
        queries=result.queries,
        norms=result.norms,
        zero_gradient=zero,
    )


def pgd(clf, x, y, threat, steps=40, seed=0, clip=True):
    """Projected gradient ascent with a uniform random start in the ball.

    Step size is eps/4. Returns the highest-loss iterate encountered, which is
    a strictly stronger adversary than the final iterate. A zero gradient
    mid-run is replaced by a random direction so the search keeps moving.
    """
    X, y, single = _as_batch(x, y)
    n, D = X.shape
    eps = threat.epsilon
    alpha = eps / 4.0
    rng = make_rng(seed)

    if threat.p == LINF:
        delta = rng.uniform(-eps, eps, (n, D))
    else:
        direction = rng.normal(size=(n, D))
        direction = _step_direction(direction, L2)
        radius = eps * rng.random((n, 1)) ** (1.0 / D)
        delta = direction * radius
    X_cur = X + delta
    if clip:
        X_cur = np.clip(X_cur, 0.0, 1.0)

    best_loss = clf.per_example_loss(X_cur, y)
    X_best = X_cur.copy()
    for _ in range(steps):
        grad = clf.input_grad(X_cur, y)
        zero_rows = np.all(grad == 0.0, axis=1)
        if zero_rows.any():
            grad[zero_rows] = rng.normal(size=(int(zero_rows.sum()), D))
        X_cur = X_cur + alpha * _step_direction(grad, threat.p)
        X_cur = X + _project_ball(X_cur - X, eps, threat.p)
        if clip:
            X_cur = np.clip(X_cur, 0.0, 1.0)
        loss = clf.per_example_loss(X_cur, y)
        better = loss > best_loss
        X_best[better] = X_cur[better]
        best_loss = np.maximum(best_loss, loss)

    result = _finish(clf, X, X_best, y, threat.p, queries=steps + 1)
    return AttackResult(
        x_adv=result.x_adv[0] if single else result.x_adv,
        success=result.success,
        queries=result.queries,
        norms=result.norms,
    )


def mim(clf, x, y, threat, steps=20, mu=1.0, clip=True):
    """Momentum iterative attack with l1-normalized gradient accumulation.

    Step size is eps/5; velocity update g <- mu*g + grad/||grad||_1 followed by
    a sign step (l-inf) or normalized step (l2) and ball projection.
    """
    X, y, single = _as_batch(x, y)
    eps = threat.epsilon
    alpha = eps / 5.0
    velocity = np.zeros_like(X)
    X_cur = X.copy()
    zero_first = None
    for t in range(steps):
        grad = clf.input_grad(X_cur, y)
        l1 = np.abs(grad).sum(axis=1, keepdims=True)
        if t == 0:
            zero_first = l1[:, 0] == 0.0
        velocity = mu * velocity + np.divide(
            grad, l1, out=np.zeros_like(grad), where=l1 > 0
        )
        X_cur = X_cur + alpha * _step_direction(velocity, threat.p)
        X_cur = X + _project_ball(X_cur - X, eps, threat.p)
        if clip:
            X_cur = np.clip(X_cur, 0.0, 1.0)
    X_cur[zero_first] = X[zero_first]
    result = _finish(clf, X, X_cur, y, threat.p, queries=steps)
    return AttackResult(
        x_adv=result.x_adv[0] if single else result.x_adv,
        success=result.success,
        queries=result.queries,
        norms=result.norms,
        zero_gradient=zero_first,
    )


def _margin_score(clf, x, y):
    """Probability gap between the true class and the best other class.

    Negative iff the example is misclassified; this is the score the square
    attack minimizes, using only model outputs."""
    probs = clf.probabilities(x[None, :])[0]
    others = np.delete(probs, y)
    return float(probs[y] - others.max())


def _square_side(t, budget, image_side):
    passed = sum(1 for frac in SQUARE_SCHEDULE if t >= frac * budget)
    fraction = SQUARE_INIT_FRACTION * 0.5**passed
    side = int(round(image_side * math.sqrt(fraction)))
    return min(image_side, max(1, side))


def square_attack(clf, x, y, threat, budget=5000, seed=0, clip=True):
    """Score-based random search over +/-eps square patches (l-inf only).

    Starts from a vertical-stripe initialization, then repeatedly proposes a
    random square window filled with a +/-eps constant and keeps the proposal
    iff the margin score decreases. Never touches gradients.
    """
    if threat.p != LINF:
        raise ParameterError("square attack supports the l-inf threat model only")
    if budget < 1:
        raise ParameterError("query budget must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    y = int(y)
    D = x.shape[0]
    side = math.isqrt(D)
    if side * side != D:
        raise ParameterError(f"input of length {D} is not a square image")
    eps = threat.epsilon
    rng = make_rng(seed)

    def candidate(delta):
        x_cand = x + delta.reshape(-1)
        return np.clip(x_cand, 0.0, 1.0) if clip else x_cand

    delta = (eps * rng.choice([-1.0, 1.0], size=side))[None, :].repeat(side, axis=0)
    best = _margin_score(clf, candidate(delta), y)
    queries = 1
    while queries < budget and best >= 0.0:
        h = _square_side(queries, budget, side)
        r0 = int(rng.integers(0, side - h + 1))
        c0 = int(rng.integers(0, side - h + 1))
        sign = float(rng.choice([-1.0, 1.0]))
        proposal = delta.copy()
        proposal[r0:r0 + h, c0:c0 + h] = sign * eps
        score = _margin_score(clf, candidate(proposal), y)
        queries += 1
        if score < best:
            delta = proposal
            best = score

    x_adv = candidate(delta)
    pred = int(np.argmax(clf.logits(x_adv[None, :])[0]))
    return AttackResult(
        x_adv=x_adv,
        success=np.array([pred != y]),
        queries=np.array([queries]),
        norms=np.array([float(np.abs(x_adv - x).max())]),
    )


def run_attack(model, head, X, y, config):
    """Dispatch one configured attack over a batch; returns adversarial inputs."""
    clf = ProjectedClassifier(model, head)
    clip = config.clip_to_unit_box
    if config.kind == FGSM:
        return fgsm(clf, X, y, config.threat, clip=clip).x_adv
    if config.kind == PGD:
        steps = config.steps or 40
        return pgd(clf, X, y, config.threat, steps=steps, seed=config.seed, clip=clip).x_adv
    if config.kind == MIM:
        steps = config.steps or 20
        return mim(clf, X, y, config.threat, steps=steps, mu=config.momentum, clip=clip).x_adv
    X = np.asarray(X, dtype=np.float64)
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        res = square_attack(
            clf, X[i], int(y[i]), config.threat,
            budget=config.budget, seed=config.seed + i, clip=clip,
        )
        out[i] = res.x_adv
    return out


def robust_accuracy(model, head, dataset, config):
    """Fraction of test points still correct after the configured attack.

    Untargeted, run on every point; already-misclassified points count as
    errors whether or not the attack moves them."""
    X_adv = run_attack(model, head, dataset.X, dataset.y, config)
    clf = ProjectedClassifier(model, head)
    preds = clf.predict(X_adv)
    return float(np.mean(preds == dataset.y))
