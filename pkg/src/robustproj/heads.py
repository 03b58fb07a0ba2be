"""Classification heads on projected features and their training loop.

Two head types are supported: a softmax-linear head (whose binary form is what
the exact certificates apply to) and a small ReLU MLP with hidden sizes 256 and
128. Both are trained with mini-batch Adam on softmax cross-entropy, entirely
in numpy, and are bit-reproducible for a fixed seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError, ParameterError
from .numerics import make_rng, spectral_norm
from .projection import project

MLP_HIDDEN = (256, 128)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ParameterError("hyperparameters must be positive")


@dataclass(frozen=True)
class LinearHead:
    """Softmax-linear head: logits = z @ U + biases."""

    U: np.ndarray       # (r, K)
    biases: np.ndarray  # (K,)

    @property
    def in_dim(self):
        return self.U.shape[0]

    @property
    def n_classes(self):
        return self.U.shape[1]

    def binary_parts(self):
        """Equivalent single weight vector and bias for the K=2 case.

        The sign convention treats label 1 as the positive class, so the
        margin of (z, label) is y * (u @ z + bias) with y in {-1, +1}.
        """
        if self.n_classes != 2:
            raise DimensionError("binary form requires exactly 2 classes")
        u = self.U[:, 1] - self.U[:, 0]
        bias = float(self.biases[1] - self.biases[0])
        return u, bias


@dataclass(frozen=True)
class MlpHead:
    """ReLU MLP head: dense layers r -> 256 -> 128 -> K."""

    weights: tuple      # ((r,256), (256,128), (128,K))
    biases: tuple
    epoch_log: tuple = field(default=(), compare=False)

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def n_classes(self):
        return self.weights[-1].shape[1]


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, y):
    """Mean softmax cross-entropy, computed via a stable log-sum-exp."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(logz - shifted[np.arange(len(y)), y]))


def forward(head, Z):
    """Raw logits for a batch of feature rows."""
    Z = np.asarray(Z, dtype=np.float64)
    single = Z.ndim == 1
    if single:
        Z = Z[None, :]
    if Z.shape[1] != head.in_dim:
        raise DimensionError(f"features have width {Z.shape[1]}, head expects {head.in_dim}")
    if isinstance(head, LinearHead):
        out = Z @ head.U + head.biases
    else:
        a = Z
        for W, b in zip(head.weights[:-1], head.biases[:-1]):
            a = np.maximum(a @ W + b, 0.0)
        out = a @ head.weights[-1] + head.biases[-1]
    return out[0] if single else out


def predict(head, Z):
    logits = forward(head, Z)
    if logits.ndim == 1:
        return int(np.argmax(logits))
    return np.argmax(logits, axis=1)


def _layer_dims(head):
    if isinstance(head, LinearHead):
        return [(head.U, head.biases)]
    return list(zip(head.weights, head.biases))


def _forward_cached(layers, Z):
    """Pre-activations and activations of every layer, for backprop."""
    acts = [Z]
    pre = []
    a = Z
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(a)
    return pre, acts


def _backprop(layers, pre, acts, y):
    """Gradients of the summed cross-entropy w.r.t. parameters and input."""
    n = len(y)
    probs = softmax(acts[-1])
    delta = probs
    delta[np.arange(n), y] -= 1.0
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        delta = delta @ W.T
        if i > 0:
            delta = delta * (pre[i - 1] > 0.0)
    return grads, delta  # delta is now dLoss/dInput, one row per example


def init_layers(dims, rng):
    """He-style uniform fan-in initialization, zero biases."""
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / d_in)
        W = rng.uniform(-limit, limit, (d_in, d_out))
        layers.append((W, np.zeros(d_out)))
    return layers


def _train_layers(dims, Z, y, config):
    """Mini-batch Adam on softmax cross-entropy over a dense layer stack."""
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.max() >= dims[-1]:
        raise DimensionError(f"label {y.max()} out of range for {dims[-1]} classes")
    rng = make_rng(config.seed)
    layers = init_layers(dims, rng)
    m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    t = 0
    n = Z.shape[0]
    log = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            Zb, yb = Z[idx], y[idx]
            pre, acts = _forward_cached(layers, Zb)
            batch_loss = cross_entropy(acts[-1], yb)
            if not np.isfinite(batch_loss):
                raise DivergenceError(epoch)
            epoch_loss += batch_loss * len(idx)
            correct += int((np.argmax(acts[-1], axis=1) == yb).sum())
            grads, _ = _backprop(layers, pre, acts, yb)
            t += 1
            for i, (W, b) in enumerate(layers):
                gW, gb = grads[i][0] / len(idx), grads[i][1] / len(idx)
                mW, mb = m[i]
                vW, vb = v[i]
                mW[:] = config.beta1 * mW + (1 - config.beta1) * gW
                mb[:] = config.beta1 * mb + (1 - config.beta1) * gb
                vW[:] = config.beta2 * vW + (1 - config.beta2) * gW**2
                vb[:] = config.beta2 * vb + (1 - config.beta2) * gb**2
                corr1 = 1 - config.beta1**t
                corr2 = 1 - config.beta2**t
                W -= config.learning_rate * (mW / corr1) / (np.sqrt(vW / corr2) + config.adam_eps)
                b -= config.learning_rate * (mb / corr1) / (np.sqrt(vb / corr2) + config.adam_eps)
        log.append((epoch_loss / n, correct / n))
    return layers, log


def train_mlp(Z, y, config, hidden=MLP_HIDDEN, n_classes=None):
    """Train the ReLU MLP head; returns the head and a per-epoch (loss, acc) log."""
    y = np.asarray(y, dtype=np.int64)
    K = int(n_classes or y.max() + 1)
    dims = [np.asarray(Z).shape[1], *hidden, K]
    layers, log = _train_layers(dims, Z, y, config)
    head = MlpHead(
        weights=tuple(W for W, _ in layers),
        biases=tuple(b for _, b in layers),
        epoch_log=tuple(log),
    )
    return head, log


def fit_linear_head(Z, y, config, n_classes=None):
    """Multinomial logistic regression trained with the same Adam loop."""
    y = np.asarray(y, dtype=np.int64)
    K = int(n_classes or y.max() + 1)
    dims = [np.asarray(Z).shape[1], K]
    layers, _ = _train_layers(dims, Z, y, config)
    return LinearHead(U=layers[0][0], biases=layers[0][1])


def feature_gradient(head, Z, y):
    """Per-example gradient of the cross-entropy loss w.r.t. the features."""
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    layers = _layer_dims(head)
    pre, acts = _forward_cached(layers, Z)
    _, dZ = _backprop(layers, pre, acts, y)
    return dZ


def input_gradient(head, model, x, y):
    """Gradient of the loss w.r.t. the raw input, chained through z = Wx + b."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    Z = project(model, X)
    dZ = feature_gradient(head, Z, np.atleast_1d(y))
    dX = dZ @ model.W
    return dX[0] if single else dX


def parameter_gradients(head, Z, y):
    """Per-layer (dW, db) gradients of the mean cross-entropy, for testing."""
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    layers = _layer_dims(head)
    pre, acts = _forward_cached(layers, Z)
    grads, _ = _backprop(layers, pre, acts, y)
    return [(gW / len(y), gb / len(y)) for gW, gb in grads]


def lipschitz_upper_bound(head):
    """Product of layer spectral norms; ReLU is 1-Lipschitz so this bounds L_C."""
    if isinstance(head, LinearHead):
        return spectral_norm(head.U)
    bound = 1.0
    for W in head.weights:
        bound *= spectral_norm(W)
    return bound
