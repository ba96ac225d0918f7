"""Small feed-forward ReLU softmax classifier with exact analytic gradients.

Used for target models, shadow models, and (with zero hidden layers) the
logistic-regression attack models.  Everything is float64; backward passes
are hand-written so they can be checked against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .rng import generator

PROB_CLAMP = 1e-12     # floor applied to probabilities before any logarithm
SOFTMAX_FLOOR = 1e-15  # keeps softmax outputs strictly inside (0, 1)


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]   # weights[l]: (layer_dims[l], layer_dims[l+1])
    biases: list[np.ndarray]    # biases[l]: (layer_dims[l+1],)
    activation: str = "relu"

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]


@dataclass
class GradientSet:
    """Per-parameter gradients with the same shapes as an MlpModel."""

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def global_norm(self) -> float:
        sq = sum(float(np.sum(g * g)) for g in self.d_weights)
        sq += sum(float(np.sum(g * g)) for g in self.d_biases)
        return float(np.sqrt(sq))

    def add_(self, other: "GradientSet", scale: float = 1.0) -> "GradientSet":
        for a, b in zip(self.d_weights, other.d_weights):
            a += scale * b
        for a, b in zip(self.d_biases, other.d_biases):
            a += scale * b
        return self


@dataclass
class PerExampleGradients:
    """Stacked per-example gradients: leading axis indexes the batch."""

    d_weights: list[np.ndarray]  # (n, fan_in, fan_out) per layer
    d_biases: list[np.ndarray]   # (n, fan_out) per layer

    @property
    def num_examples(self) -> int:
        return len(self.d_biases[0])

    def example(self, i: int) -> GradientSet:
        return GradientSet([w[i] for w in self.d_weights],
                           [b[i] for b in self.d_biases])


def zeros_like_grads(model: MlpModel) -> GradientSet:
    return GradientSet([np.zeros_like(w) for w in model.weights],
                       [np.zeros_like(b) for b in model.biases])


def init_model(layer_dims, seed: int) -> MlpModel:
    """He-uniform weights (limit sqrt(6/fan_in)), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError("layer_dims needs at least [input, output], all positive")
    g = generator(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(g.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_dims=dims, weights=weights, biases=biases)


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _forward(model: MlpModel, X: np.ndarray, dropout_keep: float, rng):
    """Forward pass caching everything backward needs.

    Returns (logits, acts, gates, masks) where acts[l] is the input to layer
    l (acts[0] = X), gates[l] is the ReLU derivative of hidden layer l, and
    masks[l] is the inverted-dropout scale mask (values 0 or 1/keep), or None
    in inference mode.  Dropout is applied only when an rng is supplied.
    """
    if X.shape[1] != model.input_dim:
        raise ValueError(f"expected features of dim {model.input_dim}, got {X.shape[1]}")
    if not 0.0 < dropout_keep <= 1.0:
        raise ValueError("dropout_keep must be in (0, 1]")
    acts, gates, masks = [X], [], []
    h = X
    for l in range(model.num_layers - 1):
        z = h @ model.weights[l] + model.biases[l]
        h = np.maximum(z, 0.0)
        gates.append(h > 0.0)
        if rng is not None and dropout_keep < 1.0:
            mask = (rng.random(h.shape) < dropout_keep) / dropout_keep
            h = h * mask
            masks.append(mask)
        else:
            masks.append(None)
        acts.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    return logits, acts, gates, masks


def forward(model: MlpModel, x: np.ndarray, dropout_keep: float = 1.0, rng=None):
    """Logits and hidden activations for a vector or a batch.

    Deterministic when rng is None (inference mode, dropout disabled).
    """
    X, single = _as_batch(x)
    logits, acts, _, _ = _forward(model, X, dropout_keep, rng)
    hiddens = acts[1:]
    if single:
        return logits[0], [h[0] for h in hiddens]
    return logits, hiddens


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Numerically stable softmax (max-subtraction); rows sum to 1.

    Outputs are floored at SOFTMAX_FLOOR and renormalized so every component
    stays strictly inside (0, 1) even when an exponential underflows.  The
    optional temperature rescales logits at inference time only; it does not
    change the predicted label.
    """
    z = np.asarray(logits, dtype=np.float64)
    if np.isnan(z).any():
        raise ValueError("softmax received NaN logits")
    z = z / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    p = np.maximum(p, SOFTMAX_FLOOR)
    return p / p.sum(axis=-1, keepdims=True)


def cross_entropy(p: np.ndarray, y) -> float:
    """-sum_j y_j log p_j with probabilities floored at PROB_CLAMP.

    y may be a class index (hard label) or a soft-label vector summing to 1.
    """
    p = np.asarray(p, dtype=np.float64)
    logp = np.log(np.maximum(p, PROB_CLAMP))
    if np.isscalar(y) or np.asarray(y).ndim == 0:
        return float(-logp[int(y)])
    y = np.asarray(y, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError("soft label shape must match probability vector")
    if abs(y.sum() - 1.0) > 1e-9:
        raise ValueError("soft label must sum to 1")
    return float(-(y * logp).sum())


def batch_cross_entropy(P: np.ndarray, Y: np.ndarray) -> float:
    """Mean cross-entropy of a batch against soft-label rows."""
    logp = np.log(np.maximum(P, PROB_CLAMP))
    return float(-(Y * logp).sum(axis=1).mean())


def predict_labels(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    logits, _, _, _ = _forward(model, _as_batch(X)[0], 1.0, None)
    return logits.argmax(axis=1)


def predict_label(model: MlpModel, x: np.ndarray) -> int:
    return int(predict_labels(model, x[None, :] if np.asarray(x).ndim == 1 else x)[0])


def prob_vectors(model: MlpModel, X: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    logits, _, _, _ = _forward(model, _as_batch(X)[0], 1.0, None)
    return softmax(logits, temperature)


def backprop_from_dlogits(model: MlpModel, acts, gates, masks,
                          dlogits: np.ndarray, l2_coeff: float = 0.0) -> GradientSet:
    """Exact gradients given d(loss)/d(logits) and a cached forward pass.

    L2 regularization (l2_coeff * ||W||^2 / 2) covers weights only, never
    biases.
    """
    dW = [None] * model.num_layers
    db = [None] * model.num_layers
    delta = dlogits
    for l in range(model.num_layers - 1, -1, -1):
        dW[l] = acts[l].T @ delta
        db[l] = delta.sum(axis=0)
        if l2_coeff:
            dW[l] = dW[l] + l2_coeff * model.weights[l]
        if l > 0:
            delta = delta @ model.weights[l].T
            if masks[l - 1] is not None:
                delta = delta * masks[l - 1]
            delta = delta * gates[l - 1]
    return GradientSet(d_weights=dW, d_biases=db)


def backward(model: MlpModel, X: np.ndarray, Y: np.ndarray, masks=None,
             l2_coeff: float = 0.0) -> tuple[float, GradientSet]:
    """Mean-cross-entropy loss (plus L2 weight penalty) and its gradients.

    Y holds one soft-label row per instance.  `masks` are the dropout masks
    from a training-mode forward pass; passing None evaluates in inference
    mode.  Gradients are exact for the clamped-log loss whenever all
    probabilities exceed PROB_CLAMP.
    """
    X, _ = _as_batch(X)
    if len(X) == 0:
        raise ValueError("empty batch")
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if Y.shape != (len(X), model.num_classes):
        raise ValueError("soft-label batch shape mismatch")
    if masks is None:
        logits, acts, gates, fwd_masks = _forward(model, X, 1.0, None)
    else:
        # replay the training-mode forward the supplied masks came from
        acts, gates = [X], []
        h = X
        for l in range(model.num_layers - 1):
            z = h @ model.weights[l] + model.biases[l]
            h = np.maximum(z, 0.0)
            gates.append(h > 0.0)
            if masks[l] is not None:
                h = h * masks[l]
            acts.append(h)
        logits = h @ model.weights[-1] + model.biases[-1]
        fwd_masks = masks
    P = softmax(logits)
    loss = batch_cross_entropy(P, Y)
    if l2_coeff:
        loss += 0.5 * l2_coeff * sum(float(np.sum(w * w)) for w in model.weights)
    dlogits = (P - Y) / len(X)
    return loss, backprop_from_dlogits(model, acts, gates, fwd_masks, dlogits, l2_coeff)


def loss_and_grads(model: MlpModel, X: np.ndarray, Y: np.ndarray,
                   dropout_keep: float = 1.0, rng=None, l2_coeff: float = 0.0):
    """One training-mode forward/backward; returns (loss, grads, cache).

    The cache (acts, gates, masks, probs) lets callers add further loss terms
    through the same forward pass.
    """
    X, _ = _as_batch(X)
    if len(X) == 0:
        raise ValueError("empty batch")
    logits, acts, gates, masks = _forward(model, X, dropout_keep, rng)
    P = softmax(logits)
    loss = batch_cross_entropy(P, Y)
    if l2_coeff:
        loss += 0.5 * l2_coeff * sum(float(np.sum(w * w)) for w in model.weights)
    dlogits = (P - Y) / len(X)
    grads = backprop_from_dlogits(model, acts, gates, masks, dlogits, l2_coeff)
    return loss, grads, (acts, gates, masks, P)


def per_example_gradients(model: MlpModel, X: np.ndarray, Y: np.ndarray,
                          dropout_keep: float = 1.0, rng=None) -> PerExampleGradients:
    """Gradients of each example's own cross-entropy (no L2 term)."""
    X, _ = _as_batch(X)
    logits, acts, gates, masks = _forward(model, X, dropout_keep, rng)
    P = softmax(logits)
    delta = P - np.asarray(Y, dtype=np.float64)
    dW, db = [None] * model.num_layers, [None] * model.num_layers
    for l in range(model.num_layers - 1, -1, -1):
        dW[l] = np.einsum("ni,nj->nij", acts[l], delta)
        db[l] = delta.copy()
        if l > 0:
            delta = delta @ model.weights[l].T
            if masks[l - 1] is not None:
                delta = delta * masks[l - 1]
            delta = delta * gates[l - 1]
    return PerExampleGradients(d_weights=dW, d_biases=db)


def sgd_update(model: MlpModel, grads: GradientSet, lr: float) -> None:
    for w, g in zip(model.weights, grads.d_weights):
        w -= lr * g
    for b, g in zip(model.biases, grads.d_biases):
        b -= lr * g


# ---------------------------------------------------------------------------
# Checkpoints: JSON with row-major weight lists.  json round-trips Python
# floats through repr, so float64 values survive exactly.

def save_checkpoint(model: MlpModel, path) -> None:
    for w in model.weights:
        if not np.isfinite(w).all():
            raise ValueError("refusing to checkpoint non-finite parameters")
    with open(path, "w") as fh:
        json.dump({"layer_dims": model.layer_dims,
                   "weights": [w.tolist() for w in model.weights],
                   "biases": [b.tolist() for b in model.biases],
                   "activation": model.activation}, fh)


def load_checkpoint(path) -> MlpModel:
    with open(path) as fh:
        d = json.load(fh)
    model = MlpModel(layer_dims=[int(v) for v in d["layer_dims"]],
                     weights=[np.asarray(w, dtype=np.float64) for w in d["weights"]],
                     biases=[np.asarray(b, dtype=np.float64) for b in d["biases"]],
                     activation=d["activation"])
    for w, (fi, fo) in zip(model.weights, zip(model.layer_dims[:-1], model.layer_dims[1:])):
        if w.shape != (fi, fo) or not np.isfinite(w).all():
            raise ValueError("corrupt checkpoint")
    return model
