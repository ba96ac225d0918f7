"""Minibatch SGD training with the gap-closing defense stack.

Three defenses compose with plain cross-entropy training:

* mix-up: train on convex combinations of instance pairs, mixing weight
  lambda ~ Beta(alpha, alpha);
* MMD set-regularization: per class, penalize the squared maximum mean
  discrepancy between the softmax outputs of the training minibatch and a
  same-class validation sub-batch, backpropagating through the training
  side only (the validation side is treated as constant);
* empirical DP-SGD: per-example gradient clipping plus Gaussian noise,
  with no privacy accounting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import model as model_mod
from .model import (MlpModel, GradientSet, PerExampleGradients, init_model,
                    softmax, batch_cross_entropy, backprop_from_dlogits,
                    loss_and_grads, per_example_gradients, sgd_update,
                    predict_labels, _forward, _as_batch)
from .rng import generator, derive_seed

MEDIAN_HEURISTIC = "median-heuristic"


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.1
    lr_schedule: tuple = ()          # ((epoch, multiplier), ...), 0-based epochs
    l2_coeff: float = 1e-4
    dropout_keep: float = 1.0
    mixup_alpha: float = 0.0         # 0 disables mix-up
    mmd_weight: float = 0.0          # 0 disables the MMD regularizer
    dp_clip_norm: float | None = None
    dp_noise_scale: float = 0.0
    hidden_dims: tuple = (256, 128)
    seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")
        if self.mixup_alpha < 0 or self.mmd_weight < 0 or self.dp_noise_scale < 0:
            raise ValueError("mixup_alpha, mmd_weight and dp_noise_scale must be >= 0")
        if self.dp_clip_norm is not None and self.dp_clip_norm <= 0:
            raise ValueError("dp_clip_norm must be positive when set")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_schedule"] = [list(p) for p in self.lr_schedule]
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lr_schedule" in d:
            d["lr_schedule"] = tuple((int(e), float(m)) for e, m in d["lr_schedule"])
        if "hidden_dims" in d:
            d["hidden_dims"] = tuple(int(h) for h in d["hidden_dims"])
        return cls(**d)


def load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        return TrainConfig.from_dict(json.load(fh))


@dataclass
class MmdConfig:
    kernel_bandwidth_base: float | str = MEDIAN_HEURISTIC
    bandwidth_multipliers: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    estimator: str = "biased-squared"

    def validate(self):
        if not self.bandwidth_multipliers or any(m <= 0 for m in self.bandwidth_multipliers):
            raise ValueError("bandwidth multipliers must be positive and non-empty")
        if self.estimator != "biased-squared":
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if isinstance(self.kernel_bandwidth_base, str) and \
                self.kernel_bandwidth_base != MEDIAN_HEURISTIC:
            raise ValueError(f"unknown bandwidth base {self.kernel_bandwidth_base!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bandwidth_multipliers"] = list(self.bandwidth_multipliers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MmdConfig":
        d = dict(d)
        if "bandwidth_multipliers" in d:
            d["bandwidth_multipliers"] = tuple(float(m) for m in d["bandwidth_multipliers"])
        return cls(**d)


@dataclass
class EpochStats:
    epoch: int
    train_acc: float
    eval_acc: float
    mean_ce: float
    mean_mmd: float


def write_history_csv(history: list[EpochStats], path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_acc", "eval_acc", "mean_ce", "mean_mmd"])
        for row in history:
            w.writerow([row.epoch, repr(row.train_acc), repr(row.eval_acc),
                        repr(row.mean_ce), repr(row.mean_mmd)])


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    Y = np.zeros((len(labels), num_classes))
    Y[np.arange(len(labels)), labels] = 1.0
    return Y


# ---------------------------------------------------------------------------
# Mix-up

def mixup_batch(X: np.ndarray, Y: np.ndarray, alpha: float, rng,
                lam: np.ndarray | float | None = None,
                partner: np.ndarray | None = None):
    """Pair each instance with a shuffled partner and interpolate.

    x~ = lam*x_i + (1-lam)*x_j and y~ = lam*y_i + (1-lam)*y_j with one
    lam ~ Beta(alpha, alpha) per pair.  `lam` and `partner` can be forced
    for testing.
    """
    if alpha <= 0:
        raise ValueError("mixup_batch requires alpha > 0")
    n = len(X)
    if n < 2:
        raise ValueError("mix-up needs a batch of at least 2")
    if partner is None:
        partner = rng.permutation(n)
    if lam is None:
        lam = rng.beta(alpha, alpha, size=n)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (n,))
    Xm = lam[:, None] * X + (1.0 - lam)[:, None] * X[partner]
    Ym = lam[:, None] * Y + (1.0 - lam)[:, None] * Y[partner]
    return Xm, Ym


# ---------------------------------------------------------------------------
# Multi-bandwidth Gaussian-kernel MMD (biased / V-statistic estimator)

def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    aa = np.sum(A * A, axis=1)[:, None]
    bb = np.sum(B * B, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)


def resolve_bandwidth(A: np.ndarray, B: np.ndarray, config: MmdConfig) -> float:
    """Base bandwidth h; median heuristic sets h^2 to the median pairwise
    squared distance of the pooled sample (off-diagonal pairs; falls back to
    h=1 when that median is 0)."""
    base = config.kernel_bandwidth_base
    if base != MEDIAN_HEURISTIC:
        return float(base)
    pooled = np.vstack([A, B])
    d = _sq_dists(pooled, pooled)
    off = d[np.triu_indices(len(pooled), k=1)]
    med = float(np.median(off)) if len(off) else 0.0
    return float(np.sqrt(med)) if med > 0 else 1.0


def gaussian_kernel_matrix(A: np.ndarray, B: np.ndarray, config: MmdConfig) -> np.ndarray:
    """K[i, j] = sum_m exp(-||a_i - b_j||^2 / (2 (m h)^2)) over multipliers m."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    if len(A) == 0 or len(B) == 0:
        raise ValueError("kernel inputs must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ValueError("kernel inputs must share vector length")
    h = resolve_bandwidth(A, B, config)
    D = _sq_dists(A, B)
    K = np.zeros_like(D)
    for m in config.bandwidth_multipliers:
        K += np.exp(-D / (2.0 * (m * h) ** 2))
    return K


def mmd_squared(X: np.ndarray, Y: np.ndarray, config: MmdConfig):
    """Biased squared-MMD estimator and its gradient w.r.t. X only.

    value = mean(K_XX) - 2 mean(K_XY) + mean(K_YY) >= 0.  The Y side and the
    (median-heuristic) bandwidth are treated as constants in the gradient,
    matching the one-sided update rule.
    """
    X, Y = np.atleast_2d(np.asarray(X, float)), np.atleast_2d(np.asarray(Y, float))
    n, m = len(X), len(Y)
    if n == 0 or m == 0:
        raise ValueError("mmd_squared needs non-empty samples")
    Dxx, Dxy, Dyy = _sq_dists(X, X), _sq_dists(X, Y), _sq_dists(Y, Y)
    base = config.kernel_bandwidth_base
    if base == MEDIAN_HEURISTIC:
        off = np.concatenate([Dxx[np.triu_indices(n, 1)], Dxy.ravel(),
                              Dyy[np.triu_indices(m, 1)]])
        med = float(np.median(off)) if len(off) else 0.0
        h2 = med if med > 0 else 1.0
    else:
        h2 = float(base) ** 2
    s2 = np.asarray(config.bandwidth_multipliers, float) ** 2 * h2  # (M,)
    inv2 = 1.0 / (2.0 * s2)
    Exx = np.exp(-Dxx[None, :, :] * inv2[:, None, None])
    Exy = np.exp(-Dxy[None, :, :] * inv2[:, None, None])
    Eyy = np.exp(-Dyy[None, :, :] * inv2[:, None, None])
    value = float(Exx.mean(axis=(1, 2)).sum() - 2.0 * Exy.mean(axis=(1, 2)).sum()
                  + Eyy.mean(axis=(1, 2)).sum())
    # gradient sums over multipliers, so the weight matrices can be combined
    Sxx = np.tensordot(1.0 / s2, Exx, axes=1)
    Sxy = np.tensordot(1.0 / s2, Exy, axes=1)
    grad = -(2.0 / n**2) * (Sxx.sum(axis=1)[:, None] * X - Sxx @ X) \
        + (2.0 / (n * m)) * (Sxy.sum(axis=1)[:, None] * X - Sxy @ Y)
    return value, grad


def softmax_vjp(P: np.ndarray, U: np.ndarray) -> np.ndarray:
    """d(loss)/d(logits) from d(loss)/d(probs): p * (u - <u, p>) per row."""
    dots = np.sum(U * P, axis=1, keepdims=True)
    return P * (U - dots)


def grouped_mmd(P: np.ndarray, cls_x: np.ndarray, Q: np.ndarray,
                cls_y: np.ndarray, config: MmdConfig):
    """Per-class squared MMD between same-class blocks of P and Q, computed
    over the whole batch at once.

    Numerically equivalent to calling mmd_squared per class (each class gets
    its own median-heuristic bandwidth) but with the kernels, block sums and
    gradients evaluated on full-batch matrices.  Returns (values, grad) where
    values[i] is class i's MMD^2 (classes in sorted order) and grad stacks
    d(MMD^2 of own class)/d(P row).
    """
    cls_x = np.asarray(cls_x)
    cls_y = np.asarray(cls_y)
    ox = oy = None
    if np.any(np.diff(cls_x) < 0) or np.any(np.diff(cls_y) < 0):
        # sort class-major so every block is a contiguous slice
        ox = np.argsort(cls_x, kind="stable")
        oy = np.argsort(cls_y, kind="stable")
        P, cls_x = P[ox], cls_x[ox]
        Q, cls_y = Q[oy], cls_y[oy]
    n, m = len(P), len(Q)
    classes, inv_x = np.unique(cls_x, return_inverse=True)
    classes_y, inv_y = np.unique(cls_y, return_inverse=True)
    if not np.array_equal(classes, classes_y):
        raise ValueError("training and validation batches must cover the same classes")
    k = len(classes)
    bx = np.searchsorted(cls_x, classes, side="left")
    bx = np.append(bx, n)
    by = np.searchsorted(cls_y, classes, side="left")
    by = np.append(by, m)
    Dxx, Dxy, Dyy = _sq_dists(P, P), _sq_dists(P, Q), _sq_dists(Q, Q)

    if config.kernel_bandwidth_base == MEDIAN_HEURISTIC:
        # median of each class's pooled pairwise distances, computed as an
        # order statistic over the doubled multiset (doubling preserves the
        # median and the block's structural diagonal zeros are the smallest
        # entries, so they can be skipped by index)
        h2 = np.empty(k)
        for c in range(k):
            a, b = bx[c], bx[c + 1]
            ay, byy_ = by[c], by[c + 1]
            xy_blk = Dxy[a:b, ay:byy_].ravel()
            flat = np.concatenate([Dxx[a:b, a:b].ravel(), xy_blk, xy_blk,
                                   Dyy[ay:byy_, ay:byy_].ravel()])
            z = (b - a) + (byy_ - ay)
            half = (flat.size - z) // 2
            k1 = z + half - 1
            part = np.partition(flat, (k1, k1 + 1))
            med = 0.5 * (part[k1] + part[k1 + 1])
            h2[c] = med if med > 0 else 1.0
    else:
        h2 = np.full(k, float(config.kernel_bandwidth_base) ** 2)

    mults = np.asarray(config.bandwidth_multipliers, float)
    # kernel scale for entry (i, j) inside class c: 1/(2 mult^2 h2_c); the
    # row's class determines c, and cross-class entries are masked out below
    scale_x = 1.0 / (2.0 * mults[:, None] ** 2 * h2[inv_x][None, :])  # (M, n)
    scale_y = 1.0 / (2.0 * mults[:, None] ** 2 * h2[inv_y][None, :])  # (M, m)
    Exx = np.exp(-Dxx[None, :, :] * scale_x[:, :, None])
    Exy = np.exp(-Dxy[None, :, :] * scale_x[:, :, None])
    Eyy = np.exp(-Dyy[None, :, :] * scale_y[:, :, None])
    Txx, Txy, Tyy = Exx.sum(axis=0), Exy.sum(axis=0), Eyy.sum(axis=0)

    Gx = np.zeros((k, n))
    Gx[inv_x, np.arange(n)] = 1.0
    Gy = np.zeros((k, m))
    Gy[inv_y, np.arange(m)] = 1.0
    nx, my = Gx.sum(axis=1), Gy.sum(axis=1)
    xx = np.einsum("ci,ij,cj->c", Gx, Txx, Gx)
    xy = np.einsum("ci,ij,cj->c", Gx, Txy, Gy)
    yy = np.einsum("ci,ij,cj->c", Gy, Tyy, Gy)
    values = xx / nx**2 - 2.0 * xy / (nx * my) + yy / my**2

    # combined weight matrices Sum_m W_m / s2_m, masked to within-class blocks
    Sxx = 2.0 * (Exx * scale_x[:, :, None]).sum(axis=0) * (cls_x[:, None] == cls_x[None, :])
    Sxy = 2.0 * (Exy * scale_x[:, :, None]).sum(axis=0) * (cls_x[:, None] == cls_y[None, :])
    coef_xx = (2.0 / nx**2)[inv_x]
    coef_xy = (2.0 / (nx * my))[inv_x]
    grad = -coef_xx[:, None] * (Sxx.sum(axis=1)[:, None] * P - Sxx @ P) \
        + coef_xy[:, None] * (Sxy.sum(axis=1)[:, None] * P - Sxy @ Q)
    if ox is not None:
        unsorted = np.empty_like(grad)
        unsorted[ox] = grad
        grad = unsorted
    return values, grad


def mmd_regularized_loss(model: MlpModel, train_X: np.ndarray, train_Y: np.ndarray,
                         val_X: np.ndarray, mmd_weight: float, mmd_config: MmdConfig,
                         val_labels: np.ndarray | None = None,
                         l2_coeff: float = 0.0, dropout_keep: float = 1.0, rng=None):
    """Cross-entropy plus mmd_weight * MMD^2 of softmax outputs, one class.

    Both batches must carry a single shared class label (train labels from
    the one-hot rows, validation labels passed explicitly).  The gradient
    flows through the training-side softmax only; validation forward passes
    run in inference mode.
    """
    train_X, _ = _as_batch(train_X)
    train_Y = np.atleast_2d(train_Y)
    classes = set(np.argmax(train_Y, axis=1).tolist())
    if len(classes) != 1:
        raise ValueError("train batch must contain a single class")
    if val_labels is not None:
        vl = set(np.asarray(val_labels).tolist())
        if vl != classes:
            raise ValueError("train and validation batches must share one class")
    if mmd_weight == 0.0:
        loss, grads, _ = loss_and_grads(model, train_X, train_Y, dropout_keep, rng, l2_coeff)
        return loss, grads
    loss, _, (acts, gates, masks, P) = loss_and_grads(
        model, train_X, train_Y, dropout_keep, rng, l2_coeff)
    Q = model_mod.prob_vectors(model, val_X)
    value, dP = mmd_squared(P, Q, mmd_config)
    dlogits = (P - train_Y) / len(train_X) + mmd_weight * softmax_vjp(P, dP)
    grads = backprop_from_dlogits(model, acts, gates, masks, dlogits, l2_coeff)
    return loss + mmd_weight * value, grads


# ---------------------------------------------------------------------------
# Empirical DP-SGD

def dp_sgd_step(model: MlpModel, grads: PerExampleGradients, clip_norm: float,
                noise_scale: float, lr: float, rng, l2_coeff: float = 0.0) -> MlpModel:
    """Clip each example's gradient to L2 norm clip_norm (global norm across
    all parameters), average, add N(0, noise_scale^2 clip_norm^2) per
    coordinate divided by the batch size, then take one SGD step.

    The optional weight decay is applied outside the clipped average.
    """
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    if noise_scale < 0:
        raise ValueError("noise_scale must be non-negative")
    n = grads.num_examples
    sq = sum(np.sum(g * g, axis=(1, 2)) for g in grads.d_weights)
    sq = sq + sum(np.sum(g * g, axis=1) for g in grads.d_biases)
    norms = np.sqrt(sq)
    scale = np.minimum(1.0, clip_norm / np.maximum(norms, 1e-32))
    sigma = noise_scale * clip_norm
    for l in range(model.num_layers):
        gw = np.einsum("n,nij->ij", scale, grads.d_weights[l])
        gb = scale @ grads.d_biases[l]
        if sigma > 0:
            gw += rng.normal(0.0, sigma, size=gw.shape)
            gb += rng.normal(0.0, sigma, size=gb.shape)
        gw /= n
        gb /= n
        if l2_coeff:
            gw += l2_coeff * model.weights[l]
        model.weights[l] -= lr * gw
        model.biases[l] -= lr * gb
    return model


# ---------------------------------------------------------------------------
# Training loop

def _accuracy(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    return float((predict_labels(model, X) == y).mean())


def class_mmd_score(model: MlpModel, train_X, train_y, val_X, val_y,
                    mmd_config: MmdConfig) -> float:
    """Mean per-class MMD^2 between training and validation softmax outputs
    (inference mode); diagnostic for how far the two distributions sit."""
    P = model_mod.prob_vectors(model, train_X)
    Q = model_mod.prob_vectors(model, val_X)
    vals = []
    for c in np.unique(train_y):
        vp, vq = P[train_y == c], Q[val_y == c]
        if len(vp) and len(vq):
            vals.append(mmd_squared(vp, vq, mmd_config)[0])
    return float(np.mean(vals)) if vals else 0.0


def train_model(dataset, train_indices, config: TrainConfig,
                mmd_config: MmdConfig | None = None,
                validation_indices=None, probe_indices=None):
    """Shuffled minibatch SGD with whichever defenses the config enables.

    When the MMD weight is positive a validation index set disjoint from the
    training set is required; each step pairs the minibatch's per-class
    sub-batches with same-class validation sub-batches (classes absent from
    the validation pool contribute no MMD term) and the step's penalty is the
    mean of the per-class MMD^2 values.  With mix-up active the cross-entropy
    uses mixed instances while the MMD term is computed on the unmixed
    minibatch, whose class grouping stays well defined.

    Returns (model, history); history rows carry per-epoch training accuracy,
    an accuracy proxy on probe/validation indices, mean cross-entropy and
    mean MMD^2.  Deterministic for a fixed config seed.
    """
    config.validate()
    if config.mmd_weight > 0:
        if validation_indices is None or len(validation_indices) == 0:
            raise ValueError("MMD regularization requires a validation index set")
        if set(np.asarray(validation_indices).tolist()) & set(np.asarray(train_indices).tolist()):
            raise ValueError("validation indices must be disjoint from training indices")
        if config.dp_clip_norm is not None:
            raise ValueError("MMD and DP-SGD are not supported together")
        mmd_config = mmd_config or MmdConfig()
        mmd_config.validate()

    train_indices = np.asarray(train_indices, dtype=np.int64)
    X = dataset.features[train_indices]
    y = dataset.labels[train_indices]
    c = dataset.num_classes
    Y = one_hot(y, c)

    rng = generator(config.seed)
    model = init_model([dataset.dim, *config.hidden_dims, c],
                       seed=derive_seed(config.seed, 0))

    val_by_class = {}
    if config.mmd_weight > 0:
        vX = dataset.features[np.asarray(validation_indices, dtype=np.int64)]
        vy = dataset.labels[np.asarray(validation_indices, dtype=np.int64)]
        val_by_class = {int(cl): vX[vy == cl] for cl in np.unique(vy)}

    probe_X = probe_y = None
    if probe_indices is not None and len(probe_indices):
        probe_X = dataset.features[np.asarray(probe_indices, dtype=np.int64)]
        probe_y = dataset.labels[np.asarray(probe_indices, dtype=np.int64)]
    elif validation_indices is not None and len(validation_indices):
        probe_X = dataset.features[np.asarray(validation_indices, dtype=np.int64)]
        probe_y = dataset.labels[np.asarray(validation_indices, dtype=np.int64)]

    lr = config.learning_rate
    schedule = dict((int(e), float(m)) for e, m in config.lr_schedule)
    history = []
    n = len(X)
    for epoch in range(config.epochs):
        if epoch in schedule:
            lr *= schedule[epoch]
        order = rng.permutation(n)
        ce_sum, mmd_sum, steps = 0.0, 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb, Yb, yb = X[idx], Y[idx], y[idx]
            if config.mixup_alpha > 0 and len(idx) >= 2:
                Xce, Yce = mixup_batch(Xb, Yb, config.mixup_alpha, rng)
            else:
                Xce, Yce = Xb, Yb

            if config.dp_clip_norm is not None:
                pex = per_example_gradients(model, Xce, Yce, config.dropout_keep,
                                            rng if config.dropout_keep < 1 else None)
                P = model_mod.prob_vectors(model, Xce)
                ce_sum += batch_cross_entropy(P, Yce)
                dp_sgd_step(model, pex, config.dp_clip_norm, config.dp_noise_scale,
                            lr, rng, config.l2_coeff)
                steps += 1
                continue

            loss, grads, _ = loss_and_grads(
                model, Xce, Yce, config.dropout_keep,
                rng if config.dropout_keep < 1 else None, config.l2_coeff)
            ce_sum += loss

            if config.mmd_weight > 0:
                step_mmd, mmd_grads = _mmd_step_grads(
                    model, Xb, yb, val_by_class, config, mmd_config, rng)
                if mmd_grads is not None:
                    grads.add_(mmd_grads)
                mmd_sum += step_mmd

            sgd_update(model, grads, lr)
            steps += 1

        history.append(EpochStats(
            epoch=epoch,
            train_acc=_accuracy(model, X, y),
            eval_acc=_accuracy(model, probe_X, probe_y) if probe_X is not None else float("nan"),
            mean_ce=ce_sum / max(steps, 1),
            mean_mmd=mmd_sum / max(steps, 1),
        ))
    return model, history


def _mmd_step_grads(model, Xb, yb, val_by_class, config, mmd_config, rng):
    """Per-class MMD^2 penalty (mean over classes present) and its gradients.

    The training-side forward runs in the same mode as the cross-entropy pass
    (dropout when enabled); validation sub-batches are equal-size same-class
    samples, drawn with replacement only when the class pool is smaller than
    the sub-batch.
    """
    groups = [(int(cl), np.flatnonzero(yb == cl)) for cl in np.unique(yb)]
    groups = [(cl, pos) for cl, pos in groups if cl in val_by_class]
    if not groups:
        return 0.0, None
    logits, acts, gates, masks = _forward(
        model, Xb, config.dropout_keep,
        rng if config.dropout_keep < 1 else None)
    P = softmax(logits)
    # draw every class's validation sub-batch, then run one stacked forward
    picked_rows, cls_y = [], []
    for cl, pos in groups:
        pool = val_by_class[cl]
        take = len(pos)
        picked = rng.choice(len(pool), size=take, replace=len(pool) < take)
        picked_rows.append(pool[picked])
        cls_y.append(np.full(take, cl))
    Q_all = model_mod.prob_vectors(model, np.vstack(picked_rows))
    pos_all = np.concatenate([pos for _, pos in groups])
    cls_x = np.concatenate([np.full(len(pos), cl) for cl, pos in groups])
    values, dP = grouped_mmd(P[pos_all], cls_x, Q_all, np.concatenate(cls_y),
                             mmd_config)
    k = len(groups)
    dlogits = np.zeros_like(P)
    dlogits[pos_all] = (config.mmd_weight / k) * softmax_vjp(P[pos_all], dP)
    grads = backprop_from_dlogits(model, acts, gates, masks, dlogits, 0.0)
    return float(values.mean()), grads
