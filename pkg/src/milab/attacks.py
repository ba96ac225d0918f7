"""The seven black-box membership-inference attacks and shadow machinery.

Each attack predicts, for every instance of a balanced evaluation set,
whether the target model was trained on it; its advantage is balanced
accuracy minus 1/2.  Fitting (thresholds, attack classifiers) is separated
from applying so fitted attacks can be re-scored on other evaluation sets.
Ground-truth membership is used only for scoring, never for prediction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import model as model_mod
from .dataset import POOL_HOLDOUT, BalancedEvalSet, MembershipBitmap, sample_training_set
from .model import MlpModel, PROB_CLAMP, init_model
from .rng import derive_seed, generator
from .train import TrainConfig, one_hot, train_model

BASELINE = "baseline"
GLOBAL_LOSS = "global-loss"
GLOBAL_PROBABILITY = "global-probability"
GLOBAL_TOPONE = "global-topone"
GLOBAL_TOPTHREE = "global-topthree"
CLASS_VECTOR = "class-vector"
INSTANCE_VECTOR = "instance-vector"

# canonical reporting order; ties in "highest advantage" resolve to the
# earliest entry
ATTACK_ORDER = (INSTANCE_VECTOR, CLASS_VECTOR, GLOBAL_PROBABILITY,
                GLOBAL_LOSS, GLOBAL_TOPTHREE, GLOBAL_TOPONE, BASELINE)


class ModelOracle:
    """Black-box probability-vector access to a classifier."""

    def __init__(self, model: MlpModel, temperature: float = 1.0):
        self.model = model
        self.temperature = temperature

    def prob_vectors(self, X: np.ndarray) -> np.ndarray:
        return model_mod.prob_vectors(self.model, X, self.temperature)

    def predicted_labels(self, X: np.ndarray) -> np.ndarray:
        return model_mod.predict_labels(self.model, X)


class LabelOnlyOracle:
    """Oracle exposing predicted labels only (no probability vectors)."""

    def __init__(self, model: MlpModel):
        self._model = model

    def predicted_labels(self, X: np.ndarray) -> np.ndarray:
        return model_mod.predict_labels(self._model, X)


def as_oracle(target):
    return target if hasattr(target, "predicted_labels") else ModelOracle(target)


@dataclass(frozen=True)
class AttackResult:
    attack_name: str
    predictions: np.ndarray  # bool per eval instance
    accuracy: float
    advantage: float


def score_predictions(name: str, predictions: np.ndarray,
                      is_member: np.ndarray) -> AttackResult:
    predictions = np.asarray(predictions, dtype=bool)
    if predictions.shape != np.asarray(is_member).shape:
        raise ValueError("predictions and membership flags must align")
    accuracy = float((predictions == is_member).mean())
    return AttackResult(attack_name=name, predictions=predictions,
                        accuracy=accuracy, advantage=accuracy - 0.5)


@dataclass(frozen=True)
class ThresholdModel:
    threshold: float  # ">= threshold" means member for probability rules

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


@dataclass
class ShadowEnsemble:
    """k shadow models plus the membership bitmap each one was trained with."""

    models: list[MlpModel]
    bitmaps: list[MembershipBitmap]

    def __post_init__(self):
        if len(self.models) != len(self.bitmaps):
            raise ValueError("one bitmap per shadow model required")

    @property
    def k(self) -> int:
        return len(self.models)

    def bitmap_matrix(self) -> np.ndarray:
        return np.stack([b.member_flags for b in self.bitmaps])


def train_shadow_ensemble(dataset, plan, k: int, train_config: TrainConfig,
                          train_size: int, seed: int, mmd_config=None,
                          validation_indices=None) -> ShadowEnsemble:
    """Train k shadows with the target's exact recipe (defenses included),
    each on an independent random half of E plus holdout fill."""
    if k < 1:
        raise ValueError("need at least one shadow model")
    models, bitmaps = [], []
    for i in range(k):
        idx, bitmap = sample_training_set(plan, POOL_HOLDOUT, train_size,
                                          seed=derive_seed(seed, 2 * i))
        cfg = replace(train_config, seed=derive_seed(seed, 2 * i + 1))
        model, _ = train_model(dataset, idx, cfg, mmd_config, validation_indices)
        models.append(model)
        bitmaps.append(bitmap)
    return ShadowEnsemble(models=models, bitmaps=bitmaps)


def shadow_eval_probs(ensemble: ShadowEnsemble, eval_features: np.ndarray) -> np.ndarray:
    """Probability vectors of every shadow on the evaluation set: (k, n, c)."""
    return np.stack([model_mod.prob_vectors(m, eval_features) for m in ensemble.models])


def _true_label_probs(P: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return P[np.arange(len(labels)), labels]


# ---------------------------------------------------------------------------
# Attack-model (logistic regression) helpers: a 0-hidden-layer MlpModel with
# two outputs, trained by SGD on the shadow-derived attack set.

@dataclass
class AttackModelConfig:
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 0.5
    l2_coeff: float = 1e-4


def fit_attack_classifier(features: np.ndarray, member: np.ndarray, seed: int,
                          cfg: AttackModelConfig | None = None) -> MlpModel:
    cfg = cfg or AttackModelConfig()
    X = np.asarray(features, dtype=np.float64)
    Y = one_hot(np.asarray(member, dtype=np.int64), 2)
    rng = generator(derive_seed(seed, 1))
    clf = init_model([X.shape[1], 2], seed=derive_seed(seed, 0))
    n = len(X)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            _, grads, _ = model_mod.loss_and_grads(clf, X[idx], Y[idx],
                                                   l2_coeff=cfg.l2_coeff)
            model_mod.sgd_update(clf, grads, cfg.learning_rate)
    return clf


def member_probability(clf: MlpModel, features: np.ndarray) -> np.ndarray:
    return model_mod.prob_vectors(clf, features)[:, 1]


# ---------------------------------------------------------------------------
# Fit stages

def fit_global_loss_threshold(shadow_probs: np.ndarray, bitmaps: np.ndarray,
                              eval_labels: np.ndarray) -> float:
    """Mean over shadows of each shadow's mean cross-entropy on its own
    training members of E."""
    per_shadow = []
    for P, flags in zip(shadow_probs, bitmaps):
        p_true = _true_label_probs(P, eval_labels)[flags]
        per_shadow.append(float(-np.log(np.maximum(p_true, PROB_CLAMP)).mean()))
    return float(np.mean(per_shadow))


def fit_global_probability_threshold(shadow_probs: np.ndarray, bitmaps: np.ndarray,
                                     eval_labels: np.ndarray) -> float:
    """Threshold over true-label probabilities maximizing balanced accuracy
    on the shadow-derived pairs; accuracy ties resolve to the smallest
    candidate.  Candidates are every observed shadow probability."""
    vals = np.concatenate([_true_label_probs(P, eval_labels) for P in shadow_probs])
    member = np.concatenate([flags for flags in bitmaps])
    return _best_threshold(vals, member)


def _best_threshold(vals: np.ndarray, member: np.ndarray) -> float:
    mv = np.sort(vals[member])
    nv = np.sort(vals[~member])
    cands = np.unique(vals)
    members_ge = len(mv) - np.searchsorted(mv, cands, side="left")
    nonmem_lt = np.searchsorted(nv, cands, side="left")
    acc = 0.5 * (members_ge / max(len(mv), 1) + nonmem_lt / max(len(nv), 1))
    return float(cands[int(np.argmax(acc))])


def fit_topone_threshold(oracle, eval_features: np.ndarray, percentile: float,
                         num_random_queries: int, rng) -> float:
    """Threshold = top-t-percentile of the max probability over random
    queries drawn uniformly inside the per-dimension range of the evaluation
    features.  No shadow models involved."""
    if num_random_queries < 100:
        raise ValueError("need at least 100 random queries")
    if not 5.0 <= percentile <= 25.0:
        warnings.warn(f"top-one percentile {percentile} outside the usual [5, 25] range")
    lo = eval_features.min(axis=0)
    hi = eval_features.max(axis=0)
    Q = rng.uniform(lo, hi, size=(num_random_queries, eval_features.shape[1]))
    top1 = oracle.prob_vectors(Q).max(axis=1)
    return top_percentile(top1, percentile)


def top_percentile(values: np.ndarray, percentile: float) -> float:
    """Smallest value among the top ceil(percentile/100 * n) values."""
    n = len(values)
    m = max(1, int(np.ceil(percentile / 100.0 * n)))
    return float(np.sort(values)[n - m])


def _topk(P: np.ndarray, k: int) -> np.ndarray:
    return -np.sort(-P, axis=1)[:, :k]


def fit_topthree_classifier(shadow_probs: np.ndarray, bitmaps: np.ndarray,
                            seed: int, cfg: AttackModelConfig | None = None):
    """One global attack classifier on the top-3 probability values
    (top-2 for binary tasks), sorted descending."""
    k = 3 if shadow_probs.shape[2] >= 3 else 2
    feats = np.concatenate([_topk(P, k) for P in shadow_probs])
    member = np.concatenate(list(bitmaps))
    return fit_attack_classifier(feats, member, seed, cfg), k


def fit_class_vector_classifiers(shadow_probs: np.ndarray, bitmaps: np.ndarray,
                                 eval_labels: np.ndarray, num_classes: int,
                                 seed: int, cfg: AttackModelConfig | None = None):
    """One attack classifier per class over full probability vectors, plus a
    global fallback for classes whose shadow-derived attack set misses a
    membership label."""
    feats_all = np.concatenate(list(shadow_probs))
    member_all = np.concatenate(list(bitmaps))
    labels_all = np.tile(eval_labels, len(shadow_probs))
    fallback = fit_attack_classifier(feats_all, member_all, derive_seed(seed, num_classes), cfg)
    per_class = {}
    for c in range(num_classes):
        sel = labels_all == c
        if sel.any() and member_all[sel].any() and (~member_all[sel]).any():
            per_class[c] = fit_attack_classifier(feats_all[sel], member_all[sel],
                                                 derive_seed(seed, c), cfg)
        else:
            per_class[c] = fallback
    return per_class


# ---------------------------------------------------------------------------
# The seven attacks

def baseline_attack(target, eval_set: BalancedEvalSet,
                    predicted_labels: np.ndarray | None = None) -> AttackResult:
    """Member iff the target predicts the true label.  Needs label access
    only, so it also runs against a LabelOnlyOracle."""
    oracle = as_oracle(target)
    if predicted_labels is None:
        predicted_labels = oracle.predicted_labels(eval_set.features)
    preds = predicted_labels == eval_set.labels
    return score_predictions(BASELINE, preds, eval_set.is_member)


def global_loss_attack(target, eval_set: BalancedEvalSet, ensemble: ShadowEnsemble,
                       shadow_probs: np.ndarray | None = None) -> AttackResult:
    """Member iff the instance's cross-entropy loss is strictly below the
    shadow-estimated average training loss."""
    oracle = as_oracle(target)
    if shadow_probs is None:
        shadow_probs = shadow_eval_probs(ensemble, eval_set.features)
    thr = fit_global_loss_threshold(shadow_probs, ensemble.bitmap_matrix(), eval_set.labels)
    p_true = _true_label_probs(oracle.prob_vectors(eval_set.features), eval_set.labels)
    losses = -np.log(np.maximum(p_true, PROB_CLAMP))
    return score_predictions(GLOBAL_LOSS, losses < thr, eval_set.is_member)


def global_probability_attack(target, eval_set: BalancedEvalSet, ensemble: ShadowEnsemble,
                              shadow_probs: np.ndarray | None = None) -> AttackResult:
    """Member iff the true-label probability clears the accuracy-maximizing
    threshold fitted on shadow outputs."""
    oracle = as_oracle(target)
    if shadow_probs is None:
        shadow_probs = shadow_eval_probs(ensemble, eval_set.features)
    thr = fit_global_probability_threshold(shadow_probs, ensemble.bitmap_matrix(),
                                           eval_set.labels)
    p_true = _true_label_probs(oracle.prob_vectors(eval_set.features), eval_set.labels)
    return score_predictions(GLOBAL_PROBABILITY, p_true >= thr, eval_set.is_member)


def global_topone_attack(target, eval_set: BalancedEvalSet, percentile: float = 10.0,
                         num_random_queries: int = 1000, rng=None) -> AttackResult:
    """Member iff the top-1 probability clears a threshold calibrated on the
    target's answers to random (almost surely non-member) queries."""
    oracle = as_oracle(target)
    rng = rng if rng is not None else generator(0)
    thr = fit_topone_threshold(oracle, eval_set.features, percentile,
                               num_random_queries, rng)
    top1 = oracle.prob_vectors(eval_set.features).max(axis=1)
    return score_predictions(GLOBAL_TOPONE, top1 >= thr, eval_set.is_member)


def global_topthree_attack(target, eval_set: BalancedEvalSet, ensemble: ShadowEnsemble,
                           attack_cfg: AttackModelConfig | None = None, seed: int = 0,
                           shadow_probs: np.ndarray | None = None) -> AttackResult:
    oracle = as_oracle(target)
    if shadow_probs is None:
        shadow_probs = shadow_eval_probs(ensemble, eval_set.features)
    clf, k = fit_topthree_classifier(shadow_probs, ensemble.bitmap_matrix(),
                                     seed, attack_cfg)
    feats = _topk(oracle.prob_vectors(eval_set.features), k)
    preds = member_probability(clf, feats) >= 0.5
    return score_predictions(GLOBAL_TOPTHREE, preds, eval_set.is_member)


def class_vector_attack(target, eval_set: BalancedEvalSet, ensemble: ShadowEnsemble,
                        attack_cfg: AttackModelConfig | None = None, seed: int = 0,
                        num_classes: int | None = None,
                        shadow_probs: np.ndarray | None = None) -> AttackResult:
    """Per-class attack classifiers over full probability vectors; each eval
    instance is routed to its true class's classifier."""
    oracle = as_oracle(target)
    if shadow_probs is None:
        shadow_probs = shadow_eval_probs(ensemble, eval_set.features)
    c = num_classes if num_classes is not None else shadow_probs.shape[2]
    clfs = fit_class_vector_classifiers(shadow_probs, ensemble.bitmap_matrix(),
                                        eval_set.labels, c, seed, attack_cfg)
    P = oracle.prob_vectors(eval_set.features)
    preds = np.zeros(len(eval_set), dtype=bool)
    for cl in range(c):
        sel = eval_set.labels == cl
        if sel.any():
            preds[sel] = member_probability(clfs[cl], P[sel]) >= 0.5
    return score_predictions(CLASS_VECTOR, preds, eval_set.is_member)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum_j p_j log(p_j / q_j) with q floored at PROB_CLAMP; 0 log 0 := 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("KL divergence needs equal-length vectors")
    ratio = np.log(np.maximum(p, PROB_CLAMP)) - np.log(np.maximum(q, PROB_CLAMP))
    return float(np.where(p > 0, p * ratio, 0.0).sum())


def instance_vector_attack(target, eval_set: BalancedEvalSet, ensemble: ShadowEnsemble,
                           shadow_probs: np.ndarray | None = None) -> AttackResult:
    """Member iff the target's output sits closer (in KL) to the mean output
    of shadows trained WITH the instance than to those trained without it.

    Instances with fewer than two shadows on either side fall back to the
    baseline correct-label rule.
    """
    oracle = as_oracle(target)
    if shadow_probs is None:
        shadow_probs = shadow_eval_probs(ensemble, eval_set.features)
    flags = ensemble.bitmap_matrix()  # (k, n)
    P = oracle.prob_vectors(eval_set.features)
    predicted = oracle.predicted_labels(eval_set.features)
    preds = np.zeros(len(eval_set), dtype=bool)
    for i in range(len(eval_set)):
        in_mask = flags[:, i]
        if in_mask.sum() < 2 or (~in_mask).sum() < 2:
            preds[i] = predicted[i] == eval_set.labels[i]
            continue
        avg_in = shadow_probs[in_mask, i].mean(axis=0)
        avg_out = shadow_probs[~in_mask, i].mean(axis=0)
        avg_in = avg_in / avg_in.sum()
        avg_out = avg_out / avg_out.sum()
        preds[i] = kl_divergence(P[i], avg_in) < kl_divergence(P[i], avg_out)
    return score_predictions(INSTANCE_VECTOR, preds, eval_set.is_member)


# ---------------------------------------------------------------------------
# Orchestration

@dataclass
class AttackConfig:
    topone_percentile: float = 10.0
    topone_queries: int = 1000
    attack_model: AttackModelConfig | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        d = {"topone_percentile": self.topone_percentile,
             "topone_queries": self.topone_queries, "seed": self.seed}
        if self.attack_model is not None:
            d["attack_model"] = vars(self.attack_model)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        d = dict(d)
        if "attack_model" in d and d["attack_model"] is not None:
            d["attack_model"] = AttackModelConfig(**d["attack_model"])
        return cls(**d)


def run_all_attacks(target, eval_set: BalancedEvalSet, ensemble: ShadowEnsemble,
                    config: AttackConfig | None = None):
    """All seven attacks against one target, sharing the shadow outputs.

    Returns (results, failures); a failing attack is recorded by name with
    its error message while the others continue.  Results follow the
    canonical ATTACK_ORDER.
    """
    config = config or AttackConfig()
    oracle = as_oracle(target)
    shadow_probs = shadow_eval_probs(ensemble, eval_set.features)
    runners = {
        INSTANCE_VECTOR: lambda: instance_vector_attack(oracle, eval_set, ensemble, shadow_probs),
        CLASS_VECTOR: lambda: class_vector_attack(
            oracle, eval_set, ensemble, config.attack_model,
            derive_seed(config.seed, 1), shadow_probs=shadow_probs),
        GLOBAL_PROBABILITY: lambda: global_probability_attack(oracle, eval_set, ensemble, shadow_probs),
        GLOBAL_LOSS: lambda: global_loss_attack(oracle, eval_set, ensemble, shadow_probs),
        GLOBAL_TOPTHREE: lambda: global_topthree_attack(
            oracle, eval_set, ensemble, config.attack_model,
            derive_seed(config.seed, 2), shadow_probs=shadow_probs),
        GLOBAL_TOPONE: lambda: global_topone_attack(
            oracle, eval_set, config.topone_percentile, config.topone_queries,
            generator(derive_seed(config.seed, 3))),
        BASELINE: lambda: baseline_attack(oracle, eval_set),
    }
    results, failures = [], {}
    for name in ATTACK_ORDER:
        try:
            results.append(runners[name]())
        except Exception as exc:  # record and keep going
            failures[name] = str(exc)
    return results, failures


def write_attack_csv(results, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["attack", "accuracy", "advantage", "n_eval"])
        for r in results:
            w.writerow([r.attack_name, repr(r.accuracy), repr(r.advantage),
                        len(r.predictions)])


def write_attack_json(results, path) -> None:
    import json
    payload = [{"attack": r.attack_name, "accuracy": r.accuracy,
                "advantage": r.advantage,
                "predictions": [int(p) for p in r.predictions]} for r in results]
    with open(path, "w") as fh:
        json.dump(payload, fh)
