"""Synthetic tabular data plus the disjoint split and sampling protocol.

The population is split into three disjoint parts: an evaluation set E on
which membership is judged, a general pool G that fills the target model's
training set, and a holdout pool H that fills shadow training sets.  Every
model (target or shadow) trains on a random half of E plus instances from
its own pool, so at least 3/4 of the target's pool instances never appear
in any shadow training set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .rng import generator

POOL_GENERAL = "general"
POOL_HOLDOUT = "holdout"


@dataclass(frozen=True)
class Instance:
    """One labeled example: feature vector plus class index."""

    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, dim) float64
    labels: np.ndarray    # (n,) int64
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) == 0:
            raise ValueError("dataset must be a non-empty (n, dim) array")
        if len(self.labels) != len(self.features):
            raise ValueError("labels/features length mismatch")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def instance(self, i: int) -> Instance:
        return Instance(self.features[i], int(self.labels[i]))


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint index sets (eval / general / holdout) into a Dataset."""

    eval_ids: np.ndarray
    general_ids: np.ndarray
    holdout_ids: np.ndarray
    seed: int

    def __post_init__(self):
        e, g, h = map(set, (self.eval_ids, self.general_ids, self.holdout_ids))
        if e & g or e & h or g & h:
            raise ValueError("split parts must be pairwise disjoint")

    @property
    def eval_size(self) -> int:
        return len(self.eval_ids)


@dataclass(frozen=True)
class MembershipBitmap:
    """One boolean per evaluation-set index: True where the model trained on it."""

    member_flags: np.ndarray

    @property
    def popcount(self) -> int:
        return int(self.member_flags.sum())


@dataclass(frozen=True)
class BalancedEvalSet:
    """All of E with ground-truth membership; exactly half members.

    Iterating yields (Instance, is_member) pairs; the arrays are what the
    attack code consumes directly.
    """

    features: np.ndarray
    labels: np.ndarray
    is_member: np.ndarray

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        for i in range(len(self)):
            yield Instance(self.features[i], int(self.labels[i])), bool(self.is_member[i])


def generate_synthetic(num_classes: int, dim: int, per_class: int,
                       cluster_spread: float, seed: int) -> Dataset:
    """Gaussian-cluster data: class means drawn once from a unit normal,
    instances from N(mean, cluster_spread^2 * I).

    Because the means have fixed (unit) scale, cluster_spread directly
    controls class overlap and hence how hard the task is to generalize on.
    Deterministic for a given seed; instances are ordered class-major.
    """
    if num_classes < 2 or dim < 1 or per_class < 1:
        raise ValueError("need num_classes >= 2, dim >= 1, per_class >= 1")
    if cluster_spread < 0:
        raise ValueError("cluster_spread must be non-negative")
    g = generator(seed)
    means = g.standard_normal((num_classes, dim))
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    noise = g.standard_normal((num_classes * per_class, dim))
    features = means[labels] + cluster_spread * noise
    return Dataset(features=features, labels=labels, num_classes=num_classes)


def split_three_way(dataset: Dataset, eval_size: int, seed: int) -> SplitPlan:
    """Uniformly random disjoint partition into E / G / H.

    E gets exactly eval_size indices (must be even), the remainder is split
    evenly with any odd leftover going to G.
    """
    n = len(dataset)
    if eval_size % 2 != 0:
        raise ValueError("eval_size must be even")
    if not 0 < eval_size < n:
        raise ValueError("eval_size must be positive and smaller than the dataset")
    perm = generator(seed).permutation(n)
    rest = perm[eval_size:]
    g_size = (len(rest) + 1) // 2
    return SplitPlan(
        eval_ids=np.sort(perm[:eval_size]).astype(np.int64),
        general_ids=np.sort(rest[:g_size]).astype(np.int64),
        holdout_ids=np.sort(rest[g_size:]).astype(np.int64),
        seed=seed,
    )


def sample_training_set(plan: SplitPlan, pool: str, train_size: int,
                        seed: int) -> tuple[np.ndarray, MembershipBitmap]:
    """Training indices for one model: a random half of E plus pool fill.

    Exactly |E|/2 indices are drawn uniformly without replacement from E and
    the remaining train_size - |E|/2 from the named pool (general for the
    target, holdout for shadows).  The bitmap marks which E positions were
    selected.
    """
    half = plan.eval_size // 2
    if train_size < half:
        raise ValueError(f"train_size must be at least |E|/2 = {half}")
    if pool == POOL_GENERAL:
        pool_ids = plan.general_ids
    elif pool == POOL_HOLDOUT:
        pool_ids = plan.holdout_ids
    else:
        raise ValueError(f"unknown pool {pool!r}")
    fill = train_size - half
    if fill > len(pool_ids):
        raise ValueError(f"pool {pool!r} has {len(pool_ids)} instances, need {fill}")
    g = generator(seed)
    eval_pos = g.choice(plan.eval_size, size=half, replace=False)
    fill_ids = g.choice(pool_ids, size=fill, replace=False) if fill else np.empty(0, np.int64)
    flags = np.zeros(plan.eval_size, dtype=bool)
    flags[eval_pos] = True
    indices = np.concatenate([plan.eval_ids[eval_pos], fill_ids.astype(np.int64)])
    return indices, MembershipBitmap(member_flags=flags)


def build_balanced_eval_set(dataset: Dataset, plan: SplitPlan,
                            bitmap: MembershipBitmap) -> BalancedEvalSet:
    """All of E tagged member iff its bitmap flag is set; exactly half members."""
    if len(bitmap.member_flags) != plan.eval_size:
        raise ValueError("bitmap length must equal |E|")
    if bitmap.popcount != plan.eval_size // 2:
        raise ValueError("bitmap must mark exactly half of E as members")
    return BalancedEvalSet(
        features=dataset.features[plan.eval_ids],
        labels=dataset.labels[plan.eval_ids],
        is_member=bitmap.member_flags.copy(),
    )


# ---------------------------------------------------------------------------
# Serialization.  Feature values are written as Python's shortest round-trip
# decimal repr, which is bit-exact for float64.

def save_dataset_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def load_dataset_csv(path, num_classes: int | None = None) -> Dataset:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        dim = len(header) - 1
        feats, labels = [], []
        for row in r:
            feats.append([float(v) for v in row[:dim]])
            labels.append(int(row[dim]))
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(np.asarray(feats, dtype=np.float64), labels, num_classes)


def save_split_json(plan: SplitPlan, path) -> None:
    with open(path, "w") as fh:
        json.dump({"seed": plan.seed,
                   "eval_ids": plan.eval_ids.tolist(),
                   "general_ids": plan.general_ids.tolist(),
                   "holdout_ids": plan.holdout_ids.tolist()}, fh)


def load_split_json(path) -> SplitPlan:
    with open(path) as fh:
        d = json.load(fh)
    return SplitPlan(eval_ids=np.asarray(d["eval_ids"], np.int64),
                     general_ids=np.asarray(d["general_ids"], np.int64),
                     holdout_ids=np.asarray(d["holdout_ids"], np.int64),
                     seed=d["seed"])
