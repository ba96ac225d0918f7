"""Accuracies, generalization gap, attack advantages, and the gap bound.

The structural quantities: training accuracy a_R, testing accuracy a_E,
generalization gap g = a_R - a_E, the highest attack advantage v, the
baseline attack's expected advantage g/2, and the empirical sandwich
g/2 <= v <= g checked with a configurable slack.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .attacks import ATTACK_ORDER, AttackResult

DEFAULT_BOUND_SLACK = 0.03

TRUE_LABEL_PROB = "true-label"
TOP_ONE_PROB = "top-1"


@dataclass(frozen=True)
class ModelAccuracy:
    a_R: float  # training accuracy
    a_E: float  # testing accuracy
    g: float    # generalization gap, always a_R - a_E

    @classmethod
    def from_accuracies(cls, a_R: float, a_E: float) -> "ModelAccuracy":
        return cls(a_R=a_R, a_E=a_E, g=a_R - a_E)


@dataclass(frozen=True)
class BoundVerdict:
    g: float
    v: float
    slack: float
    lower_ok: bool
    upper_ok: bool


def accuracy(model, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of instances whose predicted label equals the true label."""
    if len(features) == 0:
        raise ValueError("accuracy over an empty set is undefined")
    return float((model_mod.predict_labels(model, features) == labels).mean())


def generalization_gap(a_R: float, a_E: float) -> float:
    return a_R - a_E


def expected_baseline_advantage(g: float) -> float:
    """A correct-label attack on a balanced set scores (1 + g)/2, so g/2."""
    return g / 2.0


def highest_advantage(results: list[AttackResult]) -> tuple[float, str]:
    """Maximum advantage and its attack; ties go to the earliest result
    (canonical ATTACK_ORDER when produced by run_all_attacks)."""
    if not results:
        raise ValueError("no attack results")
    best = results[0]
    for r in results[1:]:
        if r.advantage > best.advantage:
            best = r
    return best.advantage, best.attack_name


def bound_check(g: float, v: float, slack: float = DEFAULT_BOUND_SLACK) -> BoundVerdict:
    """Verdict for g/2 - slack <= v <= g + slack (reported, never raised)."""
    if slack < 0:
        raise ValueError("slack must be non-negative")
    return BoundVerdict(g=g, v=v, slack=slack,
                        lower_ok=bool(v >= g / 2.0 - slack),
                        upper_ok=bool(v <= g + slack))


def confidence_cdf_export(model, features: np.ndarray, labels: np.ndarray,
                          label_mode: str = TRUE_LABEL_PROB) -> np.ndarray:
    """Sorted confidence values for empirical-CDF plotting.

    true-label mode exports the probability assigned to the true class,
    top-1 the maximum probability.
    """
    if len(features) == 0:
        raise ValueError("nothing to export")
    P = model_mod.prob_vectors(model, features)
    if label_mode == TRUE_LABEL_PROB:
        vals = P[np.arange(len(labels)), labels]
    elif label_mode == TOP_ONE_PROB:
        vals = P.max(axis=1)
    else:
        raise ValueError(f"unknown label_mode {label_mode!r}")
    return np.sort(vals)


def write_cdf_csv(values: np.ndarray, path) -> None:
    n = len(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "empirical_cdf"])
        for i, v in enumerate(values):
            w.writerow([repr(float(v)), repr((i + 1) / n)])
