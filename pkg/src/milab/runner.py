"""End-to-end experiment orchestration: train target, train shadows, run the
attack suite, apply defenses, sweep parameters, and emit reproducible reports.

Every random stream is derived from the experiment's global seed and a fixed
stage index (see STAGE_* constants and milab.rng), so a config plus a seed
pins the whole run.  Reports store the raw accuracies and advantages; all
derived fields (gap, highest advantage, bound verdict) are recomputable from
them.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import attacks as attacks_mod
from . import metrics as metrics_mod
from .attacks import (ATTACK_ORDER, AttackConfig, AttackResult, ShadowEnsemble,
                      ModelOracle, score_predictions, shadow_eval_probs,
                      fit_global_loss_threshold, fit_global_probability_threshold,
                      fit_topone_threshold, fit_topthree_classifier,
                      fit_class_vector_classifiers, member_probability, _topk,
                      _true_label_probs, BASELINE, GLOBAL_LOSS, GLOBAL_PROBABILITY,
                      GLOBAL_TOPONE, GLOBAL_TOPTHREE, CLASS_VECTOR, INSTANCE_VECTOR)
from .dataset import (Dataset, SplitPlan, BalancedEvalSet, POOL_GENERAL,
                      build_balanced_eval_set, generate_synthetic,
                      sample_training_set, split_three_way)
from .metrics import DEFAULT_BOUND_SLACK, ModelAccuracy, bound_check, highest_advantage
from .model import PROB_CLAMP, save_checkpoint
from .rng import derive_seed, generator
from .train import MmdConfig, TrainConfig, train_model, write_history_csv


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


DEFENSES = ("none", "mixup", "mmd", "mmd+mixup", "dpsgd", "dpsgd+mixup")

# stage indices for sub-seed derivation; stage_seed = derive_seed(seed, index)
STAGE_DATA = 0
STAGE_SPLIT = 1
STAGE_VALIDATION = 2
STAGE_TARGET_SAMPLE = 3
STAGE_TARGET_TRAIN = 4
STAGE_SHADOWS = 5
STAGE_ATTACKS = 6
STAGE_VALCHECK = 7
STAGE_NAMES = {
    "data": STAGE_DATA, "split": STAGE_SPLIT, "validation": STAGE_VALIDATION,
    "target_sample": STAGE_TARGET_SAMPLE, "target_train": STAGE_TARGET_TRAIN,
    "shadows": STAGE_SHADOWS, "attacks": STAGE_ATTACKS, "valcheck": STAGE_VALCHECK,
}


@dataclass
class ExperimentConfig:
    num_classes: int = 10
    dim: int = 20
    per_class: int = 2000
    cluster_spread: float = 2.0
    eval_size: int = 2000
    train_size: int = 1000
    defense: str = "none"
    target: TrainConfig = field(default_factory=TrainConfig)
    shadow_k: int = 20
    shadow: TrainConfig | None = None   # defaults to the target recipe
    mmd: MmdConfig = field(default_factory=MmdConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    bound_slack: float = DEFAULT_BOUND_SLACK
    output_dir: str | None = None
    save_shadow_artifacts: bool = False
    seed: int = 0

    def shadow_config(self) -> TrainConfig:
        return self.shadow if self.shadow is not None else self.target

    def validate(self) -> None:
        """Reject inconsistent configs before any compute."""
        try:
            self.target.validate()
            self.shadow_config().validate()
            self.mmd.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.defense not in DEFENSES:
            raise ConfigError(f"unknown defense {self.defense!r}; choose from {DEFENSES}")
        if self.num_classes < 2 or self.dim < 1 or self.per_class < 1:
            raise ConfigError("dataset spec must have num_classes>=2, dim>=1, per_class>=1")
        n = self.num_classes * self.per_class
        if self.eval_size % 2 or not 0 < self.eval_size < n:
            raise ConfigError("eval_size must be even, positive, and smaller than the dataset")
        if self.shadow_k < 1:
            raise ConfigError("need at least one shadow model")
        half = self.eval_size // 2
        if self.train_size < half:
            raise ConfigError(f"train_size must be at least eval_size/2 = {half}")
        # defense selection must agree with the training knobs, both ways
        for cfg_name, cfg in (("target", self.target), ("shadow", self.shadow_config())):
            wants_mixup = "mixup" in self.defense
            wants_mmd = self.defense in ("mmd", "mmd+mixup")
            wants_dp = self.defense.startswith("dpsgd")
            if wants_mixup != (cfg.mixup_alpha > 0):
                raise ConfigError(
                    f"defense {self.defense!r} inconsistent with {cfg_name} mixup_alpha={cfg.mixup_alpha}")
            if wants_mmd != (cfg.mmd_weight > 0):
                raise ConfigError(
                    f"defense {self.defense!r} inconsistent with {cfg_name} mmd_weight={cfg.mmd_weight}")
            if wants_dp != (cfg.dp_clip_norm is not None):
                raise ConfigError(
                    f"defense {self.defense!r} inconsistent with {cfg_name} dp_clip_norm={cfg.dp_clip_norm}")
        g_size = (n - self.eval_size + 1) // 2
        h_size = n - self.eval_size - g_size
        fill = self.train_size - half
        need_general = fill + (self.train_size if self.defense in ("mmd", "mmd+mixup") else 0)
        if need_general > g_size:
            raise ConfigError("general pool too small for target fill plus validation set")
        if fill > h_size:
            raise ConfigError("holdout pool too small for shadow fill")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes, "dim": self.dim, "per_class": self.per_class,
            "cluster_spread": self.cluster_spread, "eval_size": self.eval_size,
            "train_size": self.train_size, "defense": self.defense,
            "target": self.target.to_dict(), "shadow_k": self.shadow_k,
            "shadow": self.shadow.to_dict() if self.shadow is not None else None,
            "mmd": self.mmd.to_dict(), "attack": self.attack.to_dict(),
            "bound_slack": self.bound_slack, "output_dir": self.output_dir,
            "save_shadow_artifacts": self.save_shadow_artifacts, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "target" in d and isinstance(d["target"], dict):
            d["target"] = TrainConfig.from_dict(d["target"])
        if d.get("shadow") is not None and isinstance(d["shadow"], dict):
            d["shadow"] = TrainConfig.from_dict(d["shadow"])
        if "mmd" in d and isinstance(d["mmd"], dict):
            d["mmd"] = MmdConfig.from_dict(d["mmd"])
        if "attack" in d and isinstance(d["attack"], dict):
            d["attack"] = AttackConfig.from_dict(d["attack"])
        return cls(**d)


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            return ExperimentConfig.from_dict(json.load(fh))
        except (TypeError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad config file {path}: {exc}") from exc


@dataclass
class Artifacts:
    dataset: Dataset
    plan: SplitPlan
    validation_indices: np.ndarray | None
    target_model: object
    target_indices: np.ndarray
    target_bitmap: object
    eval_set: BalancedEvalSet
    ensemble: ShadowEnsemble
    history: list
    results: list[AttackResult]


@dataclass
class ExperimentReport:
    seed: int
    defense: str
    train_size: int
    a_R: float
    a_E: float
    g: float
    advantages: dict
    accuracies: dict
    v: float
    v_attack: str
    bound_lower_ok: bool
    bound_upper_ok: bool
    bound_slack: float
    failures: dict
    stage_seeds: dict
    n_eval: int
    wall_clock_s: float

    def canonical_dict(self) -> dict:
        """Everything deterministic for a fixed config and seed (no wall clock)."""
        return {
            "seed": self.seed, "defense": self.defense, "train_size": self.train_size,
            "a_R": self.a_R, "a_E": self.a_E, "g": self.g,
            "advantages": self.advantages, "accuracies": self.accuracies,
            "v": self.v, "v_attack": self.v_attack,
            "bound_lower_ok": self.bound_lower_ok, "bound_upper_ok": self.bound_upper_ok,
            "bound_slack": self.bound_slack, "failures": self.failures,
            "stage_seeds": self.stage_seeds, "n_eval": self.n_eval,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True)


@dataclass
class RunResult:
    report: ExperimentReport
    artifacts: Artifacts


def _stage_seeds(seed: int, overrides: dict | None = None) -> dict:
    seeds = {name: derive_seed(seed, idx) for name, idx in STAGE_NAMES.items()}
    if overrides:
        seeds.update(overrides)
    return seeds


def run_experiment(config: ExperimentConfig, stage_seed_overrides: dict | None = None,
                   write_outputs: bool | None = None) -> RunResult:
    """One full experiment: data, split, target, shadows, attacks, metrics.

    Writes report/history/checkpoint files when the config names an output
    directory (or when write_outputs forces it).
    """
    config.validate()
    t0 = time.perf_counter()
    seeds = _stage_seeds(config.seed, stage_seed_overrides)

    dataset = generate_synthetic(config.num_classes, config.dim, config.per_class,
                                 config.cluster_spread, seeds["data"])
    plan = split_three_way(dataset, config.eval_size, seeds["split"])

    validation_indices = None
    target_plan = plan
    if config.defense in ("mmd", "mmd+mixup"):
        g = generator(seeds["validation"])
        validation_indices = np.sort(g.choice(plan.general_ids, size=config.train_size,
                                              replace=False)).astype(np.int64)
        remaining = np.setdiff1d(plan.general_ids, validation_indices)
        target_plan = replace(plan, general_ids=remaining)

    target_indices, target_bitmap = sample_training_set(
        target_plan, POOL_GENERAL, config.train_size, seeds["target_sample"])
    target_cfg = replace(config.target, seed=seeds["target_train"])
    target_model, history = train_model(dataset, target_indices, target_cfg,
                                        config.mmd, validation_indices)

    ensemble = attacks_mod.train_shadow_ensemble(
        dataset, plan, config.shadow_k, config.shadow_config(), config.train_size,
        seeds["shadows"], config.mmd, validation_indices)

    eval_set = build_balanced_eval_set(dataset, plan, target_bitmap)
    attack_cfg = replace(config.attack, seed=seeds["attacks"])
    results, failures = attacks_mod.run_all_attacks(target_model, eval_set,
                                                    ensemble, attack_cfg)

    a_R = metrics_mod.accuracy(target_model, dataset.features[target_indices],
                               dataset.labels[target_indices])
    nonmember = ~eval_set.is_member
    a_E = metrics_mod.accuracy(target_model, eval_set.features[nonmember],
                               eval_set.labels[nonmember])
    acc = ModelAccuracy.from_accuracies(a_R, a_E)
    v, v_attack = highest_advantage(results)
    verdict = bound_check(acc.g, v, config.bound_slack)

    report = ExperimentReport(
        seed=config.seed, defense=config.defense, train_size=config.train_size,
        a_R=a_R, a_E=a_E, g=acc.g,
        advantages={r.attack_name: r.advantage for r in results},
        accuracies={r.attack_name: r.accuracy for r in results},
        v=v, v_attack=v_attack,
        bound_lower_ok=verdict.lower_ok, bound_upper_ok=verdict.upper_ok,
        bound_slack=config.bound_slack, failures=failures,
        stage_seeds=seeds, n_eval=len(eval_set),
        wall_clock_s=time.perf_counter() - t0,
    )
    artifacts = Artifacts(dataset=dataset, plan=plan,
                          validation_indices=validation_indices,
                          target_model=target_model, target_indices=target_indices,
                          target_bitmap=target_bitmap, eval_set=eval_set,
                          ensemble=ensemble, history=history, results=results)
    run = RunResult(report=report, artifacts=artifacts)
    if write_outputs or (write_outputs is None and config.output_dir):
        write_run_outputs(run, config)
    return run


def write_run_outputs(run: RunResult, config: ExperimentConfig, tag: str = "") -> None:
    out = config.output_dir
    if not out:
        raise ConfigError("no output directory configured")
    os.makedirs(out, exist_ok=True)
    os.makedirs(os.path.join(out, "history"), exist_ok=True)
    os.makedirs(os.path.join(out, "checkpoints"), exist_ok=True)
    stem = f"target{('_' + tag) if tag else ''}"
    report_path = os.path.join(out, f"report{('_' + tag) if tag else ''}.json")
    with open(report_path, "w") as fh:
        payload = run.report.canonical_dict()
        payload["wall_clock_s"] = run.report.wall_clock_s
        payload["config"] = config.to_dict()
        json.dump(payload, fh, sort_keys=True, indent=1)
    append_report_csv(os.path.join(out, "report.csv"), run.report)
    write_history_csv(run.artifacts.history, os.path.join(out, "history", f"{stem}.csv"))
    save_checkpoint(run.artifacts.target_model,
                    os.path.join(out, "checkpoints", f"{stem}.json"))
    if config.save_shadow_artifacts:
        for i, m in enumerate(run.artifacts.ensemble.models):
            save_checkpoint(m, os.path.join(out, "checkpoints", f"shadow_{i:03d}.json"))
    attacks_mod.write_attack_csv(run.artifacts.results,
                                 os.path.join(out, f"attacks{('_' + tag) if tag else ''}.csv"))
    attacks_mod.write_attack_json(run.artifacts.results,
                                  os.path.join(out, f"attacks{('_' + tag) if tag else ''}.json"))


REPORT_COLUMNS = ["seed", "defense", "train_size", "sweep_param", "sweep_value",
                  "a_R", "a_E", "g"] + [f"adv_{n}" for n in ATTACK_ORDER] + \
                 ["v", "v_attack", "bound_lower_ok", "bound_upper_ok", "wall_clock_s"]


def append_report_csv(path, report: ExperimentReport,
                      sweep_param: str = "", sweep_value="") -> None:
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(REPORT_COLUMNS)
        w.writerow([report.seed, report.defense, report.train_size,
                    sweep_param, sweep_value,
                    repr(report.a_R), repr(report.a_E), repr(report.g)]
                   + [repr(report.advantages.get(n, float("nan"))) for n in ATTACK_ORDER]
                   + [repr(report.v), report.v_attack,
                      int(report.bound_lower_ok), int(report.bound_upper_ok),
                      repr(report.wall_clock_s)])


# ---------------------------------------------------------------------------
# Defense comparison and sweep helpers

DEFENSE_SWEEP_PARAM = {"none": None, "mixup": None,
                       "mmd": "mmd_weight", "mmd+mixup": "mmd_weight",
                       "dpsgd": "dp_noise_scale", "dpsgd+mixup": "dp_noise_scale"}


def configure_defense(base: ExperimentConfig, defense: str,
                      value: float | None = None,
                      mixup_alpha: float = 1.0,
                      dp_clip_norm: float = 1.0) -> ExperimentConfig:
    """Derive a consistent config for one defense arm from a base config.

    `value` sets the defense's tunable parameter (MMD weight or DP noise
    scale); defenses without a tunable ignore it.
    """
    if defense not in DEFENSES:
        raise ConfigError(f"unknown defense {defense!r}")
    cfg = replace(base.target, mixup_alpha=0.0, mmd_weight=0.0,
                  dp_clip_norm=None, dp_noise_scale=0.0)
    if "mixup" in defense:
        cfg = replace(cfg, mixup_alpha=mixup_alpha)
    if defense in ("mmd", "mmd+mixup"):
        cfg = replace(cfg, mmd_weight=float(value if value is not None else 1.0))
    if defense.startswith("dpsgd"):
        cfg = replace(cfg, dp_clip_norm=dp_clip_norm,
                      dp_noise_scale=float(value if value is not None else 1.0))
    return replace(base, defense=defense, target=cfg, shadow=None)


@dataclass
class ComparisonCell:
    defense: str
    sweep_value: float | None
    run: RunResult | None
    error: str | None = None


def run_defense_comparison(base: ExperimentConfig, defenses, sweep_values,
                           output_dir: str | None = None) -> list[ComparisonCell]:
    """Grid of runs over defenses and their tunable parameter values.

    Defenses with a tunable parameter produce one run per sweep value; the
    rest run once.  Per-cell failures are recorded and the grid continues.
    Emits the two tradeoff tables (train-vs-test accuracy, highest advantage
    vs test accuracy) as CSV when an output directory is given.
    """
    if not defenses or (sweep_values is not None and len(sweep_values) == 0):
        raise ConfigError("defense list and sweep values must be non-empty")
    cells = []
    for defense in defenses:
        param = DEFENSE_SWEEP_PARAM[defense]
        values = list(sweep_values) if param else [None]
        for val in values:
            cfg = configure_defense(base, defense, val)
            cfg = replace(cfg, output_dir=None)
            try:
                cells.append(ComparisonCell(defense, val, run_experiment(cfg)))
            except ConfigError:
                raise
            except Exception as exc:
                cells.append(ComparisonCell(defense, val, None, error=str(exc)))
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        _write_tradeoff_tables(cells, output_dir)
        for cell in cells:
            if cell.run is not None:
                append_report_csv(os.path.join(output_dir, "report.csv"), cell.run.report,
                                  DEFENSE_SWEEP_PARAM[cell.defense] or "",
                                  "" if cell.sweep_value is None else cell.sweep_value)
    return cells


def _write_tradeoff_tables(cells, output_dir) -> None:
    with open(os.path.join(output_dir, "tradeoff_train_vs_test.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["defense", "sweep_value", "train_acc", "test_acc"])
        for c in cells:
            if c.run:
                w.writerow([c.defense, c.sweep_value, repr(c.run.report.a_R),
                            repr(c.run.report.a_E)])
    with open(os.path.join(output_dir, "tradeoff_advantage_vs_test.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["defense", "sweep_value", "highest_advantage", "test_acc"])
        for c in cells:
            if c.run:
                w.writerow([c.defense, c.sweep_value, repr(c.run.report.v),
                            repr(c.run.report.a_E)])


def select_weight_by_accuracy_rule(candidates: list[tuple[float, ExperimentReport]],
                                   baseline: ExperimentReport,
                                   max_drop: float = 0.02) -> float:
    """Largest tunable value whose testing accuracy stays within max_drop of
    the no-defense run; falls back to the smallest candidate when none
    qualifies."""
    if not candidates:
        raise ValueError("no candidate runs")
    ok = [v for v, rep in candidates if baseline.a_E - rep.a_E <= max_drop]
    return max(ok) if ok else min(v for v, _ in candidates)


# ---------------------------------------------------------------------------
# Validation-set membership inference

# attacks that can score an arbitrary (features, labels, membership) set once
# fitted on the shadow machinery; the instance-level attack needs per-instance
# in/out shadow splits which validation instances never have
VALCHECK_ATTACKS = (CLASS_VECTOR, GLOBAL_PROBABILITY, GLOBAL_LOSS,
                    GLOBAL_TOPTHREE, GLOBAL_TOPONE, BASELINE)


def validation_mi_check(run: RunResult, attack_cfg: AttackConfig | None = None,
                        seed: int | None = None):
    """Attack the validation set: balanced eval of validation instances
    (members) versus never-used general-pool instances (non-members).

    Attack models and thresholds are fitted exactly as in the main
    evaluation (on shadow outputs over E) and then applied to this set.
    """
    art = run.artifacts
    if art.validation_indices is None:
        raise ValueError("validation MI check requires an MMD-defended run")
    seed = run.report.stage_seeds["valcheck"] if seed is None else seed
    attack_cfg = attack_cfg or AttackConfig()
    dataset, plan = art.dataset, art.plan
    used = set(art.validation_indices.tolist()) | set(art.target_indices.tolist())
    leftover = np.array([i for i in plan.general_ids if i not in used], dtype=np.int64)
    n_val = len(art.validation_indices)
    if len(leftover) < n_val:
        raise ValueError("not enough never-used instances for a balanced check")
    g = generator(seed)
    test_ids = g.choice(leftover, size=n_val, replace=False)
    features = np.vstack([dataset.features[art.validation_indices],
                          dataset.features[test_ids]])
    labels = np.concatenate([dataset.labels[art.validation_indices],
                             dataset.labels[test_ids]])
    is_member = np.concatenate([np.ones(n_val, bool), np.zeros(n_val, bool)])
    check_set = BalancedEvalSet(features=features, labels=labels, is_member=is_member)

    oracle = ModelOracle(art.target_model)
    shadow_probs = shadow_eval_probs(art.ensemble, art.eval_set.features)
    bitmaps = art.ensemble.bitmap_matrix()
    eval_labels = art.eval_set.labels
    P = oracle.prob_vectors(features)
    p_true = _true_label_probs(P, labels)

    results = []
    loss_thr = fit_global_loss_threshold(shadow_probs, bitmaps, eval_labels)
    prob_thr = fit_global_probability_threshold(shadow_probs, bitmaps, eval_labels)
    clf3, topk = fit_topthree_classifier(shadow_probs, bitmaps,
                                         derive_seed(attack_cfg.seed, 2),
                                         attack_cfg.attack_model)
    clfs = fit_class_vector_classifiers(shadow_probs, bitmaps, eval_labels,
                                        dataset.num_classes,
                                        derive_seed(attack_cfg.seed, 1),
                                        attack_cfg.attack_model)
    cv_preds = np.zeros(len(check_set), dtype=bool)
    for cl in range(dataset.num_classes):
        sel = labels == cl
        if sel.any():
            cv_preds[sel] = member_probability(clfs[cl], P[sel]) >= 0.5
    results.append(score_predictions(CLASS_VECTOR, cv_preds, is_member))
    results.append(score_predictions(GLOBAL_PROBABILITY, p_true >= prob_thr, is_member))
    losses = -np.log(np.maximum(p_true, PROB_CLAMP))
    results.append(score_predictions(GLOBAL_LOSS, losses < loss_thr, is_member))
    results.append(score_predictions(
        GLOBAL_TOPTHREE, member_probability(clf3, _topk(P, topk)) >= 0.5, is_member))
    t1_thr = fit_topone_threshold(oracle, art.eval_set.features,
                                  attack_cfg.topone_percentile,
                                  attack_cfg.topone_queries,
                                  generator(derive_seed(attack_cfg.seed, 3)))
    results.append(score_predictions(GLOBAL_TOPONE, P.max(axis=1) >= t1_thr, is_member))
    results.append(score_predictions(
        BASELINE, oracle.predicted_labels(features) == labels, is_member))
    return results, check_set


def run_validation_mi_check(config: ExperimentConfig) -> tuple[list[AttackResult], RunResult]:
    config.validate()
    if config.defense not in ("mmd", "mmd+mixup"):
        raise ConfigError("validation MI check requires an MMD defense")
    run = run_experiment(config)
    attack_cfg = replace(config.attack, seed=run.report.stage_seeds["attacks"])
    results, _ = validation_mi_check(run, attack_cfg)
    if config.output_dir:
        attacks_mod.write_attack_csv(results, os.path.join(config.output_dir,
                                                           "validation_check.csv"))
        attacks_mod.write_attack_json(results, os.path.join(config.output_dir,
                                                            "validation_check.json"))
    return results, run


# ---------------------------------------------------------------------------
# Training-set size sweep

@dataclass
class SizeSweepEntry:
    train_size: int
    run: RunResult | None
    skipped: str | None = None


def run_trainsize_sweep(config: ExperimentConfig, sizes) -> list[SizeSweepEntry]:
    """One full run per training-set size; infeasible sizes are skipped with
    a record.  Sizes must be ascending."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ConfigError("sizes must be ascending")
    entries = []
    for s in sizes:
        cfg = replace(config, train_size=int(s), output_dir=None)
        try:
            cfg.validate()
        except ConfigError as exc:
            entries.append(SizeSweepEntry(int(s), None, skipped=str(exc)))
            continue
        entries.append(SizeSweepEntry(int(s), run_experiment(cfg)))
    if config.output_dir:
        os.makedirs(config.output_dir, exist_ok=True)
        path = os.path.join(config.output_dir, "size_sweep.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["train_size", "a_R", "a_E", "g", "v", "skipped"])
            for e in entries:
                if e.run:
                    r = e.run.report
                    w.writerow([e.train_size, repr(r.a_R), repr(r.a_E),
                                repr(r.g), repr(r.v), ""])
                else:
                    w.writerow([e.train_size, "", "", "", "", e.skipped])
    return entries


# ---------------------------------------------------------------------------
# The desk-scale benchmark configuration used by the acceptance suite

def desk_benchmark_config(seed: int = 0, defense: str = "none",
                          shadow_k: int = 20, **overrides) -> ExperimentConfig:
    """Synthetic benchmark: 10 classes, 20 dims, 20000 instances, eval 2000,
    train 1000, spread tuned so the undefended model overfits hard
    (training accuracy ~1.0, test accuracy in the 0.6-0.9 band)."""
    target = TrainConfig(epochs=40, batch_size=64, learning_rate=0.1,
                         lr_schedule=((25, 0.1),), l2_coeff=1e-4,
                         dropout_keep=1.0, hidden_dims=(128, 64))
    base = ExperimentConfig(num_classes=10, dim=20, per_class=2000,
                            cluster_spread=1.5, eval_size=2000, train_size=1000,
                            defense="none", target=target, shadow_k=shadow_k,
                            seed=seed)
    value = overrides.pop("defense_value", None)
    if defense != "none":
        base = configure_defense(base, defense, value)
    if overrides:
        base = replace(base, **overrides)
    return base
