"""Command-line front end.

Subcommands: gen-data, train, attack, defend-compare, validation-check,
size-sweep, report.  Flags mirror the experiment config; --config loads a
JSON file and --seed/--out override it.  Exit codes: 0 success, 2 config
validation failure, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import metrics as metrics_mod
from .dataset import generate_synthetic, save_dataset_csv, save_split_json, split_three_way
from .model import save_checkpoint
from .runner import (ConfigError, DEFENSES, ExperimentConfig, desk_benchmark_config,
                     load_experiment_config, run_defense_comparison, run_experiment,
                     run_trainsize_sweep, run_validation_mi_check)
from .train import write_history_csv


def _load_config(args) -> ExperimentConfig:
    cfg = load_experiment_config(args.config) if args.config else desk_benchmark_config()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    if getattr(args, "defense", None):
        from .runner import configure_defense
        cfg = configure_defense(cfg, args.defense, getattr(args, "defense_value", None))
        if args.out:
            cfg = replace(cfg, output_dir=args.out)
    return cfg


def cmd_gen_data(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    dataset = generate_synthetic(args.classes, args.dim, args.per_class,
                                 args.spread, args.seed)
    save_dataset_csv(dataset, os.path.join(args.out, "data.csv"))
    if args.eval_size:
        plan = split_three_way(dataset, args.eval_size, args.seed)
        save_split_json(plan, os.path.join(args.out, "split.json"))
    print(f"wrote {len(dataset)} instances to {args.out}/data.csv")
    return 0


def cmd_train(args) -> int:
    from .dataset import POOL_GENERAL, sample_training_set
    from .runner import _stage_seeds
    import numpy as np
    from .rng import generator
    cfg = _load_config(args)
    cfg.validate()
    seeds = _stage_seeds(cfg.seed)
    dataset = generate_synthetic(cfg.num_classes, cfg.dim, cfg.per_class,
                                 cfg.cluster_spread, seeds["data"])
    plan = split_three_way(dataset, cfg.eval_size, seeds["split"])
    validation = None
    if cfg.defense in ("mmd", "mmd+mixup"):
        g = generator(seeds["validation"])
        validation = np.sort(g.choice(plan.general_ids, size=cfg.train_size,
                                      replace=False)).astype(np.int64)
        plan = replace(plan, general_ids=np.setdiff1d(plan.general_ids, validation))
    indices, _ = sample_training_set(plan, POOL_GENERAL, cfg.train_size,
                                     seeds["target_sample"])
    from .train import train_model
    model, history = train_model(dataset, indices,
                                 replace(cfg.target, seed=seeds["target_train"]),
                                 cfg.mmd, validation)
    out = cfg.output_dir or "."
    os.makedirs(out, exist_ok=True)
    save_checkpoint(model, os.path.join(out, "target.json"))
    write_history_csv(history, os.path.join(out, "history.csv"))
    print(f"trained target: final train_acc={history[-1].train_acc:.4f} "
          f"-> {out}/target.json")
    return 0


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    run = run_experiment(cfg, write_outputs=bool(cfg.output_dir))
    r = run.report
    print(f"a_R={r.a_R:.4f} a_E={r.a_E:.4f} g={r.g:.4f} "
          f"v={r.v:.4f} ({r.v_attack}) "
          f"bound[{'ok' if r.bound_lower_ok and r.bound_upper_ok else 'VIOLATED'}]")
    for name, adv in r.advantages.items():
        print(f"  {name:<20} advantage={adv:+.4f}")
    return 0


def cmd_defend_compare(args) -> int:
    cfg = _load_config(args)
    defenses = args.defenses.split(",")
    for d in defenses:
        if d not in DEFENSES:
            raise ConfigError(f"unknown defense {d!r}")
    values = [float(v) for v in args.sweep.split(",")] if args.sweep else [1.0]
    cells = run_defense_comparison(cfg, defenses, values, args.out)
    for c in cells:
        if c.run:
            print(f"{c.defense:<12} value={c.sweep_value} a_E={c.run.report.a_E:.4f} "
                  f"v={c.run.report.v:.4f}")
        else:
            print(f"{c.defense:<12} value={c.sweep_value} FAILED: {c.error}")
    return 0


def cmd_validation_check(args) -> int:
    cfg = _load_config(args)
    results, _ = run_validation_mi_check(cfg)
    worst = max(r.advantage for r in results)
    for r in results:
        print(f"  {r.attack_name:<20} advantage={r.advantage:+.4f}")
    print(f"highest validation-set advantage: {worst:+.4f}")
    return 0


def cmd_size_sweep(args) -> int:
    cfg = _load_config(args)
    sizes = [int(s) for s in args.sizes.split(",")]
    entries = run_trainsize_sweep(cfg, sizes)
    for e in entries:
        if e.run:
            print(f"size={e.train_size:<6} g={e.run.report.g:.4f} v={e.run.report.v:.4f}")
        else:
            print(f"size={e.train_size:<6} skipped: {e.skipped}")
    return 0


def cmd_report(args) -> int:
    with open(args.report) as fh:
        payload = json.load(fh)
    g = payload["a_R"] - payload["a_E"]
    v = max(payload["advantages"].values())
    ok = (abs(g - payload["g"]) < 1e-12 and abs(v - payload["v"]) < 1e-12
          and payload["bound_lower_ok"] == (v >= g / 2 - payload["bound_slack"])
          and payload["bound_upper_ok"] == (v <= g + payload["bound_slack"]))
    print(f"a_R={payload['a_R']:.4f} a_E={payload['a_E']:.4f} g={payload['g']:.4f} "
          f"v={payload['v']:.4f} ({payload['v_attack']})")
    for name, adv in payload["advantages"].items():
        print(f"  {name:<20} advantage={adv:+.4f}")
    print("self-consistency:", "ok" if ok else "MISMATCH")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="milab",
                                description="membership-inference attack/defense lab")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--seed", type=int, help="override the global seed")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--defense", choices=DEFENSES, help="override the defense arm")
        sp.add_argument("--defense-value", type=float, dest="defense_value",
                        help="tunable value for the chosen defense")

    sp = sub.add_parser("gen-data", help="generate a synthetic dataset (CSV + split manifest)")
    sp.add_argument("--classes", type=int, default=10)
    sp.add_argument("--dim", type=int, default=20)
    sp.add_argument("--per-class", type=int, default=2000, dest="per_class")
    sp.add_argument("--spread", type=float, default=2.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eval-size", type=int, default=0, dest="eval_size")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train one target model")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("attack", help="full experiment: target, shadows, all attacks")
    common(sp)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("defend-compare", help="grid of defenses x sweep values")
    common(sp)
    sp.add_argument("--defenses", default="none,mmd+mixup")
    sp.add_argument("--sweep", default="")
    sp.set_defaults(func=cmd_defend_compare)

    sp = sub.add_parser("validation-check", help="membership inference against the validation set")
    common(sp)
    sp.set_defaults(func=cmd_validation_check)

    sp = sub.add_parser("size-sweep", help="repeat the experiment across training-set sizes")
    common(sp)
    sp.add_argument("--sizes", required=True, help="comma-separated ascending sizes")
    sp.set_defaults(func=cmd_size_sweep)

    sp = sub.add_parser("report", help="verify and pretty-print a report.json")
    sp.add_argument("--report", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
