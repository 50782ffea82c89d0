"""Batch command-line front end.

Subcommands:
  train     run one training job from a config file
  ablate    run the 4-way component ablation (baseline/+ACL/+MTL/+both)
  verify    run the built-in numerical self-checks
  gen-data  materialize a dataset manifest and its difficulty report

Exit codes: 0 success, 1 runtime/verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor

from .errors import ConfigError
from .synthgen import DatasetConfig, SynthDataset, difficulty_check
from .trainer import TrainConfig, run_training
from .verify import run_verification

ABLATION_CONFIGS = (
    ("baseline", False, False),
    ("acl_only", True, False),
    ("mtl_only", False, True),
    ("both", True, True),
)


def load_spec(path: str) -> dict:
    if path is None:
        raise ConfigError("--config is required")
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            spec = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(spec, dict):
        raise ConfigError("config root must be a JSON object")
    return spec


def build_configs(spec: dict, seed_override=None):
    known_train = set(TrainConfig().__dict__)
    known_ds = set(DatasetConfig().__dict__)
    for key, known in (("train", known_train), ("dataset", known_ds)):
        for k in spec.get(key, {}):
            if k not in known:
                raise ConfigError(f"unknown {key} option: {k}")
    train_kw = dict(spec.get("train", {}))
    if "strides" in train_kw:
        train_kw["strides"] = tuple(train_kw["strides"])
    if "lr_drop_epochs" in train_kw:
        train_kw["lr_drop_epochs"] = tuple(train_kw["lr_drop_epochs"])
    ablation = spec.get("ablation", {})
    train_kw.setdefault("use_acl", ablation.get("use_acl", True))
    train_kw.setdefault("use_mtl", ablation.get("use_mtl", True))
    cfg = TrainConfig(**train_kw)
    ds_cfg = DatasetConfig(**spec.get("dataset", {}))
    seeds = spec.get("seeds", [cfg.seed])
    if seed_override is not None:
        seeds = [seed_override]
    if not seeds:
        raise ConfigError("seed list must be non-empty")
    return cfg, ds_cfg, [int(s) for s in seeds]


def _with(cfg: TrainConfig, **kw) -> TrainConfig:
    d = cfg.__dict__.copy()
    d.update(kw)
    return TrainConfig(**d)


def cmd_train(args) -> int:
    spec = load_spec(args.config)
    cfg, ds_cfg, seeds = build_configs(spec, args.seed)
    out = args.out or spec.get("out_dir")
    if not out:
        raise ConfigError("no output directory (set out_dir or pass --out)")
    cfg = _with(cfg, seed=seeds[0])
    ds_cfg.seed = seeds[0] if "seed" not in spec.get("dataset", {}) else ds_cfg.seed
    summary = run_training(cfg, ds_cfg, out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _run_one(packed):
    cfg_dict, ds_dict, out = packed
    cfg = TrainConfig(**cfg_dict)
    cfg.strides = tuple(cfg.strides)
    cfg.lr_drop_epochs = tuple(cfg.lr_drop_epochs)
    return run_training(cfg, DatasetConfig(**ds_dict), out)


def cmd_ablate(args) -> int:
    spec = load_spec(args.config)
    cfg, ds_cfg, seeds = build_configs(spec, args.seed)
    out = args.out or spec.get("out_dir")
    if not out:
        raise ConfigError("no output directory (set out_dir or pass --out)")
    os.makedirs(out, exist_ok=True)

    jobs = []
    for name, use_acl, use_mtl in ABLATION_CONFIGS:
        for seed in seeds:
            run_cfg = _with(cfg, use_acl=use_acl, use_mtl=use_mtl, seed=seed)
            # one shared dataset across the grid: the ablation compares
            # training components, so only the training seed varies
            run_ds = ds_cfg
            run_out = os.path.join(out, name, f"seed_{seed}")
            jobs.append((name, seed, (run_cfg.to_dict(), run_ds.to_dict(), run_out)))

    workers = min(len(jobs), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(_run_one, [j[2] for j in jobs]))

    by_config = {name: [] for name, _, _ in ABLATION_CONFIGS}
    for (name, seed, _), summary in zip(jobs, outcomes):
        by_config[name].append(summary)

    rows = []
    medians = {}
    for name, _, _ in ABLATION_CONFIGS:
        top1s = [s["top1"] for s in by_config[name]]
        medians[name] = statistics.median(top1s)
        rows.append({"config": name, "median_top1": medians[name],
                     "top1_by_seed": top1s})
    single_hi = max(medians["acl_only"], medians["mtl_only"])
    single_lo = min(medians["acl_only"], medians["mtl_only"])
    ordering = {
        "both_ge_singles": medians["both"] >= single_hi,
        "singles_ge_baseline": single_lo >= medians["baseline"],
        "both_minus_baseline": medians["both"] - medians["baseline"],
    }
    summary = {"configs": rows, "ordering": ordering, "seeds": seeds}
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    with open(os.path.join(out, "summary.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["config", "median_top1"])
        for row in rows:
            w.writerow([row["config"], repr(row["median_top1"])])
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    ok, results = run_verification()
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: max error {r.max_error:.3e} "
              f"(tolerance {r.tolerance:.0e})")
    return 0 if ok else 1


def cmd_gen_data(args) -> int:
    spec = load_spec(args.config)
    _, ds_cfg, seeds = build_configs(spec, args.seed)
    out = args.out or spec.get("out_dir")
    if not out:
        raise ConfigError("no output directory (set out_dir or pass --out)")
    os.makedirs(out, exist_ok=True)
    ds_cfg.seed = seeds[0]
    ds = SynthDataset(ds_cfg)
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(ds.manifest(), f, indent=2)
    worst = difficulty_check(ds)
    report = {"spatial_pair_linear_accuracy": worst,
              "hard_enough": worst <= 0.60}
    with open(os.path.join(out, "difficulty.json"), "w") as f:
        json.dump(report, f, indent=2)
    print(json.dumps(report, indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="seqssl")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("train", cmd_train), ("ablate", cmd_ablate),
                     ("verify", cmd_verify), ("gen-data", cmd_gen_data)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
