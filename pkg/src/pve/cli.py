"""Command-line interface.

Subcommands: collect, train, embed, eval, rl, gradreport, inspect.
Every artifact-producing run writes a JSON manifest recording the exact
config, seeds, input digests, and outputs.

Exit codes: 0 success, 2 usage error, 3 data error (missing or malformed
files), 4 numeric failure (diverged training or non-finite results).
"""

from __future__ import annotations

import argparse
import csv
import os
import struct
import sys
import time

import numpy as np

from . import __version__
from .analysis import ProbeSpec, embed_dataset, pca, probe
from .config import (build_train_config, file_digest, flatten_train_config,
                     load_config, parse_value, write_manifest)
from .data import collect, load_dataset, save_dataset
from .encoder import load_encoder, save_encoder
from .envs import TASK_IDS
from .render import CAMERA_IDS
from .rl import ACTION_SETS, RLConfig, run_learning_curve
from .trainer import gradient_magnitude_report, train
from . import checkpoint as ckpt_format

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class NumericFailure(RuntimeError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pve",
        description="position-velocity encoders: collect, train, evaluate")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="roll out a random policy and render")
    p.add_argument("--task", required=True, choices=sorted(TASK_IDS))
    p.add_argument("--camera", default="static", choices=sorted(CAMERA_IDS))
    p.add_argument("--n-traj", type=int, required=True)
    p.add_argument("--len", dest="traj_len", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train an encoder on a dataset")
    p.add_argument("--task", required=True, choices=sorted(TASK_IDS))
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. curriculum.alpha_max=5")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("embed", help="encode a dataset to a state CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="PCA and probe evaluation of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--train-data", required=True)
    p.add_argument("--test-data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--probe-seed", type=int, default=0)

    p = sub.add_parser("rl", help="fitted Q-iteration on a frozen encoder")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ckpt")
    group.add_argument("--random-encoder", action="store_true")
    p.add_argument("--task", required=True, choices=sorted(TASK_IDS))
    p.add_argument("--camera", choices=sorted(CAMERA_IDS))
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("gradreport",
                       help="per-prior encoder gradient norms on one batch")
    p.add_argument("--task", required=True, choices=sorted(TASK_IDS))
    p.add_argument("--dataset", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out")

    p = sub.add_parser("inspect", help="print the header of a .pved/.pve1 file")
    p.add_argument("path")
    return parser


def _require_file(path: str):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")


def cmd_collect(args) -> int:
    started = time.time()
    dataset = collect(args.task, args.n_traj, args.traj_len, args.seed,
                      camera=args.camera, height=args.height, width=args.width)
    save_dataset(args.out, dataset)
    write_manifest(args.out, "collect",
                   {"task": args.task, "camera": args.camera,
                    "n_traj": args.n_traj, "len": args.traj_len,
                    "height": args.height, "width": args.width},
                   {"seed": args.seed}, [], [args.out], started)
    print(f"wrote {args.n_traj} trajectories to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    _require_file(args.dataset)
    file_values = None
    if args.config:
        _require_file(args.config)
        file_values = load_config(args.config)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = parse_value(value)
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = build_train_config(args.task, file_values, overrides)
    dataset = load_dataset(args.dataset)
    if dataset.task != args.task:
        raise ValueError(f"dataset task {dataset.task!r} != --task {args.task!r}")
    os.makedirs(args.out_dir, exist_ok=True)
    log = None if args.quiet else print
    result = train(dataset, config, out_dir=args.out_dir, log=log)
    inputs = [args.dataset] + ([args.config] if args.config else [])
    write_manifest(args.out_dir, "train", flatten_train_config(config),
                   {"seed": config.seed},
                   inputs,
                   sorted(os.listdir(args.out_dir)), started)
    if result.aborted:
        print("training aborted: loss diverged", file=sys.stderr)
        return EXIT_NUMERIC
    final = result.epochs[-1]
    print(f"trained {len(result.epochs)} epochs "
          f"(phases {result.phase_boundaries}); final total loss "
          f"{final.mean_total:.6f}; checkpoints in {args.out_dir}")
    return EXIT_OK


def cmd_embed(args) -> int:
    started = time.time()
    _require_file(args.ckpt)
    _require_file(args.dataset)
    net, alpha, _ = load_encoder(args.ckpt)
    dataset = load_dataset(args.dataset)
    emb = embed_dataset(net, alpha, dataset)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["traj", "t"] + [f"sp_{i}" for i in range(5)]
                        + [f"sv_{i}" for i in range(5)])
        for j in range(emb.traj_ids.shape[0]):
            writer.writerow([emb.traj_ids[j], emb.ts[j],
                             *(f"{v:.6g}" for v in emb.positions[j]),
                             *(f"{v:.6g}" for v in emb.velocities[j])])
    write_manifest(args.out, "embed", {"alpha": alpha}, {},
                   [args.ckpt, args.dataset], [args.out], started)
    print(f"wrote {emb.traj_ids.shape[0]} rows to {args.out}")
    return EXIT_OK


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_eval(args) -> int:
    started = time.time()
    for p in (args.ckpt, args.train_data, args.test_data):
        _require_file(p)
    net, alpha, _ = load_encoder(args.ckpt)
    train_set = load_dataset(args.train_data)
    test_set = load_dataset(args.test_data)
    os.makedirs(args.out_dir, exist_ok=True)

    emb_train = embed_dataset(net, alpha, train_set)
    emb_test = embed_dataset(net, alpha, test_set)

    feat_names = list(emb_test.feature_names)
    header = (["traj", "t"] + [f"sp_{i}" for i in range(5)]
              + [f"sv_{i}" for i in range(5)] + ["reward"] + feat_names)
    rows = []
    for j in range(emb_test.traj_ids.shape[0]):
        row = [emb_test.traj_ids[j], emb_test.ts[j],
               *(f"{v:.6g}" for v in emb_test.positions[j]),
               *(f"{v:.6g}" for v in emb_test.velocities[j]),
               f"{emb_test.rewards[j]:.6g}"]
        if emb_test.features is not None:
            row += [f"{v:.6g}" for v in emb_test.features[j]]
        rows.append(row)
    _write_csv(os.path.join(args.out_dir, "embeddings.csv"), header, rows)

    components, ratios, projected = pca(emb_test.positions)
    _write_csv(os.path.join(args.out_dir, "pca_ratios.csv"),
               ["component", "explained_variance_ratio"],
               [[i + 1, f"{r:.8g}"] for i, r in enumerate(ratios)])
    _write_csv(os.path.join(args.out_dir, "projection.csv"),
               ["x", "y", "reward"],
               [[f"{projected[j, 0]:.6g}", f"{projected[j, 1]:.6g}",
                 f"{emb_test.rewards[j]:.6g}"]
                for j in range(projected.shape[0])])

    probe_rows = []
    if emb_train.features is not None and emb_test.features is not None:
        mses = probe(emb_train.states, emb_train.features,
                     emb_test.states, emb_test.features,
                     ProbeSpec(seed=args.probe_seed))
        if not np.all(np.isfinite(mses)):
            raise NumericFailure("probe training produced non-finite errors")
        for name, is_vel, mse in zip(feat_names, emb_test.feature_is_velocity,
                                     mses):
            probe_rows.append([name, f"{mse:.8g}", int(is_vel)])
        _write_csv(os.path.join(args.out_dir, "probe_mse.csv"),
                   ["feature", "test_mse", "is_velocity"], probe_rows)

    write_manifest(args.out_dir, "eval", {"alpha": alpha},
                   {"probe_seed": args.probe_seed},
                   [args.ckpt, args.train_data, args.test_data],
                   sorted(os.listdir(args.out_dir)), started)
    print(f"explained variance ratios: {np.round(ratios, 4)}")
    for name, mse, is_vel in probe_rows:
        print(f"probe {name}: mse {mse}")
    return EXIT_OK


def cmd_rl(args) -> int:
    started = time.time()
    camera = args.camera
    if args.ckpt:
        _require_file(args.ckpt)
        net, alpha, _ = load_encoder(args.ckpt)
        encoder = (net, alpha)
        h, w, _ = net.input_shape
    else:
        encoder = None
        h, w = args.height, args.width
    config = RLConfig.for_task(args.task)
    if camera:
        config.camera = camera
    curve = run_learning_curve(args.task, encoder, config, args.epochs,
                               args.trials, base_seed=args.seed,
                               height=h, width=w,
                               log=None if args.quiet else print)
    _write_csv(args.out, ["epoch", "mean", "stderr", "min", "max"],
               [[e + 1, f"{curve.mean[e]:.6g}", f"{curve.stderr[e]:.6g}",
                 f"{curve.min[e]:.6g}", f"{curve.max[e]:.6g}"]
                for e in range(args.epochs)])
    write_manifest(args.out, "rl",
                   {"task": args.task, "camera": config.camera,
                    "trials": args.trials, "epochs": args.epochs,
                    "encoder": args.ckpt or "random"},
                   {"seed": args.seed},
                   [args.ckpt] if args.ckpt else [], [args.out], started)
    print(f"final mean return {curve.mean[-1]:.2f} "
          f"(stderr {curve.stderr[-1]:.2f}); curve in {args.out}")
    return EXIT_OK


def cmd_gradreport(args) -> int:
    _require_file(args.dataset)
    _require_file(args.ckpt)
    net, alpha, _ = load_encoder(args.ckpt)
    file_values = None
    if args.config:
        _require_file(args.config)
        file_values = load_config(args.config)
    config = build_train_config(args.task, file_values, {})
    dataset = load_dataset(args.dataset)
    report = gradient_magnitude_report(dataset, net, config,
                                       alpha=args.alpha)
    for name, norm in report.items():
        print(f"{name:15s} {norm:.6e}")
    if args.out:
        _write_csv(args.out, ["prior", "weighted_grad_norm"],
                   [[name, f"{norm:.8g}"] for name, norm in report.items()])
    return EXIT_OK


def cmd_inspect(args) -> int:
    _require_file(args.path)
    with open(args.path, "rb") as f:
        magic = f.read(4)
    if magic == b"PVED":
        with open(args.path, "rb") as f:
            f.read(4)
            fields = struct.unpack("<9Q", f.read(72))
        names = ["task_id", "camera_mode", "n_traj", "traj_len", "height",
                 "width", "channels", "action_dim", "seed"]
        for name, value in zip(names, fields):
            print(f"{name} = {value}")
    elif magic == b"PVE1":
        params, adam = ckpt_format.load_checkpoint(args.path)
        total = 0
        for name, arr in params.items():
            print(f"{name:20s} shape {arr.shape}")
            total += arr.size
        print(f"total parameters: {total}")
        print(f"optimizer state: {'present' if adam else 'absent'}")
    else:
        raise ValueError(f"{args.path}: unknown magic {magic!r}")
    return EXIT_OK


COMMANDS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "embed": cmd_embed,
    "eval": cmd_eval,
    "rl": cmd_rl,
    "gradreport": cmd_gradreport,
    "inspect": cmd_inspect,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if e.code is not None else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except NumericFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, struct.error) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
