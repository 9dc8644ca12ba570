"""Command line interface.

Subcommands: ``prep`` (ASF/AMC tree -> window dataset), ``train`` (DQN
agent on the train split), ``eval`` (selector comparison table on a
split), ``reconstruct`` (one window back to AMC from chosen keyframes).

Exit codes: 0 success, 1 usage error, 2 data error (parsing, missing or
inconsistent inputs, bad config), 3 numeric failure (degenerate metrics,
singularities, non-finite gradients, unreachable poses).

The ``MOCAPKEY_CONFIG`` environment variable supplies a default training
config file; an explicit ``--config`` wins.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import agent, baselines, dataset, neural
from .asfamc import export_amc, parse_amc, parse_asf
from .errors import (CheckpointError, DegenerateInterval, DegenerateSequence,
                     EmptyDataset, InvalidKeyframeSet, InvalidW, MalformedAmc,
                     MalformedAsf, MalformedDataset, MeridianSingularity,
                     MocapKeyError, NoValidAction, NonFiniteGradient,
                     PoleSingularity, ShapeMismatch, TooShort, UnreachablePose,
                     ZeroVector)
from .keyframes import KeyframeSet
from .metrics import REPORT_COLUMNS, q_baseline, q_error, root_rmse
from .motion import (CMU_EXCLUDED_JOINTS, PreprocessConfig, filter_joints,
                     forward_kinematics, preprocess)
from .reconstruct import reconstruct_full
from .spherical import sequence_to_spherical, spherical_to_sequence

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_DATA_ERRORS = (MalformedAsf, MalformedAmc, MalformedDataset, TooShort,
                CheckpointError, EmptyDataset, InvalidKeyframeSet, InvalidW,
                ShapeMismatch, OSError, ValueError)
_NUMERIC_ERRORS = (DegenerateSequence, NonFiniteGradient, PoleSingularity,
                   MeridianSingularity, ZeroVector, DegenerateInterval,
                   UnreachablePose, NoValidAction)

METHODS = ("rc", "uc", "greedy", "sidql")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="mocapkey",
                     description="Keyframe extraction and cubic motion "
                                 "reconstruction for ASF/AMC motion capture.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", parents=[], help="build a window dataset from "
                       "an ASF/AMC tree", add_help=True)
    p.add_argument("--asf", required=True,
                   help="skeleton file or directory searched for *.asf")
    p.add_argument("--amc", required=True,
                   help="motion file or directory searched for *.amc")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--fps", type=float, default=30.0, help="target frame rate")
    p.add_argument("--source-fps", type=float, default=120.0,
                   help="capture frame rate of the AMC files")
    p.add_argument("--window", type=int, default=60, help="frames per window")
    p.add_argument("--seed", type=int, default=0, help="split assignment seed")
    p.add_argument("--exclude", default=",".join(CMU_EXCLUDED_JOINTS),
                   help="comma-separated joints to drop (default: distal "
                        "hand and toe segments)")

    p = sub.add_parser("train", help="train the keyframe agent")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--config", default=None, help="training config JSON")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--episodes", type=int, default=None,
                   help="override the configured episode count")
    p.add_argument("--keyframes", type=int, default=None,
                   help="override the configured keyframe budget")
    p.add_argument("--seed", type=int, default=None,
                   help="override the configured seed")

    p = sub.add_parser("eval", help="compare selectors on a dataset split")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", default=None, help="checkpoint for sidql")
    p.add_argument("--methods", default="rc,uc,greedy,sidql",
                   help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--k", default="5,10,15",
                   help="comma-separated keyframe budgets")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--seed", type=int, default=0, help="seed for the random selector")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for evaluation")

    p = sub.add_parser("reconstruct", help="rebuild one window as AMC")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seq", required=True, help="window id, e.g. w00003")
    p.add_argument("--keyframes", default=None,
                   help="explicit comma-separated frame indices")
    p.add_argument("--method", default=None, choices=METHODS,
                   help="selector to choose keyframes")
    p.add_argument("--k", type=int, default=None,
                   help="keyframe budget for --method")
    p.add_argument("--model", default=None, help="checkpoint for sidql")
    p.add_argument("--seed", type=int, default=0, help="seed for the random selector")
    p.add_argument("--out", required=True, help="AMC output path")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = {
        "prep": cmd_prep,
        "train": cmd_train,
        "eval": cmd_eval,
        "reconstruct": cmd_reconstruct,
    }[args.command]
    try:
        return handler(args)
    except _NUMERIC_ERRORS as exc:
        print(f"mocapkey {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"mocapkey {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MocapKeyError as exc:
        print(f"mocapkey {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


# ---------------------------------------------------------------------------
# prep
# ---------------------------------------------------------------------------

def _find_skeleton(amc_path: Path, asf_by_stem: dict[str, Path]) -> Path | None:
    stem = amc_path.stem
    subject = stem.split("_")[0]
    if subject in asf_by_stem:
        return asf_by_stem[subject]
    if stem in asf_by_stem:
        return asf_by_stem[stem]
    if len(asf_by_stem) == 1:
        return next(iter(asf_by_stem.values()))
    return None


def cmd_prep(args) -> int:
    asf_root = Path(args.asf)
    amc_root = Path(args.amc)
    asf_files = [asf_root] if asf_root.is_file() else sorted(asf_root.rglob("*.asf"))
    amc_files = [amc_root] if amc_root.is_file() else sorted(amc_root.rglob("*.amc"))
    if not asf_files or not amc_files:
        print("prep: no ASF/AMC files found under the given paths", file=sys.stderr)
        return EXIT_DATA
    asf_by_stem = {p.stem: p for p in asf_files}
    excluded = tuple(t for t in args.exclude.split(",") if t)
    cfg = PreprocessConfig(source_fps=args.source_fps, target_fps=args.fps,
                           window_len=args.window, excluded_joints=excluded)

    per_source: dict[str, list] = {}
    failures = 0
    for amc_path in amc_files:
        source = (amc_path.name if amc_root.is_file()
                  else amc_path.relative_to(amc_root).as_posix())
        asf_path = _find_skeleton(amc_path, asf_by_stem)
        if asf_path is None:
            print(f"prep: warning: no skeleton for {source}, skipped", file=sys.stderr)
            failures += 1
            continue
        try:
            with open(asf_path, "r", encoding="utf-8", errors="replace") as fh:
                skeleton = parse_asf(fh)
            with open(amc_path, "r", encoding="utf-8", errors="replace") as fh:
                raw = parse_amc(fh, skeleton)
            seq = forward_kinematics(skeleton, raw, dt=1.0 / args.source_fps,
                                     source=source)
            windows = preprocess(seq, cfg)
            present = tuple(n for n in excluded if n in {j.name for j in skeleton.joints})
            sub_skeleton = filter_joints(skeleton, present)
        except (MocapKeyError, OSError, ValueError) as exc:
            print(f"prep: warning: {source}: {exc}", file=sys.stderr)
            failures += 1
            continue
        stride = cfg.stride
        per_source[source] = [
            (sub_skeleton, win, i * args.window * stride)
            for i, win in enumerate(windows)
        ]

    if not per_source:
        print("prep: no usable sources", file=sys.stderr)
        return EXIT_DATA
    manifest = dataset.write_dataset(
        args.out, per_source,
        preprocessing={
            "source_fps": args.source_fps,
            "target_fps": args.fps,
            "window_len": args.window,
            "excluded_joints": list(excluded),
            "velocity_scheme": "central",
        },
        seed=args.seed)
    windows = manifest["windows"]
    n_train = sum(1 for wdw in windows if wdw["split"] == "train")
    print(f"prep: {len(per_source)} sources ({failures} skipped), "
          f"{len(windows)} windows ({n_train} train, "
          f"{len(windows) - n_train} test)")
    print(f"prep: manifest digest {dataset.manifest_digest(manifest)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_config(args) -> agent.TrainConfig:
    path = args.config or os.environ.get("MOCAPKEY_CONFIG")
    cfg = agent.TrainConfig.from_file(path) if path else agent.TrainConfig()
    overrides = {}
    if getattr(args, "episodes", None) is not None:
        overrides["episodes"] = args.episodes
    if getattr(args, "keyframes", None) is not None:
        overrides["keyframe_count"] = args.keyframes
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = agent.TrainConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def cmd_train(args) -> int:
    cfg = _load_config(args)
    records = dataset.load_dataset(args.data, split="train")
    if not records:
        raise EmptyDataset(f"{args.data}: no training windows")
    manifest = dataset.load_manifest(args.data)
    windows = [sequence_to_spherical(rec.seq) for rec in records]
    initial = None
    if args.resume:
        initial, _ = agent.load_agent(args.resume)

    started = time.perf_counter()
    last_print = [started]

    def progress(done, total):
        now = time.perf_counter()
        if now - last_print[0] >= 30.0 or done == total:
            print(f"train: episode {done}/{total} "
                  f"({now - started:.0f}s elapsed)")
            last_print[0] = now

    result = agent.train(windows, cfg, initial=initial, progress=progress)
    agent.save_agent(args.out, result, cfg)
    log_path = str(args.out) + ".log.csv"
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("global_step", "episode", "loss", "episode_reward",
                         "eval_q", "epsilon"))
        for row in result.log:
            writer.writerow((
                row.global_step, row.episode,
                "" if row.loss is None else f"{row.loss:.12g}",
                "" if row.episode_reward is None else f"{row.episode_reward:.12g}",
                "" if row.eval_q is None else f"{row.eval_q:.12g}",
                f"{row.epsilon:.6g}",
            ))
    losses = [row.loss for row in result.log if row.loss is not None]
    if losses:
        print(f"train: {result.episodes_done} episodes total, "
              f"{result.updates} updates, {len(windows)} windows, "
              f"last loss {losses[-1]:.6g}")
    else:
        print(f"train: {result.episodes_done} episodes total, no updates ran")
    if result.best_eval_q is not None:
        print(f"train: kept the episode {result.best_episode} policy "
              f"(mean remaining error share {result.best_eval_q:.4f} "
              f"on {len(result.eval_indices)} training windows)")
    print(f"train: config digest {cfg.digest()}")
    print(f"train: dataset digest {dataset.manifest_digest(manifest)}")
    print(f"train: checkpoint {args.out} (log {log_path})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _run_selector(method: str, sph, w: int, net, seed: int):
    """Returns (keyframes, selection seconds) for one window and method."""
    if method == "rc":
        t0 = time.perf_counter()
        keys = baselines.select_random(sph.frame_count, w, seed)
        return keys, time.perf_counter() - t0
    if method == "uc":
        t0 = time.perf_counter()
        keys = baselines.select_uniform(sph.frame_count, w)
        return keys, time.perf_counter() - t0
    if method == "greedy":
        t0 = time.perf_counter()
        keys = baselines.select_greedy(sph, w)
        return keys, time.perf_counter() - t0
    if method == "sidql":
        return agent.infer_keyframes(net, sph, w)
    raise ValueError(f"unknown method '{method}'")


def _eval_window(payload):
    """Rows for one window across all methods and budgets (worker-safe)."""
    window_id, sph, methods, ks, net, seed = payload
    try:
        q_baseline(sph)
    except DegenerateSequence:
        return window_id, None
    rows = []
    for w in ks:
        for method in methods:
            keys, seconds = _run_selector(method, sph, w, net, seed)
            recon = reconstruct_full(sph, keys)
            rows.append({
                "sequence": window_id,
                "keyframes": w,
                "method": method,
                "q_error": q_error(sph, keys),
                "root_rmse": root_rmse(sph, recon),
                "decision_time_s": seconds,
            })
    return window_id, rows


def cmd_eval(args) -> int:
    methods = tuple(t for t in args.methods.split(",") if t)
    for m in methods:
        if m not in METHODS:
            print(f"eval: unknown method '{m}'", file=sys.stderr)
            return EXIT_USAGE
    try:
        ks = tuple(int(t) for t in args.k.split(",") if t)
    except ValueError:
        print(f"eval: bad --k value '{args.k}'", file=sys.stderr)
        return EXIT_USAGE
    if not methods or not ks:
        print("eval: need at least one method and one keyframe budget",
              file=sys.stderr)
        return EXIT_USAGE
    net = None
    model_digest = None
    if "sidql" in methods:
        if not args.model:
            print("eval: sidql requires --model", file=sys.stderr)
            return EXIT_USAGE
        state, model_cfg = agent.load_agent(args.model)
        net = state.net
        model_digest = model_cfg.digest()

    records = dataset.load_dataset(args.data, split=args.split)
    if not records:
        raise EmptyDataset(f"{args.data}: no '{args.split}' windows")
    manifest = dataset.load_manifest(args.data)
    payloads = [
        (rec.window_id, sequence_to_spherical(rec.seq), methods, ks, net,
         args.seed + i)
        for i, rec in enumerate(sorted(records, key=lambda r: r.window_id))
    ]

    results = []
    if args.jobs > 1:
        import concurrent.futures as futures
        with futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_eval_window, payloads))
    else:
        results = [_eval_window(p) for p in payloads]

    rows = []
    degenerate = 0
    for _, window_rows in results:
        if window_rows is None:
            degenerate += 1
        else:
            rows.extend(window_rows)
    if not rows:
        raise DegenerateSequence("every evaluated window is degenerate")
    rows.sort(key=lambda r: (r["sequence"], r["keyframes"], r["method"]))

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({
                **row,
                "q_error": f"{row['q_error']:.12g}",
                "root_rmse": f"{row['root_rmse']:.12g}",
                "decision_time_s": f"{row['decision_time_s']:.6g}",
            })

    summary = _summarize(rows, methods, ks)
    report = {
        "split": args.split,
        "windows": len(records) - degenerate,
        "degenerate_skipped": degenerate,
        "seed": args.seed,
        "model_config_digest": model_digest,
        "dataset_digest": dataset.manifest_digest(manifest),
        "table": summary,
    }
    summary_path = str(args.out) + ".summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"eval: {len(records) - degenerate} windows "
          f"({degenerate} degenerate skipped), split '{args.split}'")
    header = "method  " + "".join(f"  W={w:<10d}" for w in ks)
    print(header)
    for method in methods:
        cells = "".join(f"  {summary[method][str(w)]['mean_q']:<12.4f}" for w in ks)
        print(f"{method:<8s}{cells}")
    print(f"eval: report {args.out} (summary {summary_path})")
    return EXIT_OK


def _summarize(rows, methods, ks) -> dict:
    out: dict = {}
    for method in methods:
        out[method] = {}
        for w in ks:
            cell = [r for r in rows if r["method"] == method and r["keyframes"] == w]
            out[method][str(w)] = {
                "mean_q": float(np.mean([r["q_error"] for r in cell])),
                "mean_root_rmse": float(np.mean([r["root_rmse"] for r in cell])),
                "mean_decision_time_s": float(np.mean([r["decision_time_s"]
                                                       for r in cell])),
                "count": len(cell),
            }
    return out


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------

def cmd_reconstruct(args) -> int:
    records = dataset.load_dataset(args.data)
    by_id = {rec.window_id: rec for rec in records}
    rec = by_id.get(args.seq)
    if rec is None:
        print(f"reconstruct: window '{args.seq}' not in dataset "
              f"({len(by_id)} windows)", file=sys.stderr)
        return EXIT_DATA
    sph = sequence_to_spherical(rec.seq)
    if args.keyframes:
        try:
            indices = [int(t) for t in args.keyframes.split(",") if t]
        except ValueError:
            print(f"reconstruct: bad --keyframes '{args.keyframes}'",
                  file=sys.stderr)
            return EXIT_USAGE
        keys = KeyframeSet.from_indices(indices, sph.frame_count)
    elif args.method:
        if args.k is None:
            print("reconstruct: --method requires --k", file=sys.stderr)
            return EXIT_USAGE
        net = None
        if args.method == "sidql":
            if not args.model:
                print("reconstruct: sidql requires --model", file=sys.stderr)
                return EXIT_USAGE
            state, _ = agent.load_agent(args.model)
            net = state.net
        keys, _ = _run_selector(args.method, sph, args.k, net, args.seed)
    else:
        print("reconstruct: need --keyframes or --method", file=sys.stderr)
        return EXIT_USAGE

    recon = reconstruct_full(sph, keys)
    rec_seq = spherical_to_sequence(recon)
    positions_by_name = {
        name: rec_seq.positions[:, j]
        for j, name in enumerate(rec_seq.joint_names)
    }
    text = export_amc(
        rec.skeleton, positions_by_name, rec_seq.root_positions,
        tolerance=None,
        comment=(f"window {rec.window_id} ({rec.source}) rebuilt from "
                 f"keyframes {','.join(str(i) for i in keys.indices)}"))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"reconstruct: {rec.window_id} -> {args.out} "
          f"(keyframes {list(keys.indices)}, "
          f"mean angle error {q_error(sph, keys):.6g})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
