"""Command-line entry point (``d2dmarl`` / ``python -m d2dmarl``)."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..env import D2DEnv
from ..marl.core import MultiAgentTrainer, execute, write_train_log
from ..marl.prop1 import decay_slope, prop1_estimate
from . import analysis
from .config import ACTOR_ALGORITHMS, ConfigError, ExperimentConfig, load_config
from .runner import EVAL_STREAM, TRAIN_STREAM, resolve_output_dir, run

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2
log = logging.getLogger("d2dmarl")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    if getattr(args, "seeds", None):
        d["seeds"] = args.seeds
    if getattr(args, "algorithm", None):
        d["algorithms"] = args.algorithm
    if getattr(args, "output", None):
        d["output_dir"] = args.output
    return ExperimentConfig.from_dict(d)


def cmd_sweep(args) -> int:
    cfg = _load(args)

    def progress(job, row):
        log.info("%s seed=%s %s", job.tag, job.seed, row["status"])

    _, _, n_failed = run(cfg, jobs=args.jobs, progress=progress)
    out = resolve_output_dir(cfg)
    sys.stdout.write((out / "summary.csv").read_text())
    log.info("results in %s", out)
    if n_failed:
        log.error("%d run(s) failed; see the error column of detail.csv", n_failed)
        return EXIT_RUN
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    alg = cfg.algorithms[0]
    if len(cfg.algorithms) != 1 or alg not in ACTOR_ALGORITHMS:
        raise ConfigError(f"train expects one of {ACTOR_ALGORITHMS}, got {list(cfg.algorithms)}")
    cell, trainer = cfg.resolve(cfg.points()[0])
    trainer = type(trainer)(**{**trainer.to_dict(), "mode": alg})
    seed = cfg.seeds[0]
    out = resolve_output_dir(cfg)
    wdir = out / "weights"
    wdir.mkdir(parents=True, exist_ok=True)
    env = D2DEnv(cell)
    env.reset(seed, TRAIN_STREAM)
    res = MultiAgentTrainer(env, trainer, seed).train()
    for i, blob in enumerate(res.actor_weights):
        (wdir / f"actor_{i}.bin").write_bytes(blob)
    write_train_log(res, out / "train_log.csv", cell.num_d2d)
    tail = res.total_rewards()[-200:]
    print(json.dumps({"weights": str(wdir), "log": str(out / "train_log.csv"),
                      "final_mean_total_reward": float(np.mean(tail))}))
    return EXIT_OK


def cmd_execute(args) -> int:
    cfg = _load(args)
    cell, _ = cfg.resolve(cfg.points()[0])
    files = sorted(Path(args.weights).glob("actor_*.bin"),
                   key=lambda p: int(p.stem.split("_")[1]))
    if len(files) != cell.num_d2d:
        raise ConfigError(f"found {len(files)} actor files in {args.weights}, "
                          f"expected {cell.num_d2d}")
    env = D2DEnv(cell)
    env.reset(cfg.seeds[0], EVAL_STREAM)
    metrics = execute(env, files, args.slots or cfg.eval_slots)
    print(json.dumps(metrics))
    return EXIT_OK


def cmd_compare(args) -> int:
    fields, rows = analysis.compare(args.inputs)
    if args.output:
        analysis.write_rows(rows, fields, args.output)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return EXIT_OK


def cmd_prop1(args) -> int:
    rng = np.random.default_rng(args.seed)
    est = {n: prop1_estimate(n, args.samples, rng) for n in args.agents}
    print("num_agents,estimate,reference")
    for n, p in est.items():
        print(f"{n},{p!r},{0.5 ** n!r}")
    if len(est) > 1 and all(p > 0 for p in est.values()):
        log.info("log2 slope %.4f (reference -1)", decay_slope(est))
    return EXIT_OK


def cmd_reward_curve(args) -> int:
    if args.window < 1:
        raise ConfigError("window must be >= 1")
    rows = analysis.reward_curve(args.log, args.window)
    fields = ["slot", "phase", "total_reward", "smoothed"]
    if args.output:
        analysis.write_rows(rows, fields, args.output)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return EXIT_OK


def cmd_default_config(args) -> int:
    print(json.dumps(ExperimentConfig().to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="d2dmarl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp, many=True):
        sp.add_argument("--config", help="JSON experiment config (defaults if omitted)")
        sp.add_argument("--seeds", type=int, nargs="+", help="override the seed list")
        sp.add_argument("--algorithm", nargs="+" if many else 1, help="override algorithms")
        sp.add_argument("--output", help="output directory (or set D2DMARL_OUTPUT_DIR)")

    sp = sub.add_parser("sweep", help="train + evaluate every algorithm x sweep point x seed")
    run_flags(sp)
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("train", help="train one actor-critic run and save actor weights")
    run_flags(sp, many=False)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("execute", help="evaluate saved actors with decentralised execution")
    run_flags(sp, many=False)
    sp.add_argument("--weights", required=True, help="directory holding actor_<i>.bin")
    sp.add_argument("--slots", type=int, help="evaluation slots (default: config eval_slots)")
    sp.set_defaults(func=cmd_execute)

    sp = sub.add_parser("compare", help="rank algorithms across result CSVs")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("prop1", help="single-sample gradient direction estimate vs 0.5^N")
    sp.add_argument("--agents", type=int, nargs="+", default=[2, 3, 4])
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_prop1)

    sp = sub.add_parser("reward-curve", help="moving-average total reward from a training log")
    sp.add_argument("log")
    sp.add_argument("--window", type=int, default=200)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_reward_curve)

    sp = sub.add_parser("default-config", help="print the default config as JSON")
    sp.set_defaults(func=cmd_default_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, analysis.SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
