"""Sweep execution: one job per (algorithm, sweep point, seed), merged by a single writer."""

from __future__ import annotations

import csv
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import baselines as bl
from ..env import D2DEnv
from ..marl.core import MultiAgentTrainer, TrainerConfig, TrainingFault, execute, write_train_log
from ..metrics import METRIC_FIELDS
from ..radio import CellConfig
from .config import ACTOR_ALGORITHMS, ExperimentConfig, dump_config

SCHEMA_VERSION = 1
TRAIN_STREAM = 0
EVAL_STREAM = 1

KEY_FIELDS = ["algorithm", "num_d2d", "lam", "sweep_axis", "sweep_value"]
DETAIL_FIELDS = (["schema_version", "config_hash"] + KEY_FIELDS
                 + ["seed", "status"] + list(METRIC_FIELDS) + ["error"])
SUMMARY_FIELDS = (["schema_version", "config_hash"] + KEY_FIELDS
                  + ["n_seeds", "n_failed"] + list(METRIC_FIELDS))

OUTPUT_ENV_VAR = "D2DMARL_OUTPUT_DIR"


@dataclass(frozen=True)
class Job:
    algorithm: str
    cell: CellConfig
    trainer: TrainerConfig
    baselines: bl.BaselineConfig
    seed: int
    eval_slots: int
    tag: str
    out_dir: str

    @property
    def lam(self):
        return effective_lam(self.algorithm, self.trainer, self.cell.num_d2d)


def effective_lam(algorithm: str, trainer: TrainerConfig, num_d2d: int):
    """Neighbour count the algorithm's critic sees ("" where no critic exists)."""
    if algorithm in ACTOR_ALGORITHMS:
        return TrainerConfig(**{**trainer.to_dict(), "mode": algorithm}).neighbor_count(num_d2d)
    return ""


def resolve_output_dir(cfg: ExperimentConfig, override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV_VAR) or cfg.output_dir)


def _job_tag(algorithm, cell, lam, seed) -> str:
    lam_part = f"_lam{lam}" if lam != "" else ""
    return f"{algorithm}_N{cell.num_d2d}{lam_part}_s{seed}"


def plan_jobs(cfg: ExperimentConfig, out_dir) -> tuple:
    """Return ``(jobs, layout)``.

    ``layout`` lists, in output order, ``(job_index, point)`` pairs. In a lambda sweep
    every algorithm except NAAC is lambda-independent; it runs once per seed and
    its row is repeated at each lambda value.
    """
    jobs, layout, seen = [], [], {}
    bcfg = cfg.baseline_config()
    for point in cfg.points():
        cell, trainer = cfg.resolve(point)
        for alg in cfg.algorithms:
            for seed in cfg.seeds:
                lam = effective_lam(alg, trainer, cell.num_d2d)
                key = (alg, cell.num_d2d, lam, seed)
                if key not in seen:
                    seen[key] = len(jobs)
                    jobs.append(Job(alg, cell, TrainerConfig(**{**trainer.to_dict(), "mode": alg})
                                    if alg in ACTOR_ALGORITHMS else trainer,
                                    bcfg, seed, cfg.eval_slots,
                                    _job_tag(alg, cell, lam, seed), str(out_dir)))
                layout.append((seen[key], point))
    return jobs, layout


def train_job(job: Job, env: D2DEnv):
    """Train on the training fading stream. Returns ``(policy_or_weights, log_rows)``."""
    env.reset(job.seed, TRAIN_STREAM)
    alg = job.algorithm
    if alg in ACTOR_ALGORITHMS:
        res = MultiAgentTrainer(env, job.trainer, job.seed).train()
        return res.actor_weights, res.log
    if alg == "QL":
        return bl.q_learning_agent(env, job.baselines, job.seed)
    if alg == "DQN":
        return bl.dqn_agent(env, job.baselines, job.seed)
    if alg == "SLA":
        return bl.sla_agent(env, job.baselines, job.seed)
    if alg == "RANDOM":
        return bl.RandomPolicy(env.num_agents, env.num_actions), []
    raise ValueError(f"unknown algorithm {alg}")


def evaluate_job(job: Job, env: D2DEnv, trained) -> dict:
    """Frozen-policy evaluation on a distinct fading stream over the same topology."""
    env.reset(job.seed, EVAL_STREAM)
    if job.algorithm in ACTOR_ALGORITHMS:
        return execute(env, trained, job.eval_slots)
    return bl.evaluate_baseline(env, trained, job.eval_slots, job.seed)


def run_job(job: Job) -> dict:
    """Train + evaluate one job, write its log and weights. Never raises."""
    row = {"algorithm": job.algorithm, "num_d2d": job.cell.num_d2d, "lam": job.lam,
           "seed": job.seed, "status": "ok", "error": ""}
    out = Path(job.out_dir)
    try:
        env = D2DEnv(job.cell)
        trained, log = train_job(job, env)
        if log:
            write_train_log(log, out / "logs" / f"{job.tag}.csv", job.cell.num_d2d)
        if job.algorithm in ACTOR_ALGORITHMS:
            wdir = out / "weights" / job.tag
            wdir.mkdir(parents=True, exist_ok=True)
            for i, blob in enumerate(trained):
                (wdir / f"actor_{i}.bin").write_bytes(blob)
        row.update(evaluate_job(job, env, trained))
    except TrainingFault as exc:
        row.update(status="failed", error=f"TrainingFault: {exc}")
    except Exception as exc:  # a failed run must not take the sweep down
        last = traceback.format_exception_only(type(exc), exc)[-1].strip()
        row.update(status="failed", error=last)
    return row


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return v


def write_csv(rows, path, fieldnames) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in fieldnames})


def summarize(detail_rows) -> list:
    """Seed-averaged rows, one per (algorithm, N, lambda, sweep point), in first-seen order."""
    groups = {}
    for r in detail_rows:
        groups.setdefault(tuple(r[k] for k in KEY_FIELDS), []).append(r)
    out = []
    for key, rows in groups.items():
        ok = [r for r in rows if r["status"] == "ok"]
        s = dict(zip(KEY_FIELDS, key))
        s["schema_version"] = rows[0]["schema_version"]
        s["config_hash"] = rows[0]["config_hash"]
        s["n_seeds"] = len(ok)
        s["n_failed"] = len(rows) - len(ok)
        for m in METRIC_FIELDS:
            s[m] = float(np.mean([float(r[m]) for r in ok])) if ok else float("nan")
        if ok:
            s["slots"] = int(ok[0]["slots"])
        out.append(s)
    return out


def run(cfg: ExperimentConfig, output_dir=None, jobs: int = 1, progress=None) -> tuple:
    """Execute every job and write ``detail.csv``, ``summary.csv`` and ``config.json``.

    Returns ``(detail_rows, summary_rows, n_failed)``.
    """
    out = resolve_output_dir(cfg, output_dir)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    (out / "weights").mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.json")
    job_list, layout = plan_jobs(cfg, out)

    if jobs > 1 and len(job_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_job, job_list))
    else:
        results = []
        for j in job_list:
            results.append(run_job(j))
            if progress:
                progress(j, results[-1])

    chash = cfg.config_hash()
    detail = []
    for idx, point in layout:
        r = dict(results[idx])
        r.update(schema_version=SCHEMA_VERSION, config_hash=chash, sweep_axis=cfg.sweep_axis,
                 sweep_value="" if point is None else point)
        detail.append(r)
    summary = summarize(detail)
    write_csv(detail, out / "detail.csv", DETAIL_FIELDS)
    write_csv(summary, out / "summary.csv", SUMMARY_FIELDS)
    n_failed = sum(r["status"] != "ok" for r in results)
    return detail, summary, n_failed
