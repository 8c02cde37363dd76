from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict, fields

from ..baselines import BaselineConfig
from ..marl.core import TrainerConfig
from ..radio import CellConfig

ALGORITHMS = ("MAAC", "NAAC", "AC", "QL", "DQN", "SLA", "RANDOM")
SWEEP_AXES = ("none", "num_d2d", "lam")
ACTOR_ALGORITHMS = ("MAAC", "NAAC", "AC")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One reproducible experiment: cell + learner settings, algorithms, seeds, sweep.

    ``warmup_slots`` / ``train_slots`` are the single source of truth for every
    algorithm; the per-learner sections hold only their own hyperparameters.
    """

    cell: CellConfig = field(default_factory=CellConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    algorithms: tuple = ("MAAC",)
    warmup_slots: int = 2000
    train_slots: int = 10000
    eval_slots: int = 2000
    seeds: tuple = (0,)
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    output_dir: str = "runs/default"

    def __post_init__(self):
        self.algorithms = tuple(a.upper() for a in self.algorithms)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.sweep_values = tuple(int(v) for v in self.sweep_values)
        self.validate()

    def validate(self):
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ConfigError(f"algorithms must be a non-empty subset of {ALGORITHMS}, got {bad}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if min(self.warmup_slots, self.train_slots) < 0 or self.eval_slots < 1:
            raise ConfigError("slot counts must be non-negative and eval_slots >= 1")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep_axis must be one of {SWEEP_AXES}")
        if self.sweep_axis != "none" and not self.sweep_values:
            raise ConfigError("sweep_values required when sweeping")
        for point in self.points():
            cell, trainer = self.resolve(point)
            if "NAAC" in self.algorithms and not 0 <= trainer.lam <= cell.num_d2d - 1:
                raise ConfigError(f"lam={trainer.lam} invalid for num_d2d={cell.num_d2d}")

    def points(self) -> list:
        if self.sweep_axis == "none":
            return [None]
        return list(self.sweep_values)

    def resolve(self, point=None):
        """Cell and trainer configs for one sweep point."""
        try:
            cell = self.cell
            trainer_kw = {**self.trainer.to_dict(), "warmup_slots": self.warmup_slots,
                          "train_slots": self.train_slots}
            if self.sweep_axis == "num_d2d":
                cell = cell.replace(num_d2d=point)
            elif self.sweep_axis == "lam":
                trainer_kw["lam"] = point
            return cell, TrainerConfig(**trainer_kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def baseline_config(self) -> BaselineConfig:
        return BaselineConfig(**{**self.baselines.to_dict(), "warmup_slots": self.warmup_slots,
                                 "train_slots": self.train_slots})

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["cell"] = asdict(self.cell)
        d["trainer"] = {k: v for k, v in self.trainer.to_dict().items()
                        if k not in ("warmup_slots", "train_slots")}
        d["baselines"] = {k: v for k, v in self.baselines.to_dict().items()
                          if k not in ("warmup_slots", "train_slots")}
        for k in ("algorithms", "seeds", "sweep_values"):
            d[k] = list(d[k])
        return d

    def config_hash(self) -> str:
        """Hash of everything that affects results (the output directory excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            cell = CellConfig(**d.pop("cell", {}))
            trainer = TrainerConfig(**d.pop("trainer", {}))
            baselines = BaselineConfig(**d.pop("baselines", {}))
            return cls(cell=cell, trainer=trainer, baselines=baselines, **d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
