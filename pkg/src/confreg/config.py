"""Experiment configuration: dataclasses, JSON (de)serialization, defaults.

A resolved config is the reproducibility root: rerunning from the persisted
config.json reproduces every artifact byte for byte, so nothing
environment-dependent (output paths, timestamps) belongs in it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .data import GenConfig
from .errors import ConfigurationError, UsageError
from .training import TrainSchedule
from .util import read_json

METHODS = ("baseline", "confreg", "poe", "lmixin", "reweight", "selfdistill")

BIAS_BLOCK = "bias_block"
OVERLAP = "overlap"
PARTIAL_INPUT = "partial_input"
BIAS_FEATURES = (BIAS_BLOCK, OVERLAP, PARTIAL_INPUT)


@dataclass(frozen=True)
class DataPaths:
    train: str
    indist_eval: str
    ood_eval: str


@dataclass(frozen=True)
class SweepConfig:
    pool_size: int = 2000
    methods: tuple[str, ...] = ("baseline", "confreg", "poe")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    dataset: GenConfig | DataPaths
    bias_features: str
    hidden: tuple[int, ...]
    activation: str
    teacher_schedule: TrainSchedule
    biased_schedule: TrainSchedule
    main_schedule: TrainSchedule
    seeds: tuple[int, ...]
    mixin_weight: float = 0.03
    sweep: SweepConfig | None = None
    augment_fraction: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.bias_features not in BIAS_FEATURES:
            raise ConfigurationError(
                f"unknown bias-feature kind {self.bias_features!r}, expected one of {BIAS_FEATURES}"
            )
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.mixin_weight < 0:
            raise ConfigurationError(f"mixin weight must be >= 0, got {self.mixin_weight}")
        if self.augment_fraction is not None and not 0.0 <= self.augment_fraction <= 1.0:
            raise UsageError(f"augment fraction must lie in [0, 1], got {self.augment_fraction}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.sweep is not None:
            for m in self.sweep.methods:
                if m not in METHODS:
                    raise UsageError(f"unknown sweep method {m!r}")


# Defaults calibrated on the vector benchmark: signal strong enough that the
# shortcut feature is tempting but not indispensable, schedules long enough
# for the teacher to commit to confident margins.
def default_config(method: str = "confreg", **overrides) -> ExperimentConfig:
    base = dict(
        method=method,
        dataset=GenConfig(),
        bias_features=BIAS_BLOCK,
        hidden=(24,),
        activation="tanh",
        teacher_schedule=TrainSchedule(epochs=60, batch_size=64, learning_rate=0.3, seed=11),
        biased_schedule=TrainSchedule(epochs=12, batch_size=64, learning_rate=0.3, seed=13),
        main_schedule=TrainSchedule(epochs=60, batch_size=64, learning_rate=0.3, seed=17),
        seeds=(0, 1, 2, 3, 4),
        mixin_weight=0.03,
        sweep=SweepConfig(),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def _schedule_to_doc(s: TrainSchedule) -> dict:
    return {"epochs": s.epochs, "batch_size": s.batch_size, "learning_rate": s.learning_rate, "seed": s.seed}


def _schedule_from_doc(doc: dict) -> TrainSchedule:
    try:
        return TrainSchedule(
            epochs=int(doc["epochs"]),
            batch_size=int(doc["batch_size"]),
            learning_rate=float(doc["learning_rate"]),
            seed=int(doc["seed"]),
        )
    except KeyError as exc:
        raise ConfigurationError(f"schedule is missing field {exc}") from exc


def config_to_doc(cfg: ExperimentConfig) -> dict:
    if isinstance(cfg.dataset, GenConfig):
        dataset = {"generator": asdict(cfg.dataset)}
    else:
        dataset = {"paths": asdict(cfg.dataset)}
    doc = {
        "method": cfg.method,
        "dataset": dataset,
        "bias_features": cfg.bias_features,
        "model": {"hidden": list(cfg.hidden), "activation": cfg.activation},
        "schedules": {
            "teacher": _schedule_to_doc(cfg.teacher_schedule),
            "biased": _schedule_to_doc(cfg.biased_schedule),
            "main": _schedule_to_doc(cfg.main_schedule),
        },
        "seeds": list(cfg.seeds),
        "mixin_weight": cfg.mixin_weight,
    }
    if cfg.sweep is not None:
        doc["sweep"] = {"pool_size": cfg.sweep.pool_size, "methods": list(cfg.sweep.methods)}
    if cfg.augment_fraction is not None:
        doc["augment_fraction"] = cfg.augment_fraction
    return doc


def config_from_doc(doc: dict) -> ExperimentConfig:
    try:
        dataset_doc = doc["dataset"]
        if "generator" in dataset_doc:
            dataset = GenConfig(**dataset_doc["generator"])
        elif "paths" in dataset_doc:
            dataset = DataPaths(**dataset_doc["paths"])
        else:
            raise ConfigurationError("dataset must specify either 'generator' or 'paths'")
        sweep = None
        if "sweep" in doc:
            sweep = SweepConfig(
                pool_size=int(doc["sweep"].get("pool_size", 2000)),
                methods=tuple(doc["sweep"].get("methods", ("baseline", "confreg", "poe"))),
            )
        return ExperimentConfig(
            method=str(doc["method"]),
            dataset=dataset,
            bias_features=str(doc["bias_features"]),
            hidden=tuple(doc["model"]["hidden"]),
            activation=str(doc["model"]["activation"]),
            teacher_schedule=_schedule_from_doc(doc["schedules"]["teacher"]),
            biased_schedule=_schedule_from_doc(doc["schedules"]["biased"]),
            main_schedule=_schedule_from_doc(doc["schedules"]["main"]),
            seeds=tuple(doc["seeds"]),
            mixin_weight=float(doc.get("mixin_weight", 0.03)),
            sweep=sweep,
            augment_fraction=(
                float(doc["augment_fraction"]) if doc.get("augment_fraction") is not None else None
            ),
        )
    except KeyError as exc:
        raise ConfigurationError(f"config is missing field {exc}") from exc
    except TypeError as exc:
        raise ConfigurationError(f"bad config value: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    return config_from_doc(read_json(path))


def with_method(cfg: ExperimentConfig, method: str) -> ExperimentConfig:
    return replace(cfg, method=method)
