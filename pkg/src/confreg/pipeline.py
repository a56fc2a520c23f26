"""Per-seed execution of every training method plus multi-seed aggregation.

A run directory is laid out as:

    out_dir/
      config.json          resolved experiment config (reproducibility root)
      INCOMPLETE           marker, present only while running or after failure
      seed_<s>/
        biased_outputs.jsonl  soft_targets.jsonl (when the method uses them)
        biased.json teacher.json main.json gate.json (checkpoints)
        metrics.json reliability.csv bias_hist.csv history.json
      summary.json         per-seed values plus mean/std aggregates
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from . import baselines, debias, losses, metrics
from .config import (
    BIAS_BLOCK,
    OVERLAP,
    PARTIAL_INPUT,
    DataPaths,
    ExperimentConfig,
    config_to_doc,
)
from .data import ALIGNED, BIAS_FREE, TEXTPAIR, VECTOR, Dataset, GenConfig, augment, gen_extra_pool, gen_synthetic, read_dataset
from .errors import ConfigurationError, StageError
from .features import DEFAULT_EMBED_DIM, EmbeddingTable, TokenPair, build_vocab, max_pool_embedding, overlap_features
from .model import Layout, forward, init_model, save_model, softmax
from .training import TrainSchedule, train
from .util import atomic_write_text, derive_seed, write_json

SPLITS = ("train", "indist_eval", "ood_eval")
INCOMPLETE_MARKER = "INCOMPLETE"
EMBED_SEED = 99


@dataclass
class SplitArrays:
    ids: list[str]
    labels: np.ndarray
    subsets: list[str]
    main_x: np.ndarray
    bias_x: np.ndarray


def _stage(name: str):
    """Decorator that tags any failure with the stage name."""

    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, str(exc)) from exc

        inner.__name__ = fn.__name__
        return inner

    return wrap


# ---------------------------------------------------------------------------
# Data and features
# ---------------------------------------------------------------------------


@_stage("load-data")
def load_splits(cfg: ExperimentConfig, run_seed: int) -> dict[str, Dataset]:
    if isinstance(cfg.dataset, GenConfig):
        data_cfg = replace(cfg.dataset, seed=derive_seed(cfg.dataset.seed, run_seed, "data"))
        splits = gen_synthetic(data_cfg)
    else:
        paths: DataPaths = cfg.dataset
        splits = {
            "train": read_dataset(paths.train),
            "indist_eval": read_dataset(paths.indist_eval),
            "ood_eval": read_dataset(paths.ood_eval),
        }
        k = splits["train"].num_classes
        for name in SPLITS:
            splits[name] = Dataset(splits[name].examples, num_classes=k, mode=splits[name].mode)
    if cfg.augment_fraction is not None:
        if cfg.sweep is None:
            raise ConfigurationError("augment_fraction requires a sweep pool in the config")
        base = cfg.dataset if isinstance(cfg.dataset, GenConfig) else GenConfig(num_classes=splits["train"].num_classes)
        pool = gen_extra_pool(base, cfg.sweep.pool_size, derive_seed(base.seed, run_seed, "extra-pool"))
        splits["train"] = augment(
            splits["train"], pool, cfg.augment_fraction, derive_seed(base.seed, run_seed, "augment", cfg.augment_fraction)
        )
    return splits


def _encode_textpair_main(dataset: Dataset, table: EmbeddingTable) -> np.ndarray:
    rows = []
    for e in dataset.examples:
        prem = max_pool_embedding(e.premise, table, table.dim)
        hyp = max_pool_embedding(e.hypothesis, table, table.dim)
        rows.append(np.concatenate([prem, hyp]))
    return np.stack(rows)


@_stage("featurize")
def featurize(cfg: ExperimentConfig, splits: dict[str, Dataset]) -> dict[str, SplitArrays]:
    mode = splits["train"].mode
    if cfg.bias_features == BIAS_BLOCK and mode != VECTOR:
        raise ConfigurationError("bias_block features require a vector dataset")
    if cfg.bias_features in (OVERLAP, PARTIAL_INPUT) and mode != TEXTPAIR:
        raise ConfigurationError(f"{cfg.bias_features} features require a textpair dataset")

    k = splits["train"].num_classes
    table = EmbeddingTable(DEFAULT_EMBED_DIM, EMBED_SEED)
    vocab = None
    if cfg.bias_features == PARTIAL_INPUT:
        vocab = build_vocab(e.hypothesis for e in splits["train"].examples)

    out = {}
    for name in SPLITS:
        ds = splits[name]
        if mode == VECTOR:
            x = ds.feature_matrix()
            main_x = x
            bias_x = x[:, -k:]
        else:
            main_x = _encode_textpair_main(ds, table)
            if cfg.bias_features == OVERLAP:
                bias_x = np.stack(
                    [
                        overlap_features(TokenPair(e.premise, e.hypothesis), table).as_vector()
                        for e in ds.examples
                    ]
                )
            else:
                bias_x = np.stack(
                    [max_pool_embedding(e.hypothesis, table, table.dim, vocab) for e in ds.examples]
                )
        out[name] = SplitArrays(
            ids=ds.ids(), labels=ds.labels(), subsets=ds.subsets(), main_x=main_x, bias_x=bias_x
        )
    return out


def _biased_layout(cfg: ExperimentConfig, feats: dict[str, SplitArrays], k: int) -> Layout:
    dim = feats["train"].bias_x.shape[1]
    if cfg.bias_features == BIAS_BLOCK:
        return Layout((dim, k), cfg.activation)  # plain linear map on the one-hot block
    return Layout((dim, 8, k), cfg.activation)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


@_stage("train-biased")
def train_biased(cfg, feats, k, run_seed, seed_dir):
    layout = _biased_layout(cfg, feats, k)
    model = init_model(layout, derive_seed(cfg.biased_schedule.seed, run_seed, "biased-init"))
    sched = replace(cfg.biased_schedule, seed=derive_seed(cfg.biased_schedule.seed, run_seed, "biased-shuffle"))
    result = train(
        model,
        feats["train"].bias_x,
        feats["train"].labels,
        losses.LossSpec(kind=losses.HARD_CE),
        sched,
        eval_inputs=feats["indist_eval"].bias_x,
        eval_gold=feats["indist_eval"].labels,
    )
    dists = softmax(forward(model, feats["train"].bias_x))
    lines = [
        json.dumps({"id": feats["train"].ids[i], "dist": [float(v) for v in dists[i]]})
        for i in range(len(feats["train"].ids))
    ]
    atomic_write_text(os.path.join(seed_dir, "biased_outputs.jsonl"), "\n".join(lines) + "\n")
    save_model(model, os.path.join(seed_dir, "biased.json"))
    return model, dists, result.history


@_stage("train-teacher")
def train_teacher(cfg, feats, k, run_seed, seed_dir):
    layout = Layout((feats["train"].main_x.shape[1], *cfg.hidden, k), cfg.activation)
    model = init_model(layout, derive_seed(cfg.teacher_schedule.seed, run_seed, "teacher-init"))
    sched = replace(cfg.teacher_schedule, seed=derive_seed(cfg.teacher_schedule.seed, run_seed, "teacher-shuffle"))
    result = train(
        model,
        feats["train"].main_x,
        feats["train"].labels,
        losses.LossSpec(kind=losses.HARD_CE),
        sched,
        eval_inputs=feats["indist_eval"].main_x,
        eval_gold=feats["indist_eval"].labels,
    )
    save_model(model, os.path.join(seed_dir, "teacher.json"))
    return model, result.history


@_stage("soft-targets")
def build_soft_targets(method, teacher, feats, biased_dists, seed_dir):
    tr = feats["train"]
    teacher_dists = softmax(forward(teacher, tr.main_x))
    if method == "selfdistill":
        targets = baselines.self_distill_targets(tr.ids, tr.labels, teacher_dists)
        debias.write_soft_targets(os.path.join(seed_dir, "soft_targets.jsonl"), targets)
    else:
        by_id = {tr.ids[i]: biased_dists[i] for i in range(len(tr.ids))}
        targets = debias.make_soft_targets(
            teacher, tr.main_x, tr.ids, tr.labels, by_id, os.path.join(seed_dir, "soft_targets.jsonl")
        )
    return targets


@_stage("train-main")
def train_main(cfg, feats, k, spec, run_seed, seed_dir):
    layout = Layout((feats["train"].main_x.shape[1], *cfg.hidden, k), cfg.activation)
    model = init_model(layout, derive_seed(cfg.main_schedule.seed, run_seed, "main-init"))
    sched = replace(cfg.main_schedule, seed=derive_seed(cfg.main_schedule.seed, run_seed, "main-shuffle"))
    result = train(
        model,
        feats["train"].main_x,
        feats["train"].labels,
        spec,
        sched,
        eval_inputs=feats["indist_eval"].main_x,
        eval_gold=feats["indist_eval"].labels,
    )
    save_model(model, os.path.join(seed_dir, "main.json"))
    if result.gate is not None:
        write_json(
            os.path.join(seed_dir, "gate.json"),
            {"u": [float(v) for v in result.gate.u], "c": result.gate.c},
        )
    return model, result


@_stage("evaluate")
def evaluate(main_model, feats, biased_dists, seed_dir, run_seed):
    split_metrics = {}
    records_by_split = {}
    for name in SPLITS:
        arrays = feats[name]
        probs = softmax(forward(main_model, arrays.main_x))
        records = metrics.records_from_probs(arrays.ids, probs, arrays.labels, arrays.subsets)
        records_by_split[name] = records
        by_subset = {"overall": metrics.accuracy(records)}
        for tag in sorted({r.subset for r in records}):
            by_subset[tag] = metrics.accuracy(records, tag)
        split_metrics[name] = {
            "accuracy": by_subset,
            "ece": metrics.ece(records),
            "n": len(records),
        }

    tr = feats["train"]
    betas = biased_dists[np.arange(len(tr.ids)), tr.labels]
    hist = metrics.bias_weight_histogram(betas)
    biased_pred = np.argmax(biased_dists, axis=1)
    biased_train_acc = float(np.mean(biased_pred == tr.labels))

    doc = {
        "seed": run_seed,
        "splits": split_metrics,
        "bias": {
            "biased_train_accuracy": biased_train_acc,
            "beta_high_fraction": hist.fraction_high,
        },
    }
    write_json(os.path.join(seed_dir, "metrics.json"), doc)
    metrics.write_reliability_csv(
        metrics.reliability_histogram(records_by_split["indist_eval"]),
        os.path.join(seed_dir, "reliability.csv"),
    )
    metrics.write_bias_histogram_csv(hist, os.path.join(seed_dir, "bias_hist.csv"))
    return doc


# ---------------------------------------------------------------------------
# Method dispatch
# ---------------------------------------------------------------------------


def run_seed(cfg: ExperimentConfig, run_seed: int, seed_dir: str) -> dict:
    """Execute the configured method for one seed; returns the metrics doc."""
    os.makedirs(seed_dir, exist_ok=True)
    splits = load_splits(cfg, run_seed)
    k = splits["train"].num_classes
    feats = featurize(cfg, splits)

    biased_model, biased_dists, biased_history = train_biased(cfg, feats, k, run_seed, seed_dir)

    history = {"biased": biased_history}
    teacher = None
    targets = None
    if cfg.method in ("confreg", "selfdistill", "reweight"):
        teacher, teacher_history = train_teacher(cfg, feats, k, run_seed, seed_dir)
        history["teacher"] = teacher_history
        targets = build_soft_targets(cfg.method, teacher, feats, biased_dists, seed_dir)

    if cfg.method == "baseline":
        spec = losses.LossSpec(kind=losses.HARD_CE)
    elif cfg.method in ("confreg", "selfdistill"):
        spec = losses.LossSpec(
            kind=losses.SOFT_CE, soft_targets=np.array([t.target for t in targets])
        )
    elif cfg.method == "reweight":
        gold = feats["train"].labels
        scaled_gold = np.array([t.target[gold[i]] for i, t in enumerate(targets)])
        spec = losses.LossSpec(kind=losses.REWEIGHT_BATCH, reweight_gold_probs=scaled_gold)
    elif cfg.method == "poe":
        spec = losses.LossSpec(kind=losses.POE, biased_dists=biased_dists)
    elif cfg.method == "lmixin":
        spec = losses.LossSpec(
            kind=losses.LEARNED_MIXIN, biased_dists=biased_dists, mixin_weight=cfg.mixin_weight
        )
    else:  # pragma: no cover - guarded by config validation
        raise ConfigurationError(f"unknown method {cfg.method!r}")

    main_model, main_result = train_main(cfg, feats, k, spec, run_seed, seed_dir)
    history["main"] = main_result.history
    history["best_epochs"] = {"main": main_result.best_epoch}
    write_json(os.path.join(seed_dir, "history.json"), history)

    return evaluate(main_model, feats, biased_dists, seed_dir, run_seed)


# ---------------------------------------------------------------------------
# Multi-seed experiment
# ---------------------------------------------------------------------------


def _agg(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "per_seed": [float(v) for v in values]}


def _subset_agg(per_seed_docs: list[dict], split: str) -> dict:
    tags = sorted(
        {tag for doc in per_seed_docs for tag in doc["splits"][split]["accuracy"] if tag != "overall"}
    )
    out = {}
    for tag in tags:
        vals = [doc["splits"][split]["accuracy"].get(tag) for doc in per_seed_docs]
        if all(v is not None for v in vals):
            out[tag] = _agg(vals)
    return out


def summarize_runs(cfg: ExperimentConfig, per_seed_docs: list[dict], num_classes: int) -> dict:
    return {
        "method": cfg.method,
        "num_classes": num_classes,
        "seeds": list(cfg.seeds),
        "train_acc": _agg([d["splits"]["train"]["accuracy"]["overall"] for d in per_seed_docs]),
        "indist_acc": _agg([d["splits"]["indist_eval"]["accuracy"]["overall"] for d in per_seed_docs]),
        "ood_acc": _agg([d["splits"]["ood_eval"]["accuracy"]["overall"] for d in per_seed_docs]),
        "ece": _agg([d["splits"]["indist_eval"]["ece"] for d in per_seed_docs]),
        "ood_ece": _agg([d["splits"]["ood_eval"]["ece"] for d in per_seed_docs]),
        "indist_acc_by_subset": _subset_agg(per_seed_docs, "indist_eval"),
        "ood_acc_by_subset": _subset_agg(per_seed_docs, "ood_eval"),
        "bias": {
            "biased_train_acc": _agg([d["bias"]["biased_train_accuracy"] for d in per_seed_docs]),
            "beta_high_fraction": _agg([d["bias"]["beta_high_fraction"] for d in per_seed_docs]),
        },
        "artifacts": {"seed_dirs": [f"seed_{s}" for s in cfg.seeds]},
    }


def run_experiment(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Run every seed sequentially and aggregate; returns the summary doc."""
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, INCOMPLETE_MARKER)
    atomic_write_text(marker, "running\n")
    write_json(os.path.join(out_dir, "config.json"), config_to_doc(cfg))

    per_seed_docs = []
    for s in cfg.seeds:
        doc = run_seed(cfg, s, os.path.join(out_dir, f"seed_{s}"))
        per_seed_docs.append(doc)

    summary = summarize_runs(cfg, per_seed_docs, _infer_num_classes(cfg))
    write_json(os.path.join(out_dir, "summary.json"), summary)
    os.unlink(marker)
    return summary


def _infer_num_classes(cfg: ExperimentConfig) -> int:
    if isinstance(cfg.dataset, GenConfig):
        return cfg.dataset.num_classes
    return read_dataset(cfg.dataset.train).num_classes
