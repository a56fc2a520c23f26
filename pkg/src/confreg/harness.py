"""Experiment runner surface: run, compare, sweep.

`run` executes one method over all seeds into a run directory, `compare`
renders completed run directories side by side, and `sweep` re-runs the
requested methods while the training split is augmented with growing
fractions of a bias-free pool.
"""

from __future__ import annotations

import csv
import io
import os
import sys
from dataclasses import replace

from . import pipeline, svg
from .config import ExperimentConfig, config_to_doc, load_config
from .errors import UsageError
from .util import read_json, write_json


def run(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Execute the configured experiment; returns the summary document."""
    return pipeline.run_experiment(cfg, out_dir)


def run_from_file(config_path: str, out_dir: str) -> dict:
    return run(load_config(config_path), out_dir)


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def _is_complete(run_dir: str) -> bool:
    return os.path.exists(os.path.join(run_dir, "summary.json")) and not os.path.exists(
        os.path.join(run_dir, pipeline.INCOMPLETE_MARKER)
    )


def _mean_std(entry: dict) -> str:
    return f"{entry['mean']:.4f}±{entry['std']:.4f}"


def compare(run_dirs: list[str], warn=lambda msg: print(msg, file=sys.stderr)) -> tuple[str, str]:
    """Build a comparison table over completed run dirs.

    Returns (text table, CSV text).  Incomplete directories are skipped with
    a warning; mixing class counts is an error.
    """
    summaries = []
    for d in run_dirs:
        if not _is_complete(d):
            warn(f"warning: skipping incomplete run dir {d}")
            continue
        summaries.append((d, read_json(os.path.join(d, "summary.json"))))
    if not summaries:
        raise UsageError("no completed run directories to compare")
    class_counts = {s["num_classes"] for _, s in summaries}
    if len(class_counts) > 1:
        raise UsageError(f"cannot compare runs with different class counts: {sorted(class_counts)}")

    subset_tags = sorted({tag for _, s in summaries for tag in s.get("ood_acc_by_subset", {})})
    header = ["method", "indist_acc", "ood_acc"] + [f"ood[{t}]" for t in subset_tags] + ["ece"]
    rows = []
    for d, s in summaries:
        row = [s["method"], _mean_std(s["indist_acc"]), _mean_std(s["ood_acc"])]
        for tag in subset_tags:
            entry = s.get("ood_acc_by_subset", {}).get(tag)
            row.append(_mean_std(entry) if entry else "-")
        row.append(_mean_std(s["ece"]))
        rows.append(row)

    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(v.ljust(widths[i]) for i, v in enumerate(r)))
    text = "\n".join(lines)

    buf = io.StringIO()
    writer = csv.writer(buf)
    csv_header = ["method", "indist_acc_mean", "indist_acc_std", "ood_acc_mean", "ood_acc_std"]
    for tag in subset_tags:
        csv_header += [f"ood_{tag}_mean", f"ood_{tag}_std"]
    csv_header += ["ece_mean", "ece_std"]
    writer.writerow(csv_header)
    for d, s in summaries:
        row = [
            s["method"],
            repr(s["indist_acc"]["mean"]),
            repr(s["indist_acc"]["std"]),
            repr(s["ood_acc"]["mean"]),
            repr(s["ood_acc"]["std"]),
        ]
        for tag in subset_tags:
            entry = s.get("ood_acc_by_subset", {}).get(tag)
            row += [repr(entry["mean"]), repr(entry["std"])] if entry else ["", ""]
        row += [repr(s["ece"]["mean"]), repr(s["ece"]["std"])]
        writer.writerow(row)
    return text, buf.getvalue()


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def sweep(cfg: ExperimentConfig, fractions: list[float], out_dir: str) -> dict:
    """Run the configured methods at each augmentation fraction.

    Emits sweep.csv (fraction, method, subset, mean, std rows) and one SVG
    line chart per evaluation subset; returns the collected table.
    """
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise UsageError(f"fraction must lie in [0, 1], got {f}")
    if cfg.sweep is None:
        raise UsageError("sweep requires a 'sweep' section in the config")
    os.makedirs(out_dir, exist_ok=True)

    table = []  # (fraction, method, subset, mean, std)
    for fi, fraction in enumerate(fractions):
        for method in cfg.sweep.methods:
            sub_cfg = replace(cfg, method=method, augment_fraction=fraction)
            run_dir = os.path.join(out_dir, method, f"frac_{fi}")
            summary = pipeline.run_experiment(sub_cfg, run_dir)
            entries = {"overall": summary["ood_acc"], **summary.get("ood_acc_by_subset", {})}
            for subset, entry in sorted(entries.items()):
                table.append((fraction, method, subset, entry["mean"], entry["std"]))

    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "method", "subset", "ood_acc_mean", "ood_acc_std"])
        for row in table:
            writer.writerow([repr(row[0]), row[1], row[2], repr(row[3]), repr(row[4])])

    subsets = sorted({row[2] for row in table})
    for subset in subsets:
        series = []
        for method in cfg.sweep.methods:
            pts = [(r[0], r[3]) for r in table if r[1] == method and r[2] == subset]
            if pts:
                series.append((method, [p[0] for p in pts], [p[1] for p in pts]))
        svg.line_chart(
            os.path.join(out_dir, f"sweep_{subset}.svg"),
            series,
            title=f"OOD accuracy vs augmentation fraction ({subset})",
            xlabel="fraction of bias-free pool added",
            ylabel="accuracy",
        )

    report = {
        "fractions": fractions,
        "methods": list(cfg.sweep.methods),
        "rows": [
            {"fraction": r[0], "method": r[1], "subset": r[2], "mean": r[3], "std": r[4]}
            for r in table
        ],
    }
    write_json(os.path.join(out_dir, "sweep_summary.json"), report)
    return report
