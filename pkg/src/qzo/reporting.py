"""Run persistence (JSONL), convergence/box statistics, CSV tables and SVG plots."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .harness import RunConfig, RunRecord
from .optimizers import ALGORITHMS

Z95 = 1.96
WHISKER_IQR = 1.5


@dataclass
class ConvergenceStats:
    mean: np.ndarray
    ci_half: np.ndarray
    n: np.ndarray


@dataclass
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list[float] = field(default_factory=list)


def convergence_stats(records) -> ConvergenceStats:
    """Per-step mean and normal-approximation 95% CI half-width (1.96 * SE)."""
    traces = [r.trace if isinstance(r, RunRecord) else r for r in records]
    if len(traces) < 2:
        raise ValueError("convergence statistics need at least 2 runs")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"runs have different trace lengths: {sorted(lengths)}")
    data = np.asarray(traces, dtype=np.float64)
    n = data.shape[0]
    std = data.std(axis=0, ddof=1)
    return ConvergenceStats(data.mean(axis=0), Z95 * std / math.sqrt(n), np.full(data.shape[1], n))


def quantile(sorted_x: np.ndarray, p: float) -> float:
    """Linear interpolation between order statistics at rank (n-1)p,
    computed as x[k] + f*(x[k+1] - x[k])."""
    h = (sorted_x.size - 1) * p
    k = math.floor(h)
    k1 = min(k + 1, sorted_x.size - 1)
    return float(sorted_x[k] + (h - k) * (sorted_x[k1] - sorted_x[k]))


def box_stats(finals) -> BoxStats:
    """Tukey box: linear-interpolation quartiles, whiskers at the most extreme
    observations within 1.5 IQR of the box edges, everything else an outlier."""
    x = np.sort(np.asarray(finals, dtype=np.float64))
    if x.size == 0:
        raise ValueError("box statistics need at least one value")
    q1, median, q3 = (quantile(x, p) for p in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - WHISKER_IQR * iqr, q3 + WHISKER_IQR * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    whisker_low = float(inside.min()) if inside.size else float(q1)
    whisker_high = float(inside.max()) if inside.size else float(q3)
    outliers = [float(v) for v in x if v < whisker_low or v > whisker_high]
    return BoxStats(float(median), float(q1), float(q3), whisker_low, whisker_high, outliers)


def record_to_json(record: RunRecord) -> dict:
    return {
        "config": record.config.to_json(),
        "status": record.status,
        "error": record.error,
        "hashes": record.hashes,
        "trace": record.trace,
        "final": record.trace[-1] if record.trace else None,
        "loss_queries": record.loss_queries,
        "fidelity_queries": record.fidelity_queries,
    }


def record_from_json(doc: dict) -> RunRecord:
    return RunRecord(
        RunConfig.from_json(doc["config"]),
        [float(v) for v in doc["trace"]],
        [int(v) for v in doc["loss_queries"]],
        [int(v) for v in doc["fidelity_queries"]],
        dict(doc["hashes"]),
        doc.get("status", "ok"),
        doc.get("error"),
    )


def write_records(records, path) -> None:
    """One JSON object per line. Python's float repr round-trips doubles exactly."""
    path = Path(path)
    try:
        with path.open("w") as fh:
            for rec in records:
                fh.write(json.dumps(record_to_json(rec), sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc}") from exc


def read_records(path) -> list[RunRecord]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read records from {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(record_from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: corrupt record ({exc})") from exc
    return out


def _optimizer_order(names):
    return sorted(names, key=lambda a: (ALGORITHMS.index(a) if a in ALGORITHMS else len(ALGORITHMS), a))


def write_convergence_csv(stats: dict[str, ConvergenceStats], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "optimizer", "mean", "ci_half"])
        for name in _optimizer_order(stats):
            s = stats[name]
            for step, (m, h) in enumerate(zip(s.mean, s.ci_half)):
                w.writerow([step, name, repr(float(m)), repr(float(h))])


def write_box_csv(stats: dict[str, BoxStats], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["optimizer", "median", "q1", "q3", "whisker_low", "whisker_high", "outliers"])
        for name in _optimizer_order(stats):
            b = stats[name]
            w.writerow(
                [name, *(repr(v) for v in (b.median, b.q1, b.q3, b.whisker_low, b.whisker_high)),
                 " ".join(repr(v) for v in b.outliers)]
            )


def emit_plots(
    task: str,
    convergence: dict[str, ConvergenceStats],
    boxes: dict[str, BoxStats],
    out_dir,
) -> list[Path]:
    """Write ``<task>_convergence.{svg,csv}`` and ``<task>_box.{svg,csv}``."""
    if not convergence or not boxes:
        raise ValueError(f"no optimizer statistics to plot for task {task!r}")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with matplotlib.rc_context({"svg.hashsalt": "qzo", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name in _optimizer_order(convergence):
            s = convergence[name]
            steps = np.arange(s.mean.size)
            (line,) = ax.plot(steps, s.mean, label=name, lw=1.2)
            ax.fill_between(steps, s.mean - s.ci_half, s.mean + s.ci_half, color=line.get_color(), alpha=0.25, lw=0)
        ax.set_xlabel("optimizer step")
        ax.set_ylabel("loss")
        ax.set_title(f"{task}: mean loss, 95% CI")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{task}_convergence.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)

        names = _optimizer_order(boxes)
        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.bxp(
            [
                {
                    "med": boxes[n].median, "q1": boxes[n].q1, "q3": boxes[n].q3,
                    "whislo": boxes[n].whisker_low, "whishi": boxes[n].whisker_high,
                    "fliers": boxes[n].outliers, "label": n,
                }
                for n in names
            ],
            showfliers=True,
        )
        ax.set_ylabel("final loss")
        ax.set_title(f"{task}: final loss")
        fig.tight_layout()
        path = out_dir / f"{task}_box.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)

    conv_csv = out_dir / f"{task}_convergence.csv"
    box_csv = out_dir / f"{task}_box.csv"
    write_convergence_csv(convergence, conv_csv)
    write_box_csv(boxes, box_csv)
    return written + [conv_csv, box_csv]


def report(records, out_dir) -> list[Path]:
    """Aggregate successful runs per (task, optimizer) and emit every plot set."""
    grouped: dict[str, dict[str, list[RunRecord]]] = defaultdict(lambda: defaultdict(list))
    for rec in records:
        if rec.status == "ok":
            grouped[rec.task][rec.optimizer].append(rec)
    if not grouped:
        raise ValueError("no successful runs to report")
    written = []
    for task in sorted(grouped):
        conv, boxes = {}, {}
        for name, recs in grouped[task].items():
            boxes[name] = box_stats([r.final for r in recs])
            if len(recs) >= 2:
                conv[name] = convergence_stats(recs)
            else:
                conv[name] = ConvergenceStats(np.asarray(recs[0].trace), np.zeros(len(recs[0].trace)), np.ones(len(recs[0].trace), dtype=int))
        written += emit_plots(task, conv, boxes, out_dir)
    return written
