"""Accuracy tables, box-plot summaries and confusion-matrix renderings."""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ShapeMismatch
from .experiments import ExperimentResult


def format_mean_std(mean_pct: float, std_pct: float) -> str:
    return f"{mean_pct:.2f} ± {std_pct:.2f}"


@dataclass(frozen=True)
class ReportRow:
    descriptor: str
    mean: float  # fraction in [0, 1]
    std: float
    std_defined: bool
    n_runs: int
    per_fold: tuple[tuple[int, float, float], ...] = ()  # (test domain, mean, std)

    @property
    def formatted(self) -> str:
        return format_mean_std(100 * self.mean, 100 * self.std)


@dataclass(frozen=True)
class ReportTable:
    rows: tuple[ReportRow, ...]
    notes: tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps(
            {"rows": [asdict(r) for r in self.rows], "notes": list(self.notes)}, indent=1
        )

    @classmethod
    def from_json(cls, text: str) -> "ReportTable":
        doc = json.loads(text)
        rows = tuple(
            ReportRow(
                r["descriptor"], r["mean"], r["std"], r["std_defined"], r["n_runs"],
                tuple(tuple(x) for x in r["per_fold"]),
            )
            for r in doc["rows"]
        )
        return cls(rows, tuple(doc.get("notes", ())))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["config", "test_accuracy_pct", "mean", "std", "std_defined", "n_runs", "per_fold"])
        for r in self.rows:
            folds = ";".join(f"{d}:{format_mean_std(100 * m, 100 * s)}" for d, m, s in r.per_fold)
            writer.writerow([r.descriptor, r.formatted, repr(r.mean), repr(r.std), r.std_defined, r.n_runs, folds])
        return buf.getvalue()


def natural_key(text: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", text)]


def build_table(results: Sequence[ExperimentResult], notes: Sequence[str] = ()) -> ReportTable:
    """One row per configuration, sorted by descriptor; percentages render as ``mean ± std``."""
    if not results:
        raise ValueError("no results to tabulate")
    rows = []
    for res in results:
        rows.append(
            ReportRow(
                descriptor=res.config_id,
                mean=res.mean,
                std=res.std,
                std_defined=res.std_defined,
                n_runs=len(res.all_accuracies),
                per_fold=tuple((f.test_domain, f.mean, f.std) for f in res.folds),
            )
        )
    rows.sort(key=lambda r: natural_key(r.descriptor))
    return ReportTable(tuple(rows), tuple(notes))


@dataclass(frozen=True)
class BoxStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    outliers: tuple[float, ...]
    points: tuple[float, ...] = field(default=())

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def five_number(points: Sequence[float]) -> BoxStats:
    x = np.sort(np.asarray(points, dtype=np.float64))
    if x.size == 0:
        raise ValueError("box plot needs at least one point")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    lo, hi = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
    outliers = tuple(float(v) for v in x if v < lo or v > hi)
    return BoxStats(float(x[0]), float(q1), float(med), float(q3), float(x[-1]), outliers, tuple(float(v) for v in x))


def boxplot_data(points_by_method: Mapping[str, Sequence[float]]) -> dict[str, BoxStats]:
    """Five-number summary and 1.5·IQR outliers per method, in natural method order (A1..A8, M9, M10)."""
    return {m: five_number(points_by_method[m]) for m in sorted(points_by_method, key=natural_key)}


def boxplot_points(results: Sequence[ExperimentResult]) -> dict[str, list[float]]:
    """Per-method points for the box plot: one mean test accuracy per held-out domain."""
    return {r.config_id: [f.mean for f in r.folds] for r in results}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_boxplot(stats: Mapping[str, BoxStats], path, title: str = "Held-out domain accuracy") -> Path:
    plt = _pyplot()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    methods = list(stats)
    fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(methods) + 2), 4))
    ax.boxplot([[100 * v for v in stats[m].points] for m in methods], whis=1.5)
    ax.set_xticks(range(1, len(methods) + 1), methods)
    ax.set_ylabel("Test accuracy (%)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


@dataclass(frozen=True)
class ConfusionArtifacts:
    image: Path
    csv: Path
    accuracy: float


def render_confusion(confusion, labels: Sequence[str], out_stem, title: str | None = None, fmt: str = "png") -> ConfusionArtifacts:
    """Write a heatmap image and an exact-count CSV (``<out_stem>.<fmt>``, ``<out_stem>.csv``)."""
    cm = np.asarray(confusion)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeMismatch(f"confusion matrix must be square, got shape {cm.shape}")
    if len(labels) != cm.shape[0]:
        raise ShapeMismatch(f"{len(labels)} labels for a {cm.shape[0]}x{cm.shape[0]} matrix")
    total = cm.sum()
    accuracy = float(np.trace(cm) / total) if total else float("nan")

    stem = Path(out_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.with_suffix(".csv")
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true\\pred", *labels])
        for label, row in zip(labels, cm):
            writer.writerow([label, *(int(v) for v in row)])

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(1.2 * len(labels) + 2, 1.2 * len(labels) + 1.5))
    ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(len(labels)), labels)
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    peak = cm.max() if cm.size else 0
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                    color="white" if peak and cm[i, j] > peak / 2 else "black")
    ax.set_title(f"{title + ' ' if title else ''}accuracy {accuracy:.2f}")
    fig.tight_layout()
    image_path = stem.with_suffix(f".{fmt}")
    fig.savefig(image_path)
    plt.close(fig)
    return ConfusionArtifacts(image_path, csv_path, accuracy)


STAGE_NAMES = {"E": "Early no slag", "B": "Before slag", "S": "During slag"}
