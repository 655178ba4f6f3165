"""Side-by-side R^2 comparison of predictors and residual distribution exports."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .datagen import TARGETS, Dataset, histogram
from .errors import EmptyDatasetError
from .model import Metrics, evaluate

# Published test R^2 per output and whether the model ran on the microcontroller.
REFERENCE_ROWS: tuple[tuple[str, tuple[float, float, float, float], bool], ...] = (
    ("Linear Regression", (0.9245, 0.9310, 0.9393, 0.9315), False),
    ("SGD ElasticNet", (0.9237, 0.9300, 0.9391, 0.9307), False),
    ("DecisionTree Regressor", (0.9901, 0.9921, 0.9952, 0.9922), False),
    ("Gradient Boosting", (0.9960, 0.9939, 0.9931, 0.9932), False),
    ("XGBoost", (0.9874, 0.9826, 0.9827, 0.9827), False),
    ("Neural Network (Fully Connected) GPU", (0.9985, 0.9972, 0.9990, 0.9989), True),
    ("Neural Network (Fully Connected) MCU", (0.9742, 0.9733, 0.9761, 0.9756), True),
)


@dataclass(frozen=True)
class ReportRow:
    name: str
    r2: tuple[float, ...]
    mcu: bool
    reference: bool = False


@dataclass
class ComparisonReport:
    rows: list[ReportRow]
    metrics: dict[str, Metrics] = field(default_factory=dict, repr=False)
    reference: tuple[ReportRow, ...] = tuple(
        ReportRow(f"reference: {name}", r2, mcu, True) for name, r2, mcu in REFERENCE_ROWS)

    def format(self, with_reference: bool = True) -> str:
        rows = list(self.rows) + (list(self.reference) if with_reference else [])
        width = max([len("model")] + [len(r.name) for r in rows]) + 2
        head = f"{'model':<{width}}" + "".join(f"{t:>10}" for t in TARGETS) + f"{'mcu':>6}"
        lines = [head, "-" * len(head)]
        for r in rows:
            lines.append(f"{r.name:<{width}}" + "".join(f"{v:>10.4f}" for v in r.r2)
                         + f"{'yes' if r.mcu else 'no':>6}")
        return "\n".join(lines)

    def to_csv(self, with_reference: bool = True) -> str:
        rows = list(self.rows) + (list(self.reference) if with_reference else [])
        out = ["model," + ",".join(TARGETS) + ",mcu"]
        for r in rows:
            out.append(",".join([r.name.replace(",", ";"), *(f"{v:.17g}" for v in r.r2),
                                 "yes" if r.mcu else "no"]))
        return "\n".join(out) + "\n"


def parse_report_csv(text: str) -> list[ReportRow]:
    lines = text.strip("\n").split("\n")
    if lines[0] != "model," + ",".join(TARGETS) + ",mcu":
        raise ValueError(f"unexpected report header {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        name, *vals, mcu = line.split(",")
        rows.append(ReportRow(name, tuple(float(v) for v in vals), mcu == "yes",
                              name.startswith("reference: ")))
    return rows


def compare(models: Sequence[tuple[str, Callable]], test: Dataset,
            deployable: Iterable[str] = ()) -> ComparisonReport:
    """Evaluate each ``(name, predict_fn)`` on ``test``.

    Names listed in ``deployable`` are flagged as runnable on the
    microcontroller; that should be the float and quantized networks only.
    """
    if len(test) == 0:
        raise EmptyDatasetError("test set is empty")
    deployable = set(deployable)
    rows, metrics = [], {}
    for name, fn in models:
        m = evaluate(fn, test)
        metrics[name] = m
        rows.append(ReportRow(name, tuple(float(v) for v in m.r2), name in deployable))
    return ComparisonReport(rows, metrics)


@dataclass
class ErrorSummary:
    mean: np.ndarray
    std: np.ndarray
    edges: list[np.ndarray]
    counts: list[np.ndarray]
    files: list[Path] = field(default_factory=list)


def error_report(metrics: Metrics, bins: int = 50, outdir=None, prefix: str = "") -> ErrorSummary:
    """Residual scatter data and error histograms per output.

    When ``outdir`` is given, writes ``{prefix}residuals_thetaJ.csv``
    (``y_true,error``) and ``{prefix}error_hist_thetaJ.csv``
    (``bin_lo,bin_hi,count``) for every output J.
    """
    err = metrics.error
    if err.size == 0:
        raise EmptyDatasetError("no residuals to report")
    edges, counts = zip(*(histogram(err[:, j], bins) for j in range(err.shape[1])))
    summary = ErrorSummary(err.mean(axis=0), err.std(axis=0), list(edges), list(counts))
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        for j in range(err.shape[1]):
            res = outdir / f"{prefix}residuals_theta{j}.csv"
            res.write_text(metrics.residual_csv(j), encoding="utf-8", newline="\n")
            hist = outdir / f"{prefix}error_hist_theta{j}.csv"
            rows = ["bin_lo,bin_hi,count"]
            rows.extend(f"{lo:.17g},{hi:.17g},{n}" for lo, hi, n in
                        zip(edges[j][:-1].tolist(), edges[j][1:].tolist(), counts[j].tolist()))
            hist.write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")
            summary.files += [res, hist]
    return summary
