"""Grid-enumerated training data: (target point, rig) -> four motor rotations.

Rows are ordered side length first, then winch radius, then x, y, z
(z varies fastest).  Every rig in the grid is a cube ``B = D = H = s``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import EmptyDatasetError, ParseError
from .kinematics import rotations_for_targets

FEATURES = ("x", "y", "z", "B", "D", "H", "R")
TARGETS = ("theta0", "theta1", "theta2", "theta3")
HEADER = ",".join(FEATURES + TARGETS)
N_FEATURES = len(FEATURES)
N_TARGETS = len(TARGETS)


def arange(start: float, stop: float, step: float) -> np.ndarray:
    """Half-open ``[start, stop)`` grid built as ``start + k*step``."""
    n = max(int(math.ceil((stop - start) / step)), 0)
    while n > 0 and start + (n - 1) * step >= stop:
        n -= 1
    while start + n * step < stop:
        n += 1
    return start + np.arange(n, dtype=np.float64) * step


@dataclass(frozen=True)
class GridSpec:
    side_range: tuple[float, float, float] = (1.0, 4.0, 0.5)
    radii: tuple[float, ...] = (0.008, 0.010)
    point_step: float = 0.5

    def __post_init__(self):
        start, stop, step = (float(v) for v in self.side_range)
        if not (start > 0 and step > 0 and stop > start):
            raise ValueError(f"bad side range {self.side_range}")
        radii = tuple(float(r) for r in self.radii)
        if not radii or any(not r > 0 for r in radii):
            raise ValueError(f"radii must be non-empty and positive, got {self.radii}")
        if not self.point_step > 0:
            raise ValueError(f"point_step must be positive, got {self.point_step}")
        object.__setattr__(self, "side_range", (start, stop, step))
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "point_step", float(self.point_step))

    def sides(self) -> np.ndarray:
        return arange(*self.side_range)


DESK_SPEC = GridSpec()
PAPER_SPEC = GridSpec((1.0, 7.0, 0.5), (0.008, 0.009, 0.010), 0.5)
# row count reported alongside the paper-scale grid for comparison
REFERENCE_ROW_COUNT = 110_592


class Sample(NamedTuple):
    features: tuple[float, ...]
    targets: tuple[float, ...]


@dataclass(eq=False)
class Dataset:
    """Feature matrix ``(n, 7)`` and target matrix ``(n, 4)``, both float64."""

    features: np.ndarray
    targets: np.ndarray
    spec: GridSpec | None = None
    split_seed: int | None = None
    indices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64).reshape(-1, N_FEATURES)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float64).reshape(-1, N_TARGETS)
        if len(self.features) != len(self.targets):
            raise ValueError("features and targets disagree on row count")

    def __len__(self) -> int:
        return len(self.features)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (np.array_equal(self.features, other.features)
                and np.array_equal(self.targets, other.targets))

    def __iter__(self) -> Iterator[Sample]:
        for f, t in zip(self.features, self.targets):
            yield Sample(tuple(f.tolist()), tuple(t.tolist()))

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    def subset(self, idx: np.ndarray) -> "Dataset":
        base = self.indices if self.indices is not None else np.arange(len(self))
        return Dataset(self.features[idx], self.targets[idx], self.spec, self.split_seed,
                       indices=base[idx])


def generate(spec: GridSpec = DESK_SPEC) -> Dataset:
    blocks = []
    for s in spec.sides():
        pts = arange(0.0, s, spec.point_step)
        x, y, z = np.meshgrid(pts, pts, pts, indexing="ij")
        xyz = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
        for r in spec.radii:
            feats = np.empty((len(xyz), N_FEATURES))
            feats[:, :3] = xyz
            feats[:, 3:6] = s
            feats[:, 6] = r
            blocks.append(feats)
    if not blocks or sum(len(b) for b in blocks) == 0:
        raise EmptyDatasetError(f"grid {spec} produced no rows")
    features = np.concatenate(blocks)
    targets = rotations_for_targets(*(features[:, j] for j in (3, 4, 5, 6, 0, 1, 2)))
    return Dataset(features, targets, spec)


def split(ds: Dataset, test_fraction: float = 0.2, seed: int = 42) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first ``floor(n * test_fraction)`` rows become the test set."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(math.floor(n * test_fraction + 1e-9))
    train, test = ds.subset(perm[n_test:]), ds.subset(perm[:n_test])
    train.split_seed = test.split_seed = seed
    return train, test


def _fmt(v: float) -> str:
    return format(v, ".17g")


def dumps(ds: Dataset) -> str:
    buf = io.StringIO()
    buf.write(HEADER + "\n")
    for row in np.hstack([ds.features, ds.targets]).tolist():
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def save(ds: Dataset, path) -> None:
    Path(path).write_bytes(dumps(ds).encode("utf-8"))


def loads(text: str) -> Dataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != HEADER:
        got = lines[0] if lines else ""
        raise ParseError(f"expected header {HEADER!r}, got {got!r}", line=1)
    width = N_FEATURES + N_TARGETS
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.rstrip("\r").split(",")
        if len(parts) != width:
            raise ParseError(f"row {lineno - 1} has {len(parts)} fields, expected {width}",
                             line=lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(f"row {lineno - 1}: {exc}", line=lineno) from None
    data = np.array(rows, dtype=np.float64).reshape(-1, width)
    return Dataset(data[:, :N_FEATURES], data[:, N_FEATURES:])


def load(path) -> Dataset:
    return loads(Path(path).read_bytes().decode("utf-8"))


@dataclass
class HistogramReport:
    edges: list[np.ndarray]
    counts: list[np.ndarray]
    minimum: np.ndarray
    maximum: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def format(self) -> str:
        lines = [f"{'output':<8}{'min':>14}{'max':>14}{'mean':>14}{'std':>14}"]
        for j, name in enumerate(TARGETS):
            lines.append(f"{name:<8}{self.minimum[j]:>14.4f}{self.maximum[j]:>14.4f}"
                         f"{self.mean[j]:>14.4f}{self.std[j]:>14.4f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        out = ["output,bin_lo,bin_hi,count"]
        for name, e, c in zip(TARGETS, self.edges, self.counts):
            out.extend(f"{name},{_fmt(lo)},{_fmt(hi)},{n}" for lo, hi, n in zip(e[:-1], e[1:], c))
        return "\n".join(out) + "\n"


def histogram(values: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram over ``[min, max]``; a zero-width range is widened by 0.5."""
    counts, edges = np.histogram(values, bins=bins)
    return edges, counts


def stats(ds: Dataset, bins: int = 20) -> HistogramReport:
    if len(ds) == 0:
        raise EmptyDatasetError("cannot summarise an empty dataset")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    edges, counts = zip(*(histogram(ds.targets[:, j], bins) for j in range(N_TARGETS)))
    t = ds.targets
    return HistogramReport(list(edges), list(counts), t.min(axis=0), t.max(axis=0),
                           t.mean(axis=0), t.std(axis=0))

