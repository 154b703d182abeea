"""Synthetic benchmark generators, CSV ingestion, and experiment reports.

Random streams come from numpy's Philox counter-based generator keyed by the
seed, so a (kind, n, seed, params) tuple fixes the output bytes on every
platform.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core_geometry import PointCloud
from .errors import InvalidParameterError, ParseError

SCHEMA_VERSION = "1"
KINDS = ("swiss_roll", "sphere", "ellipsoid", "gaussian", "plane")

DEFAULT_PARAMS = {
    "swiss_roll": {},
    "sphere": {"radius": 1.0},
    "ellipsoid": {"a": 1.0, "b": 1.0, "c": 0.5},
    "gaussian": {"amplitude": 1.0, "width": 1.0},
    "plane": {"extent": 1.0},
}


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n: int = 1000
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown dataset kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if int(self.n) < 1:
            raise InvalidParameterError("n must be >= 1")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise InvalidParameterError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        for k, v in self.params.items():
            if not float(v) > 0:
                raise InvalidParameterError(f"parameter {k} must be positive")

    def resolved_params(self) -> dict:
        return {**DEFAULT_PARAMS[self.kind], **{k: float(v) for k, v in self.params.items()}}


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _unit_sphere(rng, n):
    g = rng.standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def generate(spec: DatasetSpec) -> PointCloud:
    """Sample one of the synthetic benchmark surfaces in R^3."""
    rng = rng_for(spec.seed)
    p = spec.resolved_params()
    n = int(spec.n)
    if spec.kind == "swiss_roll":
        t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, n)
        h = rng.uniform(0.0, 21.0, n)
        X = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
    elif spec.kind == "sphere":
        X = p["radius"] * _unit_sphere(rng, n)
    elif spec.kind == "ellipsoid":
        X = _unit_sphere(rng, n) * np.array([p["a"], p["b"], p["c"]])
    elif spec.kind == "gaussian":
        w, A = p["width"], p["amplitude"]
        xy = rng.uniform(-3.0 * w, 3.0 * w, (n, 2))
        X = np.column_stack([xy, A * np.exp(-np.sum(xy**2, axis=1) / (2.0 * w**2))])
    else:
        xy = rng.uniform(-p["extent"], p["extent"], (n, 2))
        X = np.column_stack([xy, np.zeros(n)])
    return PointCloud(X)


def _fmt(x) -> str:
    return repr(float(x)) if math.isfinite(float(x)) else str(float(x))


def save_csv(cloud, path, header: Optional[list] = None) -> None:
    """Write points (and labels, as a trailing ``label`` column) as CSV."""
    cloud = cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = cloud.labels
    if header is not None:
        w.writerow(header)
    elif labels is not None:
        w.writerow([f"x{j}" for j in range(cloud.dim)] + ["label"])
    for i, row in enumerate(cloud.data):
        cells = [_fmt(v) for v in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        w.writerow(cells)
    atomic_write(path, buf.getvalue())


def load_csv(path, label_column: Optional[str] = None) -> PointCloud:
    """Read a rectangular numeric CSV with an optional header row."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(f)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("file contains no data")
    header = None
    first_line, first = rows[0]
    try:
        [float(c) for c in first]
    except ValueError:
        header = [c.strip() for c in first]
        rows = rows[1:]
    width = len(header) if header is not None else len(first)
    label_idx = None
    if label_column is not None:
        if header is None or label_column not in header:
            raise ParseError(f"label column {label_column!r} not found in header", first_line)
        label_idx = header.index(label_column)
    values, labels = [], []
    for line, r in rows:
        if len(r) != width:
            raise ParseError(f"expected {width} fields, found {len(r)}", line)
        try:
            nums = [float(c) for c in r]
        except ValueError:
            bad = next(c for c in r if not _is_float(c))
            raise ParseError(f"non-numeric cell {bad!r}", line) from None
        if not all(math.isfinite(v) for v in nums):
            raise ParseError("non-finite value", line)
        if label_idx is not None:
            lab = nums.pop(label_idx)
            if lab != int(lab):
                raise ParseError(f"label {lab!r} is not an integer", line)
            labels.append(int(lab))
        values.append(nums)
    if not values:
        raise ParseError("file contains a header but no data rows")
    return PointCloud(np.array(values), np.array(labels) if label_idx is not None else None)


def _is_float(s) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ExperimentReport:
    """Everything one run produced, in serialization order."""

    config: dict = field(default_factory=dict)
    metrics: list = field(default_factory=list)  # rows {"method", "metric", "value", optional "K"}
    flow: dict = field(default_factory=dict)
    dimension_histogram: dict = field(default_factory=dict)
    curvature_histogram: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "metrics": self.metrics,
            "flow": self.flow,
            "dimension_histogram": {str(k): v for k, v in self.dimension_histogram.items()},
            "curvature_histogram": self.curvature_histogram,
            "timings": self.timings,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ParseError(f"unsupported report schema {data.get('schema_version')!r}")
        return cls(
            config=data.get("config", {}),
            metrics=data.get("metrics", []),
            flow=data.get("flow", {}),
            dimension_histogram={int(k): v for k, v in data.get("dimension_histogram", {}).items()},
            curvature_histogram=data.get("curvature_histogram", {}),
            timings=data.get("timings", {}),
            schema_version=data["schema_version"],
        )


class _Float17(float):
    def __repr__(self):
        text = format(self, ".17g")
        return text if any(ch in text for ch in ".en") else text + ".0"


def _canon(obj):
    """Plain JSON types with floats printed at 17 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else _Float17(v)
    return obj


def _dumps(obj, indent: int = 2, level: int = 0) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dumps(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dumps(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, _Float17):
        return repr(obj)
    return json.dumps(obj)


def report_json(report: ExperimentReport) -> str:
    return _dumps(_canon(report.to_dict())) + "\n"


def metrics_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "metric", "K", "value"])
    for row in report.metrics:
        K = row.get("K")
        w.writerow([row["method"], row["metric"], "" if K is None else int(K), format(float(row["value"]), ".17g")])
    return buf.getvalue()


def save_report(report: ExperimentReport, path) -> Path:
    """Write the JSON report and a companion ``<stem>.csv`` metric table.

    Returns the path of the CSV.
    """
    path = Path(path)
    atomic_write(path, report_json(report))
    csv_path = path.with_suffix(".csv")
    if csv_path == path:
        csv_path = path.with_suffix(".metrics.csv")
    atomic_write(csv_path, metrics_csv(report))
    return csv_path


def load_report(path) -> ExperimentReport:
    with open(path, encoding="utf-8") as f:
        return ExperimentReport.from_dict(json.load(f))
