"""File formats for the command line front end.

Everything is plain CSV or JSON so runs are diffable and golden-test
friendly:

  histograms   first row = bin labels, each further row = one model
  kernel       header line '#kernel', then the matrix rows
  cost         header line '#cost epsilon=<v>' (or bare '#cost'), then rows
  embeddings   rows of 'label,v1,...,vd'

JSON output keeps insertion key order and renders every float with 17
significant digits, so identical runs produce byte-identical files.
"""
from __future__ import annotations

import csv
import math
from typing import Optional, Sequence

import numpy as np

from .errors import InputFormatError
from .ground_metric import (
    GroundMetric,
    _clamp_kernel,
    _default_support,
    kernel_from_cost,
)
from .measures import Histogram, Support


# ---------------------------------------------------------------------------
# CSV readers / writers
# ---------------------------------------------------------------------------

def _read_rows(path: str) -> list:
    try:
        with open(path, newline="") as fh:
            return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc


def _floats(row: Sequence[str], path: str) -> list:
    try:
        return [float(x) for x in row]
    except ValueError as exc:
        raise InputFormatError(f"{path}: bad numeric value in row {row!r}") from exc


def read_histograms(path: str) -> tuple:
    """Read (Support, [mass vectors]) from a histogram CSV."""
    rows = _read_rows(path)
    if len(rows) < 2:
        raise InputFormatError(f"{path}: need a label row plus at least one model row")
    labels = tuple(x.strip() for x in rows[0])
    try:
        support = Support(labels)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    masses = []
    for row in rows[1:]:
        if len(row) != len(labels):
            raise InputFormatError(
                f"{path}: row has {len(row)} values for {len(labels)} labels"
            )
        masses.append(np.array(_floats(row, path)))
    return support, masses


def write_histograms(path: str, support: Support, masses: Sequence[np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(support.labels)
        for mass in masses:
            writer.writerow([format(float(x), ".17g") for x in mass])


def read_matrix_file(
    path: str,
    source: Support,
    target: Optional[Support] = None,
    epsilon: Optional[float] = None,
) -> GroundMetric:
    """Read a kernel or cost CSV into a GroundMetric.

    A '#cost epsilon=<v>' header exponentiates immediately; a bare '#cost'
    leaves the metric cost-only (the solver derives the kernel from its own
    epsilon, or from the `epsilon` argument here when given). When the
    matrix is square and no target support is supplied, source and target
    coincide; otherwise synthetic target labels are generated.
    """
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    if not lines or not lines[0].startswith("#"):
        raise InputFormatError(f"{path}: expected a '#kernel' or '#cost ...' header")
    header = lines[0].lstrip("#").strip()
    rows = [_floats(ln.split(","), path) for ln in lines[1:]]
    if not rows:
        raise InputFormatError(f"{path}: no matrix rows")
    mat = np.array(rows)
    if mat.shape[0] != len(source):
        raise InputFormatError(
            f"{path}: {mat.shape[0]} rows for a source of size {len(source)}"
        )
    if target is None:
        target = source if mat.shape[1] == len(source) else _default_support(
            mat.shape[1], prefix="t"
        )
    if mat.shape[1] != len(target):
        raise InputFormatError(
            f"{path}: {mat.shape[1]} columns for a target of size {len(target)}"
        )

    kind = header.split()[0]
    if kind == "kernel":
        kernel = _clamp_kernel(mat)
        ident = None
        if kernel.shape[0] == kernel.shape[1]:
            ident = float(np.linalg.norm(kernel - np.eye(kernel.shape[0])))
        return GroundMetric(source=source, target=target, kernel=kernel,
                            identity_distance=ident)
    if kind == "cost":
        file_eps = None
        for token in header.split()[1:]:
            if token.startswith("epsilon="):
                try:
                    file_eps = float(token.split("=", 1)[1])
                except ValueError as exc:
                    raise InputFormatError(f"{path}: bad epsilon in header") from exc
        gm = GroundMetric(source=source, target=target, cost=mat)
        eps = file_eps if file_eps is not None else epsilon
        return kernel_from_cost(gm, eps) if eps is not None else gm
    raise InputFormatError(f"{path}: unknown matrix header {header!r}")


def read_embeddings(path: str) -> Support:
    """Read a labeled point cloud: one 'label,v1,...,vd' row per bin."""
    rows = _read_rows(path)
    labels = []
    points = []
    dim = None
    for row in rows:
        if len(row) < 2:
            raise InputFormatError(f"{path}: row {row!r} has no coordinates")
        labels.append(row[0].strip())
        vec = _floats(row[1:], path)
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise InputFormatError(f"{path}: inconsistent embedding dimension")
        points.append(vec)
    try:
        return Support(tuple(labels), np.array(points))
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc


def align_embeddings(support: Support, embedded: Support) -> Support:
    """Reorder an embedding support to match another support's labels."""
    index = {label: i for i, label in enumerate(embedded.labels)}
    missing = [l for l in support.labels if l not in index]
    if missing:
        raise InputFormatError(f"embeddings missing labels: {missing}")
    pts = embedded.points[[index[l] for l in support.labels]]
    return Support(support.labels, pts)


def read_scores(path: str) -> np.ndarray:
    """Read a flat list of scores (one per line, or comma-separated)."""
    rows = _read_rows(path)
    values = []
    for row in rows:
        values.extend(_floats(row, path))
    if not values:
        raise InputFormatError(f"{path}: no scores found")
    return np.array(values)


# ---------------------------------------------------------------------------
# Deterministic JSON
# ---------------------------------------------------------------------------

def _json_scalar(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if isinstance(value, str):
        out = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{out}"'
    raise TypeError(f"cannot serialize {type(value)!r}")


def _is_scalar(value) -> bool:
    return value is None or isinstance(
        value, (bool, int, float, str, np.bool_, np.integer, np.floating)
    )


def _render(value, level: int) -> str:
    pad = "  " * level
    inner = "  " * (level + 1)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, dict):
        if not value:
            return "{}"
        parts = [
            f'{inner}{_json_scalar(str(k))}: {_render(v, level + 1)}'
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        items = list(value)
        if not items:
            return "[]"
        if all(_is_scalar(x) for x in items):
            return "[" + ", ".join(_json_scalar(x) for x in items) + "]"
        parts = [f"{inner}{_render(x, level + 1)}" for x in items]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    return _json_scalar(value)


def dump_json(obj: dict) -> str:
    """Render a document with fixed key order and 17-significant-digit
    floats; non-finite numbers become null."""
    return _render(obj, 0) + "\n"
