"""CSV schema validation for the simulator's documented export formats.

Any column drift from the producing side fails loudly here; parse errors
name the file and the 1-based row number.
"""

from __future__ import annotations

import re

import numpy as np


class SchemaError(ValueError):
    """Input file does not match its documented schema."""


# Fixed-column schemas; dimension-bearing ones are validated by pattern.
TREE_HEADER = ["child_id", "parent_id"]
STRAIGHTNESS_HEADER = ["vertex_id", "norm", "max_angle"]
TAIL_HEADER = ["threshold", "survival", "half_width", "trials"]
DEVIATION_HEADER = ["norm", "trials", "threshold", "exceedance", "half_width", "median_dev"]


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    return header, rows


def _parse_floats(path, rows, width: int) -> np.ndarray:
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise SchemaError(f"{path}: row {i + 2} has {len(row)} fields, expected {width}")
        try:
            out[i] = [float(v) for v in row]
        except ValueError as exc:
            raise SchemaError(f"{path}: row {i + 2}: {exc}") from None
    return out


def _expect(path, header, want: list[str]) -> None:
    if header != want:
        raise SchemaError(f"{path}: header {header} does not match schema {want}")


def load_points(path) -> tuple[np.ndarray, np.ndarray]:
    """points.csv -> (ids, coordinates); header id,x1,...,xd."""
    header, rows = _read_rows(path)
    if header[0] != "id" or any(h != f"x{i + 1}" for i, h in enumerate(header[1:])) or len(header) < 3:
        raise SchemaError(f"{path}: header {header} does not match id,x1,...,xd")
    data = _parse_floats(path, rows, len(header))
    return data[:, 0].astype(np.int64), data[:, 1:]


def load_tree(path) -> np.ndarray:
    """tree.csv -> (n, 2) child_id,parent_id int array."""
    header, rows = _read_rows(path)
    _expect(path, header, TREE_HEADER)
    data = _parse_floats(path, rows, 2)
    if not np.all(data == np.floor(data)):
        raise SchemaError(f"{path}: ids must be integers")
    return data.astype(np.int64)


def load_straightness(path) -> np.ndarray:
    header, rows = _read_rows(path)
    _expect(path, header, STRAIGHTNESS_HEADER)
    return _parse_floats(path, rows, 3)


def load_trace(path) -> tuple[int, np.ndarray, list[str]]:
    """trace.csv -> (dimension, data array, column names)."""
    header, rows = _read_rows(path)
    m = [re.fullmatch(r"x(\d+)", h) for h in header]
    d = sum(1 for x in m if x)
    want = (
        ["n"]
        + [f"x{i + 1}" for i in range(d)]
        + ["R", "r", "L", "is_tau", "is_Q", "is_w", "theta"]
    )
    if d < 2 or header != want:
        raise SchemaError(f"{path}: header {header} does not match trace schema")
    return d, _parse_floats(path, rows, len(header)), header


def load_tail(path) -> tuple[np.ndarray, bool]:
    """tail CSV -> (data, has_bound); header threshold,survival,half_width,trials[,bound]."""
    header, rows = _read_rows(path)
    if header == TAIL_HEADER:
        return _parse_floats(path, rows, 4), False
    if header == TAIL_HEADER + ["bound"]:
        return _parse_floats(path, rows, 5), True
    raise SchemaError(f"{path}: header {header} does not match tail schema")


def load_deviation(path) -> np.ndarray:
    header, rows = _read_rows(path)
    _expect(path, header, DEVIATION_HEADER)
    data = _parse_floats(path, rows, 6)
    if data.shape[0] < 1:
        raise SchemaError(f"{path}: no rows")
    return data
