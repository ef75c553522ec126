"""CSV dumps with fixed headers.

Floats are written with ``repr`` so that identical arrays always produce
identical bytes.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import PyrTensor, TriField

TRIFIELD_HEADER = ("i", "j", "row", "col", "value")
PYRAMID_HEADER = ("i", "j", "k", "row", "col", "value")
NODE_HEADER = ("k", "row", "col", "value")
ESTIMATE_HEADER = ("quantity", "mean", "std_error", "n", "seed")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence], append: bool = False) -> Path:
    """Write ``rows`` under ``header``; with ``append`` the header is written only once."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not (append and path.exists())
    with open(path, "a" if not fresh else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def _matrix_entries(values: np.ndarray):
    if values.ndim == 1:
        values = values[:, None]
    for r in range(values.shape[0]):
        for c in range(values.shape[1]):
            yield r, c, values[r, c]


def trifield_rows(field: TriField):
    N = field.N
    for i in range(N + 1):
        for j in range(i + 1 if field.diagonal else i):
            for r, c, val in _matrix_entries(field.values[i, j]):
                yield i, j, r, c, val


def pyramid_rows(P: PyrTensor):
    N = P.values.shape[0] - 1
    for i in range(N + 1):
        for j in range(N + 1):
            for k in range(min(i, j) + 1):
                for r, c, val in _matrix_entries(P.values[i, j, k]):
                    yield i, j, k, r, c, val


def dump_trifield(field: TriField, path) -> Path:
    """Entries ``j < i`` (``j <= i`` for diagonal fields) as ``(i, j, row, col, value)``."""
    return write_rows(path, TRIFIELD_HEADER, trifield_rows(field))


def dump_pyramid(P: PyrTensor, path) -> Path:
    """Entries ``k <= min(i, j)`` as ``(i, j, k, row, col, value)``."""
    return write_rows(path, PYRAMID_HEADER, pyramid_rows(P))


def dump_nodes(values: np.ndarray, path) -> Path:
    """Per-node matrices or vectors ``(N+1, r[, c])`` as ``(k, row, col, value)``."""
    values = np.asarray(values, dtype=float)
    rows = ((k,) + e for k in range(values.shape[0]) for e in _matrix_entries(values[k]))
    return write_rows(path, NODE_HEADER, rows)


def load_trifield(path, diagonal: bool = False) -> TriField:
    """Read a file written by :func:`dump_trifield`."""
    rows = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    if rows.size == 0:
        raise ValueError(f"{path} holds no entries")
    idx = rows[:, :4].astype(int)
    n = int(idx[:, :2].max()) + 1
    shape = (n, n, int(idx[:, 2].max()) + 1, int(idx[:, 3].max()) + 1)
    values = np.zeros(shape)
    values[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]] = rows[:, 4]
    return TriField(values, diagonal=diagonal)


def dump_theta(Theta: np.ndarray, path) -> Path:
    """One path of ``Theta (N+1, N+1, d)`` as ``(i, j, component, value)`` for ``j <= i``."""
    n, _, d = Theta.shape
    rows = ((i, j, a, Theta[i, j, a]) for i in range(n) for j in range(i + 1) for a in range(d))
    return write_rows(path, ("i", "j", "component", "value"), rows)


def write_estimates(path, estimates, seed: int, append: bool = False) -> Path:
    """Rows ``(quantity, mean, std_error, n, seed)`` for ``{quantity: McEstimate}``."""
    rows = ((q, e.mean, e.std_error, e.n, int(seed)) for q, e in estimates.items())
    return write_rows(path, ESTIMATE_HEADER, rows, append=append)
