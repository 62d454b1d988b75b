"""Matrix validation, Euclidean distances and the dense text matrix format.

Matrices are plain ``numpy`` arrays.  A square dissimilarity matrix is a
symmetric, non-negative array with a zero diagonal; a rectangular relational
matrix is any finite 2-D array, and its *performance* flavour only holds
values in ``{-1} U [0, 1]`` (``-1`` marks "no observation").

File format::

    <rows> <cols>
    v v v ...        # `rows` lines of `cols` numbers
    # optional trailing comment lines
"""

from __future__ import annotations

import os
from typing import Iterable

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

SENTINEL = -1.0

# rows per block when streaming distance computations over large matrices
_CHUNK_ROWS = 512


class MatrixFormatError(ValueError):
    """Malformed matrix or labels file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _first_bad_cell(values: np.ndarray) -> tuple[int, ...]:
    bad = np.argwhere(~np.isfinite(values))
    return tuple(int(i) for i in bad[0])


def check_finite(values: np.ndarray, name: str = "matrix") -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        cell = _first_bad_cell(values)
        raise ValueError(f"{name} has a non-finite value {values[cell]!r} at cell {cell}")
    return values


def check_dissimilarity(d: np.ndarray, atol: float = 0.0) -> np.ndarray:
    """Validate a square dissimilarity matrix and return it as a float array."""
    d = check_finite(d, "dissimilarity matrix")
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"dissimilarity matrix must be square, got shape {d.shape}")
    if np.any(d < 0):
        cell = tuple(int(i) for i in np.argwhere(d < 0)[0])
        raise ValueError(f"dissimilarity matrix has a negative entry at cell {cell}")
    if np.any(np.abs(np.diag(d)) > atol):
        raise ValueError("dissimilarity matrix must have a zero diagonal")
    if np.any(np.abs(d - d.T) > atol):
        cell = tuple(int(i) for i in np.argwhere(np.abs(d - d.T) > atol)[0])
        raise ValueError(f"dissimilarity matrix is not symmetric at cell {cell}")
    return d


def check_performance(d: np.ndarray) -> np.ndarray:
    """Validate a performance matrix: every entry is -1 or lies in [0, 1]."""
    d = check_finite(d, "performance matrix")
    if d.ndim != 2:
        raise ValueError(f"performance matrix must be 2-D, got shape {d.shape}")
    ok = (d == SENTINEL) | ((d >= 0.0) & (d <= 1.0))
    if not np.all(ok):
        cell = tuple(int(i) for i in np.argwhere(~ok)[0])
        raise ValueError(f"performance matrix value {d[cell]!r} at cell {cell} is outside {{-1}} U [0, 1]")
    return d


def pairwise_dissimilarity(features: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Return the ``n x n`` dissimilarity matrix of the rows of `features`.

    ``metric="masked"`` ignores coordinates where either vector holds the -1
    sentinel and rescales the remaining squared sum to the full dimension.
    """
    x = check_finite(features, "feature matrix")
    if x.ndim == 1:
        x = x[:, None]
    if metric == "masked":
        d = distances_to(x, x, metric="masked")
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        return d
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    if x.shape[0] == 0:
        return np.zeros((0, 0))
    if x.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(x, metric="euclidean"))


def distances_to(x: np.ndarray, queries: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Euclidean distances from every row of `x` to every row of `queries`.

    Returns an array of shape ``(len(queries), len(x))``.  `x` may be a
    non-contiguous view (e.g. the transpose of a large matrix); it is
    processed in row blocks so no full copy is made.
    """
    queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=float)
    if metric not in ("euclidean", "masked"):
        raise ValueError(f"unsupported metric {metric!r}")
    out = np.empty((queries.shape[0], x.shape[0]))
    for start in range(0, x.shape[0], _CHUNK_ROWS):
        block = np.ascontiguousarray(x[start:start + _CHUNK_ROWS], dtype=float)
        if metric == "euclidean":
            out[:, start:start + block.shape[0]] = cdist(queries, block)
        else:
            out[:, start:start + block.shape[0]] = _masked_block(queries, block)
    return out


def _masked_block(q: np.ndarray, b: np.ndarray) -> np.ndarray:
    qm = (q != SENTINEL).astype(float)
    bm = (b != SENTINEL).astype(float)
    qv, bv = q * qm, b * bm
    sq = (qv * qv) @ bm.T + qm @ (bv * bv).T - 2.0 * (qv @ bv.T)
    common = qm @ bm.T
    dim = q.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.maximum(sq, 0.0) * dim / common
    return np.sqrt(np.where(common > 0, scaled, float(dim)))


def write_matrix(matrix: np.ndarray, path: str | os.PathLike, comments: Iterable[str] = ()) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        if m.size:
            np.savetxt(fh, m, fmt="%.17g", delimiter=" ")
        else:
            fh.write("\n" * m.shape[0])
        for line in comments:
            fh.write(f"# {line}\n")


def read_matrix(path: str | os.PathLike) -> np.ndarray:
    """Read a dense text matrix.  Raises :class:`MatrixFormatError` on bad input."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().split("\n")

    header = lines[0].split() if lines else []
    if len(header) != 2:
        raise MatrixFormatError("header must be '<rows> <cols>'", line=1)
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise MatrixFormatError(f"header must hold two integers, got {lines[0]!r}", line=1) from None
    if rows < 0 or cols < 0:
        raise MatrixFormatError("negative dimension in header", line=1)

    out = np.empty((rows, cols))
    for i in range(rows):
        lineno = i + 2
        if lineno > len(lines) or lines[lineno - 1].lstrip().startswith("#"):
            raise MatrixFormatError(f"expected {rows} data rows, found {i}", line=lineno)
        tokens = lines[lineno - 1].split()
        if len(tokens) != cols:
            raise MatrixFormatError(f"expected {cols} values, found {len(tokens)}", line=lineno)
        try:
            out[i] = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_number(t))
            raise MatrixFormatError(f"non-numeric token {bad!r}", line=lineno) from None

    for k in range(rows + 1, len(lines)):
        text = lines[k].strip()
        if text and not text.startswith("#"):
            raise MatrixFormatError("unexpected data after the last row", line=k + 1)
    return out


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def write_labels(labels: Iterable[int], path: str | os.PathLike) -> None:
    """One integer per line.  Also used for index lists (orderings, samples)."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")


def read_labels(path: str | os.PathLike) -> np.ndarray:
    values = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                values.append(int(text))
            except ValueError:
                raise MatrixFormatError(f"expected an integer, got {text!r}", line=lineno) from None
    return np.asarray(values, dtype=np.int64)
