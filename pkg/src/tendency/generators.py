"""Synthetic data with planted cluster and co-cluster structure.

All generators are pure functions of their arguments and seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class Example1Config:
    """Row and column objects live in the plane; entries are row-to-column distances.

    Row clusters 0 and 1 share their centres with column clusters 0 and 1,
    which makes two low-dissimilarity co-cluster blocks.  Centres sit on a
    grid with spacing `spacing` while per-axis standard deviations stay in
    `std_range`, so clusters are >= 10 pooled standard deviations apart.
    """

    n_rows: int = 4000
    n_cols: int = 3000
    row_centers: tuple[tuple[float, float], ...] = ((0.0, 0.0), (20.0, 0.0), (0.0, 20.0), (20.0, 20.0))
    col_centers: tuple[tuple[float, float], ...] = ((0.0, 0.0), (20.0, 0.0), (40.0, 10.0))
    std_range: tuple[float, float] = (0.6, 1.2)


def _split(total: int, k: int) -> np.ndarray:
    sizes = np.full(k, total // k)
    sizes[: total % k] += 1
    return sizes


def _gaussian_cloud(rng: np.random.Generator, center, size: int, std_range) -> np.ndarray:
    stds = rng.uniform(*std_range, size=2)
    angle = rng.uniform(0.0, np.pi)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    cov = rot @ np.diag(stds ** 2) @ rot.T
    return rng.multivariate_normal(np.asarray(center, dtype=float), cov, size=size)


def gen_example1(seed: int = 0, config: Example1Config = Example1Config()):
    """Rectangular dissimilarity data with 4 row clusters, 3 column clusters, 2 co-clusters.

    Returns ``(matrix, row_labels, col_labels)``; rows and columns are shuffled.
    """
    rng = np.random.default_rng(seed)

    def objects(centers, total):
        sizes = _split(total, len(centers))
        pts = np.vstack([_gaussian_cloud(rng, c, s, config.std_range) for c, s in zip(centers, sizes)])
        labels = np.repeat(np.arange(len(centers)), sizes)
        order = rng.permutation(total)
        return pts[order], labels[order]

    rows, row_labels = objects(config.row_centers, config.n_rows)
    cols, col_labels = objects(config.col_centers, config.n_cols)
    return cdist(rows, cols), row_labels, col_labels


@dataclass(frozen=True)
class PlantedBlock:
    rows: np.ndarray
    cols: np.ndarray


def gen_example2(
    seed: int = 0,
    shape: tuple[int, int] = (10000, 8000),
    block_shapes: tuple[tuple[int, int], ...] = ((1000, 2000), (2000, 1000)),
    background: tuple[float, float] = (0.0, 3.0),
    planted: tuple[float, float] = (0.0, 1.0),
    contiguous: bool = False,
):
    """Uniform background with uniform low-valued blocks at random rows and columns.

    Block row sets are mutually disjoint, and so are block column sets.
    With ``contiguous=True`` blocks occupy consecutive index ranges instead.
    Returns ``(matrix, [PlantedBlock, ...])``.
    """
    big_m, big_n = shape
    if sum(b[0] for b in block_shapes) > big_m or sum(b[1] for b in block_shapes) > big_n:
        raise ValueError("planted blocks do not fit into the matrix")
    rng = np.random.default_rng(seed)
    d = rng.uniform(*background, size=shape)
    if contiguous:
        row_pool, col_pool = np.arange(big_m), np.arange(big_n)
    else:
        row_pool, col_pool = rng.permutation(big_m), rng.permutation(big_n)

    blocks = []
    r0 = c0 = 0
    for br, bc in block_shapes:
        rows = np.sort(row_pool[r0:r0 + br])
        cols = np.sort(col_pool[c0:c0 + bc])
        r0, c0 = r0 + br, c0 + bc
        d[np.ix_(rows, cols)] = rng.uniform(*planted, size=(br, bc))
        blocks.append(PlantedBlock(rows, cols))
    return d, blocks


def gen_example2_scaled(seed: int = 0, contiguous: bool = False):
    """The 2000 x 1600 variant: every dimension divided by five."""
    return gen_example2(
        seed,
        shape=(2000, 1600),
        block_shapes=((200, 400), (400, 200)),
        contiguous=contiguous,
    )


def gen_gaussian2d(n_total: int, k_clusters: int, seed: int = 0, radius: float = 30.0, std: float = 1.0):
    """`k_clusters` isotropic 2-D Gaussians with centres evenly spaced on a circle.

    Returns ``(points, labels)``.  Cluster sizes differ by at most one.
    """
    if k_clusters < 1 or n_total < k_clusters:
        raise ValueError("need k_clusters >= 1 and n_total >= k_clusters")
    rng = np.random.default_rng(seed)
    sizes = _split(n_total, k_clusters)
    angles = 2.0 * np.pi * np.arange(k_clusters) / k_clusters
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)]) if k_clusters > 1 else np.zeros((1, 2))
    labels = np.repeat(np.arange(k_clusters), sizes)
    points = centers[labels] + rng.normal(scale=std, size=(n_total, 2))
    order = rng.permutation(n_total)
    return points[order], labels[order]
