"""sco-iVAT: scalable co-clustering of rectangular relational data.

Rows of the ``M x N`` matrix are treated as N-dimensional objects and
columns as M-dimensional objects.  Each side is MMRS-sampled, ordered with
iVAT and cut into single-linkage clusters; the sampled submatrix reordered by
both orderings is the RRI.  Co-cluster blocks are (row cluster, column
cluster) pairs whose mean departs from the global mean by at least ``tau``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from tendency.matrix import SENTINEL, check_finite, distances_to, pairwise_dissimilarity
from tendency.mmrs import MmrsSample, mmrs_sample
from tendency.vat import VatOrdering, cut_clusters, ivat_reordered, suggest_k

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoBlock:
    row_cluster: int
    col_cluster: int
    rows: tuple[int, int]        # half-open position range in the reordered matrix
    cols: tuple[int, int]
    block_mean: float            # nan when every cell is a sentinel
    global_mean: float
    flagged: bool

    @property
    def defined(self) -> bool:
        return not np.isnan(self.block_mean)


@dataclass
class CoClusterResult:
    row_perm: np.ndarray          # sampled row indices, iVAT order
    col_perm: np.ndarray
    row_rdi: np.ndarray           # iVAT-transformed D_r, iVAT order
    col_rdi: np.ndarray
    reordered: np.ndarray         # original[row_perm][:, col_perm]
    row_labels: np.ndarray        # label of row_perm[i]
    col_labels: np.ndarray
    row_ordering: VatOrdering
    col_ordering: VatOrdering
    row_sample: MmrsSample | None = None
    col_sample: MmrsSample | None = None
    all_row_labels: np.ndarray | None = None
    all_col_labels: np.ndarray | None = None
    blocks: list[CoBlock] = field(default_factory=list)


def _sample_side(x: np.ndarray, size: int, k_prime: int, seed: int, metric: str) -> tuple[np.ndarray, MmrsSample | None]:
    total = x.shape[0]
    if size > total:
        raise ValueError(f"sample size {size} exceeds the {total} available objects")
    if size == total:
        return np.arange(total), None
    s = mmrs_sample(x, min(k_prime, size), size, seed, metric=metric)
    return s.sample, s


def _order_side(x: np.ndarray, picked: np.ndarray, k: int | None, metric: str):
    d = pairwise_dissimilarity(x[picked], metric=metric)
    ordering, rdi = ivat_reordered(d)
    if k is None:
        k = suggest_k(ordering) if ordering.n > 1 else 1
    local = cut_clusters(ordering, k)
    perm = picked[ordering.permutation]
    return ordering, rdi, perm, local[ordering.permutation]


def sco_ivat(
    d: np.ndarray,
    m: int,
    n: int,
    k_prime: int = 10,
    k_rows: int | None = None,
    k_cols: int | None = None,
    seed: int = 0,
    *,
    metric: str = "euclidean",
    extend: bool = False,
    tau: float | None = None,
) -> CoClusterResult:
    """Run sco-iVAT on the rectangular matrix `d`.

    Sampling is skipped on a side whose sample size equals its object count.
    ``k_rows``/``k_cols`` default to :func:`suggest_k`.  With ``extend=True``
    the labels are propagated to every row and column by nearest sampled
    object.  Blocks are extracted with threshold `tau` (default: a quarter
    of the value range).
    """
    d = check_finite(d, "relational matrix")
    if d.ndim != 2:
        raise ValueError(f"relational matrix must be 2-D, got shape {d.shape}")
    big_m, big_n = d.shape
    if not 1 <= m <= big_m:
        raise ValueError(f"m must lie in [1, {big_m}], got {m}")
    if not 1 <= n <= big_n:
        raise ValueError(f"n must lie in [1, {big_n}], got {n}")
    for name, k, size in (("k_rows", k_rows, m), ("k_cols", k_cols, n)):
        if k is not None and not 1 <= k <= size:
            raise ValueError(f"{name} must lie in [1, {size}], got {k}")

    rows, row_sample = _sample_side(d, m, k_prime, seed, metric)
    cols, col_sample = _sample_side(d.T, n, k_prime, seed, metric)
    log.info("sco-iVAT sampled %d of %d rows and %d of %d columns", m, big_m, n, big_n)

    row_ord, row_rdi, rp, row_labels = _order_side(d, rows, k_rows, metric)
    col_ord, col_rdi, cp, col_labels = _order_side(d.T, cols, k_cols, metric)

    result = CoClusterResult(
        row_perm=rp,
        col_perm=cp,
        row_rdi=row_rdi,
        col_rdi=col_rdi,
        reordered=d[np.ix_(rp, cp)],
        row_labels=row_labels,
        col_labels=col_labels,
        row_ordering=row_ord,
        col_ordering=col_ord,
        row_sample=row_sample,
        col_sample=col_sample,
    )
    if extend:
        result.all_row_labels = extend_labels(d[rp], row_labels, d, sampled_index=rp, metric=metric)
        result.all_col_labels = extend_labels(d.T[cp], col_labels, d.T, sampled_index=cp, metric=metric)
    result.blocks = extract_coclusters(result, tau)
    return result


def extend_labels(
    sampled_features,
    sampled_labels,
    all_features,
    *,
    sampled_index=None,
    metric: str = "euclidean",
) -> np.ndarray:
    """Give every object the label of its nearest sampled object.

    Ties go to the lowest sampled position.  When `sampled_index` maps the
    sampled objects into `all_features`, those objects keep their own labels.
    """
    s = check_finite(sampled_features, "sampled features")
    s = s[:, None] if s.ndim == 1 else s
    labels = np.asarray(sampled_labels)
    if s.shape[0] == 0:
        raise ValueError("cannot extend labels from an empty sample")
    if len(labels) != s.shape[0]:
        raise ValueError("one label per sampled object is required")
    x = np.asarray(all_features, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    if x.shape[1] != s.shape[1]:
        raise ValueError(f"feature width mismatch: {x.shape[1]} vs {s.shape[1]}")

    if metric == "euclidean":
        nearest = _nearest_euclidean(s, x)
    else:
        nearest = np.empty(x.shape[0], dtype=np.int64)
        for start in range(0, x.shape[0], 1024):
            nearest[start:start + 1024] = np.argmin(distances_to(s, x[start:start + 1024], metric), axis=1)
    out = labels[nearest]
    if sampled_index is not None:
        out[np.asarray(sampled_index)] = labels
    return out


def _nearest_euclidean(s: np.ndarray, x: np.ndarray, chunk: int = 1024) -> np.ndarray:
    # Gram-matrix screening, then exact distances for near-tied candidates.
    s_sq = np.einsum("ij,ij->i", s, s)
    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], chunk):
        q = np.ascontiguousarray(x[start:start + chunk])
        q_sq = np.einsum("ij,ij->i", q, q)
        approx = q_sq[:, None] + s_sq[None, :] - 2.0 * (q @ s.T)
        lo = approx.min(axis=1)
        slack = 1e-9 * (q_sq + s_sq.max()) + 1e-12
        cand = approx <= (lo + slack)[:, None]
        for i in range(q.shape[0]):
            idx = np.flatnonzero(cand[i])
            if len(idx) == 1:
                out[start + i] = idx[0]
            else:
                exact = np.sqrt(((s[idx] - q[i]) ** 2).sum(axis=1))
                out[start + i] = idx[int(np.argmin(exact))]
    return out


def _runs(labels: np.ndarray) -> list[tuple[int, np.ndarray]]:
    """Cluster ids in order of appearance with their positions."""
    seen: dict[int, list[int]] = {}
    for pos, lab in enumerate(labels):
        seen.setdefault(int(lab), []).append(pos)
    return [(lab, np.asarray(p)) for lab, p in seen.items()]


def extract_coclusters(result: CoClusterResult, tau: float | None = None) -> list[CoBlock]:
    """Mean of every (row cluster, column cluster) block of the reordered matrix.

    Sentinel (-1) cells are ignored in both block and global means.  A block
    is flagged when its mean is at least `tau` away from the global mean
    (and differs from it at all); all-sentinel blocks are never flagged.
    """
    r = result.reordered
    valid = r != SENTINEL
    if not valid.any():
        global_mean, value_range = float("nan"), 0.0
    else:
        vals = r[valid]
        global_mean = float(vals.mean())
        value_range = float(vals.max() - vals.min())
    if tau is None:
        tau = 0.25 * value_range

    blocks = []
    for rl, rpos in _runs(result.row_labels):
        for cl, cpos in _runs(result.col_labels):
            sub = r[np.ix_(rpos, cpos)]
            mask = valid[np.ix_(rpos, cpos)]
            if mask.any():
                mean = float(sub[mask].mean())
                dev = abs(mean - global_mean)
                # rounding in the two means must not count as a deviation
                flagged = dev >= tau and dev > 1e-12 * max(1.0, abs(global_mean))
            else:
                mean, flagged = float("nan"), False
            blocks.append(CoBlock(
                row_cluster=rl,
                col_cluster=cl,
                rows=(int(rpos.min()), int(rpos.max()) + 1),
                cols=(int(cpos.min()), int(cpos.max()) + 1),
                block_mean=mean,
                global_mean=global_mean,
                flagged=bool(flagged),
            ))
    return blocks
