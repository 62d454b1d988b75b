"""VAT reordering, the iVAT minimax-distance transform and single-linkage cuts.

VAT orders objects with Prim's algorithm started from the object owning the
largest dissimilarity.  Consecutive objects in that order are joined by MST
edges, so cutting the largest MST edges yields single-linkage clusters that
show up as contiguous dark blocks on the diagonal of the reordered image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tendency.matrix import check_dissimilarity


@dataclass(frozen=True)
class VatOrdering:
    """Result of :func:`vat_reorder`.

    ``permutation[t]`` is the object placed at position ``t``;
    ``insertion_distances[t]`` is the MST edge weight that attached it
    (0 for the first object); ``mst_edges`` holds ``(parent, child, weight)``
    in insertion order using original object indices.
    """

    permutation: np.ndarray
    insertion_distances: np.ndarray
    mst_edges: tuple[tuple[int, int, float], ...]

    @property
    def n(self) -> int:
        return len(self.permutation)

    @property
    def parents(self) -> np.ndarray:
        """Parent position (in VAT order) of each position; -1 for the root."""
        pos = np.empty(self.n, dtype=np.int64)
        pos[self.permutation] = np.arange(self.n)
        out = np.full(self.n, -1, dtype=np.int64)
        for t, (parent, _, _) in enumerate(self.mst_edges, start=1):
            out[t] = pos[parent]
        return out


def vat_reorder(d: np.ndarray) -> tuple[VatOrdering, np.ndarray]:
    """Order the objects of `d` by Prim's algorithm (VAT).

    The start object is the row of the first maximal entry in row-major
    order.  Every later step picks the unselected object nearest to the
    selected set; ties go to the lowest object index.  Returns the ordering
    and ``d`` permuted on both axes.
    """
    d = check_dissimilarity(d)
    n = d.shape[0]
    if n == 0:
        raise ValueError("cannot reorder an empty dissimilarity matrix")

    start = int(np.argmax(d)) // n
    perm = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    perm[0], dist[0] = start, 0.0

    selected = np.zeros(n, dtype=bool)
    selected[start] = True
    best = d[start].copy()
    parent = np.full(n, start, dtype=np.int64)
    best[start] = np.inf
    edges = []
    for t in range(1, n):
        j = int(np.argmin(best))
        perm[t], dist[t] = j, best[j]
        edges.append((int(parent[j]), j, float(best[j])))
        selected[j] = True
        best[j] = np.inf
        row = d[j]
        closer = (row < best) & ~selected
        best[closer] = row[closer]
        parent[closer] = j

    ordering = VatOrdering(perm, dist, tuple(edges))
    return ordering, d[np.ix_(perm, perm)]


def ivat_reordered(d: np.ndarray, ordering: VatOrdering | None = None) -> tuple[VatOrdering, np.ndarray]:
    """Minimax (iVAT) distances laid out in VAT order.

    Uses the in-order recursion: the object at position ``r`` reaches every
    earlier object through its MST parent ``j``, so
    ``D'[r, c] = max(w(r, j), D'[j, c])`` for ``c < r``.
    """
    if ordering is None:
        ordering, _ = vat_reorder(d)
    n = ordering.n
    parents = ordering.parents
    w = ordering.insertion_distances
    out = np.zeros((n, n))
    for r in range(1, n):
        j = parents[r]
        out[r, :r] = np.maximum(w[r], out[j, :r])
        out[r, j] = w[r]
    out = out + out.T
    return ordering, out


def ivat_transform(d: np.ndarray) -> np.ndarray:
    """Replace each dissimilarity by its minimax path distance, in input order."""
    d = check_dissimilarity(d)
    if d.shape[0] == 0:
        return d.copy()
    ordering, reordered = ivat_reordered(d)
    inv = np.empty(ordering.n, dtype=np.int64)
    inv[ordering.permutation] = np.arange(ordering.n)
    return reordered[np.ix_(inv, inv)]


def minimax_oracle(d: np.ndarray, max_n: int = 60) -> np.ndarray:
    """Brute-force minimax distances by min-max relaxation to a fixpoint.

    Independent of the MST: relaxes ``d'(i,j) <- min(d'(i,j), max(d'(i,k), d'(k,j)))``
    over every intermediate object ``k``.  Refuses inputs larger than `max_n`.
    """
    d = check_dissimilarity(d)
    n = d.shape[0]
    if n > max_n:
        raise ValueError(f"minimax_oracle refuses n={n}; the bound is {max_n}")
    out = d.copy()
    while True:
        prev = out.copy()
        for k in range(n):
            out = np.minimum(out, np.maximum(out[:, k:k + 1], out[k:k + 1, :]))
        if np.array_equal(out, prev):
            return out


def cut_clusters(ordering: VatOrdering, k: int) -> np.ndarray:
    """Single-linkage labels from removing the ``k - 1`` largest MST edges.

    Equal weights are broken by removing the later-inserted edge first.
    Labels are indexed by original object and numbered in order of first
    appearance along the VAT ordering.
    """
    n = ordering.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    edges = ordering.mst_edges
    # sort key: heaviest first, then latest insertion first
    order = sorted(range(len(edges)), key=lambda t: (-edges[t][2], -t))
    removed = set(order[:k - 1])

    root = list(range(n))

    def find(a: int) -> int:
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    for t, (p, c, _) in enumerate(edges):
        if t not in removed:
            root[find(p)] = find(c)

    labels = np.full(n, -1, dtype=np.int64)
    names: dict[int, int] = {}
    for obj in ordering.permutation:
        labels[obj] = names.setdefault(find(int(obj)), len(names))
    return labels


def suggest_k(ordering: VatOrdering, max_k: int | None = None) -> int:
    """Gap heuristic: 1 + the number of outlying MST edges.

    An edge is outlying when its weight exceeds mean + 3 std of the other
    MST edges.  Leaving the edge out of its own reference statistics lets a
    single long edge among a handful of short ones register.
    """
    if ordering.n < 2:
        raise ValueError("suggest_k needs at least two objects")
    weights = np.asarray([e[2] for e in ordering.mst_edges])
    m = len(weights)
    if m < 2 or np.ptp(weights) == 0:
        return 1
    w = weights - weights.mean()      # centring keeps the moment sums well conditioned
    s, q = w.sum(), (w * w).sum()
    others_mean = (s - w) / (m - 1)
    others_var = np.maximum((q - w * w) / (m - 1) - others_mean ** 2, 0.0)
    k = 1 + int(np.count_nonzero(w > others_mean + 3.0 * np.sqrt(others_var)))
    if max_k is not None:
        k = min(k, max_k)
    return k
