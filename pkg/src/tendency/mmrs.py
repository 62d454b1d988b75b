"""Maximin random sampling (MMRS).

Pick ``k'`` mutually distant *distinguished* objects by greedy maximin,
group every object with its nearest distinguished object, then fill the
sample by drawing from each group in proportion to its size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tendency.matrix import check_finite, distances_to


@dataclass(frozen=True)
class MmrsSample:
    distinguished: np.ndarray   # object indices, in selection order
    sample: np.ndarray          # sorted object indices, includes distinguished
    group_of: np.ndarray        # per object: position in `distinguished` of its group


def _as_features(features) -> np.ndarray:
    x = check_finite(features, "feature matrix")
    return x[:, None] if x.ndim == 1 else x


def _maximin(x: np.ndarray, k_prime: int, metric: str = "euclidean") -> tuple[np.ndarray, np.ndarray]:
    """Greedy maximin; also returns the (k', N) distance table it built."""
    total = x.shape[0]
    if not 1 <= k_prime <= total:
        raise ValueError(f"k_prime must lie in [1, {total}], got {k_prime}")
    centroid = x.mean(axis=0)
    first = int(np.argmax(distances_to(x, centroid, metric)[0]))

    chosen = [first]
    table = np.empty((k_prime, total))
    table[0] = distances_to(x, x[first], metric)[0]
    nearest = table[0].copy()
    taken = np.zeros(total, dtype=bool)
    taken[first] = True
    for i in range(1, k_prime):
        score = np.where(taken, -np.inf, nearest)
        nxt = int(np.argmax(score))
        chosen.append(nxt)
        taken[nxt] = True
        table[i] = distances_to(x, x[nxt], metric)[0]
        np.minimum(nearest, table[i], out=nearest)
    return np.asarray(chosen, dtype=np.int64), table


def maximin_select(features, k_prime: int, metric: str = "euclidean") -> np.ndarray:
    """Indices of `k_prime` distinguished objects.

    The first is the object farthest from the centroid; each next one
    maximises its minimum distance to those already chosen.  Ties go to the
    lowest object index.
    """
    return _maximin(_as_features(features), k_prime, metric)[0]


def proportional_quotas(sizes, n: int) -> np.ndarray:
    """Split `n` draws over groups by largest remainder, at least one per non-empty group."""
    sizes = np.asarray(sizes, dtype=np.int64)
    total = int(sizes.sum())
    exact = n * sizes / total
    quota = np.floor(exact).astype(np.int64)
    remainder = exact - quota
    short = n - int(quota.sum())
    # stable sort keeps the lowest group index first among equal remainders
    for g in np.argsort(-remainder, kind="stable")[:short]:
        quota[g] += 1
    for g in np.flatnonzero((quota == 0) & (sizes > 0)):
        donor = int(np.argmax(quota))
        quota[donor] -= 1
        quota[g] = 1
    return quota


def mmrs_sample(features, k_prime: int, n: int, seed: int = 0, metric: str = "euclidean") -> MmrsSample:
    x = _as_features(features)
    total = x.shape[0]
    if not k_prime <= n <= total:
        raise ValueError(f"need k_prime <= n <= {total}, got k_prime={k_prime}, n={n}")
    distinguished, table = _maximin(x, k_prime, metric)

    group_of = np.argmin(table, axis=0)
    group_of[distinguished] = np.arange(k_prime)
    sizes = np.bincount(group_of, minlength=k_prime)
    quota = proportional_quotas(sizes, n)

    rng = np.random.default_rng(seed)
    picked = [distinguished]
    for g in range(k_prime):
        members = np.flatnonzero(group_of == g)
        members = members[members != distinguished[g]]
        extra = int(quota[g]) - 1
        if extra > 0:
            picked.append(rng.choice(members, size=extra, replace=False))
    sample = np.sort(np.concatenate(picked)).astype(np.int64)
    return MmrsSample(distinguished, sample, group_of.astype(np.int64))
