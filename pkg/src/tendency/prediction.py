"""Timely-pickup classification and mRmR predictor ranking.

Each booking becomes one row: an hourgroup one-hot, a weekend flag, and the
five aggregated measures of every grouping looked up by the booking's own
keys.  Lookups that find no key are filled with the training mean and
flagged in a per-grouping ``__missing`` column.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from tendency.features import GROUPINGS, MEASURES, aggregate_all

log = logging.getLogger(__name__)

AGGREGATE_SOURCES = ("train_only", "all")
SPLIT_RATIOS = (0.64, 0.20, 0.16)


@dataclass
class LabeledDataset:
    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray                          # 1 = late, 0 = timely
    row_ids: np.ndarray | None = None      # positions in the source bookings frame
    fill_values: np.ndarray | None = None  # per-feature fill used for missing lookups

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(
            self.feature_names,
            self.X[idx],
            self.y[idx],
            None if self.row_ids is None else self.row_ids[idx],
            self.fill_values,
        )


def feature_names() -> list[str]:
    names = [f"hourgroup_{h}" for h in range(8)] + ["is_weekend"]
    for grouping in GROUPINGS:
        names += [f"{grouping}__{m}" for m in MEASURES]
        names.append(f"{grouping}__missing")
    return names


def _lookup(bookings: pd.DataFrame, table: pd.DataFrame, keys: list[str], exclude_self: bool):
    joined = bookings[keys].merge(table, on=keys, how="left", sort=False)
    vals = joined[MEASURES].to_numpy(dtype=float)
    missing = np.isnan(vals[:, 0])
    if exclude_self:
        total = vals[:, 0]
        rest = total - 1.0
        own = np.column_stack([
            bookings["diff_eta_ata_s"].to_numpy(float),
            bookings["is_late_pickup"].to_numpy(float),
            bookings["start_ata_s"].to_numpy(float),
            bookings["end_ata_s"].to_numpy(float),
        ])
        lates = vals[:, 2] * total / 100.0
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.column_stack([
                rest,
                (vals[:, 1] * total - own[:, 0]) / rest,
                100.0 * (np.rint(lates) - own[:, 1]) / rest,
                (vals[:, 3] * total - own[:, 2]) / rest,
                (vals[:, 4] * total - own[:, 3]) / rest,
            ])
        missing = missing | ~(rest > 0)
        vals[missing] = np.nan
    return vals, missing


def assemble_dataset(
    bookings: pd.DataFrame,
    tables: dict[str, pd.DataFrame],
    *,
    fill_values: np.ndarray | None = None,
    exclude_self: bool = False,
    labeled: bool = True,
) -> LabeledDataset:
    """Build the predictor matrix for derived `bookings`.

    With ``exclude_self=True`` each booking's own contribution is removed
    from the aggregates it is joined with (leave-one-out), so a training row
    never sees its own label.  `fill_values` defaults to the column means of
    the present lookups in this dataset.
    """
    if len(bookings) == 0:
        raise ValueError("cannot assemble a dataset from zero bookings")
    missing_tables = [g for g in GROUPINGS if g not in tables]
    if missing_tables:
        raise ValueError(f"aggregated tables missing for groupings {missing_tables}")
    n = len(bookings)
    hg = bookings["hourgroup"].to_numpy(dtype=np.int64)
    cols = [np.eye(8)[hg], (bookings["dow"].to_numpy() == "weekend").astype(float)[:, None]]
    for grouping, keys in GROUPINGS.items():
        vals, missing = _lookup(bookings, tables[grouping], keys, exclude_self)
        cols += [vals, missing.astype(float)[:, None]]
    X = np.hstack(cols)
    names = feature_names()

    if fill_values is None:
        present = ~np.isnan(X)
        sums = np.where(present, X, 0.0).sum(axis=0)
        counts = present.sum(axis=0)
        fill_values = np.divide(sums, counts, out=np.zeros(X.shape[1]), where=counts > 0)
    X = np.where(np.isnan(X), fill_values[None, :], X)

    y = bookings["is_late_pickup"].to_numpy(dtype=np.int64) if labeled else np.full(n, -1, dtype=np.int64)
    return LabeledDataset(names, X, y, np.arange(n), np.asarray(fill_values, dtype=float))


def balance_split(ds: LabeledDataset, seed: int = 0) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Undersample the majority class, then split each class 64:20:16 into train/test/validation."""
    y = np.asarray(ds.y)
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both classes must be present to balance")
    rng = np.random.default_rng(seed)
    size = min(len(pos), len(neg))
    parts: list[list[np.ndarray]] = [[], [], []]
    for cls in (neg, pos):
        chosen = rng.permutation(cls)[:size] if len(cls) > size else rng.permutation(cls)
        n_train = int(round(SPLIT_RATIOS[0] * size))
        n_test = int(round(SPLIT_RATIOS[1] * size))
        parts[0].append(chosen[:n_train])
        parts[1].append(chosen[n_train:n_train + n_test])
        parts[2].append(chosen[n_train + n_test:])
    out = []
    for p in parts:
        idx = np.concatenate(p)
        out.append(ds.subset(idx[rng.permutation(len(idx))]))
    return out[0], out[1], out[2]


def prepare_splits(bookings: pd.DataFrame, seed: int = 0, aggregate_source: str = "train_only"):
    """Balanced train/test/validation datasets from derived bookings.

    ``all`` joins every row with aggregates over the whole corpus (each
    booking sees its own outcome).  ``train_only`` aggregates over the
    bookings outside test and validation; training rows use leave-one-out
    aggregates.  Returns ``(train, test, validation, tables)``.
    """
    if aggregate_source not in AGGREGATE_SOURCES:
        raise ValueError(f"aggregate_source must be one of {AGGREGATE_SOURCES}, got {aggregate_source!r}")
    bookings = bookings.reset_index(drop=True)
    labels = LabeledDataset([], np.zeros((len(bookings), 0)), bookings["is_late_pickup"].to_numpy(np.int64),
                            np.arange(len(bookings)))
    tr, te, va = balance_split(labels, seed)

    if aggregate_source == "all":
        tables = aggregate_all(bookings)
        exclude = False
    else:
        held_out = np.zeros(len(bookings), dtype=bool)
        held_out[np.concatenate([te.row_ids, va.row_ids])] = True
        tables = aggregate_all(bookings[~held_out])
        exclude = True

    def build(ids, fill=None, loo=False):
        ds = assemble_dataset(bookings.iloc[ids], tables, fill_values=fill, exclude_self=loo)
        ds.row_ids = np.asarray(ids)
        return ds

    train = build(tr.row_ids, loo=exclude)
    test = build(te.row_ids, train.fill_values)
    val = build(va.row_ids, train.fill_values)
    return train, test, val, tables


# ---------------------------------------------------------------------------
# logistic regression

@dataclass
class LogisticModel:
    feature_names: list[str]
    bias: float
    weights: np.ndarray
    mean: np.ndarray
    std: np.ndarray                  # 0 marks a constant (unused) feature
    fill_values: np.ndarray
    loss_history: list[float] = field(default_factory=list, repr=False)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        used = self.std > 0
        Z = np.zeros_like(X, dtype=float)
        Z[:, used] = (X[:, used] - self.mean[used]) / self.std[used]
        return Z

    def log_odds(self, X: np.ndarray) -> np.ndarray:
        return self.bias + self.standardize(X) @ self.weights


def loss_and_grad(params: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood plus ``l2 * |w|^2 / 2``; ``params = [bias, w...]``."""
    b, w = params[0], params[1:]
    z = b + Z @ w
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
    r = (0.5 * (1.0 + np.tanh(0.5 * z)) - y) / len(y)
    grad = np.empty_like(params)
    grad[0] = r.sum()
    grad[1:] = Z.T @ r + l2 * w
    return loss, grad


def train_logistic(train: LabeledDataset, l2: float = 1e-4, max_iters: int = 5000, tol: float = 1e-8) -> LogisticModel:
    """Gradient descent with Armijo backtracking from an all-zero start."""
    X = np.asarray(train.X, dtype=float)
    y = np.asarray(train.y, dtype=float)
    if len(y) == 0 or X.ndim != 2:
        raise ValueError("training set is empty")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 0.0)
    used = std > 0
    Z = np.zeros_like(X)
    Z[:, used] = (X[:, used] - mean[used]) / std[used]

    params = np.zeros(X.shape[1] + 1)
    loss, grad = loss_and_grad(params, Z, y, l2)
    history = [loss]
    step = 1.0
    for it in range(max_iters):
        if np.max(np.abs(grad)) < tol:
            break
        gg = grad @ grad
        while True:
            trial = params - step * grad
            trial_loss, trial_grad = loss_and_grad(trial, Z, y, l2)
            if not np.isfinite(trial_loss):
                raise FloatingPointError(f"non-finite loss at iteration {it} (step {step:g})")
            if trial_loss <= loss - 0.5 * step * gg or step < 1e-20:
                break
            step *= 0.5
        if trial_loss > loss:
            break
        params, loss, grad = trial, trial_loss, trial_grad
        history.append(loss)
        step = min(step * 2.0, 1e6)
    log.info("logistic regression stopped after %d iterations, loss %.6g", len(history) - 1, loss)
    fill = train.fill_values if train.fill_values is not None else np.zeros(X.shape[1])
    return LogisticModel(list(train.feature_names), float(params[0]), params[1:].copy(), mean, std,
                         np.asarray(fill, dtype=float), history)


def predict_proba(model: LogisticModel, rows) -> np.ndarray | float:
    """Probability of class 1 (late) for one row or a matrix of rows."""
    X = np.asarray(rows, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != len(model.weights):
        raise ValueError(f"row width {X.shape[1]} does not match the model's {len(model.weights)} features")
    p = 0.5 * (1.0 + np.tanh(0.5 * model.log_odds(X)))
    p = np.clip(p, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
    return float(p[0]) if single else p


@dataclass(frozen=True)
class Evaluation:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total


def confusion(y_true, y_pred) -> Evaluation:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) == 0:
        raise ValueError("cannot evaluate on an empty set")
    return Evaluation(
        tn=int(np.sum((y_true == 0) & (y_pred == 0))),
        fp=int(np.sum((y_true == 0) & (y_pred == 1))),
        fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
    )


def evaluate(model: LogisticModel, ds: LabeledDataset) -> Evaluation:
    """Confusion counts at threshold 0.5 (p >= 0.5 predicts late)."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty set")
    p = predict_proba(model, ds.X)
    return confusion(ds.y, (p >= 0.5).astype(np.int64))


def save_model(model: LogisticModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("# logistic timely-pickup model: feature mean std weight fill\n")
        fh.write(f"bias {model.bias:.17g}\n")
        fh.write(f"features {len(model.weights)}\n")
        for name, mu, sd, w, f in zip(model.feature_names, model.mean, model.std, model.weights, model.fill_values):
            fh.write(f"{name} {mu:.17g} {sd:.17g} {w:.17g} {f:.17g}\n")


def load_model(path: str | os.PathLike) -> LogisticModel:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    try:
        if lines[0][0] != "bias" or lines[1][0] != "features":
            raise ValueError("expected 'bias' and 'features' lines")
        bias = float(lines[0][1])
        p = int(lines[1][1])
        rows = lines[2:2 + p]
        if len(rows) != p or any(len(r) != 5 for r in rows):
            raise ValueError(f"expected {p} feature lines of 5 fields")
        names = [r[0] for r in rows]
        vals = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(p, 4)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed model file: {exc}") from None
    return LogisticModel(names, bias, vals[:, 2].copy(), vals[:, 0].copy(), vals[:, 1].copy(), vals[:, 3].copy())


# ---------------------------------------------------------------------------
# mRmR

def discretize(x: np.ndarray, bins: int = 10) -> np.ndarray:
    """Equal-frequency bin codes; tied values always share a bin."""
    x = np.asarray(x, dtype=float)
    edges = np.unique(np.quantile(x, np.linspace(0.0, 1.0, bins + 1)[1:-1]))
    return np.searchsorted(edges, x, side="left")


def mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    """MI in nats between two discrete code arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    if n == 0:
        return 0.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    joint /= n
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(max(0.0, np.sum(joint[nz] * np.log(joint[nz] / (pa @ pb)[nz]))))


def mrmr_rank(ds: LabeledDataset, top_k: int = 15, bins: int = 10) -> list[tuple[str, float]]:
    """Greedy mutual-information-difference ranking.

    The first pick maximises MI with the label; each next pick maximises
    ``MI(f; label) - mean_s MI(f; s)`` over already selected ``s``.  Ties
    resolve to the lexicographically smaller feature name.
    """
    p = len(ds.feature_names)
    if not 1 <= top_k <= p:
        raise ValueError(f"top_k must lie in [1, {p}], got {top_k}")
    codes = [discretize(ds.X[:, j], bins) for j in range(p)]
    relevance = np.array([mutual_information(c, ds.y) for c in codes])
    redundancy = np.zeros(p)
    chosen: list[int] = []
    ranking: list[tuple[str, float]] = []
    remaining = set(range(p))
    while len(chosen) < top_k:
        if chosen:
            s = chosen[-1]
            for j in remaining:
                redundancy[j] += mutual_information(codes[j], codes[s])
            score = {j: relevance[j] - redundancy[j] / len(chosen) for j in remaining}
        else:
            score = {j: relevance[j] for j in remaining}
        best = min(remaining, key=lambda j: (-score[j], ds.feature_names[j]))
        chosen.append(best)
        remaining.discard(best)
        ranking.append((ds.feature_names[best], float(score[best])))
    return ranking
