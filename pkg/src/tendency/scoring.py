"""Driver pickup-performance scores for a booking request and candidate ranking."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from tendency.features import late_counts
from tendency.prediction import LogisticModel, assemble_dataset, predict_proba

MECHANISMS = ("ratio", "logistic")
REQUEST_COLUMNS = ["driver_id", "driverGh", "pickupGh", "dow", "hourgroup"]
OUTPUT_COLUMNS = ["driver_id", "score", "mechanism", "qualified"]
NEUTRAL_SCORE = 1.0


@dataclass(frozen=True)
class ScoreRequest:
    driver_id: str
    driverGh: str
    pickupGh: str
    dow: str = "weekday"
    hourgroup: int = 0


@dataclass(frozen=True)
class ScoreConfig:
    min_bookings: int = 5
    smoothing: str = "laplace"   # or "none"
    epsilon: float = 0.5         # floor for driver LPR denominators, percentage points

    def __post_init__(self):
        if self.min_bookings < 0:
            raise ValueError("min_bookings must be >= 0")
        if self.smoothing not in ("laplace", "none"):
            raise ValueError(f"smoothing must be 'laplace' or 'none', got {self.smoothing!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class ScoredCandidate:
    driver_id: str
    score: float
    qualified: bool


class RatioTables:
    """(late, total) lookups for the four groupings the ratio score reads."""

    NEEDED = ("driverGh", "pickupGh", "driver_driverGh", "driver_pickupGh")

    def __init__(self, tables: dict[str, pd.DataFrame]):
        missing = [g for g in self.NEEDED if g not in tables]
        if missing:
            raise ValueError(f"aggregated tables missing for groupings {missing}")
        self.counts = {}
        for name in self.NEEDED:
            t = tables[name]
            keys = [c for c in t.columns if c in ("driver_id", "driverGh", "pickupGh")]
            tuples = zip(*(t[k].astype(str) for k in keys))
            self.counts[name] = dict(zip(tuples, zip(late_counts(t).tolist(), t["total_bookings"].astype(int).tolist())))

    def get(self, grouping: str, *key: str) -> tuple[int, int] | None:
        return self.counts[grouping].get(tuple(key))


def _as_ratio_tables(tables) -> RatioTables:
    return tables if isinstance(tables, RatioTables) else RatioTables(tables)


def _lpr(late: int, total: int, cfg: ScoreConfig) -> float:
    if cfg.smoothing == "laplace":
        return 100.0 * (late + 1) / (total + 2)
    return 100.0 * late / total


def _ratio(req: ScoreRequest, rt: RatioTables, cfg: ScoreConfig) -> tuple[float, bool]:
    grid_d = rt.get("driverGh", req.driverGh)
    if grid_d is None:
        raise KeyError(f"no aggregate for driver geohash {req.driverGh!r}")
    grid_p = rt.get("pickupGh", req.pickupGh)
    if grid_p is None:
        raise KeyError(f"no aggregate for pickup geohash {req.pickupGh!r}")
    own_d = rt.get("driver_driverGh", req.driver_id, req.driverGh) or (0, 0)
    own_p = rt.get("driver_pickupGh", req.driver_id, req.pickupGh) or (0, 0)
    qualified = min(own_d[1], own_p[1]) >= max(cfg.min_bookings, 1)
    if not qualified:
        return float("nan"), False
    floor = cfg.epsilon if cfg.smoothing == "none" else 0.0
    terms = [
        _lpr(*grid, cfg) / max(_lpr(*own, cfg), floor)
        for grid, own in ((grid_d, own_d), (grid_p, own_p))
    ]
    return 0.5 * (terms[0] + terms[1]), True


def _is_qualified(req: ScoreRequest, rt: RatioTables, cfg: ScoreConfig) -> bool:
    try:
        return _ratio(req, rt, cfg)[1]
    except KeyError:
        return False


def lpr_ratio_score(
    req: ScoreRequest,
    tables,
    cfg: ScoreConfig = ScoreConfig(),
    candidates: tuple[ScoreRequest, ...] | list[ScoreRequest] = (),
) -> float:
    """Mean of grid LPR over the driver's own LPR at the driver and pickup geohashes.

    Higher is better.  A driver with fewer than ``cfg.min_bookings`` bookings
    at either geohash gets the best score among the qualified `candidates`
    of the same request, or the neutral 1.0 when none qualifies.
    """
    rt = _as_ratio_tables(tables)
    score, ok = _ratio(req, rt, cfg)
    if ok:
        return score
    peers = [s for s, q in (_ratio(c, rt, cfg) for c in candidates) if q]
    return max(peers) if peers else NEUTRAL_SCORE


def request_frame(reqs) -> pd.DataFrame:
    return pd.DataFrame({
        "driver_id": [r.driver_id for r in reqs],
        "driverGh": [r.driverGh for r in reqs],
        "pickupGh": [r.pickupGh for r in reqs],
        "dow": [r.dow for r in reqs],
        "hourgroup": np.array([int(r.hourgroup) for r in reqs], dtype=np.int64),
    })


def logistic_scores(reqs, model: LogisticModel, tables: dict[str, pd.DataFrame]) -> np.ndarray:
    """Probability of a timely pickup for each request (``1 - P(late)``)."""
    ds = assemble_dataset(request_frame(reqs), tables, fill_values=model.fill_values, labeled=False)
    if ds.feature_names != model.feature_names:
        raise ValueError("request features do not match the model's feature names")
    return 1.0 - predict_proba(model, ds.X)


def logistic_score(req: ScoreRequest, model: LogisticModel, tables: dict[str, pd.DataFrame]) -> float:
    return float(logistic_scores([req], model, tables)[0])


def rank_candidates(
    reqs,
    mechanism: str,
    tables,
    *,
    cfg: ScoreConfig = ScoreConfig(),
    model: LogisticModel | None = None,
    ratio_tables: RatioTables | None = None,
) -> list[ScoredCandidate]:
    """Score the candidates of one booking and sort by descending score, then driver id.

    `tables` is the dict of aggregated tables; `ratio_tables` may carry a
    prebuilt lookup of it to save rebuilding across many bookings.
    """
    reqs = list(reqs)
    if not reqs:
        raise ValueError("no candidates to rank")
    if len({r.pickupGh for r in reqs}) != 1:
        raise ValueError("candidates of one booking must share the pickup geohash")
    if mechanism not in MECHANISMS:
        raise ValueError(f"mechanism must be one of {MECHANISMS}, got {mechanism!r}")

    rt = ratio_tables if ratio_tables is not None else _as_ratio_tables(tables)
    if mechanism == "ratio":
        raw = [_ratio(r, rt, cfg) for r in reqs]
        best = [s for s, q in raw if q]
        top = max(best) if best else NEUTRAL_SCORE
        scored = [ScoredCandidate(r.driver_id, s if q else top, q) for r, (s, q) in zip(reqs, raw)]
    else:
        if model is None:
            raise ValueError("the logistic mechanism needs a model")
        probs = logistic_scores(reqs, model, tables)
        scored = [ScoredCandidate(r.driver_id, float(p), _is_qualified(r, rt, cfg)) for r, p in zip(reqs, probs)]
    return sorted(scored, key=lambda c: (-c.score, c.driver_id))


def read_requests(path: str | os.PathLike) -> list[ScoreRequest]:
    frame = pd.read_csv(path, dtype={"driver_id": str, "driverGh": str, "pickupGh": str, "dow": str})
    if list(frame.columns) != REQUEST_COLUMNS:
        raise ValueError(f"{path}: expected header {','.join(REQUEST_COLUMNS)}, got {','.join(map(str, frame.columns))}")
    bad = ~frame["dow"].isin(["weekday", "weekend"])
    if bad.any():
        raise ValueError(f"{path}: line {int(np.flatnonzero(bad)[0]) + 2}: dow must be weekday or weekend")
    hg = pd.to_numeric(frame["hourgroup"], errors="coerce")
    bad = hg.isna() | ~hg.isin(range(8))
    if bad.any():
        raise ValueError(f"{path}: line {int(np.flatnonzero(bad)[0]) + 2}: hourgroup must be an integer 0..7")
    return [ScoreRequest(r.driver_id, r.driverGh, r.pickupGh, r.dow, int(h))
            for r, h in zip(frame.itertuples(index=False), hg)]


def score_batch(reqs, mechanism: str, tables, *, cfg: ScoreConfig = ScoreConfig(),
                model: LogisticModel | None = None) -> pd.DataFrame:
    """Rank each booking's candidates; rows sharing (pickupGh, dow, hourgroup) form one booking."""
    groups: dict[tuple, list[ScoreRequest]] = {}
    for r in reqs:
        groups.setdefault((r.pickupGh, r.dow, r.hourgroup), []).append(r)
    rt = _as_ratio_tables(tables)
    rows = []
    for members in groups.values():
        ranked = rank_candidates(members, mechanism, tables, cfg=cfg, model=model, ratio_tables=rt)
        rows += [(c.driver_id, c.score, mechanism, int(c.qualified)) for c in ranked]
    return pd.DataFrame(rows, columns=OUTPUT_COLUMNS)
