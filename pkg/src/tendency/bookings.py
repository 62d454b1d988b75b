"""Booking records: strict CSV ingestion, speed filtering, time buckets and a synthetic corpus.

A corpus is a :class:`pandas.DataFrame` with exactly the :data:`COLUMNS`
below; timestamps are timezone-aware UTC.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from tendency import geohash

log = logging.getLogger(__name__)

COLUMNS = [
    "booking_id", "driver_id", "accept_ts", "driver_lat", "driver_lon",
    "pickup_lat", "pickup_lon", "pickup_ts", "eta_s", "ata_s",
    "start_ata_s", "end_ata_s", "dist_km",
]
NUMERIC = ["driver_lat", "driver_lon", "pickup_lat", "pickup_lon", "eta_s", "ata_s",
           "start_ata_s", "end_ata_s", "dist_km"]
TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
MAX_SPEED_KMH = 110.0
DEFAULT_TZ_OFFSET_MIN = 480


class BookingSchemaError(ValueError):
    pass


def read_bookings(path: str | os.PathLike) -> pd.DataFrame:
    """Load a bookings CSV, rejecting any header other than :data:`COLUMNS`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if header != COLUMNS:
        unknown = [c for c in header if c not in COLUMNS]
        missing = [c for c in COLUMNS if c not in header]
        raise BookingSchemaError(
            f"{path}: bad header (unknown columns {unknown}, missing {missing}); expected {','.join(COLUMNS)}"
        )
    df = pd.read_csv(path, dtype={"booking_id": str, "driver_id": str}, keep_default_na=False)
    for col in NUMERIC:
        try:
            df[col] = pd.to_numeric(df[col], errors="raise").astype(float)
        except (ValueError, TypeError) as exc:
            raise BookingSchemaError(f"{path}: column {col}: {exc}") from None
    for col in ("accept_ts", "pickup_ts"):
        try:
            df[col] = pd.to_datetime(df[col], format=TS_FORMAT, utc=True)
        except (ValueError, TypeError) as exc:
            raise BookingSchemaError(f"{path}: column {col}: {exc}") from None
    return df


def write_bookings(df: pd.DataFrame, path: str | os.PathLike) -> None:
    out = df[COLUMNS].copy()
    for col in ("accept_ts", "pickup_ts"):
        out[col] = out[col].dt.strftime(TS_FORMAT)
    out.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def speed_kmh(df: pd.DataFrame) -> pd.Series:
    with np.errstate(divide="ignore", invalid="ignore"):
        return df["dist_km"] / (df["eta_s"] / 3600.0)


def preprocess(df: pd.DataFrame) -> tuple[pd.DataFrame, dict[str, int]]:
    """Drop records that violate invariants or imply a speed outside [0, 110] km/h.

    Each rejected record is counted under its first failing reason.
    """
    checks = [
        ("nonpositive ETA", ~(df["eta_s"] > 0)),
        ("negative ATA", ~(df["ata_s"] >= 0)),
        ("invalid coordinates", ~(
            df["driver_lat"].between(-90, 90) & df["pickup_lat"].between(-90, 90)
            & df["driver_lon"].between(-180, 180) & df["pickup_lon"].between(-180, 180)
        )),
        ("pickup before accept", ~(df["pickup_ts"] >= df["accept_ts"])),
        ("negative distance", ~(df["dist_km"] >= 0)),
    ]
    rejected = pd.Series(False, index=df.index)
    report: dict[str, int] = {}
    for reason, bad in checks:
        fresh = bad & ~rejected
        report[reason] = int(fresh.sum())
        rejected |= fresh
    speed = speed_kmh(df)
    too_fast = ~rejected & ~speed.between(0.0, MAX_SPEED_KMH)
    report["speed out of range"] = int(too_fast.sum())
    rejected |= too_fast
    log.info("preprocess kept %d of %d bookings", int((~rejected).sum()), len(df))
    return df[~rejected].reset_index(drop=True), report


def local_time(ts: pd.Series | pd.Timestamp, tz_offset: int = DEFAULT_TZ_OFFSET_MIN):
    return ts + pd.Timedelta(minutes=tz_offset)


def hourgroup(ts, tz_offset: int = DEFAULT_TZ_OFFSET_MIN):
    """Three-hour bucket 0..7 of the local time (0 = 12am-3am, 4 = 12pm-3pm)."""
    local = local_time(ts, tz_offset)
    hour = local.dt.hour if isinstance(local, pd.Series) else local.hour
    return hour // 3


def dow_class(ts, tz_offset: int = DEFAULT_TZ_OFFSET_MIN):
    """'weekend' for local Saturday/Sunday, else 'weekday'."""
    local = local_time(ts, tz_offset)
    if isinstance(local, pd.Series):
        return pd.Series(np.where(local.dt.dayofweek >= 5, "weekend", "weekday"), index=local.index)
    return "weekend" if local.dayofweek >= 5 else "weekday"


# ---------------------------------------------------------------------------
# synthetic corpus

@dataclass(frozen=True)
class BookingConfig:
    """Knobs of the synthetic corpus.

    Lateness follows ``logistic(b + w_driver_grid*congestion(driverGh)
    + w_pickup_grid*congestion(pickupGh) + w_skill*(1 - skill) + hourgroup effect)``
    with ``b`` solved so the expected late rate equals `late_rate`.
    """

    n_drivers: int = 50
    n_grids: int = 20
    n_bookings: int = 20000
    late_rate: float = 0.25
    w_driver_grid: float = 6.0
    w_pickup_grid: float = 6.0
    w_skill: float = 6.0
    hourgroup_effect: tuple[float, ...] = (0.0, -0.3, 0.6, 0.2, 0.0, 0.3, 0.7, 0.1)
    favourite_grids: int = 3
    favourite_share: float = 0.0
    pickup_neighbours: int = 0        # 0: pickup grid drawn independently of the driver grid
    noisy_fraction: float = 0.01
    start: str = "2019-04-01T00:00:00Z"
    days: int = 30
    bbox: tuple[float, float, float, float] = (1.27, 1.33, 103.81, 103.89)
    precision: int = 6
    tz_offset: int = DEFAULT_TZ_OFFSET_MIN


@dataclass
class PlantedTruth:
    skill: dict[str, float]
    congestion: dict[str, float]
    intercept: float
    grids: list[str] = field(default_factory=list)


def _grid_cells(cfg: BookingConfig, rng: np.random.Generator) -> list[str]:
    lat0, lat1, lon0, lon1 = cfg.bbox
    probe = geohash.decode(geohash.encode((lat0 + lat1) / 2, (lon0 + lon1) / 2, cfg.precision))
    dlat, dlon = probe[1] - probe[0], probe[3] - probe[2]
    lats = np.arange(lat0 + dlat / 2, lat1, dlat)
    lons = np.arange(lon0 + dlon / 2, lon1, dlon)
    cells = sorted({geohash.encode(a, o, cfg.precision) for a in lats for o in lons})
    if cfg.n_grids > len(cells):
        raise ValueError(f"bbox holds only {len(cells)} precision-{cfg.precision} cells, {cfg.n_grids} requested")
    picked = rng.choice(len(cells), size=cfg.n_grids, replace=False)
    return sorted(cells[i] for i in picked)


def _solve_intercept(logit_wo_bias: np.ndarray, target: float) -> float:
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = (lo + hi) / 2
        rate = np.mean(1.0 / (1.0 + np.exp(-(logit_wo_bias + mid))))
        lo, hi = (mid, hi) if rate < target else (lo, mid)
    return (lo + hi) / 2


def _haversine_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi, dlmb = p2 - p1, np.radians(lon2 - lon1)
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * 6371.0 * np.arcsin(np.sqrt(a))


def gen_synthetic_bookings(cfg: BookingConfig = BookingConfig(), seed: int = 0) -> tuple[pd.DataFrame, PlantedTruth]:
    """Bookings with planted driver skill and grid congestion."""
    if cfg.n_drivers < 1 or cfg.n_grids < 1 or cfg.n_bookings < 1:
        raise ValueError("driver, grid and booking counts must be positive")
    if not 0.0 < cfg.late_rate < 1.0:
        raise ValueError("late_rate must lie in (0, 1)")
    if len(cfg.hourgroup_effect) != 8:
        raise ValueError("hourgroup_effect needs one value per hourgroup (8)")
    if not 0.0 <= cfg.noisy_fraction < 1.0 or not 0.0 <= cfg.favourite_share <= 1.0:
        raise ValueError("fractions must lie in [0, 1)")

    rng = np.random.default_rng(seed)
    grids = _grid_cells(cfg, rng)
    g = len(grids)
    congestion = rng.beta(2.0, 2.0, size=g)
    popularity = rng.gamma(2.0, 1.0, size=g)
    popularity /= popularity.sum()

    drivers = [f"d{i:06d}" for i in range(cfg.n_drivers)]
    skill = rng.uniform(0.0, 1.0, size=cfg.n_drivers)
    activity = rng.lognormal(0.0, 0.5, size=cfg.n_drivers)
    activity /= activity.sum()
    n_fav = min(cfg.favourite_grids, g)
    favourites = np.array([rng.choice(g, size=n_fav, replace=False, p=popularity) for _ in range(cfg.n_drivers)])

    n = cfg.n_bookings
    # every driver appears at least once
    drv = np.concatenate([np.arange(cfg.n_drivers), rng.choice(cfg.n_drivers, size=max(n - cfg.n_drivers, 0), p=activity)])[:n]
    drv = drv[rng.permutation(n)]
    use_fav = rng.random(n) < cfg.favourite_share
    dgrid = np.where(use_fav, favourites[drv, rng.integers(0, n_fav, size=n)], rng.choice(g, size=n, p=popularity))
    boxes = np.array([geohash.decode(c) for c in grids])
    centres = np.column_stack([boxes[:, :2].mean(axis=1), boxes[:, 2:].mean(axis=1)])
    gap = ((centres[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
    if cfg.pickup_neighbours > 0:
        # a pickup lies in the driver's own grid or one of its nearest grids
        near = np.argsort(gap, axis=1, kind="stable")[:, : min(cfg.pickup_neighbours, g)]
        pgrid = near[dgrid, rng.integers(0, near.shape[1], size=n)]
    else:
        pgrid = rng.choice(g, size=n, p=popularity)

    def point_in(cells):
        # stay clear of cell edges so 6-decimal rounding keeps the cell
        lat = boxes[cells, 0] + rng.uniform(0.02, 0.98, n) * (boxes[cells, 1] - boxes[cells, 0])
        lon = boxes[cells, 2] + rng.uniform(0.02, 0.98, n) * (boxes[cells, 3] - boxes[cells, 2])
        return lat, lon
    dlat, dlon = point_in(dgrid)
    plat, plon = point_in(pgrid)

    start = pd.Timestamp(cfg.start)
    accept_s = np.sort(rng.integers(0, cfg.days * 86400, size=n))
    accept = start + pd.to_timedelta(accept_s, unit="s")
    local_hour = ((accept_s + cfg.tz_offset * 60) // 3600) % 24
    hg = local_hour // 3

    dist = 1.3 * _haversine_km(dlat, dlon, plat, plon) + 0.2
    speed = rng.uniform(15.0, 45.0, size=n)
    eta = np.round(dist / speed * 3600.0 + 60.0)

    logit = (cfg.w_driver_grid * congestion[dgrid] + cfg.w_pickup_grid * congestion[pgrid]
             + cfg.w_skill * (1.0 - skill[drv]) + np.asarray(cfg.hourgroup_effect)[hg])
    intercept = _solve_intercept(logit, cfg.late_rate)
    p_late = 1.0 / (1.0 + np.exp(-(logit + intercept)))
    late = rng.random(n) < p_late
    diff = np.where(late, 301.0 + np.round(rng.exponential(240.0, size=n)),
                    np.round(rng.uniform(-180.0, 300.0, size=n)))
    diff = np.maximum(diff, -eta)
    ata = eta + diff
    start_ata = np.round(8.0 + 10.0 * congestion[dgrid] + 5.0 * late + rng.exponential(15.0, size=n), 1)
    end_ata = np.round(10.0 + 10.0 * congestion[pgrid] + 5.0 * late + rng.exponential(15.0, size=n), 1)

    noisy = rng.random(n) < cfg.noisy_fraction
    # noisy ETAs imply impossible speeds; preprocessing should drop them
    eta = np.where(noisy, np.maximum(np.round(dist * 3600.0 / 400.0), 1.0), eta)

    df = pd.DataFrame({
        "booking_id": [f"b{i:08d}" for i in range(n)],
        "driver_id": np.asarray(drivers, dtype=object)[drv],
        "accept_ts": accept,
        "driver_lat": np.round(dlat, 6),
        "driver_lon": np.round(dlon, 6),
        "pickup_lat": np.round(plat, 6),
        "pickup_lon": np.round(plon, 6),
        "pickup_ts": accept + pd.to_timedelta(ata, unit="s"),
        "eta_s": eta,
        "ata_s": ata,
        "start_ata_s": start_ata,
        "end_ata_s": end_ata,
        "dist_km": np.round(dist, 4),
    })
    truth = PlantedTruth(
        skill=dict(zip(drivers, skill.tolist())),
        congestion=dict(zip(grids, congestion.tolist())),
        intercept=intercept,
        grids=grids,
    )
    return df, truth
