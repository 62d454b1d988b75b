"""Per-booking features, the aggregated feature tables and the driver x grid matrix."""

from __future__ import annotations

import numpy as np
import pandas as pd

from tendency import geohash
from tendency.bookings import DEFAULT_TZ_OFFSET_MIN, dow_class, hourgroup, local_time, speed_kmh
from tendency.matrix import SENTINEL

LATE_THRESHOLD_S = 300.0
MEASURES = ["total_bookings", "avg_diff_ata_eta", "lpr_pct", "avg_start_ata", "avg_end_ata"]

# grouping name -> key columns, in the order the aggregated tables are listed
GROUPINGS: dict[str, list[str]] = {
    "driver": ["driver_id"],
    "driver_dow": ["driver_id", "dow"],
    "driver_hourgroup": ["driver_id", "hourgroup"],
    "driverGh": ["driverGh"],
    "driverGh_dow": ["driverGh", "dow"],
    "driverGh_hourgroup": ["driverGh", "hourgroup"],
    "pickupGh": ["pickupGh"],
    "pickupGh_dow": ["pickupGh", "dow"],
    "pickupGh_hourgroup": ["pickupGh", "hourgroup"],
    "driver_driverGh": ["driver_id", "driverGh"],
    "driver_driverGh_dow": ["driver_id", "driverGh", "dow"],
    "driver_driverGh_hourgroup": ["driver_id", "driverGh", "hourgroup"],
    "driver_pickupGh": ["driver_id", "pickupGh"],
    "driver_pickupGh_dow": ["driver_id", "pickupGh", "dow"],
    "driver_pickupGh_hourgroup": ["driver_id", "pickupGh", "hourgroup"],
}

DAY_NAMES = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]


def derive(df: pd.DataFrame, tz_offset: int = DEFAULT_TZ_OFFSET_MIN, precision: int = 6) -> pd.DataFrame:
    """Add geohash cells, time buckets, ``diff_eta_ata_s`` and ``is_late_pickup``.

    A pickup is late when ATA exceeds ETA by strictly more than five minutes.
    """
    out = df.copy()
    out["driverGh"] = geohash.encode_many(df["driver_lat"].to_numpy(), df["driver_lon"].to_numpy(), precision)
    out["pickupGh"] = geohash.encode_many(df["pickup_lat"].to_numpy(), df["pickup_lon"].to_numpy(), precision)
    out["dow"] = dow_class(df["accept_ts"], tz_offset)
    out["day"] = local_time(df["accept_ts"], tz_offset).dt.dayofweek
    out["hourgroup"] = hourgroup(df["accept_ts"], tz_offset).astype(np.int64)
    out["diff_eta_ata_s"] = df["ata_s"] - df["eta_s"]
    out["is_late_pickup"] = (out["diff_eta_ata_s"] > LATE_THRESHOLD_S).astype(np.int64)
    out["speed_kmh"] = speed_kmh(df)
    return out


def aggregate(bookings: pd.DataFrame, grouping: str) -> pd.DataFrame:
    """Counts and means per key of `grouping`; keys without bookings are absent.

    Input rows are put in booking-id order first so the result does not
    depend on the order of `bookings`.
    """
    try:
        keys = GROUPINGS[grouping]
    except KeyError:
        raise ValueError(f"unknown grouping {grouping!r}; choose from {list(GROUPINGS)}") from None
    if len(bookings) == 0:
        raise ValueError("cannot aggregate an empty set of bookings")
    ordered = bookings.sort_values("booking_id", kind="mergesort")
    g = ordered.groupby(keys, sort=True, observed=True)
    table = pd.DataFrame({
        "total_bookings": g.size(),
        "avg_diff_ata_eta": g["diff_eta_ata_s"].mean(),
        "lpr_pct": 100.0 * g["is_late_pickup"].sum() / g.size(),
        "avg_start_ata": g["start_ata_s"].mean(),
        "avg_end_ata": g["end_ata_s"].mean(),
    })
    return table.reset_index()


def aggregate_all(bookings: pd.DataFrame) -> dict[str, pd.DataFrame]:
    return {name: aggregate(bookings, name) for name in GROUPINGS}


def late_counts(table: pd.DataFrame) -> np.ndarray:
    return np.rint(table["lpr_pct"].to_numpy() * table["total_bookings"].to_numpy() / 100.0).astype(np.int64)


def build_performance_matrix(
    bookings: pd.DataFrame,
    grid: str = "driverGh",
    dow: str | None = None,
    hourgroup: int | None = None,
) -> tuple[np.ndarray, list[str], list[str]]:
    """Driver x grid matrix of LPR / 100, with -1 where the driver never booked in the grid.

    Rows and columns are sorted by driver id and geohash.  `dow` and
    `hourgroup` restrict the bookings to one temporal slice.
    """
    if grid not in ("driverGh", "pickupGh"):
        raise ValueError(f"grid must be 'driverGh' or 'pickupGh', got {grid!r}")
    sel = bookings
    if dow is not None:
        sel = sel[sel["dow"] == dow]
    if hourgroup is not None:
        sel = sel[sel["hourgroup"] == hourgroup]
    if len(sel) == 0:
        raise ValueError("no bookings to build a performance matrix from")

    drivers, row = np.unique(sel["driver_id"].to_numpy(dtype=str), return_inverse=True)
    grids, col = np.unique(sel[grid].to_numpy(dtype=str), return_inverse=True)
    total = np.zeros((len(drivers), len(grids)))
    late = np.zeros_like(total)
    np.add.at(total, (row, col), 1.0)
    np.add.at(late, (row, col), sel["is_late_pickup"].to_numpy(dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(total > 0, late / total, SENTINEL)
    return matrix, drivers.tolist(), grids.tolist()


def booking_histograms(bookings: pd.DataFrame) -> tuple[np.ndarray, np.ndarray]:
    """Booking counts per local weekday (Mon..Sun) and per hourgroup (0..7)."""
    if len(bookings) == 0:
        return np.zeros(7, dtype=np.int64), np.zeros(8, dtype=np.int64)
    days = np.bincount(bookings["day"].to_numpy(dtype=np.int64), minlength=7)
    groups = np.bincount(bookings["hourgroup"].to_numpy(dtype=np.int64), minlength=8)
    return days, groups


def high_speed_late_grids(
    bookings: pd.DataFrame,
    speed_kmh_min: float = 35.0,
    min_late: int = 100,
    precision: int = 7,
) -> list[str]:
    """Driver-location cells with mean speed above `speed_kmh_min` and at least `min_late` late pickups."""
    if len(bookings) == 0:
        return []
    cells = geohash.encode_many(bookings["driver_lat"].to_numpy(), bookings["driver_lon"].to_numpy(), precision)
    frame = pd.DataFrame({
        "cell": cells,
        "speed": speed_kmh(bookings).to_numpy(),
        "late": (bookings["ata_s"] - bookings["eta_s"]).to_numpy() > LATE_THRESHOLD_S,
    })
    stats = frame.groupby("cell", sort=True).agg(speed=("speed", "mean"), late=("late", "sum"))
    hit = stats[(stats["speed"] > speed_kmh_min) & (stats["late"] >= min_late)]
    return hit.index.tolist()
