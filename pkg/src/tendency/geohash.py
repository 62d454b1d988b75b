"""Geohash encoding and decoding.

Bits alternate longitude, latitude, longitude, ... and every five bits form
one base-32 character.  A point on a bisection boundary goes to the upper half.
"""

from __future__ import annotations

import numpy as np

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_DECODE = {c: i for i, c in enumerate(BASE32)}
MAX_PRECISION = 12


def _check(lat: float, lon: float, precision: int) -> None:
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"longitude {lon} outside [-180, 180]")
    if not 1 <= precision <= MAX_PRECISION:
        raise ValueError(f"precision must lie in [1, {MAX_PRECISION}], got {precision}")


def encode(lat: float, lon: float, precision: int = 6) -> str:
    _check(lat, lon, precision)
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    chars = []
    even = True
    for _ in range(precision):
        code = 0
        for _ in range(5):
            if even:
                mid = (lon_lo + lon_hi) / 2
                bit = lon >= mid
                lon_lo, lon_hi = (mid, lon_hi) if bit else (lon_lo, mid)
            else:
                mid = (lat_lo + lat_hi) / 2
                bit = lat >= mid
                lat_lo, lat_hi = (mid, lat_hi) if bit else (lat_lo, mid)
            code = (code << 1) | bit
            even = not even
        chars.append(BASE32[code])
    return "".join(chars)


def decode(code: str) -> tuple[float, float, float, float]:
    """Bounding box ``(lat_min, lat_max, lon_min, lon_max)`` of a geohash cell."""
    if not 1 <= len(code) <= MAX_PRECISION:
        raise ValueError(f"geohash length must lie in [1, {MAX_PRECISION}], got {len(code)}")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for ch in code:
        try:
            value = _DECODE[ch]
        except KeyError:
            raise ValueError(f"invalid geohash character {ch!r} in {code!r}") from None
        for shift in range(4, -1, -1):
            bit = (value >> shift) & 1
            if even:
                mid = (lon_lo + lon_hi) / 2
                lon_lo, lon_hi = (mid, lon_hi) if bit else (lon_lo, mid)
            else:
                mid = (lat_lo + lat_hi) / 2
                lat_lo, lat_hi = (mid, lat_hi) if bit else (lat_lo, mid)
            even = not even
    return lat_lo, lat_hi, lon_lo, lon_hi


def center(code: str) -> tuple[float, float]:
    lat_lo, lat_hi, lon_lo, lon_hi = decode(code)
    return (lat_lo + lat_hi) / 2, (lon_lo + lon_hi) / 2


def encode_many(lat, lon, precision: int = 6) -> np.ndarray:
    """Vectorised :func:`encode`; returns an object array of strings."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if lat.shape != lon.shape:
        raise ValueError("latitude and longitude arrays differ in shape")
    if lat.size:
        _check(float(lat.min()), float(lon.min()), precision)
        _check(float(lat.max()), float(lon.max()), precision)
    if np.isnan(lat).any() or np.isnan(lon).any():
        raise ValueError("coordinates contain NaN")

    lat_lo, lat_hi = np.full(lat.shape, -90.0), np.full(lat.shape, 90.0)
    lon_lo, lon_hi = np.full(lon.shape, -180.0), np.full(lon.shape, 180.0)
    codes = np.zeros(lat.shape + (precision,), dtype=np.int64)
    even = True
    for pos in range(precision):
        for _ in range(5):
            if even:
                mid = (lon_lo + lon_hi) / 2
                bit = lon >= mid
                lon_lo = np.where(bit, mid, lon_lo)
                lon_hi = np.where(bit, lon_hi, mid)
            else:
                mid = (lat_lo + lat_hi) / 2
                bit = lat >= mid
                lat_lo = np.where(bit, mid, lat_lo)
                lat_hi = np.where(bit, lat_hi, mid)
            codes[..., pos] = (codes[..., pos] << 1) | bit
            even = not even
    alphabet = np.array(list(BASE32))
    chars = alphabet[codes]
    out = np.empty(lat.shape, dtype=object)
    flat = out.reshape(-1)
    for i, row in enumerate(chars.reshape(-1, precision)):
        flat[i] = "".join(row)
    return out


def cell_size_km(code: str) -> tuple[float, float]:
    """Approximate (east-west, north-south) extent of a cell in kilometres."""
    lat_lo, lat_hi, lon_lo, lon_hi = decode(code)
    km_per_deg = 111.32
    mid_lat = np.radians((lat_lo + lat_hi) / 2)
    return (lon_hi - lon_lo) * km_per_deg * float(np.cos(mid_lat)), (lat_hi - lat_lo) * km_per_deg
