"""Raster rendering of RDI / RRI matrices and binary PGM/PPM output."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from tendency.matrix import SENTINEL, check_finite, check_performance

NO_BOOKING_RGB = (0, 0, 255)


@dataclass(frozen=True)
class RasterImage:
    pixels: np.ndarray  # uint8, (h, w) for gray or (h, w, 3) for rgb

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> str:
        return "gray" if self.pixels.ndim == 2 else "rgb"

    def to_bytes(self) -> bytes:
        magic = b"P5" if self.channels == "gray" else b"P6"
        header = magic + f"\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + np.ascontiguousarray(self.pixels, dtype=np.uint8).tobytes()

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


def _upscale(pixels: np.ndarray, factor: int) -> np.ndarray:
    if factor < 1:
        raise ValueError(f"upscale factor must be >= 1, got {factor}")
    if factor == 1:
        return pixels
    return np.repeat(np.repeat(pixels, factor, axis=0), factor, axis=1)


def render_grayscale(d: np.ndarray, upscale: int = 1) -> RasterImage:
    """Min entry -> black, max entry -> white, linear in between."""
    d = np.atleast_2d(check_finite(d))
    lo, hi = (float(d.min()), float(d.max())) if d.size else (0.0, 0.0)
    if hi > lo:
        gray = np.rint((d - lo) / (hi - lo) * 255.0)
    else:
        gray = np.zeros(d.shape)
    return RasterImage(_upscale(gray.astype(np.uint8), upscale))


def performance_rgb(values: np.ndarray) -> np.ndarray:
    """Green (0) -> yellow (0.5) -> red (1); -1 sentinels become blue."""
    v = np.asarray(values, dtype=float)
    rgb = np.zeros(v.shape + (3,))
    low = v <= 0.5
    rgb[..., 0] = np.where(low, 510.0 * v, 255.0)
    rgb[..., 1] = np.where(low, 255.0, 510.0 * (1.0 - v))
    rgb = np.rint(rgb)
    rgb[v == SENTINEL] = NO_BOOKING_RGB
    return rgb.astype(np.uint8)


def render_performance(d: np.ndarray, upscale: int = 1) -> RasterImage:
    d = check_performance(np.atleast_2d(d))
    return RasterImage(_upscale(performance_rgb(d), upscale))


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    """Read back a binary P5/P6 file written by :meth:`RasterImage.save`."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] not in (b"P5", b"P6") or parts[2] != b"255":
        raise ValueError(f"{path}: not a binary PGM/PPM with maxval 255")
    w, h = (int(t) for t in parts[1].split())
    shape = (h, w) if parts[0] == b"P5" else (h, w, 3)
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(shape)
