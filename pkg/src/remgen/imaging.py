"""Receiver-environment renders: rotated top view and direct-path side view.

Both views rasterize directly to 64x64 grayscale by pixel-center point
sampling (no anti-aliasing), so rendering is deterministic and exactly
reproducible. Encoding: background 1.0, terrain 0.5, buildings 0.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegeneratePathError
from .geo import LocalPoint, Scenario, terrain_elevation

IMAGE_SIZE = 64
TOP_WINDOW_M = 300.0   # square window edge, receiver centered
SIDE_WINDOW_M = 150.0  # vertical extent, receiver height centered

BACKGROUND = 1.0
TERRAIN = 0.5
BUILDING = 0.0


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray  # (64, 64) float32 in [0, 1]

    def __post_init__(self):
        if self.pixels.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"image must be {IMAGE_SIZE}x{IMAGE_SIZE}")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")


@dataclass(frozen=True)
class ImagePair:
    top: GrayImage
    side: GrayImage


def render_top(s: Scenario, rx: LocalPoint, tx: LocalPoint) -> GrayImage:
    """Orthographic building-occupancy view of a 300 m window around rx.

    The world is rotated about rx so the rx->tx bearing maps to the +x
    (rightward) image axis; +y in the rotated frame (leftward of the
    bearing) maps upward in the image.
    """
    bx = tx.x - rx.x
    by = tx.y - rx.y
    norm = math.hypot(bx, by)
    if norm == 0.0:
        raise DegeneratePathError("rx and tx coincide in the horizontal plane")
    ex, ey = bx / norm, by / norm          # unit bearing (image +x)
    nx, ny = -ey, ex                       # 90 deg CCW (image +y)

    half = 0.5 * TOP_WINDOW_M
    step = TOP_WINDOW_M / IMAGE_SIZE
    u = (np.arange(IMAGE_SIZE) + 0.5) * step - half          # along bearing
    v = half - (np.arange(IMAGE_SIZE) + 0.5) * step          # row 0 at top
    uu, vv = np.meshgrid(u, v)
    px = rx.x + uu * ex + vv * nx
    py = rx.y + uu * ey + vv * ny
    px = np.ascontiguousarray(px.ravel())
    py = np.ascontiguousarray(py.ravel())

    covered = np.zeros(px.shape, dtype=bool)
    reach = half * math.sqrt(2.0) + 1.0
    for b in s.buildings:
        bx0, by0, bx1, by1 = b.aabb
        if (bx1 < rx.x - reach or bx0 > rx.x + reach
                or by1 < rx.y - reach or by0 > rx.y + reach):
            continue
        todo = ~covered
        if not todo.any():
            break
        sel = np.where(todo)[0]
        hit = kernels.points_in_polygon(np.ascontiguousarray(px[sel]),
                                        np.ascontiguousarray(py[sel]), b.footprint)
        covered[sel[hit]] = True

    pix = np.full(px.shape, BACKGROUND, dtype=np.float32)
    pix[covered] = BUILDING
    return GrayImage(pix.reshape(IMAGE_SIZE, IMAGE_SIZE))


def render_side(s: Scenario, rx: LocalPoint, tx: LocalPoint) -> GrayImage:
    """Vertical slice along the direct path.

    Columns map [0, d_2d] left to right starting at rx; rows cover a
    150 m window centered on the receiver height (top row at rx.z+75).
    Building cross-sections win over terrain, terrain over background.
    """
    dx = tx.x - rx.x
    dy = tx.y - rx.y
    d2d = math.hypot(dx, dy)
    if d2d == 0.0:
        raise DegeneratePathError("rx and tx coincide in the horizontal plane")

    frac = (np.arange(IMAGE_SIZE) + 0.5) / IMAGE_SIZE
    cx = rx.x + frac * dx
    cy = rx.y + frac * dy
    ground = terrain_elevation(s.terrain, cx, cy)

    half = 0.5 * SIDE_WINDOW_M
    zrow = rx.z + half - frac * SIDE_WINDOW_M  # row r center height

    pix = np.full((IMAGE_SIZE, IMAGE_SIZE), BACKGROUND, dtype=np.float32)
    below = zrow[:, None] < ground[None, :]
    pix[below] = TERRAIN

    seg_x0, seg_x1 = (min(rx.x, tx.x), max(rx.x, tx.x))
    seg_y0, seg_y1 = (min(rx.y, tx.y), max(rx.y, tx.y))
    for b in s.buildings:
        bx0, by0, bx1, by1 = b.aabb
        if bx1 < seg_x0 or bx0 > seg_x1 or by1 < seg_y0 or by0 > seg_y1:
            continue
        inside = kernels.points_in_polygon(np.ascontiguousarray(cx),
                                           np.ascontiguousarray(cy), b.footprint)
        if not inside.any():
            continue
        zmask = (zrow[:, None] >= b.base_z_m) & (zrow[:, None] <= b.top_z_m)
        pix[zmask & inside[None, :]] = BUILDING

    return GrayImage(pix)


def render_pair(s: Scenario, rx: LocalPoint, tx: LocalPoint) -> ImagePair:
    return ImagePair(top=render_top(s, rx, tx), side=render_side(s, rx, tx))


def concat_vertical(pair: ImagePair) -> np.ndarray:
    """Stack top over side into the 128x64 single-channel model input."""
    return np.vstack([pair.top.pixels, pair.side.pixels])


def write_pgm(pixels: np.ndarray, path):
    """Debug export: binary PGM, intensity = round(pixel * 255)."""
    data = np.rint(np.asarray(pixels, dtype=np.float64) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of write_pgm (intensities back to [0, 1] floats)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM file")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
    return (data.reshape(h, w).astype(np.float64) / maxval).astype(np.float32)
