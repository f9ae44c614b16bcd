"""En-face rendering of vessel forests.

Every edge is a capsule (segment plus radius); the depth axis is dropped
before coverage is evaluated, which makes the per-pixel maximum over capsule
footprints the exact maximum-intensity projection of the voxelized slab.
Grayscale output is anti-aliased with a one-pixel linear ramp at the capsule
boundary; labels are crisp center-in-footprint tests so they stay binary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vesselgraph import VesselForest


@dataclass
class RasterImage:
    """Row-major grayscale field in [0, 1] with physical resolution."""

    data: np.ndarray
    mm_per_pixel: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("image data must be 2D")
        if self.mm_per_pixel <= 0:
            raise ValueError("mm_per_pixel must be > 0")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelDetail:
    """Radius filter for segmentation labels (strict > unless include_equal)."""

    min_radius_mm: float = 0.0
    include_equal: bool = False

    def __post_init__(self):
        if self.min_radius_mm < 0:
            raise ValueError("min_radius_mm must be >= 0")


def _lateral_edges(forest: VesselForest, out_size: int, fov_mm: float):
    """Edge endpoints in pixel coordinates plus radii in pixels."""
    parents, children = forest.edge_arrays()
    p0 = forest.pos[parents][:, :2] * out_size
    p1 = forest.pos[children][:, :2] * out_size
    mm_per_px = fov_mm / out_size
    r_px = forest.radius[children] / mm_per_px
    return p0, p1, r_px


def _paint(
    canvas: np.ndarray,
    p0: np.ndarray,
    p1: np.ndarray,
    r_px: np.ndarray,
    antialias: bool,
) -> None:
    """Max-blend capsule coverage into `canvas` (or OR when binary)."""
    h, w = canvas.shape
    reach = r_px + (1.0 if antialias else 0.5)  # margin past the coverage support
    for k in range(len(r_px)):
        x0, y0 = p0[k]
        x1, y1 = p1[k]
        rk = r_px[k]
        lo_x = max(int(math.floor(min(x0, x1) - reach[k] - 0.5)), 0)
        hi_x = min(int(math.ceil(max(x0, x1) + reach[k] - 0.5)), w - 1)
        lo_y = max(int(math.floor(min(y0, y1) - reach[k] - 0.5)), 0)
        hi_y = min(int(math.ceil(max(y0, y1) + reach[k] - 0.5)), h - 1)
        if lo_x > hi_x or lo_y > hi_y:
            continue
        xs = np.arange(lo_x, hi_x + 1) + 0.5 - x0
        ys = np.arange(lo_y, hi_y + 1) + 0.5 - y0
        vx, vy = x1 - x0, y1 - y0
        seg2 = vx * vx + vy * vy
        qx = xs[None, :]
        qy = ys[:, None]
        if seg2 > 1e-18:
            t = np.clip((qx * vx + qy * vy) / seg2, 0.0, 1.0)
            dx = qx - t * vx
            dy = qy - t * vy
        else:
            dx, dy = qx, qy
        dist = np.sqrt(dx * dx + dy * dy)
        tile = canvas[lo_y: hi_y + 1, lo_x: hi_x + 1]
        if antialias:
            np.maximum(tile, np.clip(rk + 0.5 - dist, 0.0, 1.0), out=tile)
        else:
            np.maximum(tile, (dist <= rk).astype(canvas.dtype), out=tile)


def render_mip(forest: VesselForest, out_size: int, fov_mm: float) -> RasterImage:
    """Anti-aliased grayscale projection of all vessels."""
    if out_size < 1:
        raise ValueError("out_size must be >= 1")
    canvas = np.zeros((out_size, out_size))
    p0, p1, r_px = _lateral_edges(forest, out_size, fov_mm)
    _paint(canvas, p0, p1, r_px, antialias=True)
    return RasterImage(canvas, fov_mm / out_size)


def render_label(
    forest: VesselForest, out_size: int, fov_mm: float, detail: LabelDetail
) -> RasterImage:
    """Binary segmentation label of vessels above the radius threshold.

    A pixel is set when its center lies inside the lateral footprint of a
    qualifying edge. Rendered directly at the requested (typically upsampled)
    resolution so thin capillaries keep their true diameter.
    """
    if out_size < 1:
        raise ValueError("out_size must be >= 1")
    canvas = np.zeros((out_size, out_size))
    p0, p1, r_px = _lateral_edges(forest, out_size, fov_mm)
    mm_per_px = fov_mm / out_size
    radius_mm = r_px * mm_per_px
    if detail.include_equal:
        keep = radius_mm >= detail.min_radius_mm
    else:
        keep = radius_mm > detail.min_radius_mm
    _paint(canvas, p0[keep], p1[keep], r_px[keep], antialias=False)
    return RasterImage(canvas, mm_per_px)


def resize_bilinear(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resample to an arbitrary size."""
    h, w = data.shape
    if (out_h, out_w) == (h, w):
        return data.copy()

    def axis_coords(n_in: int, n_out: int):
        if n_out == 1 or n_in == 1:
            return np.zeros(n_out, dtype=np.int64), np.zeros(n_out)
        x = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        i0 = np.minimum(x.astype(np.int64), n_in - 2)
        return i0, x - i0

    r0, fy = axis_coords(h, out_h)
    c0, fx = axis_coords(w, out_w)
    rows = data[r0] * (1.0 - fy)[:, None] + data[np.minimum(r0 + 1, h - 1)] * fy[:, None]
    out = rows[:, c0] * (1.0 - fx)[None, :] + rows[:, np.minimum(c0 + 1, w - 1)] * fx[None, :]
    return out


def upsample_bilinear(image: RasterImage, factor: int) -> RasterImage:
    """Integer upsampling by corner-aligned bilinear interpolation."""
    if factor < 1 or int(factor) != factor:
        raise ValueError("factor must be an integer >= 1")
    factor = int(factor)
    if factor == 1:
        return RasterImage(image.data.copy(), image.mm_per_pixel)
    out = resize_bilinear(image.data, image.height * factor, image.width * factor)
    return RasterImage(out, image.mm_per_pixel / factor)
