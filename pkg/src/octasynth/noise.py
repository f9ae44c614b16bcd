"""Handcrafted contrast/noise augmentation for synthetic angiography images.

Three stages, each driven by a 9x9 control-point grid interpolated to a
full-resolution field: background capillary noise revealed through a Beta
modulation layer, multiplicative Beta brightness/speckle, and a local gamma
contrast shift. A final random down/upsampling pass softens edges. The
stages are weighted by (lambda_delta, lambda_n, lambda_gamma) and leave the
segmentation labels untouched by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .config import FullConfig, NoiseSettings
from .growth import simulate
from .raster import RasterImage, render_mip, upsample_bilinear
from .rng import stream

_BETA_PARAM_FLOOR = 1e-3   # interpolation overshoot clamp for Beta shapes


@dataclass
class NoiseParams:
    """Control points and weights for one augmentation draw."""

    a_delta: np.ndarray
    b_delta: np.ndarray
    a_n: np.ndarray
    b_n: np.ndarray
    gamma_cp: np.ndarray
    lambda_delta: float = 1.0
    lambda_n: float = 0.7
    lambda_gamma: float = 0.3
    s: float = 1.0

    def validate(self) -> None:
        for name in ("a_delta", "b_delta", "a_n", "b_n", "gamma_cp"):
            g = np.asarray(getattr(self, name), dtype=np.float64)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ValueError(f"{name} must be a square grid")
            setattr(self, name, g)
        if np.any(self.a_delta <= 0) or np.any(self.b_delta <= 0) \
                or np.any(self.a_n <= 0) or np.any(self.b_n <= 0):
            raise ValueError("Beta control points must be > 0")
        if np.any(np.abs(self.gamma_cp) > 1.0):
            raise ValueError("contrast control points must lie in [-1, 1]")
        if not 0.25 <= self.s <= 1.0:
            raise ValueError("s must lie in [0.25, 1]")

    def to_json_dict(self) -> dict:
        return {
            "a_delta": self.a_delta.tolist(),
            "b_delta": self.b_delta.tolist(),
            "a_n": self.a_n.tolist(),
            "b_n": self.b_n.tolist(),
            "gamma_cp": self.gamma_cp.tolist(),
            "lambda_delta": self.lambda_delta,
            "lambda_n": self.lambda_n,
            "lambda_gamma": self.lambda_gamma,
            "s": self.s,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "NoiseParams":
        params = cls(
            a_delta=np.asarray(d["a_delta"], dtype=np.float64),
            b_delta=np.asarray(d["b_delta"], dtype=np.float64),
            a_n=np.asarray(d["a_n"], dtype=np.float64),
            b_n=np.asarray(d["b_n"], dtype=np.float64),
            gamma_cp=np.asarray(d["gamma_cp"], dtype=np.float64),
            lambda_delta=float(d["lambda_delta"]),
            lambda_n=float(d["lambda_n"]),
            lambda_gamma=float(d["lambda_gamma"]),
            s=float(d["s"]),
        )
        params.validate()
        return params


def _axis_taps(n_ctrl: int, n_out: int):
    """Catmull-Rom tap indices (clamped at the borders) and weights per pixel."""
    if n_out == 1:
        u = np.zeros(1)
    else:
        u = np.arange(n_out) * ((n_ctrl - 1) / (n_out - 1))
    i0 = np.minimum(u.astype(np.int64), n_ctrl - 2)
    f = u - i0
    f2 = f * f
    f3 = f2 * f
    weights = np.stack(
        [
            -0.5 * f3 + f2 - 0.5 * f,
            1.5 * f3 - 2.5 * f2 + 1.0,
            -1.5 * f3 + 2.0 * f2 + 0.5 * f,
            0.5 * f3 - 0.5 * f2,
        ],
        axis=1,
    )
    taps = np.stack(
        [np.clip(i0 + k, 0, n_ctrl - 1) for k in (-1, 0, 1, 2)],
        axis=1,
    )
    return taps, weights


def bicubic_field(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Smooth field through a control-point lattice spanning the image corners.

    Separable Catmull-Rom interpolation with edge-replicated taps: the field
    reproduces the grid exactly at the lattice pixels and is a partition of
    unity, so constant grids give constant fields.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("grid must be 2D")
    gh, gw = grid.shape
    if out_h < gh or out_w < gw:
        raise ValueError("output must be at least as large as the grid")
    taps_y, w_y = _axis_taps(gh, out_h)
    taps_x, w_x = _axis_taps(gw, out_w)
    rows = np.zeros((out_h, gw))
    for k in range(4):
        rows += grid[taps_y[:, k]] * w_y[:, k, None]
    out = np.zeros((out_h, out_w))
    for k in range(4):
        out += rows[:, taps_x[:, k]] * w_x[None, :, k]
    return out


def sample_beta_field(
    a_grid: np.ndarray, b_grid: np.ndarray, shape: tuple[int, int], rng: np.random.Generator
) -> np.ndarray:
    """Per-pixel independent Beta draws with bicubically interpolated shapes."""
    h, w = shape
    a_field = np.maximum(bicubic_field(a_grid, h, w), _BETA_PARAM_FLOOR)
    b_field = np.maximum(bicubic_field(b_grid, h, w), _BETA_PARAM_FLOOR)
    return rng.beta(a_field, b_field)


def apply_noise_fields(
    i_data: np.ndarray,
    i_d_data: np.ndarray,
    delta: np.ndarray,
    n_field: np.ndarray,
    gamma_field: np.ndarray,
    lambdas: tuple[float, float, float],
) -> np.ndarray:
    """Three-stage transform with explicitly given per-pixel fields.

    i_delta = max(i, i_d * lambda_delta * delta)
    i_n     = i_delta * ((1 - lambda_n) * n + lambda_n)
    out     = i_n ** (lambda_gamma * gamma + 1)
    """
    if i_data.shape != i_d_data.shape:
        raise ValueError("image and background dimensions differ")
    lam_d, lam_n, lam_g = lambdas
    i_delta = np.maximum(i_data, i_d_data * (lam_d * delta))
    i_n = i_delta * ((1.0 - lam_n) * n_field + lam_n)
    out = np.power(i_n, lam_g * gamma_field + 1.0)
    return np.clip(out, 0.0, 1.0)


def apply_noise(
    image: RasterImage, background: RasterImage, params: NoiseParams, rng: np.random.Generator
) -> RasterImage:
    """Sample the per-pixel fields from `params` and run the three stages."""
    params.validate()
    shape = image.data.shape
    if shape != background.data.shape:
        raise ValueError("image and background dimensions differ")
    delta = sample_beta_field(params.a_delta, params.b_delta, shape, rng)
    n_field = sample_beta_field(params.a_n, params.b_n, shape, rng)
    gamma_field = bicubic_field(params.gamma_cp, *shape)
    out = apply_noise_fields(
        image.data, background.data, delta, n_field, gamma_field,
        (params.lambda_delta, params.lambda_n, params.lambda_gamma),
    )
    return RasterImage(out, image.mm_per_pixel)


def blur_by_resampling(image: RasterImage, s: float) -> RasterImage:
    """Soften edges by downscaling to round(dim * s) and scaling back up.

    Pillow's anti-aliased bilinear resampling is used for both passes; it
    conserves total intensity (unlike a plain gather), which keeps the blur a
    pure redistribution of signal. s = 1 is the identity.
    """
    if not 0.25 <= s <= 1.0:
        raise ValueError("s must lie in [0.25, 1]")
    h, w = image.data.shape
    small_h, small_w = round(h * s), round(w * s)
    if (small_h, small_w) == (h, w):
        return RasterImage(image.data.copy(), image.mm_per_pixel)
    im = Image.fromarray(image.data.astype(np.float32), mode="F")
    down = im.resize((small_w, small_h), Image.Resampling.BILINEAR)
    up = down.resize((w, h), Image.Resampling.BILINEAR)
    out = np.clip(np.asarray(up, dtype=np.float64), 0.0, 1.0)
    return RasterImage(out, image.mm_per_pixel)


def random_noise_params(rng: np.random.Generator, settings: NoiseSettings | None = None) -> NoiseParams:
    """Draw control points uniformly from the configured intervals.

    The lambda weights are fixed by the settings (defaults 1, 0.7, 0.3); the
    resampling factor is uniform on [s_low, s_high].
    """
    ns = settings or NoiseSettings()
    g = ns.grid
    params = NoiseParams(
        a_delta=rng.uniform(ns.ab_low, ns.ab_high, (g, g)),
        b_delta=rng.uniform(ns.ab_low, ns.ab_high, (g, g)),
        a_n=rng.uniform(ns.ab_low, ns.ab_high, (g, g)),
        b_n=rng.uniform(ns.ab_low, ns.ab_high, (g, g)),
        gamma_cp=rng.uniform(ns.gamma_low, ns.gamma_high, (g, g)),
        lambda_delta=ns.lambda_delta,
        lambda_n=ns.lambda_n,
        lambda_gamma=ns.lambda_gamma,
        s=float(rng.uniform(ns.s_low, ns.s_high)),
    )
    params.validate()
    return params


def generate_background_map(seed: int, out_size: int, cfg: FullConfig | None = None) -> RasterImage:
    """Dense sub-resolution capillary texture used as the background layer.

    Runs a deep-phase-only simulation at elevated density (N scaled up,
    sink spacing scaled down per the noise settings) and renders its
    unlabeled projection, mirroring the foreground render/upsample path.
    """
    cfg = cfg or FullConfig()
    dense = replace(
        cfg.dvc,
        N=int(round(cfg.dvc.N * cfg.noise.bg_n_factor)),
        eps_s=cfg.dvc.eps_s * cfg.noise.bg_eps_s_factor,
    )
    # Single-phase run: the dense deep config plays both slots with I split
    # zero/full so only one phase executes.
    first = replace(dense, I=0)
    bg_seed = int(stream(seed, "background").integers(0, 2 ** 63 - 1))
    forest, _, _ = simulate(first, dense, cfg.simulation, seed=bg_seed)
    factor = cfg.render.upsample if out_size % cfg.render.upsample == 0 else 1
    base = out_size // factor
    mip = render_mip(forest, base, cfg.simulation.fov_mm)
    return upsample_bilinear(mip, factor) if factor > 1 else mip
