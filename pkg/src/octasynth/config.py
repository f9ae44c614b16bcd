"""Configuration model: growth-phase parameters, noise and render settings.

The config file is a plain INI document with [svc], [dvc], [noise], [render]
and [simulation] sections. Phase keys carry the exact variable names used by
the growth model (I, N, d, r, eps_s, eps_k, delta, gamma, phi, omega, kappa,
delta_sigma, r_rot, r_faz); all lengths are millimetres, angles degrees.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

# Segment length shrinks with the expanding simulation space but never below
# this floor (mm).
D_FLOOR_MM = 0.04


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass
class PhaseConfig:
    """Parameter set for one growth phase (superficial or deep complex).

    r_faz is a (mean, std) pair in mm for the normally distributed avascular
    zone radius, sampled once per simulation. It is listed per phase because
    the parameter table carries it in both columns; only the first phase's
    value is consulted.
    """

    I: int
    N: int
    d: float
    r: float
    eps_s: float
    eps_k: float
    delta: float
    gamma: float
    phi: float
    omega: float
    kappa: float
    delta_sigma: float
    r_rot: float
    r_faz: tuple[float, float] = (0.45, 0.021)

    def validate(self) -> None:
        for name in ("d", "r", "eps_s", "eps_k", "delta", "r_rot"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.I < 0 or self.N < 0:
            raise ConfigError("I and N must be >= 0")
        if not 0.0 < self.gamma < 180.0:
            raise ConfigError(f"gamma must lie in (0, 180), got {self.gamma!r}")
        if not 0.0 < self.phi < 180.0:
            raise ConfigError(f"phi must lie in (0, 180), got {self.phi!r}")
        if not 0.0 <= self.omega <= 1.0:
            raise ConfigError(f"omega must lie in [0, 1], got {self.omega!r}")
        if self.kappa <= 1.0:
            raise ConfigError(f"kappa must be > 1, got {self.kappa!r}")
        if self.delta_sigma < 0:
            raise ConfigError("delta_sigma must be >= 0")
        if self.r_faz[0] <= 0 or self.r_faz[1] < 0:
            raise ConfigError(f"r_faz (mean, std) malformed: {self.r_faz!r}")


def svc_defaults() -> PhaseConfig:
    """Superficial-complex column of the parameter table."""
    return PhaseConfig(
        I=100,
        N=1000,
        d=0.1,
        r=0.0025,
        eps_s=0.135,
        eps_k=0.135,
        delta=0.2925,
        gamma=50.0,
        phi=15.0,
        omega=0.3,
        kappa=2.55,
        delta_sigma=0.02,
        r_rot=1.05,
    )


def dvc_defaults() -> PhaseConfig:
    """Deep-complex column: more, finer and denser capillaries."""
    return PhaseConfig(
        I=100,
        N=2000,
        d=0.04,
        r=0.0025,
        eps_s=0.045,
        eps_k=0.045,
        delta=0.0975,
        gamma=90.0,
        phi=15.0,
        omega=0.0,
        kappa=2.9,
        delta_sigma=0.02,
        r_rot=1.05,
    )


@dataclass
class SimulationSettings:
    """Artifact-level growth knobs not present in the parameter table."""

    fov_mm: float = 3.0            # lateral extent represented by the unit slab
    slab_depth: float = 1.0 / 76.0  # slab z extent in simulation units
    n_roots: int = 16
    # Scale applied to the raw node/sink distance heuristic before use in
    # simulation units. The heuristic's absolute scale is a free parameter
    # here; the default comes from calibration runs (growth density vs. speed).
    eps_n_scale: float = 0.004
    d_floor_mm: float = D_FLOOR_MM
    # Root stump geometry; None means "use the first phase's r / d".
    root_radius_mm: float | None = None
    root_length_mm: float | None = None
    # Lateral gap between the arterial and venous stump of one entry pair.
    # Venous growth bootstraps from the CO2 wake of its arterial partner, so
    # the gap must stay well inside the initial perception distance.
    root_pair_gap_mm: float = 0.1
    # Upper bound for the per-image subtree-dropout probability (non-perfusion
    # augmentation); 0 disables it.
    dropout: float = 0.0

    def validate(self) -> None:
        if self.fov_mm <= 0 or self.slab_depth <= 0:
            raise ConfigError("fov_mm and slab_depth must be > 0")
        if self.n_roots < 2 or self.n_roots % 2:
            raise ConfigError("n_roots must be a positive even count")
        if self.eps_n_scale < 0:
            raise ConfigError("eps_n_scale must be >= 0")
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError("dropout must lie in [0, 1]")


@dataclass
class NoiseSettings:
    """Sampling intervals and weights for the handcrafted noise model."""

    grid: int = 9                  # control points per axis
    ab_low: float = 0.5            # Beta shape-parameter sampling interval
    ab_high: float = 8.0
    gamma_low: float = -1.0        # contrast control-point interval
    gamma_high: float = 1.0
    lambda_delta: float = 1.0
    lambda_n: float = 0.7
    lambda_gamma: float = 0.3
    s_low: float = 0.25            # blur-by-resampling factor interval
    s_high: float = 1.0
    # Background capillary map: deep-phase config with N scaled up and the
    # sink spacing scaled down to get denser-than-foreground texture.
    bg_n_factor: float = 2.0
    bg_eps_s_factor: float = 0.5

    def validate(self) -> None:
        if self.grid < 4:
            raise ConfigError("noise grid must be >= 4")
        if not 0 < self.ab_low <= self.ab_high:
            raise ConfigError("Beta interval must satisfy 0 < low <= high")
        if not -1.0 <= self.gamma_low <= self.gamma_high <= 1.0:
            raise ConfigError("gamma interval must lie within [-1, 1]")
        for lam in (self.lambda_delta, self.lambda_n, self.lambda_gamma):
            if not 0.0 <= lam <= 1.0:
                raise ConfigError("lambda weights must lie in [0, 1]")
        if not 0.25 <= self.s_low <= self.s_high <= 1.0:
            raise ConfigError("s interval must lie within [0.25, 1]")


@dataclass
class RenderSettings:
    img_size: int = 304
    upsample: int = 4
    details_um: tuple[float, ...] = (0.0, 10.0)  # label radius thresholds
    bit_depth: int = 8

    def validate(self) -> None:
        if self.img_size < 1 or self.upsample < 1:
            raise ConfigError("img_size and upsample must be >= 1")
        if self.bit_depth not in (8, 16):
            raise ConfigError("bit_depth must be 8 or 16")
        if any(d < 0 for d in self.details_um):
            raise ConfigError("detail thresholds must be >= 0")


@dataclass
class FullConfig:
    svc: PhaseConfig = field(default_factory=svc_defaults)
    dvc: PhaseConfig = field(default_factory=dvc_defaults)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    render: RenderSettings = field(default_factory=RenderSettings)

    def validate(self) -> "FullConfig":
        self.svc.validate()
        self.dvc.validate()
        self.simulation.validate()
        self.noise.validate()
        self.render.validate()
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["svc"]["r_faz"] = list(self.svc.r_faz)
        d["dvc"]["r_faz"] = list(self.dvc.r_faz)
        d["render"]["details_um"] = list(self.render.details_um)
        return d


def _parse_scalar(raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected boolean, got {raw!r}")
    return kind(raw)


def _parse_value(raw: str, template):
    """Coerce a raw INI string to the type of the dataclass default."""
    if isinstance(template, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(float(p) for p in parts)
    if isinstance(template, bool):
        return _parse_scalar(raw, bool)
    if isinstance(template, int):
        return int(float(raw))
    if template is None or isinstance(template, float):
        return float(raw)
    return raw


_SECTION_FIELDS = {
    "svc": "svc",
    "dvc": "dvc",
    "simulation": "simulation",
    "noise": "noise",
    "render": "render",
}


def load_config(path: str | Path | None) -> FullConfig:
    """Read an INI config file; missing sections/keys keep their defaults."""
    cfg = FullConfig()
    if path is None:
        return cfg.validate()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    for section in parser.sections():
        attr = _SECTION_FIELDS.get(section.lower())
        if attr is None:
            raise ConfigError(f"{path}: unknown section [{section}]")
        target = getattr(cfg, attr)
        valid = {f.name for f in dataclasses.fields(target)}
        for key, raw in parser.items(section):
            if key not in valid:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            template = getattr(target, key)
            try:
                setattr(target, key, _parse_value(raw, template))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: bad value for {key!r}: {raw!r}") from exc
    return cfg.validate()


def apply_overrides(cfg: FullConfig, **overrides) -> FullConfig:
    """Apply CLI-style overrides (img_size, upsample, details_um, dropout)."""
    if overrides.get("img_size") is not None:
        cfg.render.img_size = int(overrides["img_size"])
    if overrides.get("upsample") is not None:
        cfg.render.upsample = int(overrides["upsample"])
    if overrides.get("details_um"):
        cfg.render.details_um = tuple(float(d) for d in overrides["details_um"])
    if overrides.get("dropout") is not None:
        cfg.simulation.dropout = float(overrides["dropout"])
    return cfg.validate()
