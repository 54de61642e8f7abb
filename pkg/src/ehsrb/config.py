"""Dataclass configuration for all modules, with JSON round-trip.

A run is fully determined by (RunConfig, seed).  The JSON layout has one
section per module so that every fitted constant in a report can be traced
back to the exact knobs that produced it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError


@dataclass(frozen=True)
class SystemSpec:
    """Parameters of the base solenoid and its slowed perturbation.

    gamma/beta are the unstable/stable rates of the linear flow at the fixed
    point, alpha the slowdown exponent, r0/r1 the inner/outer radii of the
    slowdown profile, blend_width the width of the annulus over which the
    solenoid is deformed to the exact linear time-1 map.  base_expansion,
    contraction and offset are the solenoid map parameters; the linear-flow
    gluing requires exp(gamma) == base_expansion and exp(-beta) == contraction.
    """

    gamma: float = math.log(2.0)
    beta: float = math.log(4.0)
    alpha: float = 0.5
    r0: float = 0.05
    r1: float = 0.15
    blend_width: float = 0.12
    base_expansion: int = 2
    contraction: float = 0.25
    offset: float = 0.28

    def validate(self, solenoid: bool = True) -> None:
        if not (self.gamma > 0):
            raise ConfigurationError("gamma must be positive")
        if not (self.beta > 0):
            raise ConfigurationError("beta must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigurationError("alpha must lie in the open interval (0, 1)")
        if not (0.0 < self.r0 < self.r1):
            raise ConfigurationError("radii must satisfy 0 < r0 < r1")
        if not (self.blend_width > 0):
            raise ConfigurationError("blend_width must be positive")
        if not solenoid:
            return  # the local model has no global solenoid around it
        if not (isinstance(self.base_expansion, int) and self.base_expansion >= 2):
            raise ConfigurationError("base_expansion must be an integer >= 2")
        if not (0.0 < self.contraction < 0.5):
            raise ConfigurationError("contraction must lie in (0, 1/2)")
        if not (2.0 * self.contraction + self.offset < 1.0):
            raise ConfigurationError(
                "injectivity of solenoid requires contraction*2 + offset < 1"
            )
        if not (self.offset > self.contraction):
            raise ConfigurationError(
                "branch disjointness requires offset > contraction"
            )
        # 2.5401 bounds max_phi (1-cos)^2 * sqrt(1/4 + sin^2), the offset
        # curve's largest excursion (see systems._offset_curve).
        if not (self.contraction + 2.5401 * self.offset < 1.0):
            raise ConfigurationError(
                "containment requires contraction + max offset excursion < 1"
            )
        if abs(math.exp(self.gamma) - self.base_expansion) > 1e-9:
            raise ConfigurationError(
                "linear-flow gluing requires exp(gamma) == base_expansion"
            )
        if abs(math.exp(-self.beta) - self.contraction) > 1e-9:
            raise ConfigurationError(
                "linear-flow gluing requires exp(-beta) == contraction"
            )

    @property
    def lambda_total(self) -> float:
        return self.beta + self.gamma


@dataclass(frozen=True)
class IntegratorConfig:
    atol: float = 1e-10
    rtol: float = 1e-9
    max_horizon: float = 400.0
    trace_spacing_factor: float = 1e-2  # dense-output spacing <= factor*min(1, T0)
    batch_rtol: float = 1e-8  # vectorized ensemble integrator
    batch_atol: float = 1e-10


@dataclass(frozen=True)
class ConeConfig:
    # rate cones: the base family off Z, pushed forward inside Z.  Narrow
    # widths keep the rate slack small; invariance is only claimed for the
    # C1 width, whose tangent must exceed offset*max|d'|/(m-c).
    width_u: float = 0.1
    width_s: float = 0.1
    width_c1: float = 0.65
    n_rays: int = 256  # boundary rays for pushforward/containment checks
    n_sphere: int = 512  # dense directions for rate extremization (d=3)
    refine_iters: int = 40  # golden-section refinement steps


@dataclass(frozen=True)
class EhtConfig:
    lambda_bar: float = 0.05
    big_c: float = 1.0  # the C of the stable-control window
    q_max: int = 20
    theta_bar: float = 0.2  # cutoff in the effective-rate sequence
    theta_bar_grid: tuple = (0.9, 0.7, 0.5, 0.3, 0.2, 0.1)
    window_fraction: float = 0.1  # sliding-window size / orbit length
    burn_in_fraction: float = 0.5  # density estimated on the last half
    # thresholds frozen from scripts/pilot_thresholds.py (seed 20260810)
    eh1_prime_min_density: float = 0.1
    eh2_max_freq: float = 0.05
    holder_samples: int = 2000  # for the L, L' norm-bound estimates
    holder_step: float = 1e-4


@dataclass(frozen=True)
class CurveConfig:
    gamma_bar: float = 0.5  # slope cap for admissible graphs
    kappa_bar: float = 8.0  # Hoelder cap on the graph derivative
    r_bar: float = 0.02  # admissible size
    h_max: float = 1e-3  # max image sample spacing under evolution
    epsilon: float = 0.01  # = r_bar/2; length scale of the induced pieces
    holder_l: float = 4.0  # Hoelder curvature / density cap L
    tau_cap: int = 400
    merge_cap: int = 64
    min_mass_fraction: float = 1e-7  # stop decomposing below this leftover mass


@dataclass(frozen=True)
class SrbConfig:
    grid_n: int = 128
    marginal_bins: int = 1024
    max_points: int = 2_000_000
    n_test_functions: int = 64
    density_ratio_cap: float = 50.0


@dataclass(frozen=True)
class OracleConfig:
    chevron_kappa: float = 0.5
    chevron_floor_factor: float = 0.05  # beta',gamma' >= factor*min(beta,gamma)
    ts_s_factor: float = 2.0  # s = factor*sqrt(gamma/beta) for escape estimates
    t0_bins: tuple = (5.0, 20.0, 80.0)
    t0_bin_rel_width: float = 0.15
    n_traces: int = 1000
    residual_tol_tantheta: float = 1e-6
    residual_tol_radial: float = 1e-5


@dataclass(frozen=True)
class RunConfig:
    system: SystemSpec = field(default_factory=SystemSpec)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    cones: ConeConfig = field(default_factory=ConeConfig)
    eht: EhtConfig = field(default_factory=EhtConfig)
    curves: CurveConfig = field(default_factory=CurveConfig)
    srb: SrbConfig = field(default_factory=SrbConfig)
    oracles: OracleConfig = field(default_factory=OracleConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eht"]["theta_bar_grid"] = list(d["eht"]["theta_bar_grid"])
        d["oracles"]["t0_bins"] = list(d["oracles"]["t0_bins"])
        return d


_SECTIONS = {
    "system": SystemSpec,
    "integrator": IntegratorConfig,
    "cones": ConeConfig,
    "eht": EhtConfig,
    "curves": CurveConfig,
    "srb": SrbConfig,
    "oracles": OracleConfig,
}


def _build_section(cls, data: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(
            f"unknown keys in section '{cls.__name__}': {sorted(unknown)}"
        )
    kwargs = dict(data)
    for f in fields(cls):
        if f.name in kwargs and isinstance(kwargs[f.name], list):
            kwargs[f.name] = tuple(kwargs[f.name])
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigurationError(f"config section '{name}' must be an object")
        kwargs[name] = _build_section(cls, section)
    cfg = RunConfig(**kwargs)
    cfg.system.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a JSON object")
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def default_config() -> RunConfig:
    return RunConfig()
