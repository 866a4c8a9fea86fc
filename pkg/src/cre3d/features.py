"""Emulator input/output vector assembly and normalization.

Vectors are flat concatenations of named blocks in a fixed order.
Longwave inputs: [f_c | tau_c | T | (q) | (dz) | T_s]; shortwave inputs:
[f_c | tau_c | (q) | (dz) | alpha | mu0]. Outputs: [scalar flux |
(SW: direct down) | heating rate]. All level blocks cover the
tropospheric window only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .column import (
    DRY_AIR_GAS_CONSTANT,
    GRAVITY,
    AtmosphericProfile,
    PhysConsts,
    _as_float_array,
    compute_cloud_optical_depth,
    truncate_profile,
    truncate_to_window,
)
from .postproc import LW, SW, EffectTargets

SCALE_FLOOR = 1e-8  # std-dev floor for near-constant features


@dataclass(frozen=True)
class FeatureSchema:
    """Shapes and block layout of one emulator's input/output vectors."""

    component: str  # "lw" | "sw"
    n_fl_window: int
    n_hl_window: int
    include_humidity: bool = False
    include_thickness: bool = False

    def __post_init__(self) -> None:
        if self.component not in (LW, SW):
            raise ValueError(f"component must be 'lw' or 'sw', got {self.component!r}")
        if self.n_hl_window != self.n_fl_window + 1:
            raise ValueError("n_hl_window must equal n_fl_window + 1")
        if self.n_fl_window < 1:
            raise ValueError("window must contain at least one full level")

    @property
    def input_blocks(self) -> List[Tuple[str, int]]:
        n = self.n_fl_window
        blocks = [("f_c", n), ("tau_c", n)]
        if self.component == LW:
            blocks.append(("T", n))
        if self.include_humidity:
            blocks.append(("q", n))
        if self.include_thickness:
            blocks.append(("dz", n))
        if self.component == LW:
            blocks.append(("T_s", 1))
        else:
            blocks.extend([("alpha", 1), ("mu0", 1)])
        return blocks

    @property
    def output_blocks(self) -> List[Tuple[str, int]]:
        blocks = [("scalar", self.n_hl_window)]
        if self.component == SW:
            blocks.append(("direct_down", self.n_hl_window))
        blocks.append(("heat", self.n_fl_window))
        return blocks

    @property
    def input_len(self) -> int:
        return sum(size for _, size in self.input_blocks)

    @property
    def output_len(self) -> int:
        return sum(size for _, size in self.output_blocks)

    def output_slices(self) -> dict:
        slices = {}
        start = 0
        for name, size in self.output_blocks:
            slices[name] = slice(start, start + size)
            start += size
        return slices


def schema_for_grid(component: str, grid, p_trunc: float = 5000.0,
                    include_humidity: bool = False,
                    include_thickness: bool = False) -> FeatureSchema:
    return FeatureSchema(
        component=component,
        n_fl_window=grid.n_fl_window(p_trunc),
        n_hl_window=grid.n_hl_window(p_trunc),
        include_humidity=include_humidity,
        include_thickness=include_thickness,
    )


def layer_thickness(grid, T) -> np.ndarray:
    """Approximate geometric layer thickness from the hypsometric relation."""
    T = _as_float_array(T, "T")
    if T.size != grid.n_fl:
        raise ValueError(f"T must have length n_fl={grid.n_fl}")
    return (DRY_AIR_GAS_CONSTANT * T / GRAVITY) * np.log(grid.p_hl[1:] / grid.p_hl[:-1])


def build_input_vector(profile: AtmosphericProfile, tau_c, schema: FeatureSchema) -> np.ndarray:
    """Assemble one input vector from a window-truncated profile."""
    n = schema.n_fl_window
    if profile.grid.n_fl != n:
        raise ValueError(f"profile has {profile.grid.n_fl} window levels, schema expects {n}")
    tau = _as_float_array(tau_c, "tau_c")
    if tau.size != n:
        raise ValueError(f"tau_c must have length {n}, got {tau.size}")
    parts = []
    for name, size in schema.input_blocks:
        if name == "f_c":
            parts.append(profile.f_c)
        elif name == "tau_c":
            parts.append(tau)
        elif name == "T":
            parts.append(profile.T)
        elif name == "q":
            if profile.q is None:
                raise ValueError("schema requires specific humidity but the profile has none")
            parts.append(profile.q)
        elif name == "dz":
            parts.append(layer_thickness(profile.grid, profile.T))
        elif name == "T_s":
            parts.append(np.array([profile.T_s]))
        elif name == "alpha":
            parts.append(np.array([profile.alpha]))
        elif name == "mu0":
            parts.append(np.array([profile.mu0]))
    vec = np.concatenate(parts)
    assert vec.size == schema.input_len
    return vec


def build_input_matrix(profiles: Sequence[AtmosphericProfile], schema: FeatureSchema,
                       consts: PhysConsts) -> np.ndarray:
    """Stack input vectors for full-grid profiles, truncating to the window."""
    rows = []
    for profile in profiles:
        wprof = truncate_profile(profile, consts.p_trunc)
        tau = compute_cloud_optical_depth(wprof, consts)
        rows.append(build_input_vector(wprof, tau, schema))
    return np.asarray(rows)


def build_target_vector(targets: EffectTargets, schema: FeatureSchema) -> np.ndarray:
    if targets.component != schema.component:
        raise ValueError(f"targets are {targets.component!r}, schema is {schema.component!r}")
    if targets.scalar.size != schema.n_hl_window or targets.heat.size != schema.n_fl_window:
        raise ValueError("target lengths do not match the schema window")
    parts = [targets.scalar]
    if schema.component == SW:
        if targets.direct_down is None:
            raise ValueError("shortwave targets need a direct_down profile")
        parts.append(targets.direct_down)
    parts.append(targets.heat)
    return np.concatenate(parts)


def split_output_vector(vector, schema: FeatureSchema, alpha: Optional[float] = None) -> EffectTargets:
    vec = _as_float_array(vector, "vector")
    if vec.size != schema.output_len:
        raise ValueError(f"output vector must have length {schema.output_len}, got {vec.size}")
    slices = schema.output_slices()
    direct = vec[slices["direct_down"]] if schema.component == SW else None
    return EffectTargets(
        component=schema.component,
        scalar=vec[slices["scalar"]],
        heat=vec[slices["heat"]],
        direct_down=direct,
        alpha=alpha if schema.component == SW else None,
    )


@dataclass(frozen=True, eq=False)
class Normalization:
    """Per-feature z-score statistics (population std, floored)."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        mean = _as_float_array(self.mean, "mean")
        scale = _as_float_array(self.scale, "scale")
        if scale.size != mean.size:
            raise ValueError("mean and scale must have equal length")
        if np.any(scale <= 0):
            raise ValueError("scale must be strictly positive")
        mean.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def invert(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.scale + self.mean


def fit_normalization(samples) -> Normalization:
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a (n >= 2, features) sample matrix to fit normalization")
    mean = x.mean(axis=0)
    scale = np.maximum(x.std(axis=0), SCALE_FLOOR)
    return Normalization(mean=mean, scale=scale)


def targets_from_flux_effects(component: str, up, down, grid, consts: PhysConsts,
                              alpha: Optional[float] = None, direct_down=None,
                              p_trunc: float = 5000.0) -> EffectTargets:
    """Derive window training targets (scalar flux + heating effect) from
    full-grid up/down flux-effect profiles."""
    up = _as_float_array(up, "up")
    down = _as_float_array(down, "down")
    if up.size != grid.n_hl or down.size != grid.n_hl:
        raise ValueError(f"flux effects must have length n_hl={grid.n_hl}")
    net = down - up
    heat_full = -(consts.g / consts.c_p) * np.diff(net) / grid.dp
    scalar_w = truncate_to_window(up + down, grid, p_trunc)
    heat_w = truncate_to_window(heat_full, grid, p_trunc)
    direct_w = None
    if direct_down is not None:
        direct_w = truncate_to_window(direct_down, grid, p_trunc)
    return EffectTargets(component=component, scalar=scalar_w, heat=heat_w,
                         direct_down=direct_w, alpha=alpha if component == SW else None)
