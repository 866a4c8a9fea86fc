"""Vertical grid bookkeeping, atmospheric profiles, and column physics.

Arrays run top-of-atmosphere (index 0) to surface. Fluxes live on half
levels (layer interfaces), heating rates and cloud properties on full
levels (layer centres). All quantities are SI; heating rates are K s^-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

GRAVITY = 9.81  # m s^-2
SPECIFIC_HEAT_DRY_AIR = 1004.0  # J kg^-1 K^-1
DRY_AIR_GAS_CONSTANT = 287.0  # J kg^-1 K^-1, for layer-thickness estimates
SECONDS_PER_DAY = 86400.0

DEFAULT_P_TRUNC = 5000.0  # Pa; tropospheric window boundary (50 hPa)


@dataclass(frozen=True)
class PhysConsts:
    """Physical constants used by the column formulas.

    Liquid/ice densities are standard textbook values; the truncation
    pressure marks the top of the corrected tropospheric window.
    """

    g: float = GRAVITY
    c_p: float = SPECIFIC_HEAT_DRY_AIR
    rho_l: float = 1000.0  # kg m^-3
    rho_i: float = 917.0  # kg m^-3
    p_trunc: float = DEFAULT_P_TRUNC  # Pa

    def __post_init__(self) -> None:
        for name in ("g", "c_p", "rho_l", "rho_i", "p_trunc"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"PhysConsts.{name} must be finite and > 0, got {value!r}")


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D array")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"{name} contains a non-finite value at level {bad}")
    return arr


@dataclass(frozen=True, eq=False)
class VerticalGrid:
    """Half-level pressure coordinate, strictly increasing TOA to surface."""

    p_hl: np.ndarray

    def __post_init__(self) -> None:
        p = _as_float_array(self.p_hl, "p_hl")
        if p.size < 2:
            raise ValueError("p_hl needs at least two half levels")
        if p[0] < 0:
            raise ValueError("top-of-atmosphere pressure must be >= 0")
        if not np.all(np.diff(p) > 0):
            bad = int(np.flatnonzero(np.diff(p) <= 0)[0])
            raise ValueError(f"half-level pressures must increase strictly; violated at index {bad}")
        p.setflags(write=False)
        object.__setattr__(self, "p_hl", p)

    @property
    def n_hl(self) -> int:
        return self.p_hl.size

    @property
    def n_fl(self) -> int:
        return self.p_hl.size - 1

    @property
    def p_fl(self) -> np.ndarray:
        return 0.5 * (self.p_hl[:-1] + self.p_hl[1:])

    @property
    def dp(self) -> np.ndarray:
        return np.diff(self.p_hl)

    def window_start(self, p_trunc: float = DEFAULT_P_TRUNC) -> int:
        """First full-level index inside the tropospheric window (p_fl >= p_trunc)."""
        inside = np.flatnonzero(self.p_fl >= p_trunc)
        if inside.size == 0:
            raise ValueError(f"no full level has p_fl >= {p_trunc} Pa; window is empty")
        return int(inside[0])

    def n_fl_window(self, p_trunc: float = DEFAULT_P_TRUNC) -> int:
        return self.n_fl - self.window_start(p_trunc)

    def n_hl_window(self, p_trunc: float = DEFAULT_P_TRUNC) -> int:
        return self.n_fl_window(p_trunc) + 1

    def window(self, p_trunc: float = DEFAULT_P_TRUNC) -> "VerticalGrid":
        """Grid restricted to the half levels bounding the window full levels."""
        return VerticalGrid(self.p_hl[self.window_start(p_trunc):])

    def same_as(self, other: "VerticalGrid") -> bool:
        return self.p_hl.size == other.p_hl.size and bool(np.array_equal(self.p_hl, other.p_hl))


@dataclass(frozen=True, eq=False)
class AtmosphericProfile:
    """Per-column physical state on a vertical grid.

    `q` (specific humidity) is optional: it only feeds the optional
    humidity input block of the emulators and plays no role elsewhere.
    """

    grid: VerticalGrid
    T: np.ndarray  # K, full levels
    f_c: np.ndarray  # cloud fraction, full levels
    q_l: np.ndarray  # liquid mixing ratio, kg kg^-1
    q_i: np.ndarray  # ice mixing ratio, kg kg^-1
    r_l: np.ndarray  # liquid effective radius, m
    r_i: np.ndarray  # ice effective radius, m
    T_s: float  # surface temperature, K
    alpha: float  # surface shortwave albedo
    mu0: float  # cosine of solar zenith angle
    q: Optional[np.ndarray] = None  # specific humidity, kg kg^-1
    pid: Optional[str] = None

    def __post_init__(self) -> None:
        n_fl = self.grid.n_fl
        for name in ("T", "f_c", "q_l", "q_i", "r_l", "r_i"):
            arr = _as_float_array(getattr(self, name), name)
            if arr.size != n_fl:
                raise ValueError(f"{name} must have length n_fl={n_fl}, got {arr.size}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.q is not None:
            arr = _as_float_array(self.q, "q")
            if arr.size != n_fl:
                raise ValueError(f"q must have length n_fl={n_fl}, got {arr.size}")
            arr.setflags(write=False)
            object.__setattr__(self, "q", arr)
        if np.any(self.f_c < 0) or np.any(self.f_c > 1):
            bad = int(np.flatnonzero((self.f_c < 0) | (self.f_c > 1))[0])
            raise ValueError(f"f_c must lie in [0, 1]; violated at level {bad}")
        for name in ("q_l", "q_i"):
            arr = getattr(self, name)
            if np.any(arr < 0):
                bad = int(np.flatnonzero(arr < 0)[0])
                raise ValueError(f"{name} must be >= 0; violated at level {bad}")
        for scalar, lo, hi in (("alpha", 0.0, 1.0), ("mu0", -1.0, 1.0)):
            value = getattr(self, scalar)
            if not (math.isfinite(value) and lo <= value <= hi):
                raise ValueError(f"{scalar} must lie in [{lo}, {hi}], got {value!r}")
        if not math.isfinite(self.T_s):
            raise ValueError("T_s must be finite")


@dataclass(frozen=True, eq=False)
class FluxSet:
    """Up/down (and optionally direct-down) fluxes on half levels, with
    the heating-rate profile they imply on full levels."""

    up: np.ndarray
    down: np.ndarray
    heat: np.ndarray
    direct_down: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        up = _as_float_array(self.up, "up")
        down = _as_float_array(self.down, "down")
        heat = _as_float_array(self.heat, "heat")
        if down.size != up.size:
            raise ValueError("up and down must have equal length")
        if heat.size != up.size - 1:
            raise ValueError("heat must have length n_hl - 1")
        if self.direct_down is not None:
            direct = _as_float_array(self.direct_down, "direct_down")
            if direct.size != up.size:
                raise ValueError("direct_down must have length n_hl")
            direct.setflags(write=False)
            object.__setattr__(self, "direct_down", direct)
        for name, arr in (("up", up), ("down", down), ("heat", heat)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def net(self) -> np.ndarray:
        return self.down - self.up

    @property
    def scalar(self) -> np.ndarray:
        return self.down + self.up


def compute_cloud_optical_depth(profile: AtmosphericProfile, consts: PhysConsts) -> np.ndarray:
    """Cloud optical depth per layer in the geometric-optics limit.

    tau = (3/2) (dp/g) (q_l / (rho_l r_l) + q_i / (rho_i r_i)), exactly
    zero where both condensate mixing ratios are zero.
    """
    q_l, q_i, r_l, r_i = profile.q_l, profile.q_i, profile.r_l, profile.r_i
    for q, r, name in ((q_l, r_l, "r_l"), (q_i, r_i, "r_i")):
        bad = np.flatnonzero((q > 0) & (r <= 0))
        if bad.size:
            raise ValueError(f"{name} must be > 0 where condensate is present; violated at level {int(bad[0])}")
    term_l = np.where(q_l > 0, q_l / (consts.rho_l * np.where(r_l > 0, r_l, 1.0)), 0.0)
    term_i = np.where(q_i > 0, q_i / (consts.rho_i * np.where(r_i > 0, r_i, 1.0)), 0.0)
    return 1.5 * (profile.grid.dp / consts.g) * (term_l + term_i)


def compute_heating_rates(net_flux, grid: VerticalGrid, consts: PhysConsts) -> np.ndarray:
    """Heating rate per layer from a net-flux (down minus up) profile.

    H_i = -(g/c_p) * dF_i / dp_i with d taken base-minus-top, so a layer
    that absorbs (net flux decreasing downwards) warms.
    """
    f = _as_float_array(net_flux, "net_flux")
    if f.size != grid.n_hl:
        raise ValueError(f"net_flux must have length n_hl={grid.n_hl}, got {f.size}")
    return -(consts.g / consts.c_p) * np.diff(f) / grid.dp


def net_flux_increments(heat, grid: VerticalGrid, consts: PhysConsts) -> np.ndarray:
    """Invert compute_heating_rates: per-layer net-flux change dF_i = -(c_p/g) H_i dp_i.

    Accepts a window heat array (trailing layers of the grid) or a full one.
    """
    h = _as_float_array(heat, "heat")
    if h.size > grid.n_fl or h.size == 0:
        raise ValueError(f"heat length {h.size} does not fit grid with n_fl={grid.n_fl}")
    dp = grid.dp[grid.n_fl - h.size:]
    return -(consts.c_p / consts.g) * h * dp


def truncate_to_window(x, grid: VerticalGrid, p_trunc: float = DEFAULT_P_TRUNC) -> np.ndarray:
    """Restrict a full- or half-level array to the tropospheric window.

    Full levels with p_fl >= p_trunc are kept, together with the half
    levels bounding them; the window is contiguous and ends at the surface.
    """
    arr = _as_float_array(x, "x")
    i0 = grid.window_start(p_trunc)
    if arr.size == grid.n_fl or arr.size == grid.n_hl:
        return arr[i0:].copy()
    raise ValueError(f"array length {arr.size} matches neither n_fl={grid.n_fl} nor n_hl={grid.n_hl}")


def extend_to_full(up_trunc, down_trunc, direct_trunc, heat_trunc,
                   grid: VerticalGrid, p_trunc: float = DEFAULT_P_TRUNC) -> FluxSet:
    """Recover full-grid flux profiles from window ones.

    Downwelling (total and direct) and heating are zero above the window;
    upwelling is held constant at its topmost in-window value.
    """
    i0 = grid.window_start(p_trunc)
    n_hl_w = grid.n_hl - i0
    n_fl_w = grid.n_fl - i0
    up_t = _as_float_array(up_trunc, "up_trunc")
    down_t = _as_float_array(down_trunc, "down_trunc")
    heat_t = _as_float_array(heat_trunc, "heat_trunc")
    if up_t.size != n_hl_w or down_t.size != n_hl_w:
        raise ValueError(f"window flux arrays must have length {n_hl_w}")
    if heat_t.size != n_fl_w:
        raise ValueError(f"window heat array must have length {n_fl_w}")
    up = np.concatenate([np.full(i0, up_t[0]), up_t])
    down = np.concatenate([np.zeros(i0), down_t])
    heat = np.concatenate([np.zeros(i0), heat_t])
    direct = None
    if direct_trunc is not None:
        direct_t = _as_float_array(direct_trunc, "direct_trunc")
        if direct_t.size != n_hl_w:
            raise ValueError(f"window direct array must have length {n_hl_w}")
        direct = np.concatenate([np.zeros(i0), direct_t])
    return FluxSet(up=up, down=down, heat=heat, direct_down=direct)


def flux_set_from_components(up, down, grid: VerticalGrid, consts: PhysConsts,
                             direct_down=None) -> FluxSet:
    """Build a FluxSet whose heating rates are derived from up/down."""
    up = _as_float_array(up, "up")
    down = _as_float_array(down, "down")
    if up.size != grid.n_hl or down.size != grid.n_hl:
        raise ValueError(f"flux arrays must have length n_hl={grid.n_hl}")
    heat = compute_heating_rates(down - up, grid, consts)
    return FluxSet(up=up, down=down, heat=heat, direct_down=direct_down)


def apply_correction(baseline: FluxSet, effect: FluxSet,
                     grid: VerticalGrid, consts: PhysConsts) -> FluxSet:
    """Add an effect FluxSet to a baseline one; heating rates are recomputed
    from the corrected net flux."""
    if baseline.up.size != effect.up.size:
        raise ValueError("baseline and effect are on different grids")
    if baseline.up.size != grid.n_hl:
        raise ValueError(f"flux sets do not match grid with n_hl={grid.n_hl}")
    direct = None
    if baseline.direct_down is not None or effect.direct_down is not None:
        b = baseline.direct_down if baseline.direct_down is not None else 0.0
        e = effect.direct_down if effect.direct_down is not None else 0.0
        direct = b + e
    return flux_set_from_components(baseline.up + effect.up, baseline.down + effect.down,
                                    grid, consts, direct_down=direct)


def truncate_profile(profile: AtmosphericProfile, p_trunc: float = DEFAULT_P_TRUNC) -> AtmosphericProfile:
    """Profile restricted to the tropospheric window grid."""
    grid = profile.grid
    i0 = grid.window_start(p_trunc)
    return AtmosphericProfile(
        grid=grid.window(p_trunc),
        T=profile.T[i0:], f_c=profile.f_c[i0:],
        q_l=profile.q_l[i0:], q_i=profile.q_i[i0:],
        r_l=profile.r_l[i0:], r_i=profile.r_i[i0:],
        T_s=profile.T_s, alpha=profile.alpha, mu0=profile.mu0,
        q=None if profile.q is None else profile.q[i0:],
        pid=profile.pid,
    )
