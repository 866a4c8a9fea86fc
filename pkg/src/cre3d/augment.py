"""Dataset augmentation and the desk-scale synthetic truth generator.

Augmentation reproduces the simple scheme used for the emulators: plain
copies of the profile set with surface albedo and solar zenith cosine
re-assigned by independent draws from the originals' empirical marginals.

The toy truth replaces the expensive reference solver pair: a smooth,
deterministic recipe that maps cloud structure to 3D flux effects while
satisfying the boundary assumptions the postprocessing relies on (zero
downwelling effect at TOA; zero LW upwelling effect at the surface;
SW upwelling at the surface tied to the albedo). Its round trips are
therefore exact, which makes it a usable end-to-end learning target.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, NamedTuple, Sequence

import numpy as np

from .column import (
    AtmosphericProfile,
    PhysConsts,
    VerticalGrid,
    compute_cloud_optical_depth,
    truncate_profile,
)
from .postproc import LW, SW, EffectTargets


def augment_scalars(profiles: Sequence[AtmosphericProfile], k: int, seed: int,
                    ) -> List[AtmosphericProfile]:
    """Originals followed by k copies with re-assigned alpha and mu0.

    Replacements are drawn independently, with replacement, from the
    original value sets; every other field is shared verbatim.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    profiles = list(profiles)
    if not profiles:
        raise ValueError("need at least one profile")
    rng = np.random.default_rng(seed)
    alphas = np.array([p.alpha for p in profiles])
    mu0s = np.array([p.mu0 for p in profiles])
    out = list(profiles)
    for copy_idx in range(1, k + 1):
        new_alphas = rng.choice(alphas, size=len(profiles), replace=True)
        new_mu0s = rng.choice(mu0s, size=len(profiles), replace=True)
        for p, a, m in zip(profiles, new_alphas, new_mu0s):
            pid = None if p.pid is None else f"{p.pid}_c{copy_idx}"
            out.append(replace(p, alpha=float(a), mu0=float(m), pid=pid))
    return out


@dataclass(frozen=True)
class ToyTruthParams:
    amp_lw: float = 2.0  # W m^-2
    amp_sw: float = 3.0  # W m^-2
    decay: float = 5.0  # layers; vertical smearing scale


class ToyTruth(NamedTuple):
    """Window-sized truth: targets plus the up/down decomposition they came from."""

    lw: EffectTargets
    sw: EffectTargets
    up_lw: np.ndarray
    down_lw: np.ndarray
    up_sw: np.ndarray
    down_sw: np.ndarray
    direct_sw: np.ndarray


def _smear_kernels(n: int, decay: float):
    j = np.arange(n + 1)[:, None]  # half levels
    i = np.arange(n)[None, :]  # full levels
    down = np.where(i < j, np.exp(-(j - 1 - i) / decay), 0.0)
    up = np.where(i >= j, np.exp(-(i - j) / decay), 0.0)
    return down, up


def toy_truth(profile: AtmosphericProfile, consts: PhysConsts,
              params: ToyTruthParams = ToyTruthParams()) -> ToyTruth:
    """Deterministic synthetic 3D-effect truth for one profile (window arrays)."""
    wprof = truncate_profile(profile, consts.p_trunc)
    wgrid = wprof.grid
    tau = compute_cloud_optical_depth(wprof, consts)
    w = wprof.f_c * -np.expm1(-tau)
    n = wgrid.n_fl
    down_k, up_k = _smear_kernels(n, params.decay)
    taper = 1.0 - np.arange(n + 1) / (n + 1)

    down_lw = params.amp_lw * (down_k @ w)
    up_lw = params.amp_lw * taper * (up_k @ w)

    if profile.mu0 > 0:
        scale = params.amp_sw * profile.mu0
        down_sw = scale * (down_k @ w)
        up_sw = scale * taper * (up_k @ w)
        up_sw[-1] = profile.alpha * down_sw[-1]
        direct_sw = -scale * np.concatenate([[0.0], np.cumsum(w)])
    else:
        down_sw = np.zeros(n + 1)
        up_sw = np.zeros(n + 1)
        direct_sw = np.zeros(n + 1)

    def targets(component, up, down, direct=None):
        net = down - up
        heat = -(consts.g / consts.c_p) * np.diff(net) / wgrid.dp
        return EffectTargets(component=component, scalar=up + down, heat=heat,
                             direct_down=direct,
                             alpha=profile.alpha if component == SW else None)

    return ToyTruth(
        lw=targets(LW, up_lw, down_lw),
        sw=targets(SW, up_sw, down_sw, direct_sw),
        up_lw=up_lw, down_lw=down_lw,
        up_sw=up_sw, down_sw=down_sw, direct_sw=direct_sw,
    )


def make_reference_grid() -> VerticalGrid:
    """A 137-full-level grid whose tropospheric window (p_fl >= 50 hPa)
    holds exactly 90 full levels, mirroring the operational layout."""
    stratosphere = np.geomspace(1.0, 4500.0, 48)
    troposphere = np.geomspace(5600.0, 101325.0, 90)
    return VerticalGrid(np.concatenate([stratosphere, troposphere]))


def generate_profiles(n: int, grid: VerticalGrid, seed: int,
                      with_humidity: bool = True) -> List[AtmosphericProfile]:
    """Random but physically plausible cloudy columns for desk-scale runs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    p_fl = grid.p_fl
    n_fl = grid.n_fl
    p_sfc = grid.p_hl[-1]
    profiles = []
    for idx in range(n):
        t_s = rng.uniform(255.0, 305.0)
        temp = np.maximum(200.0, t_s * (p_fl / p_sfc) ** 0.19)
        f_c = np.zeros(n_fl)
        q_l = np.zeros(n_fl)
        q_i = np.zeros(n_fl)
        for _ in range(rng.integers(1, 4)):
            centre = rng.uniform(25000.0, 95000.0)
            half_width = rng.uniform(2000.0, 15000.0)
            layer = np.abs(p_fl - centre) < half_width
            if not layer.any():
                continue
            amount = rng.uniform(0.1, 1.0)
            f_c[layer] = np.clip(f_c[layer] + amount * rng.uniform(0.5, 1.0, layer.sum()), 0, 1)
            condensate = rng.uniform(1e-5, 5e-4)
            cold = temp < 258.0
            q_i[layer & cold] += condensate
            q_l[layer & ~cold] += condensate
        profiles.append(AtmosphericProfile(
            grid=grid,
            T=temp,
            f_c=f_c,
            q_l=q_l,
            q_i=q_i,
            r_l=np.full(n_fl, rng.uniform(5e-6, 15e-6)),
            r_i=np.full(n_fl, rng.uniform(2e-5, 6e-5)),
            T_s=float(t_s),
            alpha=float(rng.uniform(0.05, 0.8)),
            mu0=float(rng.uniform(-0.3, 1.0)),
            q=0.01 * (p_fl / p_sfc) ** 3 if with_humidity else None,
            pid=f"p{idx:06d}",
        ))
    return profiles
