import numpy as np
import pytest

from cre3d.augment import make_reference_grid
from cre3d.column import AtmosphericProfile, PhysConsts, VerticalGrid


@pytest.fixture(scope="session")
def consts():
    return PhysConsts()


@pytest.fixture(scope="session")
def ref_grid():
    return make_reference_grid()


@pytest.fixture
def small_grid():
    # 10 full levels, 4 of them above the 50 hPa window boundary.
    return VerticalGrid(np.array([100.0, 500.0, 1000.0, 2000.0, 4000.0,
                                  6500.0, 9000.0, 20000.0, 50000.0, 80000.0, 101325.0]))


def make_profile(grid, seed=0, mu0=0.6, alpha=0.2):
    rng = np.random.default_rng(seed)
    n = grid.n_fl
    q_l = np.where(rng.random(n) < 0.4, rng.uniform(1e-5, 4e-4, n), 0.0)
    q_i = np.where(rng.random(n) < 0.3, rng.uniform(1e-5, 2e-4, n), 0.0)
    return AtmosphericProfile(
        grid=grid,
        T=rng.uniform(210.0, 290.0, n),
        f_c=rng.uniform(0.0, 1.0, n),
        q_l=q_l,
        q_i=q_i,
        r_l=np.full(n, 1e-5),
        r_i=np.full(n, 4e-5),
        T_s=290.0,
        alpha=alpha,
        mu0=mu0,
        q=rng.uniform(0.0, 0.01, n),
        pid=f"t{seed}",
    )


@pytest.fixture
def small_profile(small_grid):
    return make_profile(small_grid, seed=1)
