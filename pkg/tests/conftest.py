import numpy as np
import pytest

from mfgkit import (
    CongestionHamiltonian,
    Coupling,
    SeparableHamiltonian,
    SpaceTimeGrid,
    SpatialTerm,
    TorusGrid,
    bifurcation,
    solve_bb,
    solve_bb_2d_stream,
    solve_mfg,
)

FPRIME1 = -6.0 * np.pi**2


def cos_profile(n, amp, base=1.0):
    x = np.arange(n) / n
    return base + amp * np.cos(2.0 * np.pi * x)


def sin_profile(n, amp):
    x = np.arange(n) / n
    return amp * np.sin(2.0 * np.pi * x)


@pytest.fixture(scope="session")
def sep_model():
    """f(x, m) = m, the monotone separable reference model."""
    return SeparableHamiltonian(Coupling(poly=(0.0, 1.0)))


@pytest.fixture(scope="session")
def mfg_solved(sep_model):
    """Equilibrium solve on a perturbed start, n = 16, T = 0.25."""
    g = TorusGrid((16,))
    st = SpaceTimeGrid(g, 16, 0.25)
    m0 = cos_profile(16, 0.1)
    m0 /= m0.mean()
    uT = sin_profile(16, 0.05)
    res = solve_mfg(sep_model, st, m0, uT, eps=1.0, tol=1e-11)
    return res, sep_model


@pytest.fixture(scope="session")
def congestion_1d_model():
    """gamma = 2, alpha = 1/2, Q = (1,), f = m + 0.1 cos(2 pi x)."""
    return CongestionHamiltonian(
        Q=(1.0,),
        alpha=0.5,
        gamma=2.0,
        coupling=Coupling(poly=(0.0, 1.0), terms=(SpatialTerm(0.1, (1,)),)),
    )


@pytest.fixture(scope="session")
def bb_solved(congestion_1d_model):
    """Flux-form solve of the 1-D congestion instance on n = 32."""
    g = TorusGrid((32,))
    res = solve_bb(congestion_1d_model, g, tol=1e-10)
    return res, congestion_1d_model, g


@pytest.fixture(scope="session")
def congestion_2d_model():
    return CongestionHamiltonian(
        Q=(1.0, 0.0),
        alpha=0.5,
        gamma=2.0,
        coupling=Coupling(poly=(0.0, 1.0), terms=(SpatialTerm(0.1, (1, 0)),)),
    )


@pytest.fixture(scope="session")
def bb2d_pair(congestion_2d_model):
    """The same 2-D instance through the flux and the stream route."""
    g = TorusGrid((16, 16))
    res_bb = solve_bb(congestion_2d_model, g, tol=1e-9)
    res_stream = solve_bb_2d_stream(congestion_2d_model, g, tol=1e-9)
    return res_bb, res_stream, congestion_2d_model, g


@pytest.fixture(scope="session")
def periodic_setup():
    """Unit-cylinder grid and cubic coupling for the periodic-branch tests."""
    st = bifurcation.periodic_grid(1, 16, 16)
    coupling = bifurcation.default_periodic_coupling(FPRIME1, cubic=1.0, f1=1.0)
    return st, coupling


@pytest.fixture(scope="session")
def branch3(periodic_setup):
    """Amplitude continuation at a = 1e-3, 3e-3, 1e-2."""
    st, coupling = periodic_setup
    return bifurcation.continue_branch(coupling, st, (1e-3, 3e-3, 1e-2))
