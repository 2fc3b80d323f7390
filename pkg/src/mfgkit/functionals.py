"""Payoff functionals and their exact discrete variational derivatives.

Time quadrature is the implicit-midpoint (Crank-Nicolson) rule: every
running-cost term is evaluated at slab midpoints (a_{j+1/2} = (a_j +
a_{j+1}) / 2) and weighted by dt. The derivative fields reported here
are the *exact* gradients of these discrete values with respect to the
node values, normalized by the quadrature weights (cell volume times
trapezoid time weight), so that

    d/ds Value(state + s * delta) |_{s=0}  ==  <report.dX, delta>

holds to machine precision with the discrete inner product. With this
convention the derivative fields are node-centered averages of per-slab
midpoint residuals, and they all vanish at solved states, data rows
included.

Sign and role conventions:

* ``psi1``: m-weighted running cost with the m-antiderivative F_H of H;
  its dm field is the discrete backward HJB residual.
* ``psi2``: same but with m H in place of F_H; its du field is the
  discrete weak-form forward continuity residual (so critical points in
  u enforce the transport equation).
* ``psi1_hat`` / ``psi2_hat``: ergodic (single-slice) versions.
* ``psi1_tilde`` / ``psi2_tilde``: ergodic versions with the multiplier
  term Hbar * (1 - integral of m); their dHbar is the mass defect.
* ``phi_bb``: convex congestion objective in the density/flux variables
  (m, w); minimizers correspond to stationary congestion equilibria.
* ``j_functional``: the concave-side objective for congestion exponents
  alpha > 1 (equal to minus ``psi1_hat``).
* ``social_cost`` / ``b_cost`` / ``a_cost``: control-side costs used by
  the planner comparison and the duality crosscheck. Controls live on
  slab midpoints (staggered in time), which is what makes the discrete
  duality identities exact rather than O(dt^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, ModelError
from .grids import SpaceTimeGrid, TorusGrid
from . import spectral
from .hamiltonians import CongestionHamiltonian, SeparableHamiltonian

__all__ = [
    "GameState",
    "StationaryState",
    "FunctionalReport",
    "psi1",
    "psi2",
    "psi1_hat",
    "psi2_hat",
    "psi1_tilde",
    "psi2_tilde",
    "phi_bb",
    "j_functional",
    "optimal_control",
    "social_cost",
    "b_cost",
    "a_cost",
    "hamiltonian_profile",
]


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class GameState:
    """Fields (m, u) on [0, T] x T^d plus the data they should match.

    ``m`` and ``u`` have shape (n_t + 1, *space); ``m0`` and ``uT`` are
    spatial fields. The evaluators do not require m[0] == m0 or
    u[-1] == uT; the mismatch simply shows up in the derivative fields.
    """

    grid: SpaceTimeGrid
    m: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    m0: np.ndarray = field(repr=False)
    uT: np.ndarray = field(repr=False)
    eps: float = 1.0

    def __post_init__(self):
        if self.grid.periodic_time:
            raise GridError("GameState requires an interval time axis")
        for name in ("m", "u", "m0", "uT"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.m.shape != self.grid.field_shape or self.u.shape != self.grid.field_shape:
            raise GridError(
                f"state fields {self.m.shape} do not match grid {self.grid.field_shape}"
            )
        if self.m0.shape != self.grid.space.shape or self.uT.shape != self.grid.space.shape:
            raise GridError("data fields must be spatial fields")
        if self.eps < 0.0:
            raise GridError(f"viscosity must be >= 0, got {self.eps}")


@dataclass(frozen=True)
class StationaryState:
    """Fields (m, u) on T^d, optionally with the ergodic constant."""

    grid: TorusGrid
    m: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    eps: float = 0.0
    Hbar: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "m", _frozen(self.m))
        object.__setattr__(self, "u", _frozen(self.u))
        if self.m.shape != self.grid.shape or self.u.shape != self.grid.shape:
            raise GridError("stationary fields must live on the grid")
        if self.eps < 0.0:
            raise GridError(f"viscosity must be >= 0, got {self.eps}")


@dataclass
class FunctionalReport:
    """Value plus exact discrete derivative fields of one functional."""

    value: float
    dm: np.ndarray | None = None
    du: np.ndarray | None = None
    dw: np.ndarray | None = None
    dHbar: float | None = None
    extras: dict = field(default_factory=dict)


def _xmean(arr: np.ndarray) -> np.ndarray:
    """Spatial node average of trailing axes for a (n_slabs, *space) array."""
    return arr.reshape(arr.shape[0], -1).mean(axis=1)


def _dynamic_report(state: GameState, model, which: str) -> FunctionalReport:
    grid = state.grid
    sp = grid.space
    dt = grid.dt
    eps = state.eps

    mbar = 0.5 * (state.m[:-1] + state.m[1:])
    ubar = 0.5 * (state.u[:-1] + state.u[1:])
    du_slab = state.u[1:] - state.u[:-1]
    dm_slab_diff = state.m[1:] - state.m[:-1]

    pbar = spectral.gradient(sp, ubar)
    lap_ubar = spectral.laplacian(sp, ubar)
    lap_mbar = spectral.laplacian(sp, mbar)

    hv = model.eval(sp, pbar, mbar)
    adv = -du_slab / dt - eps * lap_ubar  # -u_t - eps lap(u) at midpoints

    if which == "psi1":
        FH, dpFH = model.eval_F_H(sp, pbar, mbar)
        running = mbar * adv + FH
        dm_slab = adv + hv.H
        W = dpFH
    elif which == "psi2":
        running = mbar * (adv + hv.H)
        dm_slab = adv + hv.H + mbar * hv.dmH
        W = mbar * hv.dpH
    else:  # pragma: no cover
        raise ValueError(which)

    terminal_pairing = float(np.mean(state.m[-1] * state.u[-1]))
    initial_pairing = float(np.mean(state.m0 * state.u[0]))
    terminal_cost = float(np.mean(state.m[-1] * state.uT))
    value = (
        dt * float(np.sum(_xmean(running)))
        + terminal_pairing
        - initial_pairing
        - terminal_cost
    )

    # Node-centered derivative fields (see module docstring).
    N = grid.n_t
    dm = np.empty_like(state.m)
    dm[0] = dm_slab[0]
    dm[1:N] = 0.5 * (dm_slab[:-1] + dm_slab[1:])
    dm[N] = dm_slab[-1] + (2.0 / dt) * (state.u[-1] - state.uT)

    divW = spectral.divergence(sp, W)
    fp_slab = dm_slab_diff / dt - eps * lap_mbar - divW
    du = np.empty_like(state.u)
    du[0] = fp_slab[0] + (2.0 / dt) * (state.m[0] - state.m0)
    du[1:N] = 0.5 * (fp_slab[:-1] + fp_slab[1:])
    du[N] = fp_slab[-1]

    # Second displayed form (transport-weighted); equal up to roundoff by
    # summation by parts in time and self-adjointness of the Laplacian.
    if which == "psi1":
        integrand = FH
    else:
        integrand = mbar * hv.H
    transported = ubar * (dm_slab_diff / dt - eps * lap_mbar)
    value_u_weighted = (
        dt * float(np.sum(_xmean(transported + integrand)))
        + float(np.mean(state.m[0] * state.u[0]))
        - initial_pairing
        - terminal_cost
    )

    extras = {
        "terminal_pairing": terminal_pairing,
        "initial_pairing": initial_pairing,
        "terminal_cost": terminal_cost,
        "value_u_weighted": value_u_weighted,
        "hjb_slab_residual": adv + hv.H,
        "fp_slab_residual": fp_slab if which == "psi2" else None,
    }
    if hasattr(model, "coupling"):
        delta = model.coupling.F(sp, mbar) - model.coupling.antiderivative_raw(sp, mbar)
        if which == "psi1":
            extras["value_raw_F"] = value + dt * float(np.sum(_xmean(delta)))
    return FunctionalReport(value=value, dm=dm, du=du, extras=extras)


def psi1(state: GameState, model) -> FunctionalReport:
    """First payoff (antiderivative form); dm is the HJB residual field."""
    return _dynamic_report(state, model, "psi1")


def psi2(state: GameState, model) -> FunctionalReport:
    """Second payoff (m H form); du is the continuity residual field."""
    return _dynamic_report(state, model, "psi2")


def psi1_hat(state: StationaryState, model) -> FunctionalReport:
    grid = state.grid
    p = spectral.gradient(grid, state.u)
    lap_u = spectral.laplacian(grid, state.u)
    lap_m = spectral.laplacian(grid, state.m)
    hv = model.eval(grid, p, state.m)
    FH, dpFH = model.eval_F_H(grid, p, state.m)
    value = float(np.mean(-state.eps * state.m * lap_u + FH))
    dm = -state.eps * lap_u + hv.H
    du = -state.eps * lap_m - spectral.divergence(grid, dpFH)
    extras = {}
    if hasattr(model, "coupling"):
        delta = model.coupling.F(grid, state.m) - model.coupling.antiderivative_raw(
            grid, state.m
        )
        extras["value_raw_F"] = value + float(np.mean(delta))
    return FunctionalReport(value=value, dm=dm, du=du, extras=extras)


def psi2_hat(state: StationaryState, model) -> FunctionalReport:
    grid = state.grid
    p = spectral.gradient(grid, state.u)
    lap_u = spectral.laplacian(grid, state.u)
    lap_m = spectral.laplacian(grid, state.m)
    hv = model.eval(grid, p, state.m)
    value = float(np.mean(-state.eps * state.m * lap_u + state.m * hv.H))
    dm = -state.eps * lap_u + hv.H + state.m * hv.dmH
    du = -state.eps * lap_m - spectral.divergence(grid, state.m * hv.dpH)
    return FunctionalReport(value=value, dm=dm, du=du)


def _with_multiplier(base: FunctionalReport, state: StationaryState) -> FunctionalReport:
    if state.Hbar is None:
        raise ModelError("multiplier form needs a state with Hbar set")
    mass_defect = 1.0 - float(np.mean(state.m))
    return FunctionalReport(
        value=base.value + state.Hbar * mass_defect,
        dm=base.dm - state.Hbar,
        du=base.du,
        dHbar=mass_defect,
        extras=dict(base.extras),
    )


def psi1_tilde(state: StationaryState, model) -> FunctionalReport:
    """psi1_hat plus Hbar (1 - mass); stationary points pin unit mass."""
    return _with_multiplier(psi1_hat(state, model), state)


def psi2_tilde(state: StationaryState, model) -> FunctionalReport:
    return _with_multiplier(psi2_hat(state, model), state)


def phi_bb(
    grid: TorusGrid, m: np.ndarray, w: np.ndarray, model: CongestionHamiltonian
) -> FunctionalReport:
    """Convex congestion objective in (density m, flux w), alpha < 1.

    Phi(m, w) = int [ -w.Q/(1-alpha)
                      + |w|^{gamma'} m^{-beta} / ((1-alpha) gamma')
                      + F(x, m) ],   beta = (gamma'-1)(1-alpha).

    The integrand is jointly convex in (m, w); constrained minimizers
    over unit-mass m > 0 and divergence-free w are stationary equilibria.
    """
    if not isinstance(model, CongestionHamiltonian):
        raise ModelError("phi_bb needs a congestion model")
    if model.alpha >= 1.0:
        raise ModelError("phi_bb requires alpha < 1")
    if model.gamma == 1.0:
        raise ModelError(
            "phi_bb is undefined at gamma = 1: the flux power term "
            "degenerates to the constraint |w| <= m^{1-alpha}; "
            "solve_bb handles gamma = 1 through its regularized route"
        )
    gp = model.gamma_prime
    a = model.alpha
    beta = model.beta
    from .hamiltonians import _check_floor

    _check_floor(m, model.m_min)
    Qarr = np.array(model.Q).reshape((model.dim,) + (1,) * m.ndim)
    wmag = np.sqrt(np.sum(w * w, axis=0))
    wQ = np.sum(w * Qarr, axis=0)
    value = float(
        np.mean(
            -wQ / (1.0 - a)
            + wmag**gp * m ** (-beta) / ((1.0 - a) * gp)
            + model.coupling.F(grid, m)
        )
    )
    dm = -(wmag**gp) * m ** (-beta - 1.0) / model.gamma + model.coupling.f(grid, m)
    dw = (-Qarr + CongestionHamiltonian._pow(wmag, gp - 2.0) * w * m ** (-beta)) / (
        1.0 - a
    )
    return FunctionalReport(value=value, dm=dm, dw=dw)


def j_functional(
    grid: TorusGrid, m: np.ndarray, u: np.ndarray, model: CongestionHamiltonian
) -> FunctionalReport:
    """Convex objective for congestion exponents alpha > 1 (= -psi1_hat).

    J(m, u) = int [ m^{1-alpha} |grad u + Q|^gamma / ((alpha-1) gamma)
                    + F(x, m) ],  convex for 1 < alpha <= gamma.
    """
    if not isinstance(model, CongestionHamiltonian):
        raise ModelError("j_functional needs a congestion model")
    if model.alpha <= 1.0:
        raise ModelError("j_functional requires alpha > 1")
    from .hamiltonians import _check_floor

    _check_floor(m, model.m_min)
    a, g = model.alpha, model.gamma
    p = spectral.gradient(grid, u)
    r = p + np.array(model.Q).reshape((model.dim,) + (1,) * m.ndim)
    rmag = np.sqrt(np.sum(r * r, axis=0))
    value = float(
        np.mean(m ** (1.0 - a) * rmag**g / ((a - 1.0) * g) + model.coupling.F(grid, m))
    )
    dm = -(m ** (-a)) * rmag**g / g + model.coupling.f(grid, m)
    flux = m ** (1.0 - a) * CongestionHamiltonian._pow(rmag, g - 2.0) * r
    du = -spectral.divergence(grid, flux) / (a - 1.0)
    return FunctionalReport(value=value, dm=dm, du=du)


def optimal_control(state: GameState, model) -> np.ndarray:
    """Feedback drift -dpH at slab midpoints; shape (d, n_t, *space)."""
    sp = state.grid.space
    mbar = 0.5 * (state.m[:-1] + state.m[1:])
    ubar = 0.5 * (state.u[:-1] + state.u[1:])
    pbar = spectral.gradient(sp, ubar)
    return -model.eval(sp, pbar, mbar).dpH


def social_cost(state: GameState, model, control: np.ndarray | None = None) -> float:
    """Control-side cost S = int int m L(x, -r, m) + int uT m(T).

    ``control`` is staggered in time (shape (d, n_t, *space)); defaults
    to the state's feedback control. At states satisfying the discrete
    continuity rows with m(0) = m0, S = -psi2 exactly.
    """
    grid = state.grid
    sp = grid.space
    mbar = 0.5 * (state.m[:-1] + state.m[1:])
    if control is None:
        control = optimal_control(state, model)
    L = model.legendre(sp, -control, mbar)
    return grid.dt * float(np.sum(_xmean(mbar * L))) + float(
        np.mean(state.uT * state.m[-1])
    )


def b_cost(state: GameState, model: SeparableHamiltonian, control=None) -> float:
    """Transport-side dual cost B = int int [m L0(-r) + F(x, m)] + int uT m(T)."""
    if not isinstance(model, SeparableHamiltonian):
        raise ModelError("b_cost is defined for separable models")
    grid = state.grid
    sp = grid.space
    mbar = 0.5 * (state.m[:-1] + state.m[1:])
    if control is None:
        control = optimal_control(state, model)
    if hasattr(model.kinetic, "legendre"):
        L0 = model.kinetic.legendre(-control)
    else:
        from .hamiltonians import _numeric_radial_legendre

        L0 = _numeric_radial_legendre(model.kinetic, -control)
    F = model.coupling.F(sp, mbar)
    return grid.dt * float(np.sum(_xmean(mbar * L0 + F))) + float(
        np.mean(state.uT * state.m[-1])
    )


def a_cost(state: GameState, model: SeparableHamiltonian) -> float:
    """Obstacle-side dual cost A = int int F*(x, s) - int u(0) m0.

    Evaluated at the state's induced local control s = f(x, m) on slab
    midpoints. At states satisfying the discrete HJB rows with
    u(T) = uT, A = +psi1 exactly.
    """
    if not isinstance(model, SeparableHamiltonian):
        raise ModelError("a_cost is defined for separable models")
    grid = state.grid
    sp = grid.space
    mbar = 0.5 * (state.m[:-1] + state.m[1:])
    s = model.coupling.f(sp, mbar)
    fstar = model.coupling.conjugate(sp, s)
    return grid.dt * float(np.sum(_xmean(fstar))) - float(
        np.mean(state.u[0] * state.m0)
    )


def hamiltonian_profile(state: GameState, model) -> np.ndarray:
    """psi1_hat evaluated slice by slice (conserved along solved dynamics)."""
    sp = state.grid.space
    out = np.empty(state.grid.num_time_nodes)
    for j in range(len(out)):
        slice_state = StationaryState(sp, state.m[j], state.u[j], eps=state.eps)
        out[j] = psi1_hat(slice_state, model).value
    return out
