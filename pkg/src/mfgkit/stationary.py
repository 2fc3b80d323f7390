"""Stationary congestion equilibria via convex variational reformulation.

For congestion exponents alpha < 1 the ergodic equilibrium system (here
with zero viscosity)

    |grad u + Q|^gamma / (gamma m^alpha) = f(x, m) + Hbar,
    div( m^{1-alpha} |grad u + Q|^{gamma-2} (grad u + Q) ) = 0,
    m > 0,  int m = 1,

is solved by minimizing the jointly convex functional ``phi_bb`` in the
density/flux pair (m, w) over the affine constraints int m = 1 and
div w = 0, with the flux transform

    w = m^{1-alpha} |grad u + Q|^{gamma-2} (grad u + Q),
    grad u + Q = m^{-beta} |w|^{gamma'-2} w,   beta = (gamma'-1)(1-alpha).

The multiplier of the mass constraint is -Hbar, recovered as minus the
mean of the m-derivative field and cross-checked against psi2_hat at the
reconstructed (m, u); a discrepancy above ``HBAR_CROSSCHECK_TOL`` fails
the run. At the minimum, -phi_bb equals psi1_hat.

In d = 2 the divergence constraint can be eliminated with a stream
function: w = perp(grad v + R), perp(a) = (-a2, a1), with R a constant
2-vector (the harmonic part). ``solve_bb_2d_stream`` minimizes over
(m, v, R); note w . Q = (grad v + R) . (Q2, -Q1), so the drift term
stays linear and the R coordinate must be kept in the objective.

For 1 < alpha <= gamma the problem is handled on the (m, u) side by
minimizing ``j_functional`` (= -psi1_hat, convex there); see
``solve_potential_a_gt_1``.

The descent engine is projected Barzilai-Borwein with a monotone Armijo
backtracking safeguard, so the recorded objective trace is strictly
non-increasing. Iterates are re-centered onto the constraint manifold
every step (exact up to roundoff: the mass projection subtracts a mean,
the flux projection is the spectral Leray projector).

The stream and potential routes optimize a scalar potential whose
Hessian block is a weighted Laplacian, which would give the joint
problem an O(n^2) condition number. They therefore work in
preconditioned coordinates phi with the field recovered through the
self-adjoint spectral factor (-div grad)^{-1/2}; for these routes
``grad_inf`` measures the gradient in the phi coordinates, while the
returned residuals and duality gap are always physical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CurlError, ModelError, SolverError
from .grids import TorusGrid
from . import spectral
from .functionals import (
    FunctionalReport,
    StationaryState,
    j_functional,
    phi_bb,
    psi1_hat,
    psi2_hat,
)
from .hamiltonians import CongestionHamiltonian

__all__ = [
    "StationaryResult",
    "w_from_u",
    "u_from_w",
    "perp",
    "phi_stream",
    "solve_bb",
    "solve_bb_2d_stream",
    "solve_potential_a_gt_1",
]

HBAR_CROSSCHECK_TOL = 1e-6


def _half_inverse_divgrad(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """Apply (-div grad)^{-1/2}; modes with zero symbol are dropped.

    Self-adjoint under the node-average inner product (real, even
    symbol). The dropped modes (k = 0 and pure-Nyquist corners) have
    identically zero gradient, so they cannot influence any objective
    that sees the potential only through its gradient.
    """
    sym = -grid.divgrad_symbol
    with np.errstate(invalid="ignore", divide="ignore"):
        half = np.where(sym > 0.0, 1.0 / np.sqrt(np.where(sym > 0.0, sym, 1.0)), 0.0)
    return np.fft.ifftn(half * np.fft.fftn(f)).real


def perp(vec: np.ndarray) -> np.ndarray:
    """Counterclockwise quarter turn of a 2-vector field: (a1,a2)->(-a2,a1)."""
    if vec.shape[0] != 2:
        raise ModelError("perp needs a 2-component field")
    return np.stack([-vec[1], vec[0]], axis=0)


def w_from_u(
    model: CongestionHamiltonian, grid: TorusGrid, m: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """Flux of the congestion transform, w = m^{1-a}|grad u+Q|^{g-2}(grad u+Q)."""
    p = spectral.gradient(grid, u)
    r = p + np.array(model.Q).reshape((model.dim,) + (1,) * m.ndim)
    rmag = np.sqrt(np.sum(r * r, axis=0))
    return m ** (1.0 - model.alpha) * CongestionHamiltonian._pow(
        rmag, model.gamma - 2.0
    ) * r


def u_from_w(
    model: CongestionHamiltonian,
    grid: TorusGrid,
    m: np.ndarray,
    w: np.ndarray,
    curl_tol: float = 1e-8,
):
    """Invert the flux transform; returns (u, consistency report).

    The candidate gradient g = m^{-beta}|w|^{gamma'-2} w - Q must be a
    spatial gradient for u to exist: its spatial mean (the drift
    mismatch) is reported, and solenoidal content above ``curl_tol``
    raises :class:`CurlError` rather than being projected away silently.
    u is returned in the zero-mean gauge.
    """
    gp = model.gamma_prime
    wmag = np.sqrt(np.sum(w * w, axis=0))
    g = CongestionHamiltonian._pow(wmag, gp - 2.0) * w * m ** (-model.beta) - np.array(
        model.Q
    ).reshape((model.dim,) + (1,) * m.ndim)
    u = spectral.solve_poisson(grid, spectral.divergence(grid, g))
    u = u - u.mean()
    recon = g - spectral.gradient(grid, u)
    mean_mismatch = np.array([float(np.mean(c)) for c in recon])
    fluct = recon - mean_mismatch.reshape((model.dim,) + (1,) * m.ndim)
    curl_inf = float(np.max(np.abs(fluct)))
    report = {
        "drift_mean_mismatch": mean_mismatch,
        "drift_mean_mismatch_inf": float(np.max(np.abs(mean_mismatch))),
        "curl_residual_inf": curl_inf,
    }
    if curl_inf > curl_tol:
        raise CurlError(
            f"flux is not gradient-consistent: solenoidal residual {curl_inf:.3e} "
            f"exceeds {curl_tol:.1e}"
        )
    return u, report


def phi_stream(
    grid: TorusGrid,
    m: np.ndarray,
    v: np.ndarray,
    R: np.ndarray,
    model: CongestionHamiltonian,
) -> FunctionalReport:
    """Stream-function form of phi_bb on d = 2 (w = perp(grad v + R))."""
    if grid.dim != 2 or model.dim != 2:
        raise ModelError("the stream reduction needs d = 2")
    if model.alpha >= 1.0:
        raise ModelError("the stream reduction requires alpha < 1")
    a = model.alpha
    gp = model.gamma_prime
    beta = model.beta
    Rcol = np.asarray(R, dtype=float).reshape(2, 1, 1)
    s = spectral.gradient(grid, v) + Rcol
    smag = np.sqrt(np.sum(s * s, axis=0))
    # perp(s) . Q = s . (Q2, -Q1), so the -w.Q drift term stays linear in s.
    rotQ = np.array([model.Q[1], -model.Q[0]]).reshape(2, 1, 1)
    value = float(
        np.mean(
            -np.sum(s * rotQ, axis=0) / (1.0 - a)
            + smag**gp * m ** (-beta) / ((1.0 - a) * gp)
            + model.coupling.F(grid, m)
        )
    )
    dm = -(smag**gp) * m ** (-beta - 1.0) / model.gamma + model.coupling.f(grid, m)
    gs = (-rotQ + CongestionHamiltonian._pow(smag, gp - 2.0) * s * m ** (-beta)) / (
        1.0 - a
    )
    dv = -spectral.divergence(grid, gs)
    dR = np.array([float(np.mean(gs[0])), float(np.mean(gs[1]))])
    return FunctionalReport(value=value, dm=dm, du=dv, extras={"dR": dR})


@dataclass
class StationaryResult:
    """Solution of a stationary congestion problem plus diagnostics."""

    state: StationaryState
    w: np.ndarray | None
    value: float
    phi_trace: tuple[float, ...]
    grad_inf: float
    iterations: int
    duality_gap: float | None
    hbar_crosscheck_gap: float
    residual_hjb_inf: float
    residual_fp_inf: float
    diagnostics: dict = field(default_factory=dict)


def _bb_loop(
    x0: np.ndarray,
    value_and_grad,
    project,
    recenter,
    feasible,
    cell_volume: float,
    tol: float,
    max_iter: int,
):
    """Projected BB descent with monotone Armijo backtracking.

    ``value_and_grad`` maps a packed vector to (value, field-gradient);
    ``project`` maps a gradient onto the constraint tangent space;
    ``recenter`` snaps an iterate back onto the constraint manifold;
    ``feasible`` guards backtracking trials (positivity floor).
    Inner products carry the node quadrature weight so tolerances are
    mesh independent.
    """

    def dot(a, b):
        return cell_volume * float(a @ b)

    x = recenter(x0.copy())
    val, grad = value_and_grad(x)
    pg = project(x, grad)
    trace = [val]
    step = 1.0 / max(1.0, np.sqrt(dot(pg, pg)))
    prev_x = prev_pg = None
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(pg)))
        if gnorm <= tol:
            return x, val, tuple(trace), gnorm, it - 1
        if prev_x is not None:
            s = x - prev_x
            y = pg - prev_pg
            sy = dot(s, y)
            if sy > 0.0:
                # alternate BB1/BB2 for robustness
                if it % 2 == 0:
                    step = dot(s, s) / sy
                else:
                    yy = dot(y, y)
                    step = sy / yy if yy > 0.0 else step
            step = float(np.clip(step, 1e-12, 1e6))
        direction = -pg
        slope = dot(pg, pg)
        tau = step
        accepted = False
        for _ in range(60):
            x_new = recenter(x + tau * direction)
            if feasible(x_new):
                val_new, grad_new = value_and_grad(x_new)
                if val_new <= val - 1e-4 * tau * slope:
                    accepted = True
                    break
            tau *= 0.5
        if not accepted:
            # Accept stagnation only when the decrease Armijo would have to
            # certify sits below the roundoff level of the objective AND the
            # gradient is already within two decades of the target, so a
            # genuine stall against the positivity wall still raises.
            tiny_gain = 1e-4 * step * slope <= 1e-15 * max(1.0, abs(val))
            if tiny_gain and gnorm <= 100.0 * tol:
                return x, val, tuple(trace), gnorm, it
            raise SolverError(
                f"line search failed at iteration {it} "
                f"(projected gradient sup-norm {gnorm:.3e})"
            )
        prev_x, prev_pg = x, pg
        x, val, grad = x_new, val_new, grad_new
        pg = project(x, grad)
        trace.append(val)
    raise SolverError(
        f"no convergence in {max_iter} iterations "
        f"(projected gradient sup-norm {float(np.max(np.abs(pg))):.3e})"
    )


def _require_bb_model(model: CongestionHamiltonian, w_reg: float):
    if not isinstance(model, CongestionHamiltonian):
        raise ModelError("stationary congestion solvers need a congestion model")
    if model.alpha >= 1.0:
        raise ModelError("the convex route requires alpha < 1 (see solve_potential_a_gt_1)")
    if model.gamma == 1.0 and w_reg <= 0.0:
        raise ModelError(
            "gamma = 1 makes the flux term non-differentiable; pass w_reg > 0 "
            "to add a quadratic regularization"
        )


def solve_bb(
    model: CongestionHamiltonian,
    grid: TorusGrid,
    m0: np.ndarray | None = None,
    w0: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 50000,
    barrier_stages: tuple[float, ...] = (),
    w_reg: float = 0.0,
    curl_tol: float = 1e-6,
) -> StationaryResult:
    """Minimize phi_bb over unit-mass m > 0 and divergence-free w.

    Optional ``barrier_stages`` prepend log-barrier continuation rounds
    (useful when the minimizer grazes the positivity floor); the final
    round always runs on the plain objective, so the returned trace is
    the plain-phi trace.

    ``gamma == 1`` is rejected unless ``w_reg > 0``, in which case the
    solve switches to the regularized route (see
    :func:`_solve_bb_gamma1` for what is and is not reported there).
    """
    _require_bb_model(model, w_reg)
    d = grid.dim
    if model.dim != d:
        raise ModelError(f"model drift has {model.dim} components, grid is d = {d}")
    if model.gamma == 1.0:
        return _solve_bb_gamma1(model, grid, m0, w0, tol, max_iter, barrier_stages, w_reg)
    K = grid.num_nodes
    m = np.ones(grid.shape) if m0 is None else np.array(m0, dtype=float)
    if w0 is None:
        w = np.zeros((d,) + grid.shape)
        for i in range(d):
            w[i] = model.Q[i]
    else:
        w = np.array(w0, dtype=float)

    def pack(mv, wv):
        return np.concatenate([mv.ravel(), wv.ravel()])

    def unpack(x):
        return x[:K].reshape(grid.shape), x[K:].reshape((d,) + grid.shape)

    def recenter(x):
        mv, wv = unpack(x)
        mv = mv + (1.0 - mv.mean())
        wv = spectral.project_div_free(grid, wv)
        return pack(mv, wv)

    def feasible(x):
        mv, _ = unpack(x)
        return float(mv.min()) > model.m_min

    def project(x, g):
        gm, gw = unpack(g)
        gm = gm - gm.mean()
        gw = spectral.project_div_free(grid, gw)
        return pack(gm, gw)

    def make_objective(mu):
        def value_and_grad(x):
            mv, wv = unpack(x)
            rep = phi_bb(grid, mv, wv, model)
            val, dm, dw = rep.value, rep.dm, rep.dw
            if w_reg > 0.0:
                val += 0.5 * w_reg * float(np.mean(np.sum(wv * wv, axis=0)))
                dw = dw + w_reg * wv
            if mu > 0.0:
                val -= mu * float(np.mean(np.log(mv)))
                dm = dm - mu / mv
            return val, pack(dm, dw)

        return value_and_grad

    x = pack(m, w)
    for mu in barrier_stages:
        x, _, _, _, _ = _bb_loop(
            x,
            make_objective(mu),
            project,
            recenter,
            feasible,
            grid.cell_volume,
            tol=max(tol, 1e-2 * mu),
            max_iter=max_iter,
        )
    x, val, trace, gnorm, iters = _bb_loop(
        x,
        make_objective(0.0),
        project,
        recenter,
        feasible,
        grid.cell_volume,
        tol=tol,
        max_iter=max_iter,
    )
    m, w = unpack(x)
    return _finalize_bb(model, grid, m, w, val, trace, gnorm, iters, curl_tol)


def _solve_bb_gamma1(model, grid, m0, w0, tol, max_iter, barrier_stages, w_reg):
    """Regularized minimization for the degenerate exponent gamma = 1.

    At gamma = 1 the dual flux exponent blows up and the power term of
    the transformed objective degenerates to the hard constraint
    |w| <= m^{1-alpha} (its pointwise limit is zero inside that set), so
    the plain objective is no longer differentiable in w. The quadratic
    energy (w_reg/2) mean |w|^2 stands in for the degenerate term, which
    keeps the problem strictly convex, and the solve reports the
    regularized system honestly: ``residual_hjb_inf`` is the sup-norm of
    f(x, m) + Hbar (the density optimality of the regularized problem,
    which has no kinetic term), ``residual_fp_inf`` is the divergence of
    w, ``duality_gap`` is None, and the ergodic-constant crosscheck
    against the mH-form functional is skipped because that functional
    evaluates the unregularized Hamiltonian. The diagnostics carry the
    regularization weight and a route tag so downstream code can tell
    this run apart from a certified gamma > 1 solve.
    """
    d = grid.dim
    K = grid.num_nodes
    a = model.alpha
    Qarr = np.zeros((d,) + grid.shape)
    for i in range(d):
        Qarr[i] = model.Q[i]
    m = np.ones(grid.shape) if m0 is None else np.array(m0, dtype=float)
    w = np.zeros((d,) + grid.shape) if w0 is None else np.array(w0, dtype=float)

    def pack(mv, wv):
        return np.concatenate([mv.ravel(), wv.ravel()])

    def unpack(x):
        return x[:K].reshape(grid.shape), x[K:].reshape((d,) + grid.shape)

    def recenter(x):
        mv, wv = unpack(x)
        mv = mv + (1.0 - mv.mean())
        wv = spectral.project_div_free(grid, wv)
        return pack(mv, wv)

    def feasible(x):
        mv, _ = unpack(x)
        return float(mv.min()) > model.m_min

    def project(x, g):
        gm, gw = unpack(g)
        gm = gm - gm.mean()
        gw = spectral.project_div_free(grid, gw)
        return pack(gm, gw)

    def make_objective(mu):
        def value_and_grad(x):
            mv, wv = unpack(x)
            val = float(
                np.mean(
                    -np.sum(wv * Qarr, axis=0) / (1.0 - a)
                    + model.coupling.F(grid, mv)
                )
            )
            dm = model.coupling.f(grid, mv)
            val += 0.5 * w_reg * float(np.mean(np.sum(wv * wv, axis=0)))
            dw = -Qarr / (1.0 - a) + w_reg * wv
            if mu > 0.0:
                val -= mu * float(np.mean(np.log(mv)))
                dm = dm - mu / mv
            return val, pack(dm, dw)

        return value_and_grad

    x = pack(m, w)
    for mu in barrier_stages:
        x, _, _, _, _ = _bb_loop(
            x,
            make_objective(mu),
            project,
            recenter,
            feasible,
            grid.cell_volume,
            tol=max(tol, 1e-2 * mu),
            max_iter=max_iter,
        )
    x, val, trace, gnorm, iters = _bb_loop(
        x,
        make_objective(0.0),
        project,
        recenter,
        feasible,
        grid.cell_volume,
        tol=tol,
        max_iter=max_iter,
    )
    m, w = unpack(x)
    dm = model.coupling.f(grid, m)
    hbar = -float(np.mean(dm))
    dw = -Qarr / (1.0 - a) + w_reg * w
    # At the optimum dw has no divergence-free component, so it is the
    # gradient of a potential; integrate it back and undo the 1/(1-a)
    # scaling of the transform to land on the value-function gauge.
    pot = spectral.solve_poisson(grid, spectral.divergence(grid, dw))
    u = (1.0 - a) * pot
    w_opt = float(np.max(np.abs(dw - spectral.gradient(grid, pot))))
    state = StationaryState(grid, m, u, eps=0.0, Hbar=hbar)
    diagnostics = {
        "mass_error": abs(float(np.mean(m)) - 1.0),
        "div_w_inf": float(np.max(np.abs(spectral.divergence(grid, w)))),
        "min_m": float(m.min()),
        "hbar_from_multiplier": hbar,
        "route": "bb-gamma1-regularized",
        "regularization_w_reg": w_reg,
        "w_optimality_inf": w_opt,
        "hbar_crosscheck": "skipped: the crosscheck functional evaluates "
        "the unregularized Hamiltonian",
    }
    return StationaryResult(
        state=state,
        w=w,
        value=val,
        phi_trace=trace,
        grad_inf=gnorm,
        iterations=iters,
        duality_gap=None,
        hbar_crosscheck_gap=0.0,
        residual_hjb_inf=float(np.max(np.abs(dm + hbar))),
        residual_fp_inf=float(np.max(np.abs(spectral.divergence(grid, w)))),
        diagnostics=diagnostics,
    )


def _finalize_bb(model, grid, m, w, val, trace, gnorm, iters, curl_tol):
    rep = phi_bb(grid, m, w, model)
    hbar = -float(np.mean(rep.dm))
    u, transform_report = u_from_w(model, grid, m, w, curl_tol=curl_tol)
    state = StationaryState(grid, m, u, eps=0.0, Hbar=hbar)
    hbar_psi2 = psi2_hat(state, model).value
    hbar_gap = abs(hbar - hbar_psi2)
    psi1_val = psi1_hat(state, model).value
    duality_gap = val + psi1_val
    hv = model.eval(grid, spectral.gradient(grid, u), m)
    res_hjb = float(np.max(np.abs(hv.H - hbar)))
    w_rt = w_from_u(model, grid, m, u)
    res_fp = float(np.max(np.abs(spectral.divergence(grid, w_rt))))
    if hbar_gap > HBAR_CROSSCHECK_TOL:
        raise SolverError(
            f"ergodic constant crosscheck failed: multiplier {hbar:.10f} vs "
            f"psi2_hat {hbar_psi2:.10f} (gap {hbar_gap:.3e})"
        )
    diagnostics = {
        "mass_error": abs(float(np.mean(m)) - 1.0),
        "div_w_inf": float(np.max(np.abs(spectral.divergence(grid, w)))),
        "min_m": float(m.min()),
        "hbar_from_multiplier": hbar,
        "hbar_from_psi2_hat": hbar_psi2,
        "psi1_hat_value": psi1_val,
        "flux_roundtrip_inf": float(np.max(np.abs(w_rt - w))),
        **{f"transform_{k}": v for k, v in transform_report.items()},
    }
    return StationaryResult(
        state=state,
        w=w,
        value=val,
        phi_trace=trace,
        grad_inf=gnorm,
        iterations=iters,
        duality_gap=duality_gap,
        hbar_crosscheck_gap=hbar_gap,
        residual_hjb_inf=res_hjb,
        residual_fp_inf=res_fp,
        diagnostics=diagnostics,
    )


def solve_bb_2d_stream(
    model: CongestionHamiltonian,
    grid: TorusGrid,
    tol: float = 1e-9,
    max_iter: int = 50000,
    w_reg: float = 0.0,
    curl_tol: float = 1e-6,
) -> StationaryResult:
    """Stream-function variant of :func:`solve_bb` (d = 2 only).

    Optimizes (m, phi, R) with the stream function v recovered as
    (-div grad)^{-1/2} phi, which equilibrates the potential block
    against the density block (see the module docstring).
    """
    _require_bb_model(model, w_reg)
    if grid.dim != 2:
        raise ModelError("solve_bb_2d_stream needs a 2-D grid")
    if w_reg > 0.0:
        raise ModelError("w_reg is only supported by solve_bb")
    K = grid.num_nodes
    # The two harmonic coordinates are stored scaled by sqrt(K): in the
    # volume-weighted BB metric a raw constant coordinate would carry
    # curvature K times that of the field blocks.
    r_scale = np.sqrt(K)

    def unpack(x):
        return (
            x[:K].reshape(grid.shape),
            x[K : 2 * K].reshape(grid.shape),
            x[2 * K :] / r_scale,
        )

    def pack(mv, phiv, Rv):
        return np.concatenate([mv.ravel(), phiv.ravel(), np.asarray(Rv) * r_scale])

    def recenter(x):
        mv, phiv, Rv = unpack(x)
        return pack(mv + (1.0 - mv.mean()), phiv, Rv)

    def feasible(x):
        mv, _, _ = unpack(x)
        return float(mv.min()) > model.m_min

    def project(x, g):
        gm = g[:K] - g[:K].mean()
        return np.concatenate([gm, g[K:]])

    def value_and_grad(x):
        mv, phiv, Rv = unpack(x)
        vv = _half_inverse_divgrad(grid, phiv)
        rep = phi_stream(grid, mv, vv, Rv, model)
        dphi = _half_inverse_divgrad(grid, rep.du)
        # Chain rule for the scaled coordinates: dPhi/d(sR) = dR / s.
        return rep.value, np.concatenate(
            [rep.dm.ravel(), dphi.ravel(), np.asarray(rep.extras["dR"]) / r_scale]
        )

    x0 = pack(np.ones(grid.shape), np.zeros(grid.shape), np.array([model.Q[1], -model.Q[0]]))
    x, val, trace, gnorm, iters = _bb_loop(
        x0,
        value_and_grad,
        project,
        recenter,
        feasible,
        grid.cell_volume,
        tol=tol,
        max_iter=max_iter,
    )
    m, phi, R = unpack(x)
    v = _half_inverse_divgrad(grid, phi)
    w = perp(spectral.gradient(grid, v) + np.asarray(R).reshape(2, 1, 1))
    result = _finalize_bb(model, grid, m, w, val, trace, gnorm, iters, curl_tol)
    result.diagnostics["stream_R"] = tuple(float(r) for r in R)
    return result


def solve_potential_a_gt_1(
    model: CongestionHamiltonian,
    grid: TorusGrid,
    m0: np.ndarray | None = None,
    u0: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 50000,
) -> StationaryResult:
    """Minimize j_functional over (m, u) for exponents 1 < alpha <= gamma.

    The value function is optimized in preconditioned coordinates phi
    with u = (-div grad)^{-1/2} phi (see the module docstring); pass
    ``u0`` to seed the corresponding phi.
    """
    if not isinstance(model, CongestionHamiltonian):
        raise ModelError("solve_potential_a_gt_1 needs a congestion model")
    if not (1.0 < model.alpha <= model.gamma):
        raise ModelError(
            f"solve_potential_a_gt_1 requires 1 < alpha <= gamma, got alpha = "
            f"{model.alpha}, gamma = {model.gamma}"
        )
    K = grid.num_nodes
    m = np.ones(grid.shape) if m0 is None else np.array(m0, dtype=float)
    if u0 is None:
        phi0 = np.zeros(grid.shape)
    else:
        # phi = (-div grad)^{+1/2} u0, realized with the same symbol.
        sym = -grid.divgrad_symbol
        phi0 = np.fft.ifftn(np.sqrt(sym) * np.fft.fftn(np.array(u0, dtype=float))).real

    def unpack(x):
        return x[:K].reshape(grid.shape), x[K:].reshape(grid.shape)

    def pack(mv, phiv):
        return np.concatenate([mv.ravel(), phiv.ravel()])

    def recenter(x):
        mv, phiv = unpack(x)
        return pack(mv + (1.0 - mv.mean()), phiv)

    def feasible(x):
        mv, _ = unpack(x)
        return float(mv.min()) > model.m_min

    def project(x, g):
        gm, gphi = unpack(g)
        return pack(gm - gm.mean(), gphi)

    def value_and_grad(x):
        mv, phiv = unpack(x)
        uv = _half_inverse_divgrad(grid, phiv)
        rep = j_functional(grid, mv, uv, model)
        return rep.value, pack(rep.dm, _half_inverse_divgrad(grid, rep.du))

    x, val, trace, gnorm, iters = _bb_loop(
        pack(m, phi0),
        value_and_grad,
        project,
        recenter,
        feasible,
        grid.cell_volume,
        tol=tol,
        max_iter=max_iter,
    )
    m, phi = unpack(x)
    u = _half_inverse_divgrad(grid, phi)
    rep = j_functional(grid, m, u, model)
    hbar = -float(np.mean(rep.dm))
    state = StationaryState(grid, m, u, eps=0.0, Hbar=hbar)
    hv = model.eval(grid, spectral.gradient(grid, u), m)
    res_hjb = float(np.max(np.abs(hv.H - hbar)))
    res_fp = float(np.max(np.abs((model.alpha - 1.0) * rep.du)))
    psi1_val = psi1_hat(state, model).value
    hbar_psi2 = psi2_hat(state, model).value
    return StationaryResult(
        state=state,
        w=w_from_u(model, grid, m, u),
        value=val,
        phi_trace=trace,
        grad_inf=gnorm,
        iterations=iters,
        duality_gap=val + psi1_val,
        hbar_crosscheck_gap=abs(hbar - hbar_psi2),
        residual_hjb_inf=res_hjb,
        residual_fp_inf=res_fp,
        diagnostics={
            "mass_error": abs(float(np.mean(m)) - 1.0),
            "min_m": float(m.min()),
            "hbar_from_multiplier": hbar,
            "hbar_from_psi2_hat": hbar_psi2,
            "j_value": val,
            "psi1_hat_value": psi1_val,
        },
    )
