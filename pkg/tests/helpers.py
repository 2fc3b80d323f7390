"""Shared numerical helpers for the test suite.

Everything here is deliberately independent of the library internals:
finite differences, grid-search Legendre/Fenchel oracles, and the
model functions restated from their definitions so library values can
be checked against a second implementation.
"""

import numpy as np


def fd_directional(fun, h=1e-5):
    """Richardson-extrapolated central difference of t -> fun(t) at t = 0.

    Fourth-order accurate; good to ~1e-10 relative for smooth O(1)
    functionals with the default step.
    """
    d1 = (fun(h) - fun(-h)) / (2.0 * h)
    d2 = (fun(0.5 * h) - fun(-0.5 * h)) / h
    return (4.0 * d2 - d1) / 3.0


def coupling_f_values(poly, spatial, m):
    """f(x, m) = poly(m) + spatial, restated from the model definition."""
    return np.polynomial.polynomial.polyval(m, np.asarray(poly)) + spatial


def coupling_F_values(poly, spatial, m):
    """F(x, m) = int_1^m f(x, z) dz with the same normalization as the library."""
    coeffs = np.polynomial.polynomial.polyint(np.asarray(poly, dtype=float))
    pv = np.polynomial.polynomial.polyval
    return (pv(m, coeffs) - pv(1.0, coeffs)) + spatial * (m - 1.0)


def hamiltonian_values(Q, alpha, gamma, p, m, fvals):
    """H(x, p, m) = |p + Q|^gamma / (gamma m^alpha) - f(x, m).

    ``p`` has shape (d, ...) and ``Q`` length d. Covers the separable
    quadratic case via Q = 0, alpha = 0, gamma = 2.
    """
    shifted = p + np.asarray(Q).reshape((-1,) + (1,) * (p.ndim - 1))
    mag = np.sqrt(np.sum(shifted**2, axis=0))
    return mag**gamma / (gamma * np.asarray(m) ** alpha) - fvals


def legendre_oracle(Q, alpha, gamma, q, m, fvals, span=20.0, n=81, rounds=5):
    """L(x, q, m) = sup_p (p . q - H(x, p, m)) by nested grid search.

    ``q`` has shape (d, K) for K sample points; returns shape (K,).
    Five zoom rounds of an 81-point-per-axis grid resolve the sup to
    well below 1e-8 for the smooth Hamiltonians used in the tests.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    d, K = q.shape
    m = np.broadcast_to(np.asarray(m, dtype=float), (K,))
    fvals = np.broadcast_to(np.asarray(fvals, dtype=float), (K,))
    center = np.zeros((d, K))
    half = np.full(K, span)
    best = None
    for _ in range(rounds):
        axes = np.linspace(-1.0, 1.0, n)
        mesh = np.stack(np.meshgrid(*([axes] * d), indexing="ij"))
        mesh = mesh.reshape(d, -1)  # (d, n**d) offsets in [-1, 1]
        p = center[:, None, :] + mesh[:, :, None] * half[None, None, :]
        pq = np.sum(p * q[:, None, :], axis=0)
        H = hamiltonian_values(Q, alpha, gamma, p, m[None, :], fvals[None, :])
        vals = pq - H
        idx = np.argmax(vals, axis=0)
        best = vals[idx, np.arange(K)]
        center = p[:, idx, np.arange(K)]
        half = half * 2.0 / (n - 1)
    return best


def conjugate_oracle(poly, spatial, w, z_max=64.0, n=4097, rounds=6):
    """F*(x, w) = sup_{z >= 0} (w z - F(x, z)) by a zooming z-grid.

    ``w`` and ``spatial`` are broadcast-compatible arrays; returns the
    elementwise conjugate of the normalized antiderivative.
    """
    w = np.asarray(w, dtype=float)
    spatial = np.broadcast_to(spatial, w.shape)
    lo = np.zeros(w.shape)
    hi = np.full(w.shape, z_max)
    best = None
    for _ in range(rounds):
        z = lo[None] + (hi - lo)[None] * np.linspace(0.0, 1.0, n).reshape(
            (n,) + (1,) * w.ndim
        )
        vals = w[None] * z - coupling_F_values(poly, spatial[None], z)
        idx = np.argmax(vals, axis=0)
        best = np.take_along_axis(vals, idx[None], axis=0)[0]
        zstar = np.take_along_axis(z, idx[None], axis=0)[0]
        width = (hi - lo) / (n - 1)
        lo = np.maximum(zstar - width, 0.0)
        hi = zstar + width
    return best


def slab_residuals(state, model, spectral):
    """Implicit-midpoint HJB and continuity residuals per time slab.

    Independent re-assembly from the raw state via the spectral module:
    returns (R, P) with R[j] the HJB residual and P[j] the continuity
    residual on slab j, both shaped (n_t, *space).
    """
    g = state.grid.space
    dt = state.grid.dt
    m, u, eps = state.m, state.u, state.eps
    mbar = 0.5 * (m[:-1] + m[1:])
    ubar = 0.5 * (u[:-1] + u[1:])
    n_t = state.grid.n_t
    R = np.empty_like(mbar)
    P = np.empty_like(mbar)
    for j in range(n_t):
        gradu = spectral.gradient(g, ubar[j])
        hv = model.eval(g, gradu, mbar[j])
        R[j] = -(u[j + 1] - u[j]) / dt - eps * spectral.laplacian(g, ubar[j]) + hv.H
        P[j] = (
            (m[j + 1] - m[j]) / dt
            - eps * spectral.laplacian(g, mbar[j])
            - spectral.divergence(g, mbar[j] * hv.dpH)
        )
    return R, P


def node_field_from_slabs(slabs, boundary_term=None, at_start=False):
    """Map slab residuals to node fields: endpoints keep the adjacent
    slab value, interior nodes average the two neighbours; the optional
    boundary term is added to the coupled endpoint."""
    out = np.concatenate([[slabs[0]], 0.5 * (slabs[:-1] + slabs[1:]), [slabs[-1]]])
    if boundary_term is not None:
        if at_start:
            out[0] = out[0] + boundary_term
        else:
            out[-1] = out[-1] + boundary_term
    return out
