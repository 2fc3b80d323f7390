"""Hamiltonian models: separable and congestion families.

A coupling is a local cost f(x, m) = p(m) + s(x) with p polynomial and
s a finite combination of torus harmonics. Its antiderivative in m is
normalized so that F(x, 1) = 0, which fixes the additive constant that
the payoff functionals would otherwise inherit; the raw antiderivative
(constant chosen so the m-polynomial part has zero constant term) is
also available.

Two model families are provided:

* :class:`SeparableHamiltonian`: H(x, p, m) = H0(p) - f(x, m), with a
  quadratic default kinetic part (H0(p) = |p|^2 / 2).
* :class:`CongestionHamiltonian`: H(x, p, m) = |p + Q|^gamma /
  (gamma m^alpha) - f(x, m) with a constant drift vector Q, gamma >= 1,
  alpha >= 0, alpha != 1.

Evaluating any model at a density entry below ``m_min`` (default 1e-10)
raises :class:`~mfgkit.errors.PositivityError`; the power laws are not
continued past the floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, PositivityError
from .grids import TorusGrid

__all__ = [
    "M_FLOOR",
    "SpatialTerm",
    "Coupling",
    "QuadraticKinetic",
    "HamiltonianValues",
    "SeparableHamiltonian",
    "CongestionHamiltonian",
    "MonotonicityReport",
    "check_monotonicity",
    "legendre",
]

M_FLOOR = 1e-10


@dataclass(frozen=True)
class SpatialTerm:
    """One harmonic amp * cos(2 pi k . x) or amp * sin(2 pi k . x)."""

    amp: float
    k: tuple[int, ...]
    kind: str = "cos"

    def __post_init__(self):
        if self.kind not in ("cos", "sin"):
            raise ModelError(f"spatial term kind must be cos or sin, got {self.kind}")
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))

    def evaluate(self, grid: TorusGrid) -> np.ndarray:
        if len(self.k) != grid.dim:
            raise ModelError(
                f"spatial term wavevector {self.k} does not match d = {grid.dim}"
            )
        phase = np.zeros(grid.shape)
        for kv, xv in zip(self.k, grid.coords):
            phase = phase + 2.0 * np.pi * kv * xv
        fn = np.cos if self.kind == "cos" else np.sin
        return self.amp * fn(phase)


@dataclass(frozen=True)
class Coupling:
    """Local cost f(x, m) = sum_j poly[j] m^j + s(x)."""

    poly: tuple[float, ...] = (0.0, 1.0)
    terms: tuple[SpatialTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "poly", tuple(float(c) for c in self.poly))
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.poly:
            raise ModelError("coupling polynomial needs at least one coefficient")

    def spatial(self, grid: TorusGrid) -> np.ndarray:
        s = np.zeros(grid.shape)
        for term in self.terms:
            s = s + term.evaluate(grid)
        return s

    def _poly_val(self, m, deriv: int = 0):
        c = np.polynomial.polynomial
        coeffs = np.array(self.poly)
        for _ in range(deriv):
            coeffs = c.polyder(coeffs)
        return c.polyval(m, coeffs)

    def f(self, grid: TorusGrid, m: np.ndarray) -> np.ndarray:
        return self._poly_val(m) + self.spatial(grid)

    def df_dm(self, grid: TorusGrid, m: np.ndarray) -> np.ndarray:
        return self._poly_val(m, deriv=1) + np.zeros(grid.shape)

    def d2f_dm2(self, grid: TorusGrid, m: np.ndarray) -> np.ndarray:
        return self._poly_val(m, deriv=2) + np.zeros(grid.shape)

    def antiderivative_raw(self, grid: TorusGrid, m: np.ndarray) -> np.ndarray:
        """P(m) + s(x) m with P = polyint(p), P(0) = 0."""
        coeffs = np.polynomial.polynomial.polyint(np.array(self.poly))
        return np.polynomial.polynomial.polyval(m, coeffs) + self.spatial(grid) * m

    def F(self, grid: TorusGrid, m: np.ndarray) -> np.ndarray:
        """Normalized antiderivative, F(x, m) = int_1^m f(x, z) dz."""
        coeffs = np.polynomial.polynomial.polyint(np.array(self.poly))
        pv = np.polynomial.polynomial.polyval
        return (pv(m, coeffs) - pv(1.0, coeffs)) + self.spatial(grid) * (m - 1.0)

    def conjugate(self, grid: TorusGrid, w: np.ndarray) -> np.ndarray:
        """Fenchel conjugate F*(x, w) = sup_{z >= 0} (w z - F(x, z)).

        Requires the polynomial part to be strictly increasing on the
        relevant range (checked on a sample); solved by vectorized
        bisection of f(x, z) = w.
        """
        s = self.spatial(grid)
        target = np.asarray(w, dtype=float) - s
        zhi = 1.0
        for _ in range(200):
            if self._poly_val(zhi) >= target.max() or zhi > 1e12:
                break
            zhi *= 2.0
        probe = np.linspace(0.0, zhi, 64)
        if np.any(self._poly_val(probe, deriv=1) <= 0.0):
            raise ModelError(
                "conjugate requires a strictly increasing coupling in m"
            )
        lo = np.zeros_like(target)
        hi = np.full_like(target, zhi)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            low_side = self._poly_val(mid) < target
            lo = np.where(low_side, mid, lo)
            hi = np.where(low_side, hi, mid)
        z = np.where(target <= self._poly_val(0.0), 0.0, 0.5 * (lo + hi))
        return np.asarray(w) * z - self.F(grid, z)


class QuadraticKinetic:
    """H0(p) = |p|^2 / 2 with closed-form conjugate L0(q) = |q|^2 / 2."""

    def value(self, p: np.ndarray) -> np.ndarray:
        return 0.5 * np.sum(p * p, axis=0)

    def grad(self, p: np.ndarray) -> np.ndarray:
        return p

    def hess(self, p: np.ndarray) -> np.ndarray:
        d = p.shape[0]
        eye = np.eye(d).reshape((d, d) + (1,) * (p.ndim - 1))
        return np.broadcast_to(eye, (d, d) + p.shape[1:]).copy()

    def legendre(self, q: np.ndarray) -> np.ndarray:
        return 0.5 * np.sum(q * q, axis=0)


def _numeric_radial_legendre(kinetic, q: np.ndarray) -> np.ndarray:
    """sup_p q . p - H0(p) for radial H0, by line search along q.

    Fallback for kinetic parts without a closed-form conjugate. The
    supremum over p reduces to a scalar concave problem along the ray
    p = r q/|q| (radial H0); solved by golden-section refinement of a
    bracket grown geometrically until the objective decreases.
    """
    qmag = np.sqrt(np.sum(q * q, axis=0))
    flat = qmag.ravel()
    out = np.zeros_like(flat)
    d = q.shape[0]
    for idx, qa in enumerate(flat):
        if qa == 0.0:
            p = np.zeros((d, 1))
            out[idx] = -float(kinetic.value(p)[0])
            continue
        direction = np.zeros((d, 1))
        direction[0, 0] = 1.0

        def obj(r):
            return qa * r - float(kinetic.value(direction * r)[0])

        hi = 1.0
        while obj(2.0 * hi) > obj(hi):
            hi *= 2.0
            if hi > 1e12:
                raise ModelError("radial conjugate bracket did not close")
        lo = 0.0
        hi *= 2.0
        phi = (np.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c1 = b - phi * (b - a)
        c2 = a + phi * (b - a)
        f1, f2 = obj(c1), obj(c2)
        for _ in range(200):
            if f1 < f2:
                a, c1, f1 = c1, c2, f2
                c2 = a + phi * (b - a)
                f2 = obj(c2)
            else:
                b, c2, f2 = c2, c1, f1
                c1 = b - phi * (b - a)
                f1 = obj(c1)
            if b - a < 1e-13 * max(1.0, b):
                break
        out[idx] = obj(0.5 * (a + b))
    return out.reshape(qmag.shape)


@dataclass(frozen=True)
class HamiltonianValues:
    """Pointwise H and its first derivatives at (x, p, m)."""

    H: np.ndarray
    dpH: np.ndarray
    dmH: np.ndarray


def _check_floor(m: np.ndarray, m_min: float) -> None:
    mmin = float(np.min(m))
    if not np.isfinite(mmin) or mmin < m_min:
        raise PositivityError(
            f"density entry {mmin:.3e} below the evaluation floor {m_min:.1e}"
        )


@dataclass(frozen=True)
class SeparableHamiltonian:
    """H(x, p, m) = H0(p) - f(x, m)."""

    coupling: Coupling = field(default_factory=Coupling)
    kinetic: QuadraticKinetic = field(default_factory=QuadraticKinetic)
    m_min: float = M_FLOOR

    def eval(self, grid: TorusGrid, p: np.ndarray, m: np.ndarray) -> HamiltonianValues:
        _check_floor(m, self.m_min)
        H = self.kinetic.value(p) - self.coupling.f(grid, m)
        return HamiltonianValues(
            H=H,
            dpH=self.kinetic.grad(p),
            dmH=-self.coupling.df_dm(grid, m) + np.zeros_like(H),
        )

    def eval_F_H(self, grid: TorusGrid, p: np.ndarray, m: np.ndarray):
        """Antiderivative of H in m and its p-gradient: (F_H, dp F_H)."""
        _check_floor(m, self.m_min)
        FH = m * self.kinetic.value(p) - self.coupling.F(grid, m)
        return FH, m * self.kinetic.grad(p)

    def legendre(self, grid: TorusGrid, q: np.ndarray, m: np.ndarray) -> np.ndarray:
        _check_floor(m, self.m_min)
        if hasattr(self.kinetic, "legendre"):
            L0 = self.kinetic.legendre(q)
        else:
            L0 = _numeric_radial_legendre(self.kinetic, q)
        return L0 + self.coupling.f(grid, m)

    def hess_pp(self, grid: TorusGrid, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        return self.kinetic.hess(p)

    def dm_dpH(self, grid: TorusGrid, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        return np.zeros_like(p)


@dataclass(frozen=True)
class CongestionHamiltonian:
    """H(x, p, m) = |p + Q|^gamma / (gamma m^alpha) - f(x, m)."""

    Q: tuple[float, ...]
    alpha: float
    gamma: float
    coupling: Coupling = field(default_factory=Coupling)
    m_min: float = M_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "Q", tuple(float(v) for v in self.Q))
        if self.gamma < 1.0:
            raise ModelError(f"gamma must be >= 1, got {self.gamma}")
        if self.alpha < 0.0:
            raise ModelError(f"alpha must be >= 0, got {self.alpha}")
        if self.alpha == 1.0:
            raise ModelError("alpha = 1 is excluded (the m-antiderivative degenerates)")

    @property
    def dim(self) -> int:
        return len(self.Q)

    @property
    def gamma_prime(self) -> float:
        if self.gamma == 1.0:
            raise ModelError("gamma' undefined for gamma = 1")
        return self.gamma / (self.gamma - 1.0)

    @property
    def beta(self) -> float:
        """Density exponent of the convex reformulation, (gamma'-1)(1-alpha)."""
        return (self.gamma_prime - 1.0) * (1.0 - self.alpha)

    def _drift(self, like: np.ndarray) -> np.ndarray:
        return np.array(self.Q).reshape((self.dim,) + (1,) * (like.ndim - 1))

    def _shifted(self, p: np.ndarray):
        if p.shape[0] != self.dim:
            raise ModelError(
                f"momentum has {p.shape[0]} components, drift has {self.dim}"
            )
        r = p + self._drift(p)
        rmag = np.sqrt(np.sum(r * r, axis=0))
        return r, rmag

    @staticmethod
    def _pow(base: np.ndarray, expo: float) -> np.ndarray:
        """base**expo with base >= 0, returning 0 at base = 0 for expo <= 0."""
        if expo >= 0.0:
            return base**expo
        safe = np.where(base > 0.0, base, 1.0)
        return np.where(base > 0.0, safe**expo, 0.0)

    def eval(self, grid: TorusGrid, p: np.ndarray, m: np.ndarray) -> HamiltonianValues:
        _check_floor(m, self.m_min)
        r, rmag = self._shifted(p)
        g = self.gamma
        H = rmag**g / (g * m**self.alpha) - self.coupling.f(grid, m)
        dpH = self._pow(rmag, g - 2.0) * r / m**self.alpha
        dmH = (
            -self.alpha * rmag**g / (g * m ** (self.alpha + 1.0))
            - self.coupling.df_dm(grid, m)
        )
        return HamiltonianValues(H=H, dpH=dpH, dmH=dmH)

    def eval_F_H(self, grid: TorusGrid, p: np.ndarray, m: np.ndarray):
        _check_floor(m, self.m_min)
        r, rmag = self._shifted(p)
        g, a = self.gamma, self.alpha
        FH = m ** (1.0 - a) * rmag**g / ((1.0 - a) * g) - self.coupling.F(grid, m)
        dpFH = m ** (1.0 - a) * self._pow(rmag, g - 2.0) * r / (1.0 - a)
        return FH, dpFH

    def legendre(self, grid: TorusGrid, q: np.ndarray, m: np.ndarray) -> np.ndarray:
        """L(x, q, m) = -q . Q + m^{alpha/(gamma-1)} |q|^{gamma'} / gamma' + f."""
        _check_floor(m, self.m_min)
        gp = self.gamma_prime
        qmag = np.sqrt(np.sum(q * q, axis=0))
        drift_dot = np.sum(q * self._drift(q), axis=0)
        return (
            -drift_dot
            + m ** (self.alpha * (gp - 1.0)) * qmag**gp / gp
            + self.coupling.f(grid, m)
        )

    def hess_pp(self, grid: TorusGrid, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        r, rmag = self._shifted(p)
        g = self.gamma
        d = self.dim
        eye = np.eye(d).reshape((d, d) + (1,) * rmag.ndim)
        rr = r[:, None, ...] * r[None, :, ...]
        return (
            self._pow(rmag, g - 2.0) * eye + (g - 2.0) * self._pow(rmag, g - 4.0) * rr
        ) / m**self.alpha

    def dm_dpH(self, grid: TorusGrid, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        r, rmag = self._shifted(p)
        return -self.alpha * self._pow(rmag, self.gamma - 2.0) * r / m ** (
            self.alpha + 1.0
        )


@dataclass(frozen=True)
class MonotonicityReport:
    """Sampled curvature/monotonicity indicators of a model.

    ``min_eig_pp``: smallest eigenvalue of the p-Hessian of H;
    ``max_dm_h``: largest dH/dm (should be <= 0 for crowd-averse models);
    ``min_eig_block``: smallest eigenvalue of the (d+1) x (d+1) block
    [[2 Hpp, dm dpH], [dm dpH^T, -(2/m) dmH]] whose nonnegativity is the
    standard sufficient condition for uniqueness.
    """

    min_eig_pp: float
    max_dm_h: float
    min_eig_block: float
    n_samples: int


def check_monotonicity(
    model,
    grid: TorusGrid,
    n_samples: int = 256,
    seed: int = 0,
    p_scale: float = 1.0,
    m_range: tuple[float, float] = (0.2, 2.0),
) -> MonotonicityReport:
    """Sample (x, p, m) and report the monotonicity indicators above."""
    rng = np.random.default_rng(seed)
    d = grid.dim
    p = rng.standard_normal((d, n_samples)) * p_scale
    m = rng.uniform(m_range[0], m_range[1], n_samples)

    # The spatial offset s(x) is additive in f, so it drops out of every
    # derivative sampled here; sampling (p, m) pairs alone suffices.
    hpp = model.hess_pp(grid, p, m)  # (d, d, S)
    dmdp = model.dm_dpH(grid, p, m)  # (d, S)
    if isinstance(model, SeparableHamiltonian):
        dmH = -model.coupling._poly_val(m, deriv=1)
    else:
        rmag = np.sqrt(
            np.sum((p + np.array(model.Q).reshape(d, 1)) ** 2, axis=0)
        )
        dmH = -model.alpha * rmag**model.gamma / (
            model.gamma * m ** (model.alpha + 1.0)
        ) - model.coupling._poly_val(m, deriv=1)

    S = n_samples
    block = np.zeros((S, d + 1, d + 1))
    block[:, :d, :d] = 2.0 * np.moveaxis(hpp, -1, 0)
    block[:, :d, d] = dmdp.T
    block[:, d, :d] = dmdp.T
    block[:, d, d] = -(2.0 / m) * dmH
    eigs_block = np.linalg.eigvalsh(block)
    eigs_pp = np.linalg.eigvalsh(np.moveaxis(hpp, -1, 0))
    return MonotonicityReport(
        min_eig_pp=float(eigs_pp.min()),
        max_dm_h=float(dmH.max()),
        min_eig_block=float(eigs_block.min()),
        n_samples=n_samples,
    )


def legendre(model, grid: TorusGrid, q: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Convex conjugate of H in p, evaluated at (x, q, m)."""
    return model.legendre(grid, q, m)
