"""Uniform grids on the unit torus and on torus x time cylinders.

Space is always the d-dimensional unit torus sampled on a uniform tensor
grid with an even number of nodes per axis, so trigonometric polynomials
up to the Nyquist mode are represented exactly and quadrature of any
resolved trigonometric polynomial is exact (the trapezoid rule on a
periodic grid reduces to the plain node average).

Wavenumber convention: integer modes per axis as returned by
``numpy.fft.fftfreq(n) * n``, i.e. ``0, 1, ..., n/2-1, -n/2, ..., -1``.
The unpaired Nyquist mode (|k| = n/2) is kept in the Laplacian symbol
4 pi^2 |k|^2 but dropped from first-derivative symbols, which keeps
derivatives of real fields real and makes the discrete divergence the
exact negative adjoint of the discrete gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridError

__all__ = ["TorusGrid", "SpaceTimeGrid"]


def _as_shape(n) -> tuple[int, ...]:
    if isinstance(n, (int, np.integer)):
        return (int(n),)
    try:
        shape = tuple(int(v) for v in n)
    except TypeError:
        raise GridError(f"grid resolution must be an int or a tuple of ints, got {n!r}")
    if not shape:
        raise GridError("grid resolution tuple is empty")
    return shape


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the unit torus T^d.

    Parameters
    ----------
    shape : tuple of int
        Nodes per axis. Every entry must be even and >= 4 so that the
        Nyquist conventions above are well defined.
    """

    shape: tuple[int, ...]

    def __init__(self, n):
        shape = _as_shape(n)
        for nv in shape:
            if nv < 4 or nv % 2 != 0:
                raise GridError(f"nodes per axis must be even and >= 4, got {shape}")
        if len(shape) > 3:
            raise GridError(f"only d <= 3 is supported, got d = {len(shape)}")
        object.__setattr__(self, "shape", shape)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / nv for nv in self.shape)

    @property
    def cell_volume(self) -> float:
        """Quadrature weight of one node (the torus has unit volume)."""
        return 1.0 / self.num_nodes

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """Node coordinates per axis, x_i = i / n."""
        return tuple(np.arange(nv) / nv for nv in self.shape)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Full meshgrid coordinates, ij indexing, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis (1-D arrays)."""
        return tuple(np.rint(np.fft.fftfreq(nv) * nv).astype(int) for nv in self.shape)

    @cached_property
    def _k_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.wavenumbers, indexing="ij"))

    @cached_property
    def grad_symbols(self) -> tuple[np.ndarray, ...]:
        """First-derivative symbols 2 pi i k per axis, zeroed at Nyquist.

        Zeroing the unpaired Nyquist mode keeps d/dx of a real field real
        and makes each symbol an odd function of k, so the matrix of the
        derivative is exactly antisymmetric.
        """
        out = []
        for ax, kk in enumerate(self._k_mesh):
            sym = 2j * np.pi * kk.astype(float)
            sym[np.abs(kk) == self.shape[ax] // 2] = 0.0
            out.append(sym)
        return tuple(out)

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """Symbol of the Laplacian, -4 pi^2 |k|^2, Nyquist included."""
        k2 = np.zeros(self.shape)
        for kk in self._k_mesh:
            k2 += kk.astype(float) ** 2
        return -4.0 * np.pi**2 * k2

    @cached_property
    def divgrad_symbol(self) -> np.ndarray:
        """Symbol of div(grad(.)); differs from the Laplacian only at Nyquist."""
        s = np.zeros(self.shape)
        for g in self.grad_symbols:
            s += (g.imag) ** 2
        return -s

    def __repr__(self) -> str:
        return f"TorusGrid(shape={self.shape})"


@dataclass(frozen=True)
class SpaceTimeGrid:
    """A :class:`TorusGrid` with a uniform time axis.

    With ``periodic_time=False`` the grid covers [0, T] with ``n_t + 1``
    node rows (used by the finite-horizon solvers); with
    ``periodic_time=True`` it covers the time circle of length ``horizon``
    with ``n_t`` rows (used by the time-periodic branch machinery).
    """

    space: TorusGrid
    n_t: int
    horizon: float
    periodic_time: bool = False

    def __post_init__(self):
        if self.n_t < 4 or self.n_t % 2 != 0:
            raise GridError(f"n_t must be even and >= 4, got {self.n_t}")
        if not (self.horizon > 0.0):
            raise GridError(f"horizon must be positive, got {self.horizon}")

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def dt(self) -> float:
        return self.horizon / self.n_t

    @property
    def num_time_nodes(self) -> int:
        return self.n_t if self.periodic_time else self.n_t + 1

    @property
    def field_shape(self) -> tuple[int, ...]:
        return (self.num_time_nodes,) + self.space.shape

    @cached_property
    def times(self) -> np.ndarray:
        if self.periodic_time:
            return np.arange(self.n_t) * self.dt
        return np.linspace(0.0, self.horizon, self.n_t + 1)

    @cached_property
    def time_weights(self) -> np.ndarray:
        """Quadrature weights along the time axis (trapezoid / periodic)."""
        if self.periodic_time:
            return np.full(self.n_t, self.dt)
        w = np.full(self.n_t + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    @cached_property
    def time_derivative_symbol(self) -> np.ndarray:
        """Spectral d/dt symbol on the periodic time circle (1-D array)."""
        if not self.periodic_time:
            raise GridError("spectral time derivative requires periodic_time=True")
        k = np.rint(np.fft.fftfreq(self.n_t) * self.n_t).astype(int)
        sym = 2j * np.pi * k.astype(float) / self.horizon
        sym[np.abs(k) == self.n_t // 2] = 0.0
        return sym

    def __repr__(self) -> str:
        tag = "periodic" if self.periodic_time else "interval"
        return (
            f"SpaceTimeGrid(space={self.space}, n_t={self.n_t}, "
            f"horizon={self.horizon}, {tag})"
        )
