"""Array-level spectral operators on torus grids.

All functions act on plain ndarrays whose *trailing* axes are the spatial
axes of the grid, so the same kernels serve spatial fields, space-time
stacks of shape (n_time, *space), and batched inputs. Vector fields carry
their component axis first: shape (d, ...).

Exactness properties relied on elsewhere (and asserted in the tests):

* ``divergence`` is the exact negative adjoint of ``gradient`` under the
  node-average inner product (the shared first-derivative symbol is odd
  in k, Nyquist zeroed);
* ``project_div_free`` reproduces divergence-free fields, kills gradients
  exactly, is idempotent and self-adjoint, and leaves the k = 0 (constant)
  component untouched;
* ``integrate`` of a resolved trigonometric polynomial is exact.
"""

from __future__ import annotations

import numpy as np

from .errors import GridError
from .grids import SpaceTimeGrid, TorusGrid

__all__ = [
    "gradient",
    "divergence",
    "laplacian",
    "div_grad",
    "integrate",
    "mean",
    "project_div_free",
    "solve_poisson",
    "time_derivative_periodic",
    "integrate_space_time",
    "random_band_limited",
]


def _space_axes(grid: TorusGrid, arr: np.ndarray) -> tuple[int, ...]:
    d = grid.dim
    if arr.ndim < d or arr.shape[-d:] != grid.shape:
        raise GridError(
            f"field with trailing shape {arr.shape} does not live on grid {grid.shape}"
        )
    return tuple(range(arr.ndim - d, arr.ndim))


def _fft(grid: TorusGrid, arr: np.ndarray) -> np.ndarray:
    return np.fft.fftn(arr, axes=_space_axes(grid, arr))


def _ifft_real(grid: TorusGrid, hat: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(hat, axes=tuple(range(hat.ndim - grid.dim, hat.ndim))).real


def gradient(grid: TorusGrid, arr: np.ndarray) -> np.ndarray:
    """Spatial gradient; returns shape (d, *arr.shape)."""
    hat = _fft(grid, arr)
    comps = [_ifft_real(grid, sym * hat) for sym in grid.grad_symbols]
    return np.stack(comps, axis=0)


def divergence(grid: TorusGrid, vec: np.ndarray) -> np.ndarray:
    """Divergence of a vector field with leading component axis."""
    if vec.shape[0] != grid.dim:
        raise GridError(f"expected {grid.dim} components, got {vec.shape[0]}")
    out = None
    for i, sym in enumerate(grid.grad_symbols):
        term = _ifft_real(grid, sym * _fft(grid, vec[i]))
        out = term if out is None else out + term
    return out


def laplacian(grid: TorusGrid, arr: np.ndarray) -> np.ndarray:
    """Laplacian with the full symbol -4 pi^2 |k|^2 (Nyquist included)."""
    return _ifft_real(grid, grid.laplacian_symbol * _fft(grid, arr))


def div_grad(grid: TorusGrid, arr: np.ndarray) -> np.ndarray:
    """div(grad(arr)); equals ``laplacian`` except on Nyquist content."""
    return _ifft_real(grid, grid.divgrad_symbol * _fft(grid, arr))


def integrate(grid: TorusGrid, arr: np.ndarray) -> np.ndarray | float:
    """Integral over the unit torus: node average times unit volume."""
    axes = _space_axes(grid, arr)
    out = arr.mean(axis=axes)
    return float(out) if np.ndim(out) == 0 else out


def mean(grid: TorusGrid, arr: np.ndarray) -> np.ndarray | float:
    """Alias of :func:`integrate` (the torus has unit volume)."""
    return integrate(grid, arr)


def project_div_free(grid: TorusGrid, vec: np.ndarray) -> np.ndarray:
    """Project onto divergence-free fields (constants are kept).

    Per mode k the projector is I - s s^T / |s|^2 with s the (real
    vector of) first-derivative symbols divided by i. Modes where every
    symbol vanishes (k = 0 and pure-Nyquist lines) are passed through,
    hence project to themselves.
    """
    if vec.shape[0] != grid.dim:
        raise GridError(f"expected {grid.dim} components, got {vec.shape[0]}")
    syms = [g.imag for g in grid.grad_symbols]  # real per-mode vectors
    s2 = np.zeros(grid.shape)
    for s in syms:
        s2 += s * s
    hats = [_fft(grid, vec[i]) for i in range(grid.dim)]
    dot = None
    for s, h in zip(syms, hats):
        term = s * h
        dot = term if dot is None else dot + term
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(s2 > 0.0, dot / np.where(s2 > 0.0, s2, 1.0), 0.0)
    out = [_ifft_real(grid, h - s * scale) for s, h in zip(syms, hats)]
    return np.stack(out, axis=0)


def solve_poisson(grid: TorusGrid, rhs: np.ndarray) -> np.ndarray:
    """Solve div(grad(phi)) = rhs with zero-mean gauge.

    The k = 0 component of ``rhs`` is discarded (it must be ~0 for the
    problem to be solvable); pure-Nyquist content, which div_grad cannot
    produce, is discarded as well.
    """
    hat = _fft(grid, rhs)
    sym = grid.divgrad_symbol
    with np.errstate(invalid="ignore", divide="ignore"):
        phi_hat = np.where(sym != 0.0, hat / np.where(sym != 0.0, sym, 1.0), 0.0)
    return _ifft_real(grid, phi_hat)


def time_derivative_periodic(st: SpaceTimeGrid, arr: np.ndarray) -> np.ndarray:
    """Spectral d/dt along axis 0 of a periodic space-time field."""
    if arr.shape[0] != st.n_t:
        raise GridError(f"expected {st.n_t} time rows, got {arr.shape[0]}")
    hat = np.fft.fft(arr, axis=0)
    sym = st.time_derivative_symbol.reshape((-1,) + (1,) * (arr.ndim - 1))
    return np.fft.ifft(sym * hat, axis=0).real


def integrate_space_time(st: SpaceTimeGrid, arr: np.ndarray) -> float:
    """Integral over torus x time with trapezoid (or periodic) weights."""
    if arr.shape[0] != st.num_time_nodes:
        raise GridError(
            f"expected {st.num_time_nodes} time rows, got {arr.shape[0]}"
        )
    slice_means = arr.reshape(arr.shape[0], -1).mean(axis=1)
    return float(np.dot(st.time_weights, slice_means))


def random_band_limited(
    grid: TorusGrid,
    rng: np.random.Generator,
    kmax: int = 3,
    amplitude: float = 1.0,
    zero_mean: bool = True,
) -> np.ndarray:
    """Smooth random real field built from modes with |k_i| <= kmax."""
    hat = np.zeros(grid.shape, dtype=complex)
    mesh = np.meshgrid(*grid.wavenumbers, indexing="ij")
    keep = np.ones(grid.shape, dtype=bool)
    for kk, nv in zip(mesh, grid.shape):
        keep &= np.abs(kk) <= min(kmax, nv // 2 - 1)
    idx = np.argwhere(keep)
    vals = rng.standard_normal(len(idx)) + 1j * rng.standard_normal(len(idx))
    hat[tuple(idx.T)] = vals
    field = np.fft.ifftn(hat).real
    if zero_mean:
        field -= field.mean()
    scale = np.max(np.abs(field))
    if scale > 0:
        field *= amplitude / scale
    return field
