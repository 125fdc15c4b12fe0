"""Periodic Poisson solvers, potential gradient, and binomial field smoothing.

The solvers diagonalize the standard 3-point (1D) / 5-point (2D) Laplacian
stencils in Fourier space, which solves the discrete system exactly up to
roundoff; the stencil residual is computed and returned so callers can
verify it.  The potential carries the zero-mean gauge (the periodic
Laplacian is singular).  Sign convention throughout: lap(phi) = -rho/eps0
and E = -grad(phi), so that div(E) = rho/eps0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from piclab.domain import EPS0, GridSpec


@dataclass
class PoissonSolution:
    """Zero-mean potential, its field, and the stencil residual inf-norm."""

    phi: np.ndarray
    e: np.ndarray
    residual: float


def _stencil_eigenvalues(ng, dx):
    """Eigenvalues of the periodic 3-point second-difference, per mode."""
    k = np.arange(ng)
    return (2.0 - 2.0 * np.cos(2.0 * np.pi * k / ng)) / dx**2


def apply_laplacian(phi, grid: GridSpec) -> np.ndarray:
    """Apply the periodic 3-point (1D) or 5-point (2D) Laplacian stencil."""
    dx2 = grid.dx**2
    if grid.dim == 1:
        return (np.roll(phi, -1) - 2.0 * phi + np.roll(phi, 1)) / dx2
    lap = (np.roll(phi, -1, axis=0) - 2.0 * phi + np.roll(phi, 1, axis=0)) / dx2
    lap += (np.roll(phi, -1, axis=1) - 2.0 * phi + np.roll(phi, 1, axis=1)) / dx2
    return lap


def _residual(phi, rho, grid):
    source = (rho - np.mean(rho)) / EPS0
    return float(np.max(np.abs(apply_laplacian(phi, grid) + source)))


def solve_poisson_1d(rho, grid: GridSpec) -> PoissonSolution:
    """Solve lap(phi) = -(rho - mean(rho))/eps0 on the periodic 1D grid."""
    rho = np.asarray(rho, dtype=np.float64)
    if grid.dim != 1 or rho.shape != grid.shape:
        raise ValueError(f"density shape {rho.shape} does not conform to 1D grid {grid.shape}")
    ng = grid.ng
    rho_hat = np.fft.rfft(rho - np.mean(rho)) / EPS0
    eig = _stencil_eigenvalues(ng, grid.dx)[: rho_hat.size]
    phi_hat = np.zeros_like(rho_hat)
    phi_hat[1:] = rho_hat[1:] / eig[1:]
    phi = np.fft.irfft(phi_hat, n=ng)
    phi -= np.mean(phi)
    return PoissonSolution(phi=phi, e=gradient_to_field(phi, grid), residual=_residual(phi, rho, grid))


def solve_poisson_2d(rho, grid: GridSpec) -> PoissonSolution:
    """Solve the 5-point lap(phi) = -(rho - mean(rho))/eps0 on the 2D grid."""
    rho = np.asarray(rho, dtype=np.float64)
    if grid.dim != 2 or rho.shape != grid.shape:
        raise ValueError(f"density shape {rho.shape} does not conform to 2D grid {grid.shape}")
    ng = grid.ng
    rho_hat = np.fft.fft2(rho - np.mean(rho)) / EPS0
    eig1 = _stencil_eigenvalues(ng, grid.dx)
    eig = eig1[:, None] + eig1[None, :]
    phi_hat = np.zeros_like(rho_hat)
    nonzero = eig > 0
    phi_hat[nonzero] = rho_hat[nonzero] / eig[nonzero]
    phi = np.real(np.fft.ifft2(phi_hat))
    phi -= np.mean(phi)
    return PoissonSolution(phi=phi, e=gradient_to_field(phi, grid), residual=_residual(phi, rho, grid))


def solve_poisson(rho, grid: GridSpec) -> PoissonSolution:
    """Dimension-dispatching convenience wrapper."""
    return solve_poisson_1d(rho, grid) if grid.dim == 1 else solve_poisson_2d(rho, grid)


def gradient_to_field(phi, grid: GridSpec) -> np.ndarray:
    """E = -grad(phi) by periodic central differences.

    Returns shape (ng,) in 1D and (ng, ng, 2) in 2D.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != grid.shape:
        raise ValueError(f"potential shape {phi.shape} does not conform to grid {grid.shape}")
    two_dx = 2.0 * grid.dx
    if grid.dim == 1:
        return -(np.roll(phi, -1) - np.roll(phi, 1)) / two_dx
    ex = -(np.roll(phi, -1, axis=0) - np.roll(phi, 1, axis=0)) / two_dx
    ey = -(np.roll(phi, -1, axis=1) - np.roll(phi, 1, axis=1)) / two_dx
    return np.stack([ex, ey], axis=-1)


def filter_field(e, grid: GridSpec, passes=1) -> np.ndarray:
    """Binomial (1-2-1)/4 smoothing applied per axis, `passes` times.

    The weights form a convex combination, so max|E| never grows; a pure
    grid-scale (Nyquist) mode is annihilated in a single pass.  passes=0
    returns the input unchanged (a copy).
    """
    if passes < 0:
        raise ValueError(f"filter passes must be non-negative, got {passes}")
    out = np.array(e, dtype=np.float64, copy=True)
    if out.shape[: grid.dim] != grid.shape:
        raise ValueError(f"field shape {out.shape} does not conform to grid {grid.shape}")
    for _ in range(passes):
        for axis in range(grid.dim):
            out = 0.25 * (np.roll(out, 1, axis=axis) + 2.0 * out + np.roll(out, -1, axis=axis))
    return out


def field_to_csv(values, path):
    """Write a scalar grid array as CSV: node_index[,node_index_y],value."""
    values = np.asarray(values)
    path = Path(path)
    lines = []
    if values.ndim == 1:
        lines.append("node_index,value")
        for j, v in enumerate(values):
            lines.append(f"{j},{float(v)!r}")
    elif values.ndim == 2:
        lines.append("node_index,node_index_y,value")
        for jx in range(values.shape[0]):
            for jy in range(values.shape[1]):
                lines.append(f"{jx},{jy},{float(values[jx, jy])!r}")
    else:
        raise ValueError("field export expects a 1D or 2D scalar array")
    path.write_text("\n".join(lines) + "\n")
