"""Particle-mesh coupling: shape functions, charge deposition, field gather.

Deposit and gather use the same shape function within a run (enforced at
config level); the pairing makes the two operations adjoint, which is what
keeps total momentum conserved.  Deposition accumulates in ascending
particle order so results are bit-reproducible.
"""

from __future__ import annotations

import numpy as np

from piclab.domain import GridSpec

NEAREST_GRID_POINT = 0
CLOUD_IN_CELL = 1
SHAPE_ORDERS = (NEAREST_GRID_POINT, CLOUD_IN_CELL)


def _check_order(order):
    if order not in SHAPE_ORDERS:
        raise ValueError(f"shape order must be 0 (NGP) or 1 (CIC), got {order}")


def shape_weight(distance, dx, order=CLOUD_IN_CELL):
    """Interpolation weight for a node at signed distance d from a particle.

    Order 1 is the hat function max(0, 1 - |d|/dx).  Order 0 is the
    top-hat of width dx; a particle exactly midway between two nodes is
    assigned to the lower-index node (d = +dx/2 counts, d = -dx/2 does not).
    """
    _check_order(order)
    if dx <= 0:
        raise ValueError(f"grid spacing must be positive, got {dx}")
    d = np.asarray(distance, dtype=np.float64)
    if order == CLOUD_IN_CELL:
        w = np.maximum(0.0, 1.0 - np.abs(d) / dx)
    else:
        w = np.where((d > -0.5 * dx) & (d <= 0.5 * dx), 1.0, 0.0)
    return float(w) if np.ndim(distance) == 0 else w


def _axis_indices_weights(coords, ng, dx, order):
    """Per-axis node indices and weights for wrapped coordinates.

    Returns a list of (index_array, weight_array) pairs, one per support
    node (two for CIC, one for NGP), with indices already folded into
    [0, ng).
    """
    xi = coords / dx
    if order == CLOUD_IN_CELL:
        j = np.floor(xi).astype(np.int64)
        frac = xi - j
        return [(j % ng, 1.0 - frac), ((j + 1) % ng, frac)]
    # nearest node, ties to the lower index
    j = np.ceil(xi - 0.5).astype(np.int64)
    return [(j % ng, np.ones_like(coords))]


def _require_wrapped(positions, length):
    if np.any(positions < 0.0) or np.any(positions >= length):
        raise ValueError("positions must be wrapped into [0, L) before deposition")


def deposit_charge(particles, grid: GridSpec, order=CLOUD_IN_CELL) -> np.ndarray:
    """Deposit particle charge onto the grid as a density (charge / dx^d).

    The density integrates back to the total particle charge exactly up to
    floating-point summation: sum_j rho_j dx^d = sum_i q_i.
    """
    _check_order(order)
    pos = particles.positions
    if (1 if pos.ndim == 1 else pos.shape[1]) != grid.dim:
        raise ValueError("particle dimension does not match the grid")
    _require_wrapped(pos, grid.length)
    q = particles.species.charge
    ng = grid.ng
    if grid.dim == 1:
        rho = np.zeros(ng)
        for idx, w in _axis_indices_weights(pos, ng, grid.dx, order):
            rho += np.bincount(idx, weights=w, minlength=ng)
        return q * rho / grid.dx
    rho = np.zeros(ng * ng)
    wx = _axis_indices_weights(pos[:, 0], ng, grid.dx, order)
    wy = _axis_indices_weights(pos[:, 1], ng, grid.dx, order)
    for ix, fx in wx:
        for iy, fy in wy:
            rho += np.bincount(ix * ng + iy, weights=fx * fy, minlength=ng * ng)
    return q * rho.reshape(ng, ng) / grid.cell_volume


def gather_field(e, positions, grid: GridSpec, order=CLOUD_IN_CELL):
    """Interpolate a grid field to particle positions with the same shape
    function as deposition (momentum-conserving pairing).

    `e` must have the grid shape on its leading axes; trailing axes (the
    field components in 2D) pass through.  Positions must be wrapped.
    """
    _check_order(order)
    e = np.asarray(e, dtype=np.float64)
    if e.shape[: grid.dim] != grid.shape:
        raise ValueError(f"field shape {e.shape} does not conform to grid {grid.shape}")
    single = np.ndim(positions) == (0 if grid.dim == 1 else 1)
    pos = np.atleast_1d(np.asarray(positions, dtype=np.float64))
    if grid.dim == 2:
        pos = pos.reshape(-1, 2)
    _require_wrapped(pos, grid.length)
    ng = grid.ng
    if grid.dim == 1:
        out = np.zeros(pos.shape[0])
        for idx, w in _axis_indices_weights(pos, ng, grid.dx, order):
            out += w * e[idx]
        return float(out[0]) if single else out
    trail = e.shape[2:]
    out = np.zeros((pos.shape[0],) + trail)
    wx = _axis_indices_weights(pos[:, 0], ng, grid.dx, order)
    wy = _axis_indices_weights(pos[:, 1], ng, grid.dx, order)
    for ix, fx in wx:
        for iy, fy in wy:
            w = (fx * fy).reshape((-1,) + (1,) * len(trail))
            out += w * e[ix, iy]
    return out[0] if single else out


def gather_time_averaged(e_old, e_new, positions, grid: GridSpec, order=CLOUD_IN_CELL):
    """Gather the nodewise average (e_old + e_new)/2 at particle positions."""
    e_old = np.asarray(e_old, dtype=np.float64)
    e_new = np.asarray(e_new, dtype=np.float64)
    if e_old.shape != e_new.shape:
        raise ValueError("field snapshots must have identical shape")
    return gather_field(0.5 * (e_old + e_new), positions, grid, order)
