"""Report figures rendered to files next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_diagnostics_figure(diagnostics, path):
    """Energy histories: kinetic/total on a linear axis, field energy on a log axis."""
    fig, (ax, ax_log) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    t = diagnostics.time
    ax.plot(t, diagnostics.kinetic, label="kinetic")
    ax.plot(t, diagnostics.total, "--", label="total")
    ax.set_ylabel("energy")
    ax.legend(loc="best")
    ax_log.semilogy(t, np.maximum(diagnostics.field_energy, 1e-300), color="tab:red")
    ax_log.set_xlabel("t")
    ax_log.set_ylabel("field energy")
    return _finish(fig, path)


def save_phase_space_figure(ensemble, path):
    """1D: x-v phase space scatter; 2D: particle positions."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if ensemble.dim == 1:
        half = ensemble.count // 2
        ax.scatter(ensemble.positions[:half], ensemble.velocities[:half],
                   s=1.0, alpha=0.5, color="tab:blue")
        ax.scatter(ensemble.positions[half:], ensemble.velocities[half:],
                   s=1.0, alpha=0.5, color="tab:red")
        ax.set_xlabel("x")
        ax.set_ylabel("v")
    else:
        ax.scatter(ensemble.positions[:, 0], ensemble.positions[:, 1], s=1.0, alpha=0.5)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    return _finish(fig, path)


def save_convergence_figure(tableaus, path):
    """Error against step refinement, one line per method (finest grid row)."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for method, tableau in sorted(tableaus.items()):
        errors = tableau.errors[-1, :]
        ax.loglog(tableau.dt_divisors, np.maximum(errors, 1e-300), "o-", label=method)
    ax.set_xlabel("step refinement divisor")
    ax.set_ylabel(f"{next(iter(tableaus.values())).norm}-norm error")
    ax.legend(loc="best")
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def save_bench_figure(rows, path):
    """Median wall time against grid size, one line per method."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    methods = sorted({row.method for row in rows})
    for method in methods:
        pts = sorted((r.ng, r.median_seconds) for r in rows if r.method == method)
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=method)
    ax.set_xlabel("grid nodes per axis")
    ax.set_ylabel("median seconds")
    ax.legend(loc="best")
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def save_em_energy_figure(times, energies, path):
    """Relative field-energy drift of the implicit field stepper."""
    energies = np.asarray(energies, dtype=np.float64)
    drift = energies / energies[0] - 1.0 if energies.size and energies[0] else energies
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(times, drift)
    ax.set_xlabel("t")
    ax.set_ylabel("relative energy drift")
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)
