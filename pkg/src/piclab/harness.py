"""Convergence studies and runtime benchmarks.

Error norms compare final particle positions against a reference run,
always through minimal-image periodic distances (a naive difference would
report O(L) errors for particles that wrapped).  The reference protocol
follows the forward-Euler-at-fine-steps convention: a reference at
dt/divisor is accepted once its gap to the dt/(2 divisor) run is no larger
than the error of the method run it is meant to resolve.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from piclab.domain import ParticleEnsemble, SimConfig
from piclab import engine


# ---------------------------------------------------------------------------
# Error norms and rates
# ---------------------------------------------------------------------------


def _minimal_image_delta(pos_a, pos_b, length):
    a = np.asarray(pos_a, dtype=np.float64)
    b = np.asarray(pos_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    delta = np.abs(a - b) % length
    return np.minimum(delta, length - delta)


def _particle_distances(pos_a, pos_b, length):
    delta = _minimal_image_delta(pos_a, pos_b, length)
    if delta.ndim == 1:
        return delta
    return np.sqrt(np.sum(delta**2, axis=1))


def err_max(pos_a, pos_b, length) -> float:
    """Max over particles of the minimal-image Euclidean position error."""
    return float(np.max(_particle_distances(pos_a, pos_b, length)))


def err_l2(pos_a, pos_b, dx, length) -> float:
    """Grid-weighted root-sum-square error sqrt(sum_p dx * |delta_p|^2)."""
    dist = _particle_distances(pos_a, pos_b, length)
    return float(np.sqrt(np.sum(dx * dist**2)))


def conv_rate(err_coarse, err_fine) -> float:
    """Observed order log(err_fine / err_coarse) / log(1/2).

    Positive when halving the step at least halves the error.  A zero or
    negative error makes the rate undefined; NaN marks that case rather
    than raising, since reference-floor cells produce it routinely.
    """
    if err_coarse <= 0.0 or err_fine <= 0.0:
        return math.nan
    return math.log(err_fine / err_coarse) / math.log(0.5)


def _norm_fn(kind):
    if kind == "max":
        return lambda a, b, dx, length: err_max(a, b, length)
    if kind == "l2":
        return err_l2
    raise ValueError(f"unknown norm {kind!r}")


# ---------------------------------------------------------------------------
# Reference solutions
# ---------------------------------------------------------------------------

#: The reference integrator for every paper-protocol comparison.
REFERENCE_PUSHER = "euler"


@dataclass
class ReferenceCertificate:
    """Convergence evidence for a fine-step reference run.

    ``gap`` is the max-norm distance between the dt/divisor and
    dt/(2 divisor) reference runs; the certificate passes when the gap
    does not exceed ``method_error``, the distance of the coarse-step
    method run from the finer reference.
    """

    divisor: int
    gap: float
    method_error: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.method_error

    def render(self) -> str:
        status = "converged" if self.passed else "NOT converged"
        return (
            f"reference divisor: {self.divisor}\n"
            f"gap(dt/{self.divisor} vs dt/{2 * self.divisor}): {self.gap!r}\n"
            f"coarse method error: {self.method_error!r}\n"
            f"certificate: {status}"
        )


@dataclass
class ReferenceSolution:
    positions: np.ndarray
    config: SimConfig
    certificate: ReferenceCertificate


class ReferenceNotConverged(RuntimeError):
    def __init__(self, certificate):
        super().__init__(
            "reference run is not numerically converged "
            f"(gap {certificate.gap:.3e} > method error {certificate.method_error:.3e}); "
            f"increase fine_divisor beyond {certificate.divisor}"
        )
        self.certificate = certificate


def _final_positions(config: SimConfig, ensemble: ParticleEnsemble, frozen_e=None):
    final, _, _ = engine.run(config, ensemble=ensemble.copy(), frozen_e=frozen_e)
    return final.positions


def _refined(config: SimConfig, divisor: int, pusher=None) -> SimConfig:
    return config.replace(
        pusher=pusher or config.pusher,
        dt=config.dt / divisor,
        steps=config.steps * divisor,
    )


def reference_certificate(config: SimConfig, fine_divisor, ensemble=None, frozen_e=None):
    """Run the reference protocol and return (fine positions, certificate).

    Three runs: the reference pusher at dt/divisor and dt/(2 divisor), and
    the base-step method run the reference must out-resolve.
    """
    if ensemble is None:
        ensemble = engine.default_ensemble(config)
    ref_cfg = config if config.pusher == REFERENCE_PUSHER else config.replace(pusher=REFERENCE_PUSHER)
    pos_fine = _final_positions(_refined(ref_cfg, fine_divisor), ensemble, frozen_e)
    pos_finer = _final_positions(_refined(ref_cfg, 2 * fine_divisor), ensemble, frozen_e)
    pos_method = _final_positions(config, ensemble, frozen_e)
    certificate = ReferenceCertificate(
        divisor=fine_divisor,
        gap=err_max(pos_fine, pos_finer, config.length),
        method_error=err_max(pos_method, pos_finer, config.length),
    )
    return pos_fine, certificate


def make_reference(config: SimConfig, fine_divisor=None, ensemble=None, frozen_e=None) -> ReferenceSolution:
    """Build the fine-step reference trajectory with its certificate.

    Raises ReferenceNotConverged (advising a larger divisor) when the
    certificate fails.
    """
    divisor = fine_divisor or config.fine_divisor
    positions, certificate = reference_certificate(config, divisor, ensemble, frozen_e)
    if not certificate.passed:
        raise ReferenceNotConverged(certificate)
    return ReferenceSolution(positions=positions, config=config, certificate=certificate)


# ---------------------------------------------------------------------------
# Convergence tableau
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceTableau:
    """Errors on the (grid refinement) x (step refinement) lattice.

    Row i uses ng * 2^i nodes per axis, column j the step dt / 2^j; the
    derived rates come from consecutive cells along each axis, and
    ``mean_over_dt`` is the per-row average used when the step-size axis
    has saturated and only the grid dependence is of interest.
    """

    method: str
    norm: str
    ng_levels: list
    dt_divisors: list
    errors: np.ndarray

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if self.errors.shape != (len(self.ng_levels), len(self.dt_divisors)):
            raise ValueError("tableau errors must be (grid levels) x (step levels)")
        if np.any(self.errors < 0):
            raise ValueError("tableau errors must be non-negative")

    @property
    def rate_dt(self) -> np.ndarray:
        out = np.full_like(self.errors, np.nan)
        for i in range(self.errors.shape[0]):
            for j in range(self.errors.shape[1] - 1):
                out[i, j] = conv_rate(self.errors[i, j], self.errors[i, j + 1])
        return out

    @property
    def rate_dx(self) -> np.ndarray:
        out = np.full_like(self.errors, np.nan)
        for i in range(self.errors.shape[0] - 1):
            for j in range(self.errors.shape[1]):
                out[i, j] = conv_rate(self.errors[i, j], self.errors[i + 1, j])
        return out

    @property
    def mean_over_dt(self) -> np.ndarray:
        return self.errors.mean(axis=1)

    def summary_rate(self) -> float:
        """Mean finite step-size rate on the finest grid row."""
        rates = self.rate_dt[-1, :]
        finite = rates[np.isfinite(rates)]
        return float(np.mean(finite)) if finite.size else math.nan

    def to_csv(self, path):
        rate_dt = self.rate_dt
        rate_dx = self.rate_dx
        lines = ["dx_level,dt_level,error,rate_dt,rate_dx"]
        for i in range(self.errors.shape[0]):
            for j in range(self.errors.shape[1]):
                lines.append(
                    f"{i},{j},{float(self.errors[i, j])!r},"
                    f"{float(rate_dt[i, j])!r},{float(rate_dx[i, j])!r}"
                )
        Path(path).write_text("\n".join(lines) + "\n")


def build_tableau(config: SimConfig, method, norm="max", dt_levels=6, dx_levels=1,
                  reference=None, ensemble=None, frozen_e=None) -> ConvergenceTableau:
    """Run ``method`` over the refinement lattice against a fixed reference.

    The reference (built here if not supplied) is the reference pusher on
    the finest grid at dt / fine_divisor; every cell shares the same
    initial ensemble.  Frozen-field studies typically use dx_levels=1
    since no grid enters the dynamics.
    """
    if ensemble is None:
        ensemble = engine.default_ensemble(config)
    ng_levels = [config.ng * 2**i for i in range(dx_levels)]
    dt_divisors = [2**j for j in range(dt_levels)]
    if reference is None:
        fine_cfg = config.replace(ng=ng_levels[-1])
        reference = make_reference(fine_cfg, ensemble=ensemble, frozen_e=frozen_e)
    norm_fn = _norm_fn(norm)
    errors = np.zeros((len(ng_levels), len(dt_divisors)))
    for i, ng in enumerate(ng_levels):
        for j, divisor in enumerate(dt_divisors):
            cell_cfg = _refined(config.replace(ng=ng), divisor, pusher=method)
            pos = _final_positions(cell_cfg, ensemble, frozen_e)
            errors[i, j] = norm_fn(pos, reference.positions, cell_cfg.grid().dx, config.length)
    return ConvergenceTableau(
        method=method, norm=norm, ng_levels=ng_levels, dt_divisors=dt_divisors, errors=errors
    )


# ---------------------------------------------------------------------------
# Runtime benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchRow:
    method: str
    ng: int
    dt: float
    steps: int
    median_seconds: float


def runtime_bench(config: SimConfig, methods, grid_sizes, steps=None, repeats=3):
    """Median-of-N wall times per (method, grid size) cell.

    One untimed warm-up run per cell, then ``repeats`` timed runs; cells
    execute serially so timings do not contend.  Rows come back sorted by
    (method, ng).
    """
    steps = config.steps if steps is None else steps
    rows = []
    for method in sorted(methods):
        for ng in sorted(grid_sizes):
            cfg = config.replace(pusher=method, ng=ng, steps=steps)
            ensemble = engine.default_ensemble(cfg)
            engine.run(cfg, ensemble=ensemble.copy())  # warm-up
            times = []
            for _ in range(repeats):
                start = time.perf_counter()
                engine.run(cfg, ensemble=ensemble.copy())
                times.append(time.perf_counter() - start)
            rows.append(BenchRow(method, ng, cfg.dt, steps, float(np.median(times))))
    return rows


def bench_to_csv(rows, path):
    lines = ["method,NG,dt,steps,median_seconds"]
    for row in rows:
        lines.append(f"{row.method},{row.ng},{row.dt!r},{row.steps},{row.median_seconds!r}")
    Path(path).write_text("\n".join(lines) + "\n")
