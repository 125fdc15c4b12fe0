"""Full PIC runs: initialization, the deposit/solve/gather/push loop,
per-step diagnostics, and explicit-scheme stability checks.

Each step deposits charge at the positions where the configured pusher
reads the field (the half-drift point for the Strang-split pushers, the
post-drift point for forward Euler).  Deposit and gather then pair on
identical coordinates, making the total electric force vanish to roundoff
and conserving momentum; depositing at the pre-push positions instead
breaks that pairing and lets momentum drift at O(dt) per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from piclab.domain import (
    EPS0,
    C_LIGHT,
    GridSpec,
    ParticleEnsemble,
    SimConfig,
    Species,
    plasma_frequency,
    wrap_periodic,
)
from piclab.deposit import deposit_charge
from piclab.fields import filter_field, solve_poisson
from piclab.pushers import STEP_FUNCTIONS, FieldAccessor, field_stage_positions

#: Debye-resolution constant of order one in dx <= xi * lambda_De.
DEBYE_XI = 1.0


# ---------------------------------------------------------------------------
# Initial conditions
# ---------------------------------------------------------------------------


def init_two_stream(count, grid: GridSpec, drift_speed, perturbation, seed,
                    species: Species | None = None, store_path=None) -> ParticleEnsemble:
    """Two counter-streaming cold beams on the periodic 1D domain.

    The first half of the particles moves at +v0, the second half at -v0.
    Each beam's positions sample [0, L) by a seeded jittered lattice (one
    particle uniformly placed per equal cell): marginally uniform, but
    with the low-mode shot noise suppressed so the instability grows out
    of the seeded sinusoidal displacement instead of sampling noise.
    Deterministic for a fixed seed.  When ``store_path`` is given the
    ensemble is written there on first generation and reloaded bit-exactly
    afterwards, so every method in a comparison sees identical initial
    conditions.
    """
    from piclab.domain import ELECTRON

    species = species or ELECTRON
    if count % 2:
        raise ValueError(f"two-stream setup needs an even particle count, got {count}")
    if store_path is not None and Path(store_path).exists():
        return load_ensemble(store_path, species)
    rng = np.random.default_rng(seed)
    half = count // 2
    cell = grid.length / half
    beams = [(np.arange(half) + rng.random(half)) * cell for _ in range(2)]
    x = np.concatenate(beams)
    if perturbation:
        x = x + perturbation * np.sin(2.0 * np.pi * x / grid.length)
    x = wrap_periodic(x, grid.length)
    v = np.where(np.arange(count) < half, drift_speed, -drift_speed).astype(np.float64)
    ensemble = ParticleEnsemble(positions=x, velocities=v, species=species)
    if store_path is not None:
        save_ensemble(ensemble, store_path)
    return ensemble


def init_uniform_2d(count, grid: GridSpec, seed, drift_speed=0.0,
                    species: Species | None = None, store_path=None) -> ParticleEnsemble:
    """Uniformly distributed particles on the 2D box.

    Velocities follow the same beam recipe as the 1D setup applied per
    axis: the first half of the particles gets +v0 on both components,
    the second half -v0.  drift_speed=0 leaves the ensemble cold, which
    is what single-particle and equilibrium studies want.  Same seeded
    determinism and optional on-disk store as the 1D initializer.
    """
    from piclab.domain import ELECTRON

    species = species or ELECTRON
    if count < 1:
        raise ValueError("need at least one particle")
    if store_path is not None and Path(store_path).exists():
        return load_ensemble(store_path, species)
    rng = np.random.default_rng(seed)
    x = rng.random((count, 2)) * grid.length
    v = np.zeros((count, 2))
    if drift_speed:
        half = (count + 1) // 2
        v[:half, :] = drift_speed
        v[half:, :] = -drift_speed
    ensemble = ParticleEnsemble(positions=x, velocities=v, species=species)
    if store_path is not None:
        save_ensemble(ensemble, store_path)
    return ensemble


def save_ensemble(ensemble: ParticleEnsemble, path):
    """Write particles as CSV `particle_index,x[,y],vx[,vy]`, full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if ensemble.dim == 1:
        lines = ["particle_index,x,vx"]
        for i in range(ensemble.count):
            lines.append(
                f"{i},{float(ensemble.positions[i])!r},{float(ensemble.velocities[i])!r}"
            )
    else:
        lines = ["particle_index,x,y,vx,vy"]
        for i in range(ensemble.count):
            px, py = ensemble.positions[i, 0], ensemble.positions[i, 1]
            vx, vy = ensemble.velocities[i, 0], ensemble.velocities[i, 1]
            lines.append(f"{i},{float(px)!r},{float(py)!r},{float(vx)!r},{float(vy)!r}")
    path.write_text("\n".join(lines) + "\n")


def load_ensemble(path, species: Species) -> ParticleEnsemble:
    """Read an ensemble written by save_ensemble (bit-exact round trip)."""
    rows = Path(path).read_text().strip().splitlines()
    header = rows[0]
    data = np.array([[float(part) for part in row.split(",")[1:]] for row in rows[1:]])
    if header == "particle_index,x,vx":
        return ParticleEnsemble(positions=data[:, 0], velocities=data[:, 1], species=species)
    if header == "particle_index,x,y,vx,vy":
        return ParticleEnsemble(positions=data[:, 0:2], velocities=data[:, 2:4], species=species)
    raise ValueError(f"unrecognized ensemble header {header!r}")


def default_ensemble(config: SimConfig, store_path=None) -> ParticleEnsemble:
    """The model's stock initial condition for this configuration."""
    grid = config.grid()
    if config.dim == 1:
        return init_two_stream(
            config.particles, grid, config.v0, config.perturbation, config.seed,
            species=config.species, store_path=store_path,
        )
    return init_uniform_2d(
        config.particles, grid, config.seed, drift_speed=config.v0,
        species=config.species, store_path=store_path,
    )


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass
class Diagnostics:
    """Per-step energy, momentum, and charge records."""

    dim: int
    step: list = field(default_factory=list)
    time: list = field(default_factory=list)
    kinetic: list = field(default_factory=list)
    field_energy: list = field(default_factory=list)
    momentum: list = field(default_factory=list)
    charge: list = field(default_factory=list)

    def record(self, step, time, kinetic, field_energy, momentum, charge):
        self.step.append(int(step))
        self.time.append(float(time))
        self.kinetic.append(float(kinetic))
        self.field_energy.append(float(field_energy))
        self.momentum.append(tuple(float(p) for p in np.atleast_1d(momentum)))
        self.charge.append(float(charge))

    @property
    def total(self):
        return [k + f for k, f in zip(self.kinetic, self.field_energy)]

    @property
    def log_field_energy(self):
        """Instability growth proxy: log of the field energy per step."""
        return [math.log(max(f, 1e-300)) for f in self.field_energy]

    def header(self) -> str:
        momentum_cols = "momentum_x" if self.dim == 1 else "momentum_x,momentum_y"
        return f"step,time,kinetic,field,total,{momentum_cols},charge"

    def to_csv(self, path):
        lines = [self.header()]
        for i in range(len(self.step)):
            parts = [str(self.step[i]), repr(self.time[i]), repr(self.kinetic[i]),
                     repr(self.field_energy[i]), repr(self.kinetic[i] + self.field_energy[i])]
            parts.extend(repr(p) for p in self.momentum[i])
            parts.append(repr(self.charge[i]))
            lines.append(",".join(parts))
        Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Stability report
# ---------------------------------------------------------------------------


@dataclass
class CriterionCheck:
    name: str
    value: float | None
    status: str  # "pass", "fail", or "n/a"
    detail: str

    def line(self) -> str:
        return f"{self.name}: {self.detail} -> {self.status}"


@dataclass
class StabilityReport:
    langmuir: CriterionCheck
    debye: CriterionCheck
    cfl: CriterionCheck

    @property
    def checks(self):
        return (self.langmuir, self.debye, self.cfl)

    @property
    def all_applicable_pass(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def render(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def stability_check(config: SimConfig, thermal_speed=0.0) -> StabilityReport:
    """Evaluate the explicit-scheme restrictions for this configuration.

    Langmuir: omega_pe * dt < 2.  Debye: dx <= xi * lambda_De with
    lambda_De = v_th / omega_pe; cold beams (thermal speed 0) make this
    not applicable.  CFL: c * dt <= dx, reported only when the implicit
    field stepper is configured (theta set) and is waived for theta > 0.
    """
    wpe = config.omega_pe()
    wdt = wpe * config.dt
    langmuir = CriterionCheck(
        name="Langmuir",
        value=wdt,
        status="pass" if wdt < 2.0 else "fail",
        detail=f"omega_pe*dt = {wdt:.6g} (require < 2)",
    )
    dx = config.grid().dx
    if thermal_speed > 0.0:
        debye_len = thermal_speed / wpe
        ratio = dx / debye_len
        debye = CriterionCheck(
            name="Debye",
            value=ratio,
            status="pass" if dx <= DEBYE_XI * debye_len else "fail",
            detail=f"dx/lambda_De = {ratio:.6g} (require <= {DEBYE_XI:g})",
        )
    else:
        debye = CriterionCheck(
            name="Debye",
            value=None,
            status="n/a",
            detail="not applicable (cold beams, thermal speed 0)",
        )
    if config.theta is None:
        cfl = CriterionCheck(
            name="CFL",
            value=None,
            status="n/a",
            detail="not applicable (no field stepping configured)",
        )
    else:
        ratio = C_LIGHT * config.dt / dx
        if config.theta > 0.0:
            cfl = CriterionCheck(
                name="CFL",
                value=ratio,
                status="n/a",
                detail=f"c*dt/dx = {ratio:.6g} -> not applicable (implicit)",
            )
        else:
            cfl = CriterionCheck(
                name="CFL",
                value=ratio,
                status="pass" if ratio <= 1.0 else "fail",
                detail=f"c*dt/dx = {ratio:.6g} (require <= 1)",
            )
    return StabilityReport(langmuir=langmuir, debye=debye, cfl=cfl)


# ---------------------------------------------------------------------------
# The run loop
# ---------------------------------------------------------------------------


def default_frozen_field(dim):
    """Stock analytic field for frozen-field studies: E = (sin x) e_x."""
    if dim == 1:
        return lambda pos: np.sin(pos)

    def e_at(pos):
        pos = np.asarray(pos, dtype=np.float64)
        out = np.zeros(pos.shape[:-1] + (2,))
        out[..., 0] = np.sin(pos[..., 0])
        return out

    return e_at


def run(config: SimConfig, ensemble: ParticleEnsemble | None = None, frozen_e=None,
        predictor_corrector=False, store_path=None):
    """Execute a configured PIC run.

    Per step: wrap positions, deposit charge at the pusher's field-stage
    positions, solve the periodic Poisson system, optionally smooth the
    field (boris-filter), push every particle, record diagnostics.  With
    ``frozen_field`` the deposit/solve phases are skipped and the pusher
    reads the prescribed analytic field instead.  ``predictor_corrector``
    adds one corrector pass per step in which the kick re-reads the
    nodewise average of the current and the provisionally advanced field.

    Returns (final ensemble, Diagnostics, StabilityReport).  Stability
    violations are reported, never fatal.
    """
    grid = config.grid()
    species = config.species
    step_fn = STEP_FUNCTIONS[config.pusher]
    if ensemble is None:
        ensemble = default_ensemble(config, store_path=store_path)
    else:
        ensemble = ensemble.copy()
    if ensemble.dim != config.dim:
        raise ValueError(
            f"ensemble dimension {ensemble.dim} does not match model {config.model!r}"
        )
    report = stability_check(config)
    diagnostics = Diagnostics(dim=config.dim)
    x = wrap_periodic(ensemble.positions, grid.length)
    v = ensemble.velocities.copy()
    dt = config.dt
    frozen = config.frozen_field
    if frozen and frozen_e is None:
        frozen_e = default_frozen_field(config.dim)
    bz = config.b_field if config.dim == 2 else 0.0
    total_particle_charge = species.charge * ensemble.count

    for step in range(config.steps):
        if frozen:
            accessor = FieldAccessor.analytic(frozen_e, species, bz=bz)
            charge = total_particle_charge
            field_energy = 0.0
        else:
            probe = FieldAccessor.zero(species, bz=bz)
            stage = wrap_periodic(
                field_stage_positions(config.pusher, x, v, dt, probe), grid.length
            )
            staged = ParticleEnsemble(positions=stage, velocities=v, species=species)
            rho = deposit_charge(staged, grid, order=config.shape_order)
            solution = solve_poisson(rho, grid)
            e_grid = solution.e
            if config.pusher == "boris-filter":
                e_push = filter_field(e_grid, grid, passes=config.filter_passes)
            else:
                e_push = e_grid
            if predictor_corrector:
                x_trial, v_trial = step_fn(
                    x, v, dt, FieldAccessor.from_grid(e_push, grid, species,
                                                      order=config.shape_order, bz=bz),
                    species,
                )
                stage_trial = wrap_periodic(
                    field_stage_positions(config.pusher, x_trial, v_trial, dt, probe),
                    grid.length,
                )
                rho_trial = deposit_charge(
                    ParticleEnsemble(stage_trial, v_trial, species), grid,
                    order=config.shape_order,
                )
                e_next = solve_poisson(rho_trial, grid).e
                if config.pusher == "boris-filter":
                    e_next = filter_field(e_next, grid, passes=config.filter_passes)
                accessor = FieldAccessor.from_grid_pair(
                    e_push, e_next, grid, species, order=config.shape_order, bz=bz
                )
            else:
                accessor = FieldAccessor.from_grid(
                    e_push, grid, species, order=config.shape_order, bz=bz
                )
            charge = float(np.sum(rho) * grid.cell_volume)
            field_energy = 0.5 * EPS0 * float(np.sum(e_grid**2)) * grid.cell_volume
        x, v = step_fn(x, v, dt, accessor, species)
        x = wrap_periodic(x, grid.length)
        kinetic = 0.5 * species.mass * float(np.sum(v**2))
        momentum = species.mass * (np.sum(v, axis=0) if v.ndim == 2 else np.sum(v))
        diagnostics.record(step + 1, (step + 1) * dt, kinetic, field_energy, momentum, charge)

    final = ParticleEnsemble(positions=x, velocities=v, species=species)
    return final, diagnostics, report
