"""Core data types, unit conventions, and run configuration.

Everything is in normalized units: eps0 = mu0 = 1 (so the wave speed is 1)
and the stock run species is the normalized electron with charge -1 and
mass 1.  Positions live on a periodic box [0, L)^d and all state arrays are
float64; convergence studies push errors toward 1e-12, so no lower
precision is used anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

EPS0 = 1.0
MU0 = 1.0
C_LIGHT = 1.0

MODELS = ("electrostatic-1d", "magnetized-2d")


class ConfigError(ValueError):
    """Malformed, unknown, or inconsistent run configuration."""


def wrap_periodic(x, length):
    """Map coordinates onto the periodic box, componentwise into [0, length).

    Values already inside the box come back unchanged (bit-identical).
    Tiny negative inputs can round up to exactly ``length`` under fmod;
    those are folded back to 0 so the half-open interval is preserved.
    """
    if length <= 0:
        raise ValueError(f"domain length must be positive, got {length}")
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinate passed to wrap_periodic")
    out = np.mod(arr, length)
    out = np.where(out == length, 0.0, out)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Species:
    """Charge and mass of one (super-)particle species."""

    charge: float
    mass: float

    def __post_init__(self):
        if not (math.isfinite(self.mass) and self.mass > 0.0):
            raise ValueError(f"species mass must be positive and finite, got {self.mass}")
        if not math.isfinite(self.charge) or self.charge == 0.0:
            raise ValueError(f"species charge must be finite and nonzero, got {self.charge}")

    @property
    def charge_over_mass(self):
        return self.charge / self.mass


#: The normalized electron used by every run in this package.
ELECTRON = Species(charge=-1.0, mass=1.0)


def larmor_frequency(species: Species, b_magnitude: float) -> float:
    """Gyration frequency magnitude |q| |B| / m.

    The sign of the gyration (clockwise for positive charge in B = +B e_z)
    is carried by the pusher formulas through the signed product q B / m,
    not by this value.
    """
    if not math.isfinite(b_magnitude):
        raise ValueError("magnetic field magnitude must be finite")
    return abs(species.charge) * abs(b_magnitude) / species.mass


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: `ng` nodes per axis over [0, length) per axis.

    Node ng is identified with node 0.  2D grids are square (dy = dx).
    """

    dim: int
    ng: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.ng < 4:
            raise ValueError(f"need at least 4 nodes per axis, got {self.ng}")
        if not (math.isfinite(self.length) and self.length > 0.0):
            raise ValueError(f"domain length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.ng

    @property
    def shape(self) -> tuple:
        return (self.ng,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    def nodes(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.arange(self.ng) * self.dx


@dataclass
class ParticleEnsemble:
    """Positions and velocities of P particles of a single species.

    1D states are arrays of shape (P,), 2D states (P, 2); positions and
    velocities always share one shape.  Wrapping into the box is the
    caller's job (the run loop wraps every step).
    """

    positions: np.ndarray
    velocities: np.ndarray
    species: Species

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        if self.positions.shape != self.velocities.shape:
            raise ValueError(
                f"positions {self.positions.shape} and velocities "
                f"{self.velocities.shape} must have identical shape"
            )
        if self.positions.ndim not in (1, 2):
            raise ValueError("particle arrays must be (P,) or (P, d)")
        if self.count < 1:
            raise ValueError("ensemble needs at least one particle")

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.positions.ndim == 1 else self.positions.shape[1]

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions.copy(), self.velocities.copy(), self.species)


@dataclass
class FieldState:
    """Grid fields: charge density, potential, electric field, uniform Bz."""

    rho: np.ndarray
    phi: np.ndarray
    e: np.ndarray
    bz: float = 0.0

    def total_charge(self, grid: GridSpec) -> float:
        return float(np.sum(self.rho) * grid.cell_volume)


def plasma_frequency(species: Species, count: int, length: float, dim: int) -> float:
    """Plasma frequency sqrt(n q^2 / (eps0 m)) with density n = P / L^d."""
    n = count / length**dim
    return math.sqrt(n * species.charge**2 / (EPS0 * species.mass))


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

# Config file key -> (attribute, converter).  This list is exhaustive;
# unknown keys are errors so that typos cannot silently corrupt a study.
def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


CONFIG_KEYS = {
    "model": ("model", str),
    "pusher": ("pusher", str),
    "NG": ("ng", int),
    "L": ("length", float),
    "P": ("particles", int),
    "dt": ("dt", float),
    "steps": ("steps", int),
    "seed": ("seed", int),
    "B": ("b_field", float),
    "v0": ("v0", float),
    "perturbation": ("perturbation", float),
    "filter_passes": ("filter_passes", int),
    "shape_order": ("shape_order", int),
    "fine_divisor": ("fine_divisor", int),
    "norm": ("norm", str),
    "frozen_field": ("frozen_field", _parse_bool),
    "theta": ("theta", float),
}


@dataclass
class SimConfig:
    """Complete description of one experiment.

    ``dt=None`` is resolved so that omega_pe * dt = 0.2, which satisfies
    the explicit stability bounds at the coarsest refinement level;
    ``b_field=None`` resolves to 1.0 for the magnetized model and 0.0
    otherwise; ``pusher=None`` picks the model's Strang-split default.
    ``theta`` stays None unless the implicit field stepper is in play.
    """

    model: str
    pusher: str | None = None
    ng: int = 64
    length: float = 2.0 * math.pi
    particles: int = 10_000
    dt: float | None = None
    steps: int = 100
    seed: int = 12345
    b_field: float | None = None
    v0: float = 0.2
    perturbation: float = 1e-3
    filter_passes: int = 1
    shape_order: int = 1
    fine_divisor: int = 2048
    norm: str = "max"
    frozen_field: bool = False
    theta: float | None = None
    output_dir: Path | None = None

    @property
    def dim(self) -> int:
        return 1 if self.model == "electrostatic-1d" else 2

    @property
    def species(self) -> Species:
        return ELECTRON

    def grid(self) -> GridSpec:
        return GridSpec(dim=self.dim, ng=self.ng, length=self.length)

    def omega_pe(self) -> float:
        return plasma_frequency(self.species, self.particles, self.length, self.dim)

    def validate(self) -> "SimConfig":
        """Resolve derived defaults and check every invariant.

        Returns self so calls can be chained; raises ConfigError with a
        message naming the offending key on any violation.
        """
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose one of {MODELS}")
        if self.pusher is None:
            self.pusher = "boris-es" if self.dim == 1 else "boris-em"
        if self.b_field is None:
            self.b_field = 1.0 if self.model == "magnetized-2d" else 0.0
        if self.ng < 4:
            raise ConfigError(f"NG must be at least 4, got {self.ng}")
        if self.length <= 0:
            raise ConfigError(f"L must be positive, got {self.length}")
        if self.particles < 1:
            raise ConfigError(f"P must be positive, got {self.particles}")
        if self.dt is None:
            self.dt = 0.2 / self.omega_pe()
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise ConfigError(f"steps must be at least 1, got {self.steps}")
        if not -(2**63) <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.shape_order not in (0, 1):
            raise ConfigError(f"shape_order must be 0 or 1, got {self.shape_order}")
        if self.filter_passes < 0:
            raise ConfigError(f"filter_passes must be non-negative, got {self.filter_passes}")
        if self.fine_divisor < 1 or self.fine_divisor & (self.fine_divisor - 1):
            raise ConfigError(f"fine_divisor must be a power of two, got {self.fine_divisor}")
        if self.norm not in ("max", "l2"):
            raise ConfigError(f"norm must be 'max' or 'l2', got {self.norm!r}")
        if self.theta is not None and not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must lie in [0, 1], got {self.theta}")
        from piclab import pushers  # deferred: pushers imports this module

        pushers.validate_pusher(self.pusher, self.dim)
        return self

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def parse_config_text(text: str) -> dict:
    """Parse flat `key = value` lines with `#` comments into raw attributes."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            known = ", ".join(sorted(CONFIG_KEYS))
            raise ConfigError(f"line {lineno}: unknown key {key!r} (known keys: {known})")
        attr, convert = CONFIG_KEYS[key]
        try:
            raw[attr] = convert(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return raw


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply repeatable `key=value` override strings over parsed config."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown override key {key!r}")
        attr, convert = CONFIG_KEYS[key]
        try:
            raw[attr] = convert(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for override {key!r}: {exc}") from exc
    return raw


def load_config(path, overrides=None) -> SimConfig:
    """Load a SimConfig from a flat key-value file, apply overrides, validate."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = parse_config_text(path.read_text())
    raw = apply_overrides(raw, overrides)
    if "model" not in raw:
        raise ConfigError(f"config {path} does not set the required key 'model'")
    return SimConfig(**raw).validate()
