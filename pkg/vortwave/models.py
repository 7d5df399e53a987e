"""Run configuration and report schemas."""
import json
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from vortwave.config import get_settings
from vortwave.errors import ConfigError
from vortwave.services.dno_family import PhysicalParams
from vortwave.services.grid_spectral import PeriodicGrid, SpectralField, from_modes, random_band_limited
from vortwave.services.straightening import BathymetryProfile

settings = get_settings()


class StrictModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ============================================================================
# Run configuration
# ============================================================================


class GridConfig(StrictModel):
    n: int = 32
    m: int = Field(default_factory=lambda: settings.VORTWAVE_DEFAULT_M)

    @field_validator("n")
    @classmethod
    def _even(cls, n):
        if n % 2 or n < 8:
            raise ValueError(f"n must be even and at least 8, got {n}")
        return n

    @field_validator("m")
    @classmethod
    def _vertical(cls, m):
        if m < 3:
            raise ValueError(f"m must be at least 3, got {m}")
        return m


class ModeSpec(StrictModel):
    k: int = Field(ge=0)
    amplitude: float
    phase: float = 0.0


class RandomSpec(StrictModel):
    kmax: int = Field(ge=1)
    amplitude: float = Field(gt=0)


class FieldSpec(StrictModel):
    """A field from cosine modes, a file of nodal values, or a seeded random draw."""

    modes: List[ModeSpec] = []
    file: Optional[str] = None
    random: Optional[RandomSpec] = None

    @model_validator(mode="after")
    def _one_source(self):
        sources = sum([bool(self.modes), self.file is not None, self.random is not None])
        if sources > 1:
            raise ValueError("field spec takes only one of modes, file, random")
        return self

    def is_even(self) -> bool:
        return self.file is None and self.random is None and all(
            np.isclose(np.sin(mode.phase), 0.0) for mode in self.modes
        )

    def build(self, grid: PeriodicGrid, rng: np.random.Generator, base_dir: Path = None) -> SpectralField:
        if self.file is not None:
            path = Path(self.file)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            try:
                values = np.loadtxt(path, dtype=float, ndmin=1)
            except OSError as e:
                raise ConfigError(f"cannot read field file {path}: {e}")
            if values.shape != (grid.n,):
                raise ConfigError(f"field file {path} holds {values.size} values, grid has {grid.n} nodes")
            return SpectralField(grid, values)
        if self.random is not None:
            return random_band_limited(grid, rng, self.random.kmax, self.random.amplitude)
        return from_modes(grid, [(mode.k, mode.amplitude, mode.phase) for mode in self.modes])


class InitialConfig(StrictModel):
    eta: FieldSpec = FieldSpec()
    psi: FieldSpec = FieldSpec()
    beta: FieldSpec = FieldSpec()


class IntegratorConfig(StrictModel):
    dt: float = Field(default=1e-3, gt=0)
    t_end: float = Field(default=1.0, ge=0)
    sample_every: int = Field(default=10, ge=1)
    cfl_safety: float = Field(default=2.0, gt=0)
    dno_method: Literal["oracle", "series"] = "oracle"
    series_order: int = Field(default=4, ge=0)
    dealias_rule: float = Field(default_factory=lambda: settings.VORTWAVE_DEALIAS_RULE, gt=0, le=1)


class ToleranceConfig(StrictModel):
    tol_bvp: float = Field(default_factory=lambda: settings.VORTWAVE_TOL_BVP, gt=0)
    cond_max: float = Field(default_factory=lambda: settings.VORTWAVE_COND_MAX, gt=0)
    flat_multiplier: float = 1e-10
    adjoint: float = 1e-9
    fd_slope: float = 1.9
    taylor_factor: float = 8.0
    taylor_band: float = 0.3
    classical_match: float = 1e-9
    mass_drift: float = 1e-12
    hamiltonian_drift: float = 1e-8
    dispersion: float = 1e-6
    convergence_factor: float = 5.0
    smoothing_band: float = 3.0
    smoothing_growth: float = 8.0
    paralin_slope: float = 1.9


class DiffeomorphismConfig(StrictModel):
    kind: Literal["trivial", "regularizing"] = "trivial"
    delta: Optional[float] = Field(default=None, gt=0)
    chi_id: str = "exp"

    @model_validator(mode="after")
    def _delta_needed(self):
        if self.kind == "regularizing" and self.delta is None:
            raise ValueError("regularizing diffeomorphism needs delta")
        return self


class ChecksConfig(StrictModel):
    random_draws: int = Field(default=10, ge=1)
    random_kmax: int = Field(default=3, ge=1)
    random_amplitude: float = Field(default=0.05, gt=0)
    fd_eps: List[float] = [5e-2, 1e-2, 2e-3]
    amplitudes: List[float] = [1e-2, 5e-3, 2.5e-3]
    k_values: List[int] = [1, 2, 3, 4, 5, 6, 7, 8]
    gammas: List[float] = [0.0, 1.0]
    n_values: List[int] = [8, 16, 32]
    dt_values: List[float] = [0.05, 0.025]
    probe_modes: List[int] = [8, 16, 24, 32, 42]
    sobolev_s: float = 3.0
    taylor_order: int = Field(default=2, ge=0)
    symmetrizer_modes: List[int] = [8, 16, 32, 64]
    symmetrizer_eps: List[float] = [0.3, 0.6]
    symmetrizer_slope: float = -1.2
    dispersion_amplitude: float = Field(default=1e-8, gt=0)


class RunConfig(StrictModel):
    grid: GridConfig = GridConfig()
    params: PhysicalParams = PhysicalParams()
    initial: InitialConfig = InitialConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    tolerances: ToleranceConfig = ToleranceConfig()
    diffeomorphism: DiffeomorphismConfig = DiffeomorphismConfig()
    checks: ChecksConfig = ChecksConfig()
    seed: int = 0
    reversibility: bool = False

    @model_validator(mode="after")
    def _parity(self):
        if self.reversibility and not self.initial.beta.is_even():
            raise ValueError("reversibility runs need an even bathymetry (cosine modes with zero phase)")
        return self

    # -- loading -----------------------------------------------------------

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        return cls.parse(raw)

    @classmethod
    def parse(cls, raw: dict) -> "RunConfig":
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(f"invalid run configuration: {e}")

    # -- builders ----------------------------------------------------------

    def periodic_grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.grid.n)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def bathymetry(self, grid: PeriodicGrid = None, rng: np.random.Generator = None,
                   base_dir: Path = None) -> BathymetryProfile:
        grid = grid or self.periodic_grid()
        beta = self.initial.beta.build(grid, rng or self.rng(), base_dir)
        return BathymetryProfile(beta, self.params.h, self.params.h0)

    def initial_fields(self, grid: PeriodicGrid = None, base_dir: Path = None):
        """(η, ψ, β) drawn in that order from the run's seeded generator."""
        grid = grid or self.periodic_grid()
        rng = self.rng()
        eta = self.initial.eta.build(grid, rng, base_dir)
        psi = self.initial.psi.build(grid, rng, base_dir)
        beta = self.initial.beta.build(grid, rng, base_dir)
        return eta - eta.mean(), psi, BathymetryProfile(beta, self.params.h, self.params.h0)


# ============================================================================
# Run report
# ============================================================================


class InvariantResult(BaseModel):
    name: str
    measured: float
    threshold: float
    comparison: Literal["<=", ">="] = "<="
    passed: bool


class RunReport(BaseModel):
    command: str
    version: str
    config: dict
    wall_time: float = 0.0
    series: Dict[str, List[float]] = {}
    invariants: List[InvariantResult] = []
    outputs: List[str] = []
    status: str = "success"
    message: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(inv.passed for inv in self.invariants)

    def check(self, name: str, measured: float, threshold: float, comparison: str = "<=") -> InvariantResult:
        measured = float(measured)
        ok = measured <= threshold if comparison == "<=" else measured >= threshold
        result = InvariantResult(name=name, measured=measured, threshold=threshold, comparison=comparison,
                                 passed=bool(ok))
        self.invariants.append(result)
        return result
