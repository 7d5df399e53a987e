"""
Time evolution of the free surface with constant vorticity:

    η_t = G(η,β,γ)ψ + γηη_x
    ψ_t = -ψ_x²/2 + (G + η_xψ_x)²/(2(1+η_x²)) + γ(ηψ_x + ∂_x^{-1}G) - gη + κ(η_x/√(1+η_x²))_x

integrated with classical RK4, plus the flat-bottom Hamiltonian, its Poisson
tensor, the reflection symmetry and the linear dispersion relation.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from vortwave.errors import ConfigError, IntegrationError, SpectralError
from vortwave.services.dno_family import FlatSeriesOperator, OperatorFamily, PhysicalParams, velocity_fields
from vortwave.services.grid_spectral import PeriodicGrid, SpectralField, dealias, dx, dx_inv, pairing
from vortwave.services.paradiff import (
    CutoffParams,
    Symbol,
    default_delta,
    h_symbol,
    lambda_parts,
    lambda_symbol,
    mollifier_symbol,
    paradiff_apply,
    paraproduct,
    parametrix_symbol,
    symmetrizer_symbols,
)
from vortwave.services.straightening import BathymetryProfile, connectedness_margin

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SurfaceState:
    t: float
    eta: SpectralField
    psi: SpectralField

    def __post_init__(self):
        if self.eta.grid != self.psi.grid:
            raise SpectralError("eta and psi live on different grids")

    @classmethod
    def zero(cls, grid: PeriodicGrid, t: float = 0.0) -> "SurfaceState":
        return cls(t, SpectralField.zeros(grid), SpectralField.zeros(grid))

    @property
    def grid(self) -> PeriodicGrid:
        return self.eta.grid

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.eta.values)) and np.all(np.isfinite(self.psi.values)))


@dataclass(frozen=True)
class RhsOptions:
    method: str = "oracle"
    series_order: int = 4
    m: Optional[int] = None
    rule: Optional[float] = None

    def __post_init__(self):
        if self.method not in ("oracle", "series"):
            raise ConfigError(f"unknown operator path '{self.method}', expected 'oracle' or 'series'")


def surface_operator(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams,
                     opts: RhsOptions) -> Callable[[SpectralField], SpectralField]:
    """ψ ↦ G(η,β,γ)ψ along the configured path."""
    if opts.method == "series":
        if not bath.is_flat:
            raise ConfigError("the series operator path needs a flat bottom")
        return FlatSeriesOperator(eta, bath.h, opts.series_order, opts.rule)
    # connectedness is enforced at h0/2 during the flow
    relaxed = BathymetryProfile(bath.beta, bath.h, bath.h0 / 2.0)
    family = OperatorFamily(eta, relaxed, m=opts.m)
    return lambda psi: family.full(psi, params.gamma)


def _check_margin(state: SurfaceState, bath: BathymetryProfile) -> float:
    node, gap = connectedness_margin(state.eta, bath)
    if gap < bath.h0 / 2.0:
        raise IntegrationError(f"strict connectedness lost at node {node}: margin {gap:.4g} < h0/2", state.t)
    return gap


def rhs_from_g(state: SurfaceState, params: PhysicalParams, G: SpectralField,
               rule: float = None) -> Tuple[SpectralField, SpectralField]:
    eta, psi = state.eta, state.psi
    clean = lambda u: dealias(u, rule)
    eta_x, psi_x = dx(eta), dx(psi)
    E = 1.0 + clean(eta_x**2)
    G_zero = G - G.mean()

    eta_t = G + params.gamma * dx(clean(0.5 * eta**2))
    psi_t = (
        -0.5 * clean(psi_x**2)
        + clean((G + clean(eta_x * psi_x)) ** 2 / (2.0 * E))
        + params.gamma * (clean(eta * psi_x) + dx_inv(G_zero))
        - params.g * eta
        + params.kappa * dx(clean(eta_x / E**0.5))
    )
    return eta_t, psi_t


def rhs(state: SurfaceState, bath: BathymetryProfile, params: PhysicalParams,
        opts: RhsOptions = None) -> Tuple[SpectralField, SpectralField]:
    opts = opts or RhsOptions()
    _check_margin(state, bath)
    G = surface_operator(state.eta, bath, params, opts)(state.psi)
    return rhs_from_g(state, params, G, opts.rule)


# ============================================================================
# Integration
# ============================================================================


def cfl_limit(grid: PeriodicGrid, params: PhysicalParams, safety: float = 2.0) -> float:
    k = grid.n / 2
    rate = max(math.sqrt(params.kappa) * k**1.5, math.sqrt(params.g) * k**0.5, abs(params.gamma))
    return safety / rate


def _rk4(state: SurfaceState, dt: float, bath, params, opts) -> Tuple[SurfaceState, float]:
    def shifted(k, c):
        return SurfaceState(state.t + c * dt, state.eta + c * dt * k[0], state.psi + c * dt * k[1])

    k1 = rhs(state, bath, params, opts)
    k2 = rhs(shifted(k1, 0.5), bath, params, opts)
    k3 = rhs(shifted(k2, 0.5), bath, params, opts)
    k4 = rhs(shifted(k3, 1.0), bath, params, opts)
    eta = state.eta + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    psi = state.psi + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    projection = eta.mean()
    if abs(projection) > 1e-12:
        logger.warning(f"⚠️ mean of eta drifted by {projection:.3e} at t={state.t + dt:.6g}")
    return SurfaceState(state.t + dt, eta - projection, psi), abs(projection)


def step_rk4(state: SurfaceState, dt: float, bath: BathymetryProfile, params: PhysicalParams,
             opts: RhsOptions = None) -> SurfaceState:
    return _rk4(state, dt, bath, params, opts or RhsOptions())[0]


@dataclass
class Trajectory:
    dt: float
    cfl_limit: float
    states: List[SurfaceState] = field(default_factory=list)
    t: List[float] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    hamiltonian: List[float] = field(default_factory=list)
    margin_min: List[float] = field(default_factory=list)
    eta_l2: List[float] = field(default_factory=list)
    psi_l2: List[float] = field(default_factory=list)
    psi_mean: List[float] = field(default_factory=list)
    max_projection: float = 0.0
    truncated: bool = False
    diagnostic: Optional[str] = None

    def record(self, state: SurfaceState, bath: BathymetryProfile, params: PhysicalParams, opts: RhsOptions):
        self.states.append(state)
        self.t.append(state.t)
        self.mass.append(mass(state))
        self.hamiltonian.append(hamiltonian(state, params, bath, opts) if bath.is_flat else float("nan"))
        self.margin_min.append(connectedness_margin(state.eta, bath)[1])
        self.eta_l2.append(state.eta.l2())
        self.psi_l2.append(state.psi.l2())
        self.psi_mean.append(state.psi.mean())

    @property
    def final(self) -> SurfaceState:
        return self.states[-1]

    def drift(self, series: str) -> float:
        values = np.asarray(getattr(self, series))
        if series == "hamiltonian":
            return float(np.max(np.abs(values - values[0])) / abs(values[0]))
        return float(np.max(np.abs(values - values[0])))


def integrate(state0: SurfaceState, bath: BathymetryProfile, params: PhysicalParams, dt: float, t_end: float,
              sample_every: int = 1, opts: RhsOptions = None, cfl_safety: float = 2.0) -> Trajectory:
    opts = opts or RhsOptions()
    if not params.kappa > 0:
        raise ConfigError("time evolution needs surface tension kappa > 0")
    if abs(state0.eta.mean()) > 1e-12 * max(1.0, state0.eta.max_abs()):
        raise ConfigError(f"initial elevation must have zero mean, measured {state0.eta.mean():.3e}")
    limit = cfl_limit(state0.grid, params, cfl_safety)
    if dt > limit:
        raise ConfigError(f"dt = {dt:.3g} exceeds the explicit stability limit {limit:.3g}")
    steps = int(round(t_end / dt))
    traj = Trajectory(dt=dt, cfl_limit=limit)
    traj.record(state0, bath, params, opts)
    state = state0
    logger.info(f"🚀 Integrating {steps} RK4 steps of dt={dt:.3g} ({opts.method} operator)")
    for step in range(1, steps + 1):
        try:
            state, projection = _rk4(state, dt, bath, params, opts)
        except IntegrationError as e:
            traj.truncated, traj.diagnostic = True, str(e)
            logger.warning(f"⚠️ Trajectory truncated: {e}")
            break
        traj.max_projection = max(traj.max_projection, projection)
        if not state.is_finite():
            traj.truncated = True
            traj.diagnostic = f"non-finite state at t = {state.t:.6g}"
            logger.warning(f"⚠️ Trajectory truncated: {traj.diagnostic}")
            break
        if step % sample_every == 0 or step == steps:
            traj.record(state, bath, params, opts)
    return traj


def run(config, base_dir=None) -> Trajectory:
    """Integrate the initial data of a RunConfig."""
    eta, psi, bath = config.initial_fields(base_dir=base_dir)
    opts = RhsOptions(
        method=config.integrator.dno_method,
        series_order=config.integrator.series_order,
        m=config.grid.m,
        rule=config.integrator.dealias_rule,
    )
    return integrate(
        SurfaceState(0.0, eta, psi),
        bath,
        config.params,
        config.integrator.dt,
        config.integrator.t_end,
        config.integrator.sample_every,
        opts,
        config.integrator.cfl_safety,
    )


# ============================================================================
# Conserved quantities and structure
# ============================================================================


def mass(state: SurfaceState) -> float:
    return 2.0 * math.pi * state.eta.mean()


def hamiltonian(state: SurfaceState, params: PhysicalParams, bath: BathymetryProfile = None,
                opts: RhsOptions = None) -> float:
    """
    H = ½∫[ψG^{DN}(η)ψ + gη² + γ(-ψ_xη² + γη³/3)] + κ∫√(1+η_x²), flat bottom only.
    """
    grid = state.grid
    bath = bath if bath is not None else BathymetryProfile.flat(grid, params.h, params.h0)
    if not bath.is_flat:
        raise ConfigError("the Hamiltonian is only defined for a flat bottom")
    opts = opts or RhsOptions()
    eta, psi = state.eta, state.psi
    G = surface_operator(eta, bath, params, opts)(psi)
    eta_x = dx(eta)
    density = psi * G + params.g * eta**2 + params.gamma * (-dx(psi) * eta**2 + params.gamma * eta**3 / 3.0)
    ones = SpectralField.constant(grid, 1.0)
    return 0.5 * pairing(density, ones) + params.kappa * pairing((1.0 + eta_x**2) ** 0.5, ones)


def hamiltonian_gradient(state: SurfaceState, params: PhysicalParams, opts: RhsOptions = None,
                         eps: float = 1e-6) -> Tuple[SpectralField, SpectralField]:
    """L² gradient (δH/δη, δH/δψ) by nodewise central differences."""
    grid = state.grid
    bath = BathymetryProfile.flat(grid, params.h, params.h0)
    weight = grid.spacing
    out = []
    for which in ("eta", "psi"):
        grad = np.zeros(grid.n)
        for j in range(grid.n):
            bump = np.zeros(grid.n)
            bump[j] = eps
            plus, minus = _nudged(state, which, bump), _nudged(state, which, -bump)
            grad[j] = (hamiltonian(plus, params, bath, opts) - hamiltonian(minus, params, bath, opts)) / (2 * eps * weight)
        out.append(SpectralField(grid, grad))
    return out[0], out[1]


def _nudged(state: SurfaceState, which: str, bump: np.ndarray) -> SurfaceState:
    if which == "eta":
        return SurfaceState(state.t, state.eta + bump, state.psi)
    return SurfaceState(state.t, state.eta, state.psi + bump)


def poisson_tensor_apply(gamma: float, grad: Tuple[SpectralField, SpectralField]):
    """J_γ(a, b) = (b, -a + γ∂_x^{-1}b) with ∂_x^{-1} on the zero-mean part."""
    a, b = grad
    return b, -a + gamma * dx_inv(b - b.mean())


def reverse(state: SurfaceState) -> SurfaceState:
    """S(η, ψ)(x) = (η(-x), -ψ(-x))."""
    return SurfaceState(state.t, state.eta.reflect(), -state.psi.reflect())


# ============================================================================
# Linear theory
# ============================================================================


def _tau(k: float, h: float) -> float:
    return abs(k) * math.tanh(h * abs(k))


def linear_dispersion(k: int, params: PhysicalParams) -> Tuple[float, float]:
    """Roots ω₊ >= ω₋ of ω² - (γτ/k)ω - τ(g + κk²) = 0, τ = |k|tanh(h|k|)."""
    if k == 0:
        raise SpectralError("dispersion relation needs k != 0")
    tau = _tau(k, params.h)
    b = params.gamma * tau / k
    c = tau * (params.g + params.kappa * k**2)
    disc = math.sqrt(b * b + 4.0 * c)
    return 0.5 * (b + disc), 0.5 * (b - disc)


def linear_mode_matrix(k: int, params: PhysicalParams) -> np.ndarray:
    """d/dt (η̂_k, ψ̂_k) of the system linearized at rest."""
    tau = _tau(k, params.h)
    return np.array(
        [[0.0, tau], [-(params.g + params.kappa * k**2), params.gamma * tau / (1j * k)]],
        dtype=complex,
    )


def travelling_mode(grid: PeriodicGrid, k: int, amplitude: float, params: PhysicalParams,
                    branch: int = 0) -> SurfaceState:
    """η = a cos kx, ψ = a(ω/τ) sin kx, a linear wave of frequency ω₊ (branch 0) or ω₋."""
    omega = linear_dispersion(k, params)[branch]
    tau = _tau(k, params.h)
    eta = SpectralField(grid, amplitude * np.cos(k * grid.x))
    psi = SpectralField(grid, amplitude * omega / tau * np.sin(k * grid.x))
    return SurfaceState(0.0, eta, psi)


def measure_mode_frequency(trajectory: Trajectory, k: int) -> float:
    """Frequency of mode k from the unwrapped phase of η̂_k."""
    coeffs = np.array([state.eta.coeffs[k] for state in trajectory.states])
    phase = np.unwrap(np.angle(coeffs))
    slope = np.polyfit(np.asarray(trajectory.t), phase, 1)[0]
    return float(-slope)


# ============================================================================
# Mollified system
# ============================================================================


def mollified_rhs(eps: float, state: SurfaceState, bath: BathymetryProfile, params: PhysicalParams,
                  opts: RhsOptions = None, symbol: str = "flat", cutoff: CutoffParams = None,
                  delta: float = None, ordering: str = "left") -> Tuple[SpectralField, SpectralField]:
    """
    u_t = -T_{V-γη}∂_x J_ε u - L_ε u + f(J_ε η, J_ε ψ), where

        L_ε = [[I,0],[T_B,I]] [[0,-T_λ],[κT_h,0]] diag(T_P J_ε T_p, T_{1/q} J_ε T_q) [[I,0],[-T_B,I]]

    and f collects the remaining (smoothing) parts of the system.
    """
    opts = opts or RhsOptions()
    eta, psi = state.eta, state.psi
    gamma = params.gamma
    delta = default_delta(bath.h, bath.h0) if delta is None else delta

    J = mollifier_symbol(eps, eta, symbol)
    T = lambda a, u: paradiff_apply(a, u, cutoff)
    Tf = lambda b, u: paraproduct(b, u, cutoff)
    mollify = lambda u: T(J, u)

    operator = surface_operator(eta, bath, params, opts)
    B, V = velocity_fields(eta, psi, operator(psi))
    lam = lambda_symbol(eta, delta, bath.h, bath.h0, ordering)
    _, lam0 = lambda_parts(eta, delta, bath.h, bath.h0, ordering)
    h_tab = h_symbol(eta)
    sym = symmetrizer_symbols(eta, params.kappa, lam0)
    P = parametrix_symbol(sym.p_principal, sym.p - sym.p_principal).evaluate()
    p_tab = sym.p.evaluate()
    q_tab = sym.q.evaluate()
    q_inv = (Symbol.monomial(eta.grid, 1.0, 0.0) / sym.q).evaluate()
    transport = V - gamma * eta

    # L_ε u
    omega = psi - Tf(B, eta)
    a1 = T(P, mollify(T(p_tab, eta)))
    a2 = T(q_inv, mollify(T(q_tab, omega)))
    l1 = -T(lam, a2)
    l2 = params.kappa * T(h_tab, a1)
    L_eta, L_psi = l1, l2 + Tf(B, l1)

    # f at the mollified state
    m_eta, m_psi = mollify(eta), mollify(psi)
    m_state = SurfaceState(state.t, m_eta, m_psi)
    m_operator = surface_operator(m_eta, bath, params, opts)
    G = m_operator(m_psi)
    mB, mV = velocity_fields(m_eta, m_psi, G)
    m_eta_x, m_psi_x = dx(m_eta), dx(m_psi)
    m_transport = mV - gamma * m_eta
    m_omega = m_psi - Tf(mB, m_eta)
    advect = G + gamma * m_eta * m_eta_x
    f1 = advect - (T(lam, m_omega) - Tf(mV, m_eta_x)) - Tf(gamma * m_eta, m_eta_x)
    _, psi_t = rhs_from_g(m_state, params, G, opts.rule)
    f2 = (
        psi_t
        + Tf(m_transport, m_psi_x)
        - Tf(mB, Tf(m_transport, m_eta_x))
        - Tf(mB, advect)
        + params.kappa * T(h_tab, m_eta)
    )
    F_eta, F_psi = f1, f2 + Tf(B, f1)

    eta_t = -Tf(transport, dx(mollify(eta))) - L_eta + F_eta
    psi_t = -Tf(transport, dx(mollify(psi))) - L_psi + F_psi
    return eta_t, psi_t
