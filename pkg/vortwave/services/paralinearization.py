"""
Numerical checks of the paralinearized and symmetrized water-wave system.

With B, V the surface velocities and ω = ψ - T_Bη the good unknown,

    G(η,β,γ)ψ = T_λω - T_Vη_x + R(η,ψ),

and the evolution paralinearizes as

    η_t + T_{V-γη}η_x - T_λω = f,
    ω_t + T_{V-γη}ω_x + κT_hη = g,

while Φ₁ = T_pη, Φ₂ = T_qω satisfy

    ∂_tΦ₁ + T_{V-γη}∂_xΦ₁ - T_ϑΦ₂ = F₁,
    ∂_tΦ₂ + T_{V-γη}∂_xΦ₂ + T_ϑΦ₁ = F₂.

Time derivatives come from the evolution right-hand side; derivatives of B and
of the symbols along the flow use central differences.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from vortwave.services.dno_family import PhysicalParams, velocity_fields
from vortwave.services.evolution import RhsOptions, SurfaceState, rhs_from_g, surface_operator
from vortwave.services.grid_spectral import SpectralField, apply_multiplier, dx, dx_inv, sobolev_norm
from vortwave.services.paradiff import (
    CutoffParams,
    default_delta,
    h_symbol,
    lambda_parts,
    lambda_symbol,
    paradiff_apply,
    paraproduct,
    symmetrizer_symbols,
)
from vortwave.services.straightening import BathymetryProfile

logger = logging.getLogger(__name__)


def _delta(bath: BathymetryProfile, delta: Optional[float]) -> float:
    return default_delta(bath.h, bath.h0) if delta is None else delta


def paralinearize_g(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams, psi: SpectralField,
                    opts: RhsOptions = None, delta: float = None, cutoff: CutoffParams = None,
                    ordering: str = "left", operator=None) -> Tuple[SpectralField, SpectralField]:
    """(T_λω - T_Vη_x, G - principal). `operator` reuses an already factorized ψ -> G(η,β,γ)ψ."""
    opts = opts or RhsOptions()
    G = (operator or surface_operator(eta, bath, params, opts))(psi)
    B, V = velocity_fields(eta, psi, G)
    omega = psi - paraproduct(B, eta, cutoff)
    lam = lambda_symbol(eta, _delta(bath, delta), bath.h, bath.h0, ordering)
    principal = paradiff_apply(lam, omega, cutoff) - paraproduct(V, dx(eta), cutoff)
    return principal, G - principal


@dataclass(frozen=True, eq=False)
class ParalinResiduals:
    f: SpectralField
    g: SpectralField
    f_lin: SpectralField
    g_lin: SpectralField
    F1: Optional[SpectralField] = None
    F2: Optional[SpectralField] = None
    F1_lin: Optional[SpectralField] = None

    def nonlinear(self) -> Dict[str, float]:
        """Max-norms of the residuals once their linear smoothing parts are removed."""
        out = {"f": (self.f - self.f_lin).max_abs(), "g": (self.g - self.g_lin).max_abs()}
        if self.F1 is not None:
            out["F1"] = (self.F1 - self.F1_lin).max_abs()
            out["F2"] = (self.F2 - self.g_lin).max_abs()
        return out


def _linear_parts(state: SurfaceState, bath: BathymetryProfile, params: PhysicalParams, opts: RhsOptions):
    """(G(0,β,γ) - |D|)ψ and -gη + γ∂_x^{-1}(G(0,β,γ)ψ) left in the residuals at first order."""
    flat = SpectralField.zeros(state.grid)
    G0 = surface_operator(flat, bath, params, opts)(state.psi)
    f_lin = G0 - apply_multiplier(state.psi, np.abs)
    g_lin = -params.g * state.eta + params.gamma * dx_inv(G0 - G0.mean())
    return f_lin, g_lin


def paralin_system_residuals(state: SurfaceState, bath: BathymetryProfile, params: PhysicalParams,
                             opts: RhsOptions = None, delta: float = None, cutoff: CutoffParams = None,
                             ordering: str = "left", fd_eps: float = 1e-6) -> ParalinResiduals:
    opts = opts or RhsOptions()
    eta, psi = state.eta, state.psi
    delta = _delta(bath, delta)
    T = lambda a, u: paradiff_apply(a, u, cutoff)
    Tf = lambda b, u: paraproduct(b, u, cutoff)

    G = surface_operator(eta, bath, params, opts)(psi)
    eta_t, psi_t = rhs_from_g(state, params, G, opts.rule)
    B, V = velocity_fields(eta, psi, G)
    transport = V - params.gamma * eta

    def along_flow(s: float) -> SurfaceState:
        return SurfaceState(state.t + s, eta + s * eta_t, psi + s * psi_t)

    def B_at(s: SurfaceState) -> SpectralField:
        return velocity_fields(s.eta, s.psi, surface_operator(s.eta, bath, params, opts)(s.psi))[0]

    B_t = (B_at(along_flow(fd_eps)) - B_at(along_flow(-fd_eps))) / (2.0 * fd_eps)

    omega = psi - Tf(B, eta)
    omega_t = psi_t - Tf(B, eta_t) - Tf(B_t, eta)
    lam = lambda_symbol(eta, delta, bath.h, bath.h0, ordering)
    h_tab = h_symbol(eta)

    f = eta_t + Tf(transport, dx(eta)) - T(lam, omega)
    g = omega_t + Tf(transport, dx(omega)) + params.kappa * T(h_tab, eta)
    f_lin, g_lin = _linear_parts(state, bath, params, opts)

    if not params.kappa > 0:
        return ParalinResiduals(f, g, f_lin, g_lin)

    def unknowns(s: SurfaceState):
        B_s = B_at(s)
        _, lam0 = lambda_parts(s.eta, delta, bath.h, bath.h0, ordering)
        sym = symmetrizer_symbols(s.eta, params.kappa, lam0)
        phi1 = T(sym.p.evaluate(), s.eta)
        phi2 = T(sym.q.evaluate(), s.psi - Tf(B_s, s.eta))
        return phi1, phi2, sym

    phi1, phi2, sym = unknowns(state)
    plus1, plus2, _ = unknowns(along_flow(fd_eps))
    minus1, minus2, _ = unknowns(along_flow(-fd_eps))
    theta = sym.theta.evaluate()
    F1 = (plus1 - minus1) / (2.0 * fd_eps) + Tf(transport, dx(phi1)) - T(theta, phi2)
    F2 = (plus2 - minus2) / (2.0 * fd_eps) + Tf(transport, dx(phi2)) + T(theta, phi1)
    rk = math.sqrt(params.kappa)
    F1_lin = apply_multiplier(f_lin, lambda k: rk * np.sqrt(np.abs(k)))
    return ParalinResiduals(f, g, f_lin, g_lin, F1, F2, F1_lin)


def amplitude_slopes(eta: SpectralField, psi: SpectralField, bath: BathymetryProfile, params: PhysicalParams,
                     amplitudes: Iterable[float], opts: RhsOptions = None,
                     cutoff: CutoffParams = None) -> Dict[str, float]:
    """Fitted log-log slope of each nonlinear residual under (η, ψ) -> a(η, ψ)."""
    amplitudes = list(amplitudes)
    sizes: Dict[str, List[float]] = {}
    for a in amplitudes:
        residuals = paralin_system_residuals(SurfaceState(0.0, a * eta, a * psi), bath, params, opts, cutoff=cutoff)
        for name, value in residuals.nonlinear().items():
            sizes.setdefault(name, []).append(value)
    slopes = {}
    for name, values in sizes.items():
        slopes[name] = float(np.polyfit(np.log(amplitudes), np.log(values), 1)[0])
        logger.info(f"📊 residual {name}: slope {slopes[name]:.3f}")
    return slopes


def smoothing_ratios(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams, modes: Iterable[int],
                     s: float = 3.0, opts: RhsOptions = None, cutoff: CutoffParams = None):
    """
    For probes ψ_N = cos(Nx): (N, ‖R ψ_N‖_{H^{s+1/2}}/‖ψ_N‖_{H^s}, ‖Gψ_N‖_{H^{s+1/2}}/‖ψ_N‖_{H^s}).
    """
    grid = eta.grid
    operator = surface_operator(eta, bath, params, opts or RhsOptions())
    rows = []
    for N in modes:
        probe = SpectralField(grid, np.cos(N * grid.x))
        principal, remainder = paralinearize_g(eta, bath, params, probe, opts, cutoff=cutoff, operator=operator)
        base = sobolev_norm(probe, s)
        rows.append((int(N), sobolev_norm(remainder, s + 0.5) / base, sobolev_norm(principal + remainder, s + 0.5) / base))
    return rows
