"""
Dirichlet-Neumann operator family over a variable bottom.

For a potential φ harmonic in {-h + β < y < η} with φ = ψ on top and
φ_x β_x - φ_y = θ on the bottom:

    G^{DN}(η,β)ψ + G^{NN}(η,β)θ = ∇φ·(-η_x, 1)   at y = η,
    G^{DD}(η,β)ψ + G^{ND}(η,β)θ = φ               at y = -h + β,

and the vorticity-modified operator is G(η,β,γ)ψ = G^{DN}ψ + γG^{NN}((-h+β)β_x).
Every operator is read off the collocation oracle; one LU factorization per
surface/bottom pair is shared by all probes.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from vortwave.errors import SolverError
from vortwave.services.elliptic_bvp import (
    FlattenedLaplaceSolver,
    FlattenedPotential,
    trace_bottom_dirichlet,
    trace_top_neumann,
)
from vortwave.services.grid_spectral import (
    SpectralField,
    apply_multiplier,
    dealias,
    dx,
    pairing,
)
from vortwave.services.paradiff import CutoffParams, paraproduct
from vortwave.services.straightening import BathymetryProfile, build_diffeomorphism

logger = logging.getLogger(__name__)


class PhysicalParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    g: float = Field(default=1.0, gt=0)
    h: float = Field(default=1.0, gt=0)
    kappa: float = Field(default=0.0, ge=0)
    gamma: float = 0.0
    h0: float = Field(default=0.5, gt=0)


@dataclass(frozen=True, eq=False)
class OperatorProbe:
    input_kind: str
    input: SpectralField
    output: SpectralField
    which: str


# ============================================================================
# Flat closed forms
# ============================================================================


class FlatMultipliers(NamedTuple):
    dn: Callable[[np.ndarray], np.ndarray]
    nn: Callable[[np.ndarray], np.ndarray]
    dd: Callable[[np.ndarray], np.ndarray]
    nd: Callable[[np.ndarray], np.ndarray]


def flat_multipliers(h: float) -> FlatMultipliers:
    """Symbols of the four operators at η = β = 0."""

    def dn(k):
        k = np.abs(np.asarray(k, dtype=float))
        return k * np.tanh(h * k)

    def dd(k):
        k = np.abs(np.asarray(k, dtype=float))
        return 1.0 / np.cosh(h * k)

    def nn(k):
        return -dd(k)

    def nd(k):
        k = np.abs(np.asarray(k, dtype=float))
        out = np.full(k.shape, float(h))
        nz = k != 0
        out[nz] = np.tanh(h * k[nz]) / k[nz]
        return out

    return FlatMultipliers(dn, nn, dd, nd)


# ============================================================================
# Oracle-backed family
# ============================================================================


class OperatorFamily:
    """The four operators at one (η, β), sharing a factorized oracle."""

    def __init__(self, eta: SpectralField, bath: BathymetryProfile, kind: str = "trivial", delta: float = None,
                 m: int = None):
        self.eta = eta
        self.bath = bath
        self.diffeo = build_diffeomorphism(eta, bath, kind=kind, delta=delta, m=m)
        self.solver = FlattenedLaplaceSolver(self.diffeo)
        self._zero = SpectralField.zeros(eta.grid)

    @property
    def grid(self):
        return self.eta.grid

    def solve(self, psi: SpectralField, theta: SpectralField) -> FlattenedPotential:
        return self.solver.solve(psi, theta)

    def traces(self, pairs) -> List[tuple]:
        """(top Neumann, bottom Dirichlet) for each (ψ, θ) pair."""
        return [(trace_top_neumann(phi, self.eta), trace_bottom_dirichlet(phi)) for phi in self.solver.solve_many(pairs)]

    def dn(self, psi: SpectralField) -> SpectralField:
        return self.traces([(psi, self._zero)])[0][0]

    def dd(self, psi: SpectralField) -> SpectralField:
        return self.traces([(psi, self._zero)])[0][1]

    def nn(self, theta: SpectralField) -> SpectralField:
        return self.traces([(self._zero, theta)])[0][0]

    def nd(self, theta: SpectralField) -> SpectralField:
        return self.traces([(self._zero, theta)])[0][1]

    def full(self, psi: SpectralField, gamma: float) -> SpectralField:
        return self.traces([(psi, self.bath.theta(gamma))])[0][0]

    def bottom(self, psi: SpectralField, gamma: float) -> SpectralField:
        """G^{DD}ψ + G^{ND}θ, the potential along the bottom."""
        return self.traces([(psi, self.bath.theta(gamma))])[0][1]

    def probe(self, which: str, field: SpectralField) -> OperatorProbe:
        ops = {"DN": self.dn, "DD": self.dd, "NN": self.nn, "ND": self.nd}
        if which not in ops:
            raise ValueError(f"unknown operator '{which}', expected one of {sorted(ops)}")
        kind = "dirichlet" if which in ("DN", "DD") else "neumann"
        return OperatorProbe(kind, field, ops[which](field), which)


def _family(eta, bath, family, m):
    return family if family is not None else OperatorFamily(eta, bath, m=m)


def g_dn(eta: SpectralField, bath: BathymetryProfile, psi: SpectralField, m: int = None) -> SpectralField:
    return OperatorFamily(eta, bath, m=m).dn(psi)


def g_nn(eta: SpectralField, bath: BathymetryProfile, theta: SpectralField, m: int = None) -> SpectralField:
    return OperatorFamily(eta, bath, m=m).nn(theta)


def g_dd(eta: SpectralField, bath: BathymetryProfile, psi: SpectralField, m: int = None) -> SpectralField:
    return OperatorFamily(eta, bath, m=m).dd(psi)


def g_nd(eta: SpectralField, bath: BathymetryProfile, theta: SpectralField, m: int = None) -> SpectralField:
    return OperatorFamily(eta, bath, m=m).nd(theta)


def g_full(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams, psi: SpectralField,
           family: OperatorFamily = None, m: int = None) -> SpectralField:
    """G(η,β,γ)ψ = G^{DN}ψ + γG^{NN}((-h+β)β_x)."""
    return _family(eta, bath, family, m).full(psi, params.gamma)


# ============================================================================
# Derived quantities
# ============================================================================


def velocity_fields(eta: SpectralField, psi: SpectralField, G: SpectralField):
    """Surface vertical and horizontal velocities B, V from G."""
    eta_x = dx(eta)
    psi_x = dx(psi)
    B = (G + eta_x * psi_x) / (1.0 + eta_x**2)
    V = psi_x - B * eta_x
    return B, V


def b_v_omega(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams, psi: SpectralField,
              family: OperatorFamily = None, cutoff: CutoffParams = None, m: int = None):
    """(B, V, ω) with ω = ψ - T_B η the good unknown."""
    G = g_full(eta, bath, params, psi, family=family, m=m)
    B, V = velocity_fields(eta, psi, G)
    omega = psi - paraproduct(B, eta, cutoff)
    return B, V, omega


def invert_good_unknown(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams, omega: SpectralField,
                        family: OperatorFamily = None, cutoff: CutoffParams = None, tol: float = 1e-12,
                        max_iter: int = 100, m: int = None) -> SpectralField:
    """Recover ψ from ω by the fixed point ψ <- ω + T_{B(ψ)}η."""
    family = _family(eta, bath, family, m)
    scale = max(1.0, omega.max_abs())
    psi = omega
    for it in range(max_iter):
        B, _ = velocity_fields(eta, psi, family.full(psi, params.gamma))
        update = omega + paraproduct(B, eta, cutoff)
        change = (update - psi).max_abs()
        psi = update
        if change <= tol * scale:
            logger.debug(f"good unknown inverted in {it + 1} iterations")
            return psi
    raise SolverError(f"good-unknown inversion did not converge in {max_iter} iterations (last change {change:.3e})")


# ============================================================================
# Shape derivatives
# ============================================================================


def shape_derivative_eta(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams, psi: SpectralField,
                         d_eta: SpectralField, family: OperatorFamily = None, m: int = None) -> SpectralField:
    """∂_η G(δη)ψ = -G^{DN}(δη·B) - ∂_x(δη·V) at fixed θ."""
    family = _family(eta, bath, family, m)
    B, V = velocity_fields(eta, psi, family.full(psi, params.gamma))
    return -family.dn(d_eta * B) - dx(d_eta * V)


def bottom_velocities(family: OperatorFamily, psi: SpectralField, gamma: float):
    """(w, W_b): horizontal and vertical velocity along the bottom."""
    bath = family.bath
    theta = bath.theta(gamma)
    phi_b_x = dx(family.bottom(psi, gamma))
    beta_x = bath.beta_x
    W_b = (beta_x * phi_b_x - theta) / (1.0 + beta_x**2)
    w = phi_b_x - W_b * beta_x
    return w, W_b


def shape_derivative_beta(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams, psi: SpectralField,
                          d_beta: SpectralField, family: OperatorFamily = None, m: int = None) -> SpectralField:
    """
    Derivative of β ↦ G(η,β,γ)ψ, θ = γ(-h+β)β_x included:

        -G^{NN}[∂_x(δβ·w)] + G^{NN}[γ(δβ·β_x + (-h+β)∂_xδβ)].
    """
    family = _family(eta, bath, family, m)
    gamma = params.gamma
    w, _ = bottom_velocities(family, psi, gamma)
    d_theta = gamma * (d_beta * bath.beta_x + (bath.beta - bath.h) * dx(d_beta))
    return family.nn(d_theta - dx(d_beta * w))


def bottom_trace_shape_derivative_eta(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams,
                                      psi: SpectralField, d_eta: SpectralField, family: OperatorFamily = None,
                                      m: int = None) -> SpectralField:
    """∂_η(G^{DD}ψ + G^{ND}θ)(δη) = -G^{DD}(δη·B) at fixed θ."""
    family = _family(eta, bath, family, m)
    B, _ = velocity_fields(eta, psi, family.full(psi, params.gamma))
    return -family.dd(d_eta * B)


def bottom_trace_shape_derivative_beta(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams,
                                       psi: SpectralField, d_beta: SpectralField, family: OperatorFamily = None,
                                       m: int = None) -> SpectralField:
    """∂_β(G^{DD}ψ + G^{ND}θ)(δβ) = δβ·W_b - G^{ND}[∂_x(δβ·w)] at fixed θ."""
    family = _family(eta, bath, family, m)
    w, W_b = bottom_velocities(family, psi, params.gamma)
    return d_beta * W_b - family.nd(dx(d_beta * w))


# ============================================================================
# Homogeneous expansion
# ============================================================================


def expansion_terms(base_dn: Callable[[SpectralField], SpectralField], eta: SpectralField, f: SpectralField,
                    order: int, g0: SpectralField = None, rule: float = None) -> List[SpectralField]:
    """
    Terms g_0..g_order of ε ↦ G(εη)f from the amplitude equation

        d/dε G(εη)f = -G^{DN}(εη)(η·B(εη)) - ∂_x(η·V(εη)),

    matching powers of ε in B(1 + ε²η_x²) = G + εη_x f_x and V = f_x - εBη_x.
    """
    clean = (lambda u: dealias(u, rule)) if rule is not None else (lambda u: u)
    eta_x = dx(eta)
    f_x = dx(f)
    g = [clean(base_dn(f)) if g0 is None else g0]
    b: List[SpectralField] = []
    a: List[List[SpectralField]] = []
    for j in range(order):
        bj = g[j]
        if j == 1:
            bj = bj + clean(eta_x * f_x)
        if j >= 2:
            bj = bj - clean(eta_x**2 * b[j - 2])
        b.append(bj)
        vj = f_x if j == 0 else -clean(eta_x * b[j - 1])
        a.append(expansion_terms(base_dn, eta, clean(eta * bj), order - 1 - j, rule=rule))
        total = dx(clean(eta * vj))
        for l in range(j + 1):
            total = total + a[l][j - l]
        g.append(-total / (j + 1))
    return g


def tail_ratio(terms: List[SpectralField]) -> float:
    if len(terms) < 2:
        return 0.0
    prev = terms[-2].max_abs()
    return terms[-1].max_abs() / prev if prev > 0 else 0.0


def taylor_expand_g(eta: SpectralField, bath: BathymetryProfile, params: PhysicalParams, psi: SpectralField,
                    order: int, m: int = None) -> List[SpectralField]:
    """Homogeneous terms G_0ψ..G_Jψ of G(εη,β,γ)ψ in the surface amplitude."""
    flat_surface = OperatorFamily(SpectralField.zeros(eta.grid), bath, m=m)
    terms = expansion_terms(flat_surface.dn, eta, psi, order, g0=flat_surface.full(psi, params.gamma))
    ratio = tail_ratio(terms)
    if order >= 2 and ratio >= 0.5:
        logger.warning(f"⚠️ Taylor tail ratio {ratio:.3f} >= 1/2; expansion may diverge")
    return terms


class FlatSeriesOperator:
    """Flat-bottom G^{DN}(η) summed from the homogeneous expansion; FFT only."""

    def __init__(self, eta: SpectralField, h: float, order: int = 6, rule: Optional[float] = None):
        self.eta = eta
        self.h = h
        self.order = order
        self.rule = rule
        self._g0 = flat_multipliers(h).dn

    def base(self, f: SpectralField) -> SpectralField:
        return apply_multiplier(f, self._g0)

    def terms(self, psi: SpectralField) -> List[SpectralField]:
        return expansion_terms(self.base, self.eta, psi, self.order, rule=self.rule)

    def __call__(self, psi: SpectralField) -> SpectralField:
        terms = self.terms(psi)
        total = terms[0]
        for term in terms[1:]:
            total = total + term
        return total


def craig_sulem_terms(eta: SpectralField, h: float, psi: SpectralField) -> List[SpectralField]:
    """G_0, G_1, G_2 of the classical expansion with D = -i∂_x."""
    G0 = lambda u: apply_multiplier(u, flat_multipliers(h).dn)
    D2 = lambda u: -dx(dx(u))
    g0 = G0(psi)
    g1 = -dx(eta * dx(psi)) - G0(eta * g0)
    g2 = -0.5 * (D2(eta**2 * g0) + G0(eta**2 * D2(psi)) - 2.0 * G0(eta * G0(eta * g0)))
    return [g0, g1, g2]


# ============================================================================
# Adjoint identities
# ============================================================================


def adjoint_defect(eta: SpectralField, bath: BathymetryProfile, psi1: SpectralField, psi2: SpectralField,
                   theta1: SpectralField, theta2: SpectralField, family: OperatorFamily = None,
                   m: int = None) -> Dict[str, float]:
    """Pairing defects of G^{DN}, G^{ND} self-adjointness and G^{NN} = -(G^{DD})*."""
    family = _family(eta, bath, family, m)
    zero = SpectralField.zeros(eta.grid)
    (dn1, dd1), (dn2, _), (nn1, nd1), (_, nd2) = family.traces(
        [(psi1, zero), (psi2, zero), (zero, theta1), (zero, theta2)]
    )
    return {
        "dn": abs(pairing(dn1, psi2) - pairing(psi1, dn2)),
        "nd": abs(pairing(nd1, theta2) - pairing(theta1, nd2)),
        "nn_dd": abs(pairing(nn1, psi1) + pairing(theta1, dd1)),
    }
