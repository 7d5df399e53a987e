"""
Straightening of the fluid domain onto the fixed strip D0 = T x (-h, 0).

The fluid region {-h + β(x) < y < η(x)} is the image of D0 under
Σ(x, w) = (x, w + σ(x, w)) with σ(·, 0) = η and σ(·, -h) = β. Two families are
provided: the trivial (affine in w) map and the regularizing map, which
smooths η and β with a compactly supported Fourier multiplier whose width grows
away from the respective boundary.

All tensor fields live on the n x m grid, axis 0 horizontal, axis 1 vertical.
"""
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Dict, Optional

import numpy as np

from vortwave.config import get_settings
from vortwave.errors import ConfigError, DiffeomorphismError, StrictConnectednessError
from vortwave.services.grid_spectral import (
    PeriodicGrid,
    SpectralField,
    VerticalGrid,
    cheb_apply,
    dx,
    dx_tensor,
)

logger = logging.getLogger(__name__)


# ============================================================================
# Bathymetry
# ============================================================================


@dataclass(frozen=True, eq=False)
class BathymetryProfile:
    beta: SpectralField
    h: float
    h0: float

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError(f"depth h must be positive, got {self.h}")
        if not self.h0 > 0:
            raise ConfigError(f"strict-connectedness margin h0 must be positive, got {self.h0}")
        tail = self.tail_fraction()
        if tail > 1e-20:
            logger.warning(f"⚠️ Bathymetry carries {tail:.2e} of its energy above n/3; beta_x may be under-resolved")

    @classmethod
    def flat(cls, grid: PeriodicGrid, h: float, h0: float) -> "BathymetryProfile":
        return cls(SpectralField.zeros(grid), h, h0)

    @property
    def grid(self) -> PeriodicGrid:
        return self.beta.grid

    @cached_property
    def beta_x(self) -> SpectralField:
        return dx(self.beta)

    @property
    def is_flat(self) -> bool:
        return self.beta.is_zero()

    def tail_fraction(self) -> float:
        energy = np.abs(self.beta.coeffs) ** 2
        total = float(np.sum(energy))
        if total == 0.0:
            return 0.0
        high = np.abs(self.grid.wavenumbers) > self.grid.n / 3
        return float(np.sum(energy[high]) / total)

    def theta(self, gamma: float) -> SpectralField:
        """Bottom flux datum γ(-h + β)β_x carried by the Couette part of the flow."""
        return gamma * (self.beta - self.h) * self.beta_x


def connectedness_margin(eta: SpectralField, bath: BathymetryProfile):
    """Return (node, gap) where h - β + η is smallest."""
    gap = bath.h - bath.beta.values + eta.values
    node = int(np.argmin(gap))
    return node, float(gap[node])


def check_strict_connectedness(eta: SpectralField, bath: BathymetryProfile, h0: float = None) -> float:
    h0 = bath.h0 if h0 is None else h0
    node, gap = connectedness_margin(eta, bath)
    if gap < h0:
        raise StrictConnectednessError(node, gap, h0)
    return gap


# ============================================================================
# Smoothing bumps
# ============================================================================


def exp_bump(r):
    """exp(1 - 1/(1 - r²)) on |r| < 1, zero elsewhere; χ(0) = 1."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


BUMPS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {"exp": exp_bump}


@lru_cache(maxsize=None)
def bump_slope_bound(chi_id: str) -> float:
    chi = _bump(chi_id)
    r = np.linspace(-1.0, 1.0, 40001)
    slope = np.gradient(chi(r), r)
    return float(np.max(np.abs(slope)))


def _bump(chi_id: str):
    try:
        return BUMPS[chi_id]
    except KeyError:
        raise ConfigError(f"unknown bump '{chi_id}', expected one of {sorted(BUMPS)}")


# ============================================================================
# Diffeomorphism
# ============================================================================


@dataclass(frozen=True, eq=False)
class Diffeomorphism:
    kind: str
    eta: SpectralField
    bath: BathymetryProfile
    vgrid: VerticalGrid
    sigma: np.ndarray
    delta: Optional[float] = None
    chi_id: Optional[str] = None

    def __post_init__(self):
        self.sigma.setflags(write=False)

    @property
    def grid(self) -> PeriodicGrid:
        return self.eta.grid

    @property
    def shape(self):
        return self.sigma.shape

    @cached_property
    def sigma_x(self) -> np.ndarray:
        return dx_tensor(self.grid, self.sigma)

    @cached_property
    def sigma_w(self) -> np.ndarray:
        return cheb_apply(self.vgrid.D, self.sigma)

    @cached_property
    def sigma_xx(self) -> np.ndarray:
        return dx_tensor(self.grid, self.sigma, order=2)

    @cached_property
    def sigma_xw(self) -> np.ndarray:
        return cheb_apply(self.vgrid.D, self.sigma_x)

    @cached_property
    def sigma_ww(self) -> np.ndarray:
        return cheb_apply(self.vgrid.D2, self.sigma)

    @cached_property
    def jacobian(self) -> np.ndarray:
        """det J_Σ = 1 + ∂_wσ."""
        return 1.0 + self.sigma_w

    @property
    def c0(self) -> float:
        return float(np.min(self.jacobian))

    @property
    def m0(self) -> float:
        """Bound on the entries of J_Σ and its inverse."""
        J = self.jacobian
        direct = max(1.0, float(np.max(np.abs(self.sigma_x))), float(np.max(np.abs(J))))
        inverse = max(float(np.max(np.abs(self.sigma_x / J))), float(np.max(np.abs(1.0 / J))))
        return max(direct, inverse)

    def boundary_defect(self):
        top = float(np.max(np.abs(self.sigma[:, 0] - self.eta.values)))
        bottom = float(np.max(np.abs(self.sigma[:, -1] - self.bath.beta.values)))
        return top, bottom


def _vertical_grid(bath: BathymetryProfile, m: Optional[int]) -> VerticalGrid:
    return VerticalGrid(m if m is not None else get_settings().VORTWAVE_DEFAULT_M, bath.h)


def build_trivial(eta: SpectralField, bath: BathymetryProfile, m: int = None) -> Diffeomorphism:
    """σ = (1 + w/h)η - (w/h)β."""
    check_strict_connectedness(eta, bath)
    vgrid = _vertical_grid(bath, m)
    s = vgrid.w / bath.h
    sigma = np.outer(eta.values, 1.0 + s) - np.outer(bath.beta.values, s)
    sigma[:, 0] = eta.values
    sigma[:, -1] = bath.beta.values
    d = Diffeomorphism("trivial", eta, bath, vgrid, sigma)
    logger.debug(f"trivial diffeomorphism on {d.shape}, c0={d.c0:.4g}")
    return d


def admissible_delta(eta: SpectralField, bath: BathymetryProfile, chi_id: str = "exp") -> float:
    """Largest δ for which the a priori lower bound on 1 + ∂_wσ stays positive."""
    k = np.abs(eta.grid.wavenumbers)
    W = float(np.sum(k * (np.abs(eta.coeffs) + np.abs(bath.beta.coeffs))))
    if W == 0.0:
        return np.inf
    return bath.h0 / (2.0 * bath.h * bump_slope_bound(chi_id) * W)


def build_regularizing(eta: SpectralField, bath: BathymetryProfile, delta: float, chi_id: str = "exp",
                       m: int = None) -> Diffeomorphism:
    """σ = (1 + w/h)χ(δw|D|)η - (w/h)χ(δ(w+h)|D|)β."""
    check_strict_connectedness(eta, bath)
    if not delta > 0:
        raise ConfigError(f"regularizing parameter delta must be positive, got {delta}")
    chi = _bump(chi_id)
    delta_max = admissible_delta(eta, bath, chi_id)
    c0_bound = bath.h0 / bath.h * (1.0 - delta / delta_max) if np.isfinite(delta_max) else bath.h0 / bath.h
    if c0_bound <= 0:
        raise DiffeomorphismError(delta, delta_max, c0_bound)

    vgrid = _vertical_grid(bath, m)
    n = eta.grid.n
    k = np.abs(eta.grid.wavenumbers)[:, None]
    s = vgrid.w / bath.h
    eta_levels = np.fft.ifft(eta.coeffs[:, None] * chi(delta * k * vgrid.w[None, :]) * n, axis=0).real
    beta_levels = np.fft.ifft(bath.beta.coeffs[:, None] * chi(delta * k * (vgrid.w[None, :] + bath.h)) * n, axis=0).real
    sigma = (1.0 + s)[None, :] * eta_levels - s[None, :] * beta_levels
    sigma[:, 0] = eta.values
    sigma[:, -1] = bath.beta.values

    d = Diffeomorphism("regularizing", eta, bath, vgrid, sigma, delta=delta, chi_id=chi_id)
    if d.c0 <= 0:
        raise DiffeomorphismError(delta, delta_max, d.c0)
    logger.debug(f"regularizing diffeomorphism delta={delta:.3g} on {d.shape}, c0={d.c0:.4g}")
    return d


def build_diffeomorphism(eta: SpectralField, bath: BathymetryProfile, kind: str = "trivial", delta: float = None,
                         chi_id: str = "exp", m: int = None) -> Diffeomorphism:
    if kind == "trivial":
        return build_trivial(eta, bath, m=m)
    if kind == "regularizing":
        return build_regularizing(eta, bath, delta, chi_id=chi_id, m=m)
    raise ConfigError(f"unknown diffeomorphism kind '{kind}'")


# ============================================================================
# Flattened operator coefficients
# ============================================================================


@dataclass(frozen=True, eq=False)
class FlatteningCoeffs:
    """Δ^Σ = ∂_x² + a∂_w² + b∂_x∂_w - c∂_w and P(Σ) with det P = 1."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p11: np.ndarray
    p12: np.ndarray
    p22: np.ndarray


def flatten_coeffs(d: Diffeomorphism) -> FlatteningCoeffs:
    J = d.jacobian
    sx = d.sigma_x
    a = (1.0 + sx**2) / J**2
    b = -2.0 * sx / J
    c = (d.sigma_xx + b * d.sigma_xw + a * d.sigma_ww) / J
    return FlatteningCoeffs(a=a, b=b, c=c, p11=J.copy(), p12=-sx, p22=(1.0 + sx**2) / J)


def apply_flat_laplacian(d: Diffeomorphism, coeffs: FlatteningCoeffs, phi: np.ndarray) -> np.ndarray:
    phi_x = dx_tensor(d.grid, phi)
    phi_xx = dx_tensor(d.grid, phi, order=2)
    phi_w = cheb_apply(d.vgrid.D, phi)
    phi_ww = cheb_apply(d.vgrid.D2, phi)
    phi_xw = cheb_apply(d.vgrid.D, phi_x)
    return phi_xx + coeffs.a * phi_ww + coeffs.b * phi_xw - coeffs.c * phi_w


def apply_divergence_form(d: Diffeomorphism, coeffs: FlatteningCoeffs, phi: np.ndarray) -> np.ndarray:
    """(1 + ∂_wσ)^{-1} ∇·P(Σ)∇φ."""
    phi_x = dx_tensor(d.grid, phi)
    phi_w = cheb_apply(d.vgrid.D, phi)
    flux_x = coeffs.p11 * phi_x + coeffs.p12 * phi_w
    flux_w = coeffs.p12 * phi_x + coeffs.p22 * phi_w
    return (dx_tensor(d.grid, flux_x) + cheb_apply(d.vgrid.D, flux_w)) / d.jacobian


def gradient_sigma(d: Diffeomorphism, phi: np.ndarray):
    """(∂_x^Σ φ, ∂_w^Σ φ) = (∂_xφ - (σ_x/J)∂_wφ, ∂_wφ/J)."""
    phi_x = dx_tensor(d.grid, phi)
    phi_w = cheb_apply(d.vgrid.D, phi)
    return phi_x - d.sigma_x / d.jacobian * phi_w, phi_w / d.jacobian
