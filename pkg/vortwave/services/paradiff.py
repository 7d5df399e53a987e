"""
Paradifferential calculus on the periodic grid.

A symbol a(x, ξ) is tabulated at nodes x_j and at every retained frequency k
(FFT order). Its quantization acts on Fourier coefficients as

    (T_a u)^(ξ) = Σ_k χ(ξ - k, k) â(ξ - k, k) û(k),

where â(ν, k) is the x-transform of the column a(·, k). Output frequencies
outside the retained band are dropped. χ(0, 0) = 1 and χ(ν, 0) = 0 for ν ≠ 0,
so T_1 = Id and a constant input only sees the mean of a.

Water-wave symbols are sums of monomials c(x)·sgn(ξ)^o·|ξ|^p. Keeping that
structure makes ∂_ξ exact and the composition a#b a finite sum; the
mollifier, which is not of this form, is tabulated directly.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from vortwave.config import get_settings
from vortwave.errors import SpectralError
from vortwave.services.grid_spectral import PeriodicGrid, SpectralField, dx

logger = logging.getLogger(__name__)


# ============================================================================
# Cutoff
# ============================================================================


class CutoffParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    eps1: float = Field(default_factory=lambda: get_settings().VORTWAVE_CUTOFF_EPS1, gt=0, lt=1)
    eps2: float = Field(default_factory=lambda: get_settings().VORTWAVE_CUTOFF_EPS2, gt=0, lt=1)
    profile: Literal["smoothstep"] = "smoothstep"

    @model_validator(mode="after")
    def _ordered(self):
        if not self.eps1 < self.eps2:
            raise ValueError(f"cutoff needs eps1 < eps2, got {self.eps1} >= {self.eps2}")
        return self


def smoothstep(r):
    r = np.clip(r, 0.0, 1.0)
    return r**3 * (10.0 - 15.0 * r + 6.0 * r**2)


def cutoff(xi1, xi2, c: CutoffParams) -> np.ndarray:
    """χ(ξ1, ξ2): 1 for |ξ1| <= eps1|ξ2|, 0 for |ξ1| >= eps2|ξ2|."""
    a1 = np.abs(np.asarray(xi1, dtype=float))
    a2 = np.abs(np.asarray(xi2, dtype=float))
    a1, a2 = np.broadcast_arrays(a1, a2)
    out = np.zeros(a1.shape)
    live = a2 > 0
    r = (a1[live] / a2[live] - c.eps1) / (c.eps2 - c.eps1)
    out[live] = 1.0 - smoothstep(r)
    out[(a2 == 0) & (a1 == 0)] = 1.0
    return out


@lru_cache(maxsize=32)
def _quantization_layout(n: int, eps1: float, eps2: float):
    k = PeriodicGrid(n).wavenumbers
    nu = k[:, None]
    col = k[None, :]
    xi = nu + col
    valid = (xi > -n / 2) & (xi <= n / 2)
    weight = cutoff(nu, col, CutoffParams(eps1=eps1, eps2=eps2))
    valid &= weight > 0
    rows = (xi % n).astype(int)
    cols = np.broadcast_to(np.arange(n)[None, :], (n, n))
    return rows[valid], cols[valid], weight[valid], valid


# ============================================================================
# Tabulated symbols
# ============================================================================


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    """a(x_j, ξ_k) with declared order; columns in FFT frequency order."""

    grid: PeriodicGrid
    order: float
    values: np.ndarray
    homogeneous_parts: Tuple[Tuple[float, np.ndarray], ...] = ()
    real_quantizing: bool = True

    def __post_init__(self):
        n = self.grid.n
        values = np.array(self.values, dtype=complex)
        if values.shape != (n, n):
            raise SpectralError(f"symbol table must be {n}x{n}, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.real_quantizing:
            pos = values[:, 1 : n // 2]
            neg = values[:, -1 : -(n // 2) : -1]
            scale = max(1.0, float(np.max(np.abs(values))))
            defect = float(np.max(np.abs(pos - np.conj(neg)))) if pos.size else 0.0
            if defect > 1e-10 * scale:
                raise SpectralError(f"symbol flagged real-quantizing violates a(x,-ξ) = conj a(x,ξ) by {defect:.3e}")

    def part(self, degree: float) -> np.ndarray:
        for d, table in self.homogeneous_parts:
            if d == degree:
                return table
        return np.zeros_like(self.values)


def quantization_matrix(a: SymbolGrid, c: CutoffParams = None) -> np.ndarray:
    """Matrix of T_a acting on Fourier coefficients."""
    c = CutoffParams() if c is None else c
    n = a.grid.n
    ahat = np.fft.fft(a.values, axis=0) / n
    rows, cols, weight, valid = _quantization_layout(n, c.eps1, c.eps2)
    M = np.zeros((n, n), dtype=complex)
    np.add.at(M, (rows, cols), weight * ahat[valid])
    return M


def paradiff_values(a: SymbolGrid, u: SpectralField, c: CutoffParams = None) -> np.ndarray:
    """Complex nodal values of T_a u, before the real part is taken."""
    coeffs = quantization_matrix(a, c) @ u.coeffs
    return np.fft.ifft(coeffs * u.grid.n)


def paradiff_apply(a: SymbolGrid, u: SpectralField, c: CutoffParams = None) -> SpectralField:
    values = paradiff_values(a, u, c)
    if a.real_quantizing:
        imag = float(np.max(np.abs(values.imag)))
        if imag > 1e-10 * max(1.0, float(np.max(np.abs(values.real)))):
            logger.warning(f"⚠️ paradifferential output carries imaginary part {imag:.2e}")
    return SpectralField(u.grid, values.real)


# ============================================================================
# Monomial symbols
# ============================================================================


def _mono(k: np.ndarray, power: float, odd: bool) -> np.ndarray:
    out = np.zeros_like(k, dtype=float)
    nz = k != 0
    out[nz] = np.abs(k[nz]) ** power
    if odd:
        out[nz] *= np.sign(k[nz])
    elif power == 0:
        out[~nz] = 1.0
    return out


def _dx_complex(grid: PeriodicGrid, c: np.ndarray) -> np.ndarray:
    k = grid.wavenumbers.copy()
    k[grid.n // 2] = 0.0
    return np.fft.ifft(1j * k * np.fft.fft(c))


@dataclass(frozen=True, eq=False)
class Symbol:
    """Σ c(x)·sgn(ξ)^o·|ξ|^p; terms are (coefficient, power, odd)."""

    grid: PeriodicGrid
    terms: Tuple[Tuple[np.ndarray, float, bool], ...]

    @classmethod
    def monomial(cls, grid: PeriodicGrid, coeff, power: float, odd: bool = False) -> "Symbol":
        coeff = np.broadcast_to(np.asarray(coeff, dtype=complex), (grid.n,)).copy()
        return cls(grid, ((coeff, float(power), bool(odd)),))

    @classmethod
    def function(cls, f: SpectralField) -> "Symbol":
        return cls.monomial(f.grid, f.values, 0.0)

    @classmethod
    def zero(cls, grid: PeriodicGrid) -> "Symbol":
        return cls(grid, ())

    @staticmethod
    def _merge(terms) -> tuple:
        merged = {}
        for coeff, power, odd in terms:
            key = (power, odd)
            merged[key] = merged[key] + coeff if key in merged else np.array(coeff, dtype=complex)
        return tuple((coeff, power, odd) for (power, odd), coeff in sorted(merged.items(), reverse=True))

    @property
    def order(self) -> float:
        live = [p for c, p, _ in self.terms if np.any(c != 0)]
        return max(live) if live else -np.inf

    def _coerce(self, other):
        if isinstance(other, Symbol):
            return other
        if isinstance(other, SpectralField):
            return Symbol.function(other)
        return Symbol.monomial(self.grid, other, 0.0)

    def __add__(self, other):
        other = self._coerce(other)
        return Symbol(self.grid, self._merge(self.terms + other.terms))

    __radd__ = __add__

    def __neg__(self):
        return Symbol(self.grid, tuple((-c, p, o) for c, p, o in self.terms))

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        terms = [(c1 * c2, p1 + p2, o1 != o2) for c1, p1, o1 in self.terms for c2, p2, o2 in other.terms]
        return Symbol(self.grid, self._merge(terms))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if len(other.terms) != 1:
            raise SpectralError("symbols can only be divided by a single monomial")
        c, p, o = other.terms[0]
        return self * Symbol(self.grid, ((1.0 / c, -p, o),))

    def dx(self) -> "Symbol":
        return Symbol(self.grid, tuple((_dx_complex(self.grid, c), p, o) for c, p, o in self.terms))

    def dxi(self) -> "Symbol":
        # ∂_ξ |ξ|^p = p sgn|ξ|^{p-1}; ∂_ξ sgn|ξ|^p = p|ξ|^{p-1} away from ξ = 0
        return Symbol(self.grid, self._merge((p * c, p - 1.0, not o) for c, p, o in self.terms if p != 0))

    def part(self, power: float) -> "Symbol":
        return Symbol(self.grid, tuple(t for t in self.terms if t[1] == power))

    def evaluate(self, real_quantizing: bool = True) -> SymbolGrid:
        k = self.grid.wavenumbers
        total = np.zeros((self.grid.n, self.grid.n), dtype=complex)
        parts = {}
        for c, p, o in self.terms:
            table = c[:, None] * _mono(k, p, o)[None, :]
            parts[p] = parts.get(p, 0) + table
            total += table
        homogeneous = tuple(sorted(parts.items(), reverse=True))
        return SymbolGrid(self.grid, self.order, total, homogeneous, real_quantizing)

    def sharp(self, other: "Symbol", depth: int = 2) -> "Symbol":
        """Left-quantization composition Σ_α (-i)^α/α! ∂_ξ^α a ∂_x^α b."""
        out = self * other
        da, db = self, other
        for alpha in range(1, depth + 1):
            da, db = da.dxi(), db.dx()
            out = out + (da * db) * ((-1j) ** alpha / math.factorial(alpha))
        return out


def abs_xi(grid: PeriodicGrid) -> Symbol:
    return Symbol.monomial(grid, 1.0, 1.0)


def xi(grid: PeriodicGrid) -> Symbol:
    return Symbol.monomial(grid, 1.0, 1.0, odd=True)


# ============================================================================
# Paraproducts
# ============================================================================


def paraproduct(b: SpectralField, u: SpectralField, c: CutoffParams = None) -> SpectralField:
    """T_b u for a function symbol b(x)."""
    return paradiff_apply(Symbol.function(b).evaluate(), u, c)


def bony_remainder(a: SpectralField, u: SpectralField, c: CutoffParams = None) -> SpectralField:
    """a·u - T_a u - T_u a."""
    return a * u - paraproduct(a, u, c) - paraproduct(u, a, c)


# ============================================================================
# Water-wave symbols
# ============================================================================


def _surface_factors(eta: SpectralField):
    eta_x = dx(eta).values
    return eta_x, 1.0 + eta_x**2


def default_delta(h: float, h0: float) -> float:
    return min(h0 / (2.0 * h), 0.4)


def lambda_parts(eta: SpectralField, delta: float, h: float, h0: float, ordering: str = "left"):
    """(λ^(1), λ^(0)) from the factorization of the flattened Laplacian."""
    if not 0.0 < delta < h0 / h:
        raise SpectralError(f"delta must lie in (0, h0/h) = (0, {h0 / h:.6g}), got {delta}")
    if ordering not in ("left", "printed"):
        raise SpectralError(f"unknown ordering '{ordering}', expected 'left' or 'printed'")
    grid = eta.grid
    eta_x, E = _surface_factors(eta)
    one_over_E = Symbol.monomial(grid, 1.0 / E, 0.0)
    ex = Symbol.monomial(grid, eta_x, 0.0)

    # M1 = δξ(sgn ξ + iη_x)/(1 + η_x²)
    M1 = (abs_xi(grid) + xi(grid) * ex * 1j) * one_over_E * delta
    a_check = one_over_E * delta**2
    b_check = ex * one_over_E * (-2.0 * delta)
    c_check = ex.dx() * one_over_E * delta

    lam1 = M1 * Symbol.monomial(grid, E / delta, 0.0) - xi(grid) * ex * 1j

    numerator = M1.dxi() * M1.dx() * 1j - b_check * M1.dx() + c_check * M1
    if ordering == "printed":
        numerator = numerator - xi(grid) * a_check.dx() * 2j
    # i b̌ ξ + 2 M1 reduces to 2δ|ξ|/(1 + η_x²)
    denominator = abs_xi(grid) * one_over_E * (2.0 * delta)
    M0 = numerator / denominator
    lam0 = M0 * Symbol.monomial(grid, E / delta, 0.0)
    return lam1, lam0


def lambda_symbol(eta: SpectralField, delta: float, h: float, h0: float, ordering: str = "left") -> SymbolGrid:
    lam1, lam0 = lambda_parts(eta, delta, h, h0, ordering)
    lam = lam1 + lam0
    table = lam.evaluate()
    parts = ((1.0, lam1.evaluate().values), (0.0, lam0.evaluate().values))
    return SymbolGrid(eta.grid, 1.0, table.values, parts)


def h_parts(eta: SpectralField):
    grid = eta.grid
    _, E = _surface_factors(eta)
    h2 = Symbol.monomial(grid, E**-1.5, 2.0)
    h1 = h2.dxi().dx() * (-0.5j)
    return h2, h1


def h_symbol(eta: SpectralField) -> SymbolGrid:
    h2, h1 = h_parts(eta)
    table = (h2 + h1).evaluate()
    return SymbolGrid(eta.grid, 2.0, table.values, ((2.0, h2.evaluate().values), (1.0, h1.evaluate().values)))


@dataclass(frozen=True, eq=False)
class Symmetrizer:
    p: Symbol
    q: Symbol
    theta: Symbol
    p_principal: Symbol
    theta_principal: Symbol


def _real_part(a: Symbol) -> Symbol:
    """Re a(x, ξ) for a real-quantizing monomial sum."""
    return Symbol(a.grid, tuple((c.real.astype(complex), p, o) for c, p, o in a.terms))


def symmetrizer_symbols(eta: SpectralField, kappa: float, lam0: Symbol = None) -> Symmetrizer:
    """
    Symbols p (order 1/2), q (order 0) and ϑ (order 3/2) with

        T_p T_λ ~ T_ϑ T_q,   κ T_q T_h ~ T_ϑ T_p,   T_ϑ ~ (T_ϑ)*.

    ϑ = ϑ^(3/2) + √(κh^(2)/λ^(1)) Re λ^(0)/2 - (i/2)∂_ξ∂_x ϑ^(3/2), which makes
    T_ϑ self-adjoint through order 1/2, and p^(-1/2) closes the first relation
    at order 1/2. With λ^(1) = |ξ| the second relation then closes at order 1
    only for q ∝ (1 + η_x²)^{1/4}; q is normalized to 1 on a flat surface.
    The second relation also needs Im λ^(0) = 0, which holds for the left
    ordering.
    """
    if not kappa > 0:
        raise SpectralError(f"symmetrizer requires kappa > 0, got {kappa}")
    grid = eta.grid
    _, E = _surface_factors(eta)
    lam0 = Symbol.zero(grid) if lam0 is None else lam0
    rk = math.sqrt(kappa)

    q = Symbol.monomial(grid, E**0.25, 0.0)
    theta32 = Symbol.monomial(grid, rk * E**-0.75, 1.5)
    # p^(1/2)|ξ| = ϑ^(3/2) q
    p12 = Symbol.monomial(grid, rk * E**-0.5, 0.5)

    Y = Symbol.monomial(grid, 0.5 * rk * E**-0.75, 0.5) * _real_part(lam0) - theta32.dxi().dx() * 0.5j
    X = (Y * q - theta32.dxi() * q.dx() * 1j - p12 * lam0) / abs_xi(grid)
    return Symmetrizer(p=p12 + X, q=q, theta=theta32 + Y, p_principal=p12, theta_principal=theta32)


def symmetrizer(eta: SpectralField, kappa: float, lam0: Symbol = None):
    """(p, q, ϑ) tabulated."""
    s = symmetrizer_symbols(eta, kappa, lam0)
    return s.p.evaluate(), s.q.evaluate(), s.theta.evaluate()


def parametrix_symbol(principal: Symbol, sub: Symbol = None) -> Symbol:
    """P with T_P T_a ~ Id to one order below the principal, for a = principal + sub."""
    sub = Symbol.zero(principal.grid) if sub is None else sub
    P0 = Symbol.monomial(principal.grid, 1.0, 0.0) / principal
    P1 = -(P0 * sub - P0.dxi() * principal.dx() * 1j) / principal
    return P0 + P1


# ============================================================================
# Diagnostics
# ============================================================================


def compose_defect(A: SymbolGrid, B: SymbolGrid, C: SymbolGrid, D: SymbolGrid, probes: Iterable[int],
                   c: CutoffParams = None, scale: float = 1.0):
    """‖(T_A T_B - scale·T_C T_D) e^{iNx}‖ / ‖T_A T_B e^{iNx}‖ for each probe N."""
    left = quantization_matrix(A, c) @ quantization_matrix(B, c)
    right = scale * (quantization_matrix(C, c) @ quantization_matrix(D, c))
    out = []
    for N in probes:
        col = int(N) % A.grid.n
        out.append(float(np.linalg.norm(left[:, col] - right[:, col]) / np.linalg.norm(left[:, col])))
    return out


def adjoint_defect_symbol(theta: SymbolGrid, probes: Iterable[int], c: CutoffParams = None):
    """‖(T_ϑ - T_ϑ*) e^{iNx}‖ / ‖T_ϑ e^{iNx}‖; the pairing is diagonal on modes."""
    M = quantization_matrix(theta, c)
    skew = M - M.conj().T
    out = []
    for N in probes:
        col = int(N) % theta.grid.n
        out.append(float(np.linalg.norm(skew[:, col]) / np.linalg.norm(M[:, col])))
    return out


# ============================================================================
# Mollifier
# ============================================================================


def mollifier_symbol(eps: float, eta: SpectralField, symbol: str = "flat") -> SymbolGrid:
    """j_ε = exp(-εγ) - (i/2)∂_x∂_ξ exp(-εγ), γ = |ξ|^{3/2} or |ξ|^{3/2}(1+η_x²)^{-3/4}."""
    if not 0.0 <= eps <= 1.0:
        raise SpectralError(f"mollifier parameter must lie in [0, 1], got {eps}")
    grid = eta.grid
    if symbol == "flat":
        gamma = Symbol.monomial(grid, 1.0, 1.5)
    elif symbol == "surface":
        _, E = _surface_factors(eta)
        gamma = Symbol.monomial(grid, E**-0.75, 1.5)
    else:
        raise SpectralError(f"unknown mollifier symbol '{symbol}', expected 'flat' or 'surface'")

    g = gamma.evaluate().values
    g_xi = gamma.dxi().evaluate(real_quantizing=False).values
    g_x = gamma.dx().evaluate().values
    g_xxi = gamma.dxi().dx().evaluate(real_quantizing=False).values
    e = np.exp(-eps * g)
    # ∂_x∂_ξ e^{-εγ} = (-ε γ_xξ + ε² γ_x γ_ξ) e^{-εγ}
    mixed = (-eps * g_xxi + eps**2 * g_x * g_xi) * e
    j = e - 0.5j * mixed
    return SymbolGrid(grid, 0.0, j)


def mollifier_apply(eps: float, eta: SpectralField, u: SpectralField, symbol: str = "flat",
                    c: CutoffParams = None) -> SpectralField:
    return paradiff_apply(mollifier_symbol(eps, eta, symbol), u, c)
