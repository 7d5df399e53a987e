"""
Periodic Fourier grid and vertical Chebyshev grid.

Conventions
-----------
    • Nodes x_j = 2πj/n, j = 0..n-1, on the torus T = R/2πZ.
    • Coefficients are stored in FFT order with f(x) = Σ f_ξ e^{iξx}, so
      f_ξ = (1/n)·Σ_j f(x_j) e^{-iξx_j}.
    • Retained frequencies are ξ ∈ {-n/2+1, ..., n/2}; the FFT slot n/2 is the
      positive Nyquist frequency.
    • Odd multipliers are ambiguous at Nyquist; only the real part of a
      multiplier is applied there, which zeroes the Nyquist mode of ∂_x.
    • Discrete pairing ⟨f, g⟩ = (2π/n)·Σ_j f_j g_j.
    • Sobolev norm ‖f‖_s² = 2π·Σ_ξ |f_ξ|²⟨ξ⟩^{2s}, ⟨ξ⟩ = (1+ξ²)^{1/2}; the 2π
      factor makes s = 0 the L²(T) norm.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Union

import numpy as np

from vortwave.config import get_settings
from vortwave.errors import SpectralError

logger = logging.getLogger(__name__)

Multiplier = Callable[[np.ndarray], np.ndarray]


def _frozen(array):
    array = np.array(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PeriodicGrid:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n % 2:
            raise SpectralError(f"node count must be even, got {self.n}")
        if self.n < 8:
            raise SpectralError(f"node count must be at least 8, got {self.n}")

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen(2.0 * np.pi * np.arange(self.n) / self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Frequencies in FFT order, Nyquist taken as +n/2."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        k[self.n // 2] = self.n // 2
        return _frozen(k)

    @property
    def nyquist(self) -> int:
        return self.n // 2

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.n


@dataclass(frozen=True)
class SobolevIndex:
    s: float

    def __post_init__(self):
        if not np.isfinite(self.s):
            raise SpectralError(f"Sobolev index must be finite, got {self.s}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real periodic field; nodal values are primary, coefficients derived."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise SpectralError(f"expected {self.grid.n} nodal values, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_coeffs(cls, grid: PeriodicGrid, coeffs) -> "SpectralField":
        values = np.fft.ifft(np.asarray(coeffs, dtype=complex) * grid.n)
        return cls(grid, values.real)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "SpectralField":
        return cls(grid, np.broadcast_to(fn(grid.x), (grid.n,)))

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def constant(cls, grid: PeriodicGrid, c: float) -> "SpectralField":
        return cls(grid, np.full(grid.n, float(c)))

    # -- derived -----------------------------------------------------------

    @cached_property
    def coeffs(self) -> np.ndarray:
        return _frozen(np.fft.fft(self.values) / self.grid.n)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2(self) -> float:
        return float(np.sqrt(pairing(self, self)))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def reflect(self) -> "SpectralField":
        """f(-x) on the same nodes."""
        return SpectralField(self.grid, np.roll(self.values[::-1], 1))

    # -- arithmetic --------------------------------------------------------

    def _other(self, other):
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise SpectralError(f"grid mismatch: n={self.grid.n} vs n={other.grid.n}")
            return other.values
        return other

    def __add__(self, other):
        return SpectralField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SpectralField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return SpectralField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return SpectralField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return SpectralField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return SpectralField(self.grid, -self.values)

    def __pow__(self, p):
        return SpectralField(self.grid, self.values**p)


FieldLike = Union[SpectralField, float]


def from_modes(grid: PeriodicGrid, modes: Iterable) -> SpectralField:
    """Σ a·cos(kx + phase) over (k, a, phase) triples."""
    values = np.zeros(grid.n)
    for k, amplitude, phase in modes:
        values += amplitude * np.cos(k * grid.x + phase)
    return SpectralField(grid, values)


def random_band_limited(grid: PeriodicGrid, rng: np.random.Generator, kmax: int, amplitude: float = 1.0,
                        zero_mean: bool = True) -> SpectralField:
    coeffs = np.zeros(grid.n, dtype=complex)
    for k in range(0 if not zero_mean else 1, kmax + 1):
        c = amplitude * (rng.standard_normal() + 1j * rng.standard_normal()) / 2.0
        if k == 0:
            c = c.real
        coeffs[k] = c
        if k:
            coeffs[-k] = np.conj(c)
    return SpectralField.from_coeffs(grid, coeffs)


# ============================================================================
# Fourier multipliers
# ============================================================================


def multiplier_symbol(grid: PeriodicGrid, m: Multiplier, atol: float = 1e-12) -> np.ndarray:
    """Tabulate m on the retained frequencies and check conjugate symmetry."""
    n = grid.n
    symbol = np.broadcast_to(np.asarray(m(grid.wavenumbers), dtype=complex), (n,)).copy()
    scale = max(1.0, float(np.max(np.abs(symbol))))
    pos = symbol[1 : n // 2]
    neg = symbol[-1 : -(n // 2) : -1]
    defect = float(np.max(np.abs(pos - np.conj(neg)))) if len(pos) else 0.0
    defect = max(defect, abs(symbol[0].imag))
    if defect > atol * scale:
        raise SpectralError(f"multiplier is not conjugate-symmetric (defect {defect:.3e}); output would be complex")
    symbol[n // 2] = symbol[n // 2].real
    return symbol


def apply_multiplier(f: SpectralField, m: Multiplier) -> SpectralField:
    symbol = multiplier_symbol(f.grid, m)
    return SpectralField.from_coeffs(f.grid, symbol * f.coeffs)


def multiplier_matrix(grid: PeriodicGrid, m: Multiplier) -> np.ndarray:
    """Dense nodal matrix of a Fourier multiplier."""
    symbol = multiplier_symbol(grid, m)
    identity = np.eye(grid.n)
    return np.fft.ifft(symbol[:, None] * np.fft.fft(identity, axis=0), axis=0).real


def apply_multiplier_tensor(grid: PeriodicGrid, values: np.ndarray, m: Multiplier) -> np.ndarray:
    """Apply a multiplier along axis 0 of an (n, ...) array."""
    symbol = multiplier_symbol(grid, m)
    shape = (grid.n,) + (1,) * (values.ndim - 1)
    return np.fft.ifft(symbol.reshape(shape) * np.fft.fft(values, axis=0), axis=0).real


def _derivative_symbol(k):
    return 1j * k


def dx(f: SpectralField) -> SpectralField:
    return apply_multiplier(f, _derivative_symbol)


def dx_tensor(grid: PeriodicGrid, values: np.ndarray, order: int = 1) -> np.ndarray:
    return apply_multiplier_tensor(grid, values, lambda k: (1j * k) ** order)


def dx_inv(f: SpectralField, mean_tol: float = None) -> SpectralField:
    """Zero-mean antiderivative of a zero-mean field."""
    if mean_tol is None:
        mean_tol = get_settings().VORTWAVE_MEAN_TOL
    mean = f.mean()
    if abs(mean) > mean_tol * f.max_abs():
        raise SpectralError(f"dx_inv needs zero-mean input, measured mean {mean:.3e}")

    def inverse(k):
        out = np.zeros_like(k, dtype=complex)
        nonzero = k != 0
        out[nonzero] = 1.0 / (1j * k[nonzero])
        return out

    return apply_multiplier(f, inverse)


def project_zero_mean(f: SpectralField) -> SpectralField:
    return f - f.mean()


def sobolev_norm(f: SpectralField, s: Union[SobolevIndex, float]) -> float:
    s = s.s if isinstance(s, SobolevIndex) else float(s)
    weight = (1.0 + f.grid.wavenumbers**2) ** s
    return float(np.sqrt(2.0 * np.pi * np.sum(np.abs(f.coeffs) ** 2 * weight)))


def dealias(f: SpectralField, rule: float = None) -> SpectralField:
    """Zero every mode with |ξ| > rule·n/2."""
    if rule is None:
        rule = get_settings().VORTWAVE_DEALIAS_RULE
    if not 0.0 < rule <= 1.0:
        raise SpectralError(f"dealias rule must lie in (0, 1], got {rule}")
    keep = np.abs(f.grid.wavenumbers) <= rule * f.grid.n / 2
    return SpectralField.from_coeffs(f.grid, np.where(keep, f.coeffs, 0.0))


def pairing(f: SpectralField, g: SpectralField) -> float:
    return float(f.grid.spacing * np.dot(f.values, g.values))


# ============================================================================
# Vertical Chebyshev grid
# ============================================================================


def chebdiff(N):
    """
    x, D = chebdiff(N)

    Chebyshev-Gauss-Lobatto points x_k = cos(πk/N), k = 0..N, on [-1, 1] and
    the (N+1)x(N+1) differentiation matrix acting on nodal values.
    """
    k = np.arange(0, N + 1)
    x = np.cos(np.pi * k / N)
    c = np.hstack((2.0, np.ones(N - 1), 2.0)) * (-1.0) ** k
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D = D - np.diag(np.sum(D, axis=1))
    return x, D


@dataclass(frozen=True)
class VerticalGrid:
    """CGL nodes mapped to [-h, 0] with w_0 = 0 and w_{m-1} = -h."""

    m: int
    h: float

    def __post_init__(self):
        if self.m < 3:
            raise SpectralError(f"vertical grid needs at least 3 nodes, got {self.m}")
        if not self.h > 0:
            raise SpectralError(f"depth must be positive, got {self.h}")

    @cached_property
    def _reference(self):
        return chebdiff(self.m - 1)

    @cached_property
    def w(self) -> np.ndarray:
        x, _ = self._reference
        w = 0.5 * self.h * (x - 1.0)
        w[0], w[-1] = 0.0, -self.h
        return _frozen(w)

    @cached_property
    def D(self) -> np.ndarray:
        _, D = self._reference
        return _frozen(D * (2.0 / self.h))

    @cached_property
    def D2(self) -> np.ndarray:
        return _frozen(self.D @ self.D)


def cheb_apply(D: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Differentiate nodal values along the vertical axis (last axis of g)."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != D.shape[1]:
        raise SpectralError(f"expected {D.shape[1]} vertical values, got {g.shape[-1]}")
    return g @ D.T
