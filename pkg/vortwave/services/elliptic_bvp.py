"""
Collocation oracle for the straightened Laplace problem

    Δ^Σ φ̃ = 0                                   in D0,
    φ̃ = ψ                                        on w = 0,
    ∂_x^Σ φ̃ · β_x - ∂_w^Σ φ̃ = θ                 on w = -h.

Fourier collocation in x and Chebyshev collocation in w give one dense
(n·m) x (n·m) real system; unknowns are ordered U[i, j] -> i·m + j. The w = 0
rows are replaced by the Dirichlet condition and the w = -h rows by the
Neumann condition. One LU factorization serves any number of data pairs.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import get_lapack_funcs

from vortwave.config import get_settings
from vortwave.errors import SolverError
from vortwave.services.grid_spectral import SpectralField, VerticalGrid, dx, multiplier_matrix
from vortwave.services.straightening import (
    Diffeomorphism,
    apply_flat_laplacian,
    flatten_coeffs,
    gradient_sigma,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NeumannData:
    theta: SpectralField

    @classmethod
    def zero(cls, grid) -> "NeumannData":
        return cls(SpectralField.zeros(grid))


@dataclass(frozen=True, eq=False)
class FlattenedPotential:
    values: np.ndarray
    diffeo: Diffeomorphism
    residual_norm: float = float("nan")

    def __post_init__(self):
        self.values.setflags(write=False)


def residual_interior(phi: FlattenedPotential) -> float:
    """Max-norm of Δ^Σφ̃ over the interior collocation nodes."""
    d = phi.diffeo
    lap = apply_flat_laplacian(d, flatten_coeffs(d), phi.values)
    return float(np.max(np.abs(lap[:, 1:-1])))


class FlattenedLaplaceSolver:
    """Assembled and factorized oracle for one diffeomorphism."""

    def __init__(self, diffeo: Diffeomorphism, tol: float = None, cond_max: float = None):
        settings = get_settings()
        self.diffeo = diffeo
        self.tol = settings.VORTWAVE_TOL_BVP if tol is None else tol
        self.cond_max = settings.VORTWAVE_COND_MAX if cond_max is None else cond_max
        self.matrix = self._assemble()
        self._factorize()

    @property
    def shape(self):
        return self.diffeo.shape

    def _assemble(self) -> np.ndarray:
        d = self.diffeo
        n, m = d.shape
        coeffs = flatten_coeffs(d)
        Dx = multiplier_matrix(d.grid, lambda k: 1j * k)
        Dxx = multiplier_matrix(d.grid, lambda k: -(k**2))
        Dw, Dww = d.vgrid.D, d.vgrid.D2
        idx, jdx = np.arange(n), np.arange(m)

        L4 = coeffs.b[:, :, None, None] * Dx[:, None, :, None] * Dw[None, :, None, :]
        L4[idx, :, idx, :] += coeffs.a[:, :, None] * Dww[None] - coeffs.c[:, :, None] * Dw[None]
        L4[:, jdx, :, jdx] += Dxx[None]

        # w = 0: Dirichlet
        L4[:, 0, :, :] = 0.0
        L4[idx, 0, idx, 0] = 1.0

        # w = -h: β_x ∂_x φ̃ - (1 + β_x²)/J ∂_w φ̃
        beta_x = d.bath.beta_x.values
        flux = (1.0 + beta_x**2) / d.jacobian[:, -1]
        L4[:, -1, :, :] = 0.0
        L4[:, -1, :, -1] += beta_x[:, None] * Dx
        L4[idx, -1, idx, :] -= flux[:, None] * Dw[-1][None, :]

        logger.debug(f"assembled flattened Laplacian, {n * m} unknowns")
        return L4.reshape(n * m, n * m)

    def _factorize(self):
        A = self.matrix
        if not np.all(np.isfinite(A)):
            raise SolverError("flattened operator has non-finite entries")
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        if np.any(np.diag(lu) == 0.0):
            raise SolverError("flattened operator is singular")
        gecon = get_lapack_funcs("gecon", (lu,))
        rcond, info = gecon(lu, np.linalg.norm(A, 1), norm="1")
        cond = np.inf if rcond == 0.0 else 1.0 / rcond
        if info != 0 or cond > self.cond_max:
            raise SolverError(
                f"flattened operator is ill-conditioned (cond ~ {cond:.3e} > {self.cond_max:.1e}); "
                "check strict connectedness or resolution"
            )
        self.condition = float(cond)
        self._lu = (lu, piv)
        logger.debug(f"LU ready, cond ~ {cond:.3e}")

    def _rhs(self, psi: SpectralField, theta: SpectralField) -> np.ndarray:
        n, m = self.shape
        R = np.zeros((n, m))
        R[:, 0] = psi.values
        R[:, -1] = theta.values
        return R.reshape(-1)

    def solve_many(self, pairs):
        """Solve for several (ψ, θ) pairs with one triangular sweep."""
        n, m = self.shape
        rhs = np.column_stack([self._rhs(psi, theta) for psi, theta in pairs])
        X = scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)

        residual = np.max(np.abs(self.matrix @ X - rhs), axis=0)
        scale = np.linalg.norm(self.matrix, np.inf) * np.max(np.abs(X), axis=0) + np.max(np.abs(rhs), axis=0)
        relative = np.where(scale > 0, residual / np.where(scale > 0, scale, 1.0), 0.0)
        if np.any(relative > self.tol):
            raise SolverError(f"collocation residual {np.max(relative):.3e} exceeds tol_bvp = {self.tol:.1e}")

        out = []
        for column in X.T:
            phi = FlattenedPotential(column.reshape(n, m).copy(), self.diffeo)
            out.append(FlattenedPotential(phi.values.copy(), self.diffeo, residual_interior(phi)))
        return out

    def solve(self, psi: SpectralField, theta: SpectralField) -> FlattenedPotential:
        return self.solve_many([(psi, theta)])[0]


def solve_bvp(psi: SpectralField, theta: NeumannData, d: Diffeomorphism) -> FlattenedPotential:
    return FlattenedLaplaceSolver(d).solve(psi, theta.theta)


def trace_top_neumann(phi: FlattenedPotential, eta: SpectralField = None) -> SpectralField:
    """∇φ·(-η_x, 1) at the free surface."""
    d = phi.diffeo
    eta = d.eta if eta is None else eta
    grad_x, grad_y = gradient_sigma(d, phi.values)
    eta_x = dx(eta).values
    return SpectralField(eta.grid, -eta_x * grad_x[:, 0] + grad_y[:, 0])


def trace_bottom_dirichlet(phi: FlattenedPotential) -> SpectralField:
    return SpectralField(phi.diffeo.grid, phi.values[:, -1])


def flat_potential(psi: SpectralField, theta: SpectralField, vgrid: VerticalGrid) -> np.ndarray:
    """
    Closed-form potential for η = β = 0:

        φ̂(ξ, w) = cosh(|ξ|(w+h))/cosh(h|ξ|)·ψ̂ - sinh(|ξ|w)/(|ξ|cosh(h|ξ|))·θ̂.
    """
    h = vgrid.h
    k = np.abs(psi.grid.wavenumbers)[:, None]
    w = vgrid.w[None, :]
    damp = 1.0 + np.exp(-2.0 * k * h)
    dirichlet = np.exp(k * w) * (1.0 + np.exp(-2.0 * k * (w + h))) / damp
    with np.errstate(divide="ignore", invalid="ignore"):
        neumann = (np.exp(k * (w - h)) - np.exp(-k * (w + h))) / (k * damp)
    neumann[0, :] = vgrid.w
    hat = dirichlet * psi.coeffs[:, None] - neumann * theta.coeffs[:, None]
    hat[psi.grid.n // 2] = hat[psi.grid.n // 2].real
    return np.fft.ifft(hat * psi.grid.n, axis=0).real
