"""
Tests for the flattened Laplace collocation oracle.

Validates:
- Closed-form flat-strip potentials
- A manufactured harmonic function over a curved surface and bottom
- Linearity in the data and the zero solution
- Conditioning guard
- Spectral self-convergence under grid refinement
"""

import numpy as np
import pytest

from tests.conftest import cosine, poisson_kernel, sine
from vortwave.errors import SolverError
from vortwave.services.dno_family import OperatorFamily
from vortwave.services.elliptic_bvp import (
    FlattenedLaplaceSolver,
    NeumannData,
    flat_potential,
    residual_interior,
    solve_bvp,
    trace_bottom_dirichlet,
    trace_top_neumann,
)
from vortwave.services.grid_spectral import PeriodicGrid, SpectralField
from vortwave.services.straightening import BathymetryProfile, build_regularizing, build_trivial


class TestFlatStrip:
    """Test suite for η = β = 0."""

    def test_matches_closed_form(self, grid32, flat32):
        """Collocation reproduces the cosh/sinh potential."""
        d = build_trivial(SpectralField.zeros(grid32), flat32, m=24)
        psi = cosine(grid32, 3) + sine(grid32, 1, 0.5)
        theta = cosine(grid32, 2, 0.3)
        phi = solve_bvp(psi, NeumannData(theta), d)
        assert np.allclose(phi.values, flat_potential(psi, theta, d.vgrid), atol=1e-9)

    def test_bottom_trace(self, grid32, flat32):
        """G^{DD} on a flat strip is sech(h|ξ|)."""
        d = build_trivial(SpectralField.zeros(grid32), flat32, m=24)
        phi = solve_bvp(cosine(grid32, 2), NeumannData.zero(grid32), d)
        expected = np.cos(2 * grid32.x) / np.cosh(2.0)
        assert np.allclose(trace_bottom_dirichlet(phi).values, expected, atol=1e-10)

    def test_top_trace(self, grid32, flat32):
        """G^{DN} on a flat strip is |ξ|tanh(h|ξ|)."""
        d = build_trivial(SpectralField.zeros(grid32), flat32, m=24)
        phi = solve_bvp(cosine(grid32, 2), NeumannData.zero(grid32), d)
        expected = 2.0 * np.tanh(2.0) * np.cos(2 * grid32.x)
        assert np.allclose(trace_top_neumann(phi).values, expected, atol=1e-9)


class TestManufacturedSolution:
    """Test suite for φ = e^{y}cos x over a curved domain."""

    @pytest.fixture
    def problem(self):
        grid = PeriodicGrid(16)
        eta = cosine(grid, 1, 0.05)
        bath = BathymetryProfile(cosine(grid, 2, 0.05), 1.0, 0.5)
        x = grid.x
        psi = SpectralField(grid, np.exp(eta.values) * np.cos(x))
        beta_x = -0.1 * np.sin(2 * x)
        y_bottom = -1.0 + bath.beta.values
        theta = SpectralField(grid, -np.exp(y_bottom) * (np.sin(x) * beta_x + np.cos(x)))
        d = build_trivial(eta, bath, m=12)
        return d, psi, theta

    def test_potential(self, problem):
        """The collocated potential is the pulled-back harmonic function."""
        d, psi, theta = problem
        phi = FlattenedLaplaceSolver(d).solve(psi, theta)
        y = d.vgrid.w[None, :] + d.sigma
        exact = np.exp(y) * np.cos(d.grid.x[:, None])
        assert np.max(np.abs(phi.values - exact)) < 1e-8

    def test_interior_residual(self, problem):
        """The interior collocation equations hold to round-off."""
        d, psi, theta = problem
        phi = FlattenedLaplaceSolver(d).solve(psi, theta)
        assert phi.residual_norm < 1e-9
        assert residual_interior(phi) == pytest.approx(phi.residual_norm)

    def test_surface_flux(self, problem):
        """∇φ·(-η_x, 1) at the surface matches the exact flux."""
        d, psi, theta = problem
        phi = FlattenedLaplaceSolver(d).solve(psi, theta)
        x = d.grid.x
        eta = d.eta.values
        eta_x = -0.05 * np.sin(x)
        expected = np.exp(eta) * (eta_x * np.sin(x) + np.cos(x))
        assert np.allclose(trace_top_neumann(phi).values, expected, atol=1e-7)

    def test_solve_many_matches_solve(self, problem):
        """One factorization serves several right-hand sides."""
        d, psi, theta = problem
        solver = FlattenedLaplaceSolver(d)
        zero = SpectralField.zeros(d.grid)
        first, second = solver.solve_many([(psi, theta), (psi, zero)])
        assert np.allclose(first.values, solver.solve(psi, theta).values, atol=1e-13)
        assert not np.allclose(first.values, second.values)


class TestLinearity:
    """Test suite for superposition and zero data."""

    @pytest.fixture
    def curved(self, grid16):
        eta = cosine(grid16, 1, 0.05) + sine(grid16, 2, 0.02)
        bath = BathymetryProfile(cosine(grid16, 2, 0.05), 1.0, 0.5)
        return build_trivial(eta, bath, m=12)

    def test_superposition(self, curved):
        """The potential is linear in (ψ, θ)."""
        grid = curved.grid
        psi1, theta1 = cosine(grid, 1), sine(grid, 2, 0.3)
        psi2, theta2 = sine(grid, 3, 0.5), cosine(grid, 1, -0.2)
        a, b = 2.0, -0.75
        combined = solve_bvp(a * psi1 + b * psi2, NeumannData(a * theta1 + b * theta2), curved)
        first = solve_bvp(psi1, NeumannData(theta1), curved)
        second = solve_bvp(psi2, NeumannData(theta2), curved)
        assert np.allclose(combined.values, a * first.values + b * second.values, atol=1e-10)

    def test_zero_data(self, curved):
        """Zero data gives the zero potential."""
        phi = solve_bvp(SpectralField.zeros(curved.grid), NeumannData.zero(curved.grid), curved)
        assert np.max(np.abs(phi.values)) == 0.0
        assert phi.residual_norm == 0.0


class TestConditioning:
    """Test suite for the solver guards."""

    def test_condition_bound(self, grid16):
        """A factorization above cond_max is refused."""
        d = build_trivial(SpectralField.zeros(grid16), BathymetryProfile.flat(grid16, 1.0, 0.5), m=8)
        with pytest.raises(SolverError, match="ill-conditioned"):
            FlattenedLaplaceSolver(d, cond_max=1.0)

    def test_condition_reported(self, grid16):
        """The estimated condition number is kept on the solver."""
        d = build_trivial(SpectralField.zeros(grid16), BathymetryProfile.flat(grid16, 1.0, 0.5), m=8)
        solver = FlattenedLaplaceSolver(d)
        assert 1.0 < solver.condition < 1e12


class TestRefinement:
    """Test suite for spectral convergence of the oracle."""

    @staticmethod
    def _surface_flux(n, m):
        grid = PeriodicGrid(n)
        eta = cosine(grid, 1, 0.1)
        bath = BathymetryProfile(cosine(grid, 2, 0.05), 1.0, 0.5)
        return OperatorFamily(eta, bath, m=m).full(poisson_kernel(grid, 0.5), 1.0)

    def test_self_convergence(self):
        """Errors against a fine reference drop by at least 5 per level."""
        reference = self._surface_flux(64, 48)
        errors = []
        for n, m in ((8, 6), (16, 12), (32, 24)):
            coarse = self._surface_flux(n, m)
            errors.append(np.max(np.abs(coarse.values - reference.values[:: 64 // n])))
        assert errors[0] / errors[1] >= 5.0
        assert errors[1] / errors[2] >= 5.0

    def test_regularizing_agrees_with_trivial(self, grid32, bumpy32):
        """Both straightening families give the same operator."""
        eta = cosine(grid32, 1, 0.05)
        psi = cosine(grid32, 2) + sine(grid32, 3, 0.5)
        trivial = FlattenedLaplaceSolver(build_trivial(eta, bumpy32, m=24)).solve(psi, bumpy32.theta(1.0))
        smooth = FlattenedLaplaceSolver(build_regularizing(eta, bumpy32, 0.1, m=24)).solve(psi, bumpy32.theta(1.0))
        assert np.allclose(trace_top_neumann(trivial).values, trace_top_neumann(smooth).values, atol=1e-8)
