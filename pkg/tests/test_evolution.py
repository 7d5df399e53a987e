"""
Tests for the time evolution.

Validates:
- Right-hand side at rest and at first order
- Hamiltonian structure and conservation under RK4
- Reflection symmetry and time-step convergence
- Linear dispersion, closed form against eigen oracle and measurement
- Mollified system
"""

import math

import numpy as np
import pytest

from tests.conftest import cosine, sine
from vortwave.errors import ConfigError, IntegrationError, SpectralError
from vortwave.services.dno_family import PhysicalParams
from vortwave.services.evolution import (
    RhsOptions,
    SurfaceState,
    cfl_limit,
    hamiltonian,
    hamiltonian_gradient,
    integrate,
    linear_dispersion,
    linear_mode_matrix,
    mass,
    measure_mode_frequency,
    mollified_rhs,
    poisson_tensor_apply,
    reverse,
    rhs,
    step_rk4,
    travelling_mode,
)
from vortwave.services.grid_spectral import PeriodicGrid, SpectralField
from vortwave.services.straightening import BathymetryProfile

SERIES = RhsOptions(method="series", series_order=4)


class TestSurfaceState:
    """Test suite for SurfaceState and RhsOptions."""

    def test_zero(self, grid16):
        """The rest state is zero and finite."""
        state = SurfaceState.zero(grid16)
        assert state.eta.is_zero() and state.psi.is_zero()
        assert state.is_finite()

    def test_grid_mismatch(self, grid16, grid32):
        """η and ψ must share a grid."""
        with pytest.raises(SpectralError):
            SurfaceState(0.0, SpectralField.zeros(grid16), SpectralField.zeros(grid32))

    def test_unknown_method(self):
        """Only the oracle and series paths exist."""
        with pytest.raises(ConfigError):
            RhsOptions(method="boundary-integral")

    def test_series_needs_flat_bottom(self, grid32, bumpy32, params):
        """The series path refuses a variable bottom."""
        with pytest.raises(ConfigError):
            rhs(SurfaceState.zero(grid32), bumpy32, params, SERIES)


class TestRightHandSide:
    """Test suite for the evolution equations."""

    def test_rest_is_stationary(self, grid32, flat32, params):
        """The rest state does not move."""
        eta_t, psi_t = rhs(SurfaceState.zero(grid32), flat32, params, SERIES)
        assert eta_t.max_abs() == 0.0
        assert psi_t.max_abs() == 0.0

    def test_linear_restoring_force(self, grid32, flat32, params):
        """For small η and ψ = 0, ψ_t = -(g + κk²)η."""
        a = 1e-8
        state = SurfaceState(0.0, cosine(grid32, 3, a), SpectralField.zeros(grid32))
        _, psi_t = rhs(state, flat32, params, SERIES)
        assert np.allclose(psi_t.values, -(1.0 + 0.1 * 9) * state.eta.values, atol=1e-14)

    def test_vorticity_coupling(self, grid32, flat32, params):
        """For small ψ, ψ_t picks up γ∂_x^{-1}G(0)ψ."""
        a = 1e-8
        k = 2
        tau = k * math.tanh(k)
        state = SurfaceState(0.0, SpectralField.zeros(grid32), sine(grid32, k, a))
        eta_t, psi_t = rhs(state, flat32, params, SERIES)
        assert np.allclose(eta_t.values, tau * state.psi.values, atol=1e-15)
        assert np.allclose(psi_t.values, -params.gamma * tau / k * a * np.cos(k * grid32.x), atol=1e-14)

    def test_oracle_matches_series(self, grid32, flat32, params):
        """Both operator paths give the same flat-bottom right-hand side."""
        state = SurfaceState(0.0, cosine(grid32, 1, 0.01), sine(grid32, 2, 0.01))
        oracle = rhs(state, flat32, params, RhsOptions(method="oracle", m=24))
        series = rhs(state, flat32, params, RhsOptions(method="series", series_order=6))
        for a, b in zip(oracle, series):
            assert np.max(np.abs(a.values - b.values)) < 1e-9

    def test_variable_bottom(self, grid32, bumpy32, params):
        """Over a bump the rest state is driven only through the vorticity datum."""
        eta_t, _ = rhs(SurfaceState.zero(grid32), bumpy32, params, RhsOptions(m=16))
        assert eta_t.max_abs() > 0.0
        still = PhysicalParams(g=1.0, h=1.0, kappa=0.1, gamma=0.0, h0=0.5)
        eta_t, psi_t = rhs(SurfaceState.zero(grid32), bumpy32, still, RhsOptions(m=16))
        assert eta_t.max_abs() < 1e-12 and psi_t.max_abs() < 1e-12

    def test_margin_enforced(self, grid32, flat32, params):
        """Losing half the connectedness margin aborts the step."""
        state = SurfaceState(0.0, SpectralField.constant(grid32, -0.8), SpectralField.zeros(grid32))
        with pytest.raises(IntegrationError):
            rhs(state, flat32, params, SERIES)


class TestHamiltonianStructure:
    """Test suite for H, its gradient and the Poisson tensor."""

    def test_energy_of_rest(self, grid16, params):
        """At rest only the surface-tension term remains."""
        assert hamiltonian(SurfaceState.zero(grid16), params, opts=SERIES) == pytest.approx(2 * math.pi * 0.1)

    def test_kinetic_energy(self, grid16):
        """½⟨ψ, G(0)ψ⟩ for ψ = cos x is π tanh(1)/2."""
        params = PhysicalParams(kappa=0.0)
        state = SurfaceState(0.0, SpectralField.zeros(grid16), cosine(grid16, 1))
        assert hamiltonian(state, params, opts=SERIES) == pytest.approx(0.5 * math.pi * math.tanh(1.0))

    def test_needs_flat_bottom(self, grid32, bumpy32, params):
        """H is only defined over a flat bottom."""
        with pytest.raises(ConfigError):
            hamiltonian(SurfaceState.zero(grid32), params, bumpy32)

    def test_poisson_tensor(self, grid16):
        """J_γ(a, b) = (b, -a + γ∂_x^{-1}b)."""
        a, b = cosine(grid16, 1), cosine(grid16, 2)
        first, second = poisson_tensor_apply(2.0, (a, b))
        assert np.allclose(first.values, b.values)
        assert np.allclose(second.values, -a.values + np.sin(2 * grid16.x), atol=1e-13)

    def test_flow_is_hamiltonian(self, grid16, params):
        """J_γ∇H reproduces the right-hand side, ψ_t up to a constant."""
        flat = BathymetryProfile.flat(grid16, 1.0, 0.5)
        state = SurfaceState(0.0, cosine(grid16, 1, 0.01), sine(grid16, 2, 0.01))
        eta_t, psi_t = rhs(state, flat, params, SERIES)
        flow_eta, flow_psi = poisson_tensor_apply(params.gamma, hamiltonian_gradient(state, params, SERIES))
        assert np.max(np.abs(flow_eta.values - eta_t.values)) < 1e-6
        centred = lambda f: f.values - f.mean()
        assert np.max(np.abs(centred(flow_psi) - centred(psi_t))) < 1e-6

    def test_mass(self, grid16):
        """Mass is 2π times the mean elevation."""
        state = SurfaceState(0.0, SpectralField.constant(grid16, 0.25), SpectralField.zeros(grid16))
        assert mass(state) == pytest.approx(0.5 * math.pi)


class TestIntegration:
    """Test suite for RK4 integration."""

    def test_requires_surface_tension(self, grid16):
        """κ = 0 is refused."""
        flat = BathymetryProfile.flat(grid16, 1.0, 0.5)
        with pytest.raises(ConfigError, match="kappa"):
            integrate(SurfaceState.zero(grid16), flat, PhysicalParams(kappa=0.0), 1e-3, 1e-2, opts=SERIES)

    def test_requires_zero_mean(self, grid16, params):
        """The initial elevation must have zero mean."""
        flat = BathymetryProfile.flat(grid16, 1.0, 0.5)
        state = SurfaceState(0.0, SpectralField.constant(grid16, 0.1), SpectralField.zeros(grid16))
        with pytest.raises(ConfigError, match="zero mean"):
            integrate(state, flat, params, 1e-3, 1e-2, opts=SERIES)

    def test_cfl(self, grid16, params):
        """Steps above the stability limit are refused."""
        flat = BathymetryProfile.flat(grid16, 1.0, 0.5)
        limit = cfl_limit(grid16, params)
        assert limit == pytest.approx(2.0 / (math.sqrt(0.1) * 8**1.5))
        with pytest.raises(ConfigError, match="stability"):
            integrate(SurfaceState.zero(grid16), flat, params, 1.5 * limit, 1.0, opts=SERIES)

    def test_rest_stays_at_rest(self, grid16, params):
        """Zero data integrates to zero."""
        flat = BathymetryProfile.flat(grid16, 1.0, 0.5)
        traj = integrate(SurfaceState.zero(grid16), flat, params, 0.01, 0.1, opts=SERIES)
        assert traj.final.eta.is_zero() and traj.final.psi.is_zero()
        assert not traj.truncated
        assert traj.t[-1] == pytest.approx(0.1)

    def test_truncation_reported(self, grid16, params):
        """Losing connectedness truncates the trajectory instead of raising."""
        flat = BathymetryProfile.flat(grid16, 1.0, 0.5)
        state = SurfaceState(0.0, cosine(grid16, 1, 0.8), SpectralField.zeros(grid16))
        traj = integrate(state, flat, params, 0.01, 0.5, opts=SERIES)
        assert traj.truncated
        assert "connectedness" in traj.diagnostic
        assert len(traj.states) == 1

    def test_conservation(self, grid32, flat32, params):
        """Mass is exact and the Hamiltonian drifts below 1e-8 over unit time."""
        state = SurfaceState(0.0, cosine(grid32, 1, 1e-2), SpectralField.zeros(grid32))
        traj = integrate(state, flat32, params, 1e-3, 1.0, sample_every=50, opts=SERIES)
        assert not traj.truncated
        assert traj.drift("mass") <= 1e-12
        assert traj.drift("hamiltonian") <= 1e-8
        assert traj.max_projection <= 1e-12

    def test_hamiltonian_drift_convergence(self, grid32, flat32, params):
        """Halving dt reduces the Hamiltonian drift at least 12-fold."""
        opts = RhsOptions(method="series", series_order=8)
        state = SurfaceState(0.0, cosine(grid32, 2, 0.05), SpectralField.zeros(grid32))
        drifts = [
            integrate(state, flat32, params, dt, 1.0, sample_every=1, opts=opts).drift("hamiltonian")
            for dt in (0.05, 0.025)
        ]
        assert drifts[0] / drifts[1] >= 12.0


class TestReversibility:
    """Test suite for the reflection S(η, ψ) = (η(-x), -ψ(-x))."""

    def test_involution(self, grid16):
        """S is an involution."""
        state = SurfaceState(0.0, sine(grid16, 1, 0.1) + cosine(grid16, 2, 0.1), cosine(grid16, 3, 0.2))
        twice = reverse(reverse(state))
        assert np.array_equal(twice.eta.values, state.eta.values)
        assert np.array_equal(twice.psi.values, state.psi.values)

    def test_fixed_points(self, grid16):
        """Even η with odd ψ is fixed by S."""
        state = SurfaceState(0.0, cosine(grid16, 1, 0.1), sine(grid16, 1, 0.1))
        back = reverse(state)
        assert np.allclose(back.eta.values, state.eta.values, atol=1e-15)
        assert np.allclose(back.psi.values, state.psi.values, atol=1e-15)

    def test_reversed_flow_returns(self, grid32, flat32, params):
        """Forward, reflect, forward, reflect returns to the start at RK4 order."""
        start = SurfaceState(0.0, cosine(grid32, 2, 0.05) + sine(grid32, 1, 0.02), sine(grid32, 1, 0.03))
        defects = []
        for dt in (0.05, 0.025):
            forward = integrate(start, flat32, params, dt, 1.0, sample_every=1000, opts=SERIES)
            back = integrate(reverse(forward.final), flat32, params, dt, 1.0, sample_every=1000, opts=SERIES)
            end = reverse(back.final)
            defects.append(max((end.eta - start.eta).max_abs(), (end.psi - start.psi).max_abs()))
        assert defects[0] / defects[1] >= 12.0


class TestLinearDispersion:
    """Test suite for ω² - (γτ/k)ω - τ(g + κk²) = 0."""

    def test_gravity_waves(self):
        """Without vorticity and tension, ω = ±√(k tanh(kh)g)."""
        plus, minus = linear_dispersion(1, PhysicalParams())
        assert plus == pytest.approx(math.sqrt(math.tanh(1.0)))
        assert minus == pytest.approx(-plus)

    def test_deep_water(self):
        """For kh large, ω → √(gk)."""
        plus, _ = linear_dispersion(4, PhysicalParams(h=20.0))
        assert plus == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -2.0])
    @pytest.mark.parametrize("k", [1, 2, 4, -3])
    def test_eigen_oracle(self, k, gamma):
        """The roots are the frequencies of the linearized mode matrix."""
        params = PhysicalParams(kappa=0.1, gamma=gamma)
        eig = np.sort((1j * np.linalg.eigvals(linear_mode_matrix(k, params))).real)[::-1]
        assert np.allclose(eig, linear_dispersion(k, params), rtol=1e-12, atol=1e-12)

    def test_zero_wavenumber(self):
        """k = 0 has no dispersion relation."""
        with pytest.raises(SpectralError):
            linear_dispersion(0, PhysicalParams())

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -2.0])
    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_measured_frequency(self, k, gamma):
        """A small travelling wave oscillates at ω₊ over one period."""
        grid = PeriodicGrid(16)
        params = PhysicalParams(kappa=0.1, gamma=gamma)
        flat = BathymetryProfile.flat(grid, 1.0, 0.5)
        omega = linear_dispersion(k, params)[0]
        period = 2 * math.pi / omega
        steps = int(math.ceil(period / 0.01))
        state = travelling_mode(grid, k, 1e-8, params)
        traj = integrate(state, flat, params, period / steps, period, sample_every=10,
                         opts=RhsOptions(method="series", series_order=1))
        assert measure_mode_frequency(traj, k) == pytest.approx(omega, rel=1e-6)

    def test_travelling_mode_is_eigenvector(self, grid16):
        """The travelling mode is a single-frequency solution of the linear system."""
        params = PhysicalParams(kappa=0.1, gamma=1.0)
        state = travelling_mode(grid16, 2, 1.0, params)
        omega = linear_dispersion(2, params)[0]
        v = np.array([state.eta.coeffs[2], state.psi.coeffs[2]])
        assert np.allclose(linear_mode_matrix(2, params) @ v, -1j * omega * v, atol=1e-12)


class TestMollifiedSystem:
    """Test suite for the mollified evolution."""

    @pytest.fixture
    def state(self, grid32):
        return SurfaceState(0.0, cosine(grid32, 4, 1e-3), sine(grid32, 4, 1e-3))

    def test_no_mollification(self, state, flat32, params):
        """At ε = 0 the mollified system is the original one up to paradifferential errors."""
        exact = rhs(state, flat32, params, SERIES)
        mollified = mollified_rhs(0.0, state, flat32, params, SERIES)
        for a, b in zip(exact, mollified):
            assert (a - b).max_abs() <= 1e-4 * a.max_abs()

    def test_damping(self, state, flat32, params):
        """At ε = 1 mode 4 is damped by about exp(-4^{3/2})."""
        plain = mollified_rhs(0.0, state, flat32, params, SERIES)
        damped = mollified_rhs(1.0, state, flat32, params, SERIES)
        for a, b in zip(plain, damped):
            ratio = abs(b.coeffs[4]) / abs(a.coeffs[4])
            assert ratio <= 1.5 * math.exp(-8.0)

    def test_needs_surface_tension(self, state, flat32):
        """The symmetrizer behind the mollified system needs κ > 0."""
        with pytest.raises(SpectralError):
            mollified_rhs(0.5, state, flat32, PhysicalParams(kappa=0.0), SERIES)

    def test_step(self, grid32, flat32, params):
        """A single RK4 step keeps the mean of η at zero."""
        state = SurfaceState(0.0, cosine(grid32, 1, 0.01), sine(grid32, 1, 0.01))
        after = step_rk4(state, 1e-3, flat32, params, SERIES)
        assert abs(after.eta.mean()) < 1e-15
        assert after.t == pytest.approx(1e-3)
