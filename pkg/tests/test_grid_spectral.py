"""
Tests for the periodic and vertical grids.

Validates:
- Node and frequency conventions (Nyquist taken as +n/2)
- Fourier multipliers, derivatives and the zero-mean antiderivative
- Sobolev norms, pairing and dealiasing
- Chebyshev differentiation on [-h, 0]
"""

import numpy as np
import pytest

from tests.conftest import cosine, sine
from vortwave.errors import SpectralError
from vortwave.services.grid_spectral import (
    PeriodicGrid,
    SpectralField,
    VerticalGrid,
    apply_multiplier,
    cheb_apply,
    dealias,
    dx,
    dx_inv,
    from_modes,
    pairing,
    project_zero_mean,
    random_band_limited,
    sobolev_norm,
)


class TestPeriodicGrid:
    """Test suite for PeriodicGrid."""

    def test_nodes_and_spacing(self, grid16):
        """Nodes are 2πj/n and the spacing is 2π/n."""
        assert grid16.x.shape == (16,)
        assert grid16.x[0] == 0.0
        assert np.isclose(grid16.spacing, 2 * np.pi / 16)
        assert np.allclose(np.diff(grid16.x), grid16.spacing)

    def test_nyquist_is_positive(self, grid16):
        """The unpaired frequency is stored as +n/2."""
        k = grid16.wavenumbers
        assert k[8] == 8
        assert k[1] == 1 and k[-1] == -1
        assert grid16.nyquist == 8

    def test_rejects_odd_or_small(self):
        """Odd and too-small node counts are refused."""
        with pytest.raises(SpectralError, match="even"):
            PeriodicGrid(17)
        with pytest.raises(SpectralError, match="at least 8"):
            PeriodicGrid(6)

    def test_grid_is_frozen(self, grid16):
        """Grids are immutable value objects."""
        with pytest.raises(Exception):
            grid16.n = 32
        assert PeriodicGrid(16) == grid16


class TestSpectralField:
    """Test suite for SpectralField arithmetic and coefficients."""

    def test_cosine_coefficients(self, grid16):
        """cos(3x) has coefficient 1/2 at ±3 and nothing else."""
        f = cosine(grid16, 3)
        expected = np.zeros(16)
        expected[3] = expected[-3] = 0.5
        assert np.allclose(f.coeffs, expected, atol=1e-14)

    def test_values_are_read_only(self, grid16):
        """Nodal values cannot be modified in place."""
        f = cosine(grid16, 1)
        with pytest.raises(ValueError):
            f.values[0] = 2.0

    def test_shape_mismatch(self, grid16):
        """Wrong number of nodal values is refused."""
        with pytest.raises(SpectralError):
            SpectralField(grid16, np.zeros(15))

    def test_grid_mismatch_in_arithmetic(self, grid16, grid32):
        """Fields on different grids cannot be combined."""
        with pytest.raises(SpectralError, match="grid mismatch"):
            cosine(grid16, 1) + cosine(grid32, 1)

    def test_arithmetic_with_scalars(self, grid16):
        """Scalars combine from either side."""
        f = cosine(grid16, 2)
        assert np.allclose((2.0 * f - f / 2.0 + 1.0).values, 1.5 * f.values + 1.0)
        assert np.allclose((1.0 - f).values, 1.0 - f.values)
        assert np.allclose((f**2).values, f.values**2)

    def test_reflect(self, grid16):
        """reflect maps f(x) to f(-x) exactly on the nodes."""
        s = sine(grid16, 3)
        c = cosine(grid16, 3)
        assert np.allclose(s.reflect().values, -s.values, atol=1e-14)
        assert np.allclose(c.reflect().values, c.values, atol=1e-14)
        assert np.array_equal(s.reflect().reflect().values, s.values)

    def test_from_modes(self, grid16):
        """from_modes sums cosines with phases."""
        f = from_modes(grid16, [(1, 0.5, 0.0), (2, 0.25, -np.pi / 2)])
        expected = 0.5 * np.cos(grid16.x) + 0.25 * np.sin(2 * grid16.x)
        assert np.allclose(f.values, expected, atol=1e-14)

    def test_random_band_limited(self, grid32):
        """Random draws are real, zero-mean and band-limited."""
        f = random_band_limited(grid32, np.random.default_rng(3), kmax=4, amplitude=0.1)
        assert abs(f.mean()) < 1e-15
        high = np.abs(grid32.wavenumbers) > 4
        assert np.max(np.abs(f.coeffs[high])) < 1e-15

    def test_random_draw_is_resolution_independent(self):
        """The same seed gives the same function on every grid."""
        coarse = random_band_limited(PeriodicGrid(16), np.random.default_rng(7), kmax=3)
        fine = random_band_limited(PeriodicGrid(32), np.random.default_rng(7), kmax=3)
        assert np.allclose(fine.values[::2], coarse.values, atol=1e-13)


class TestMultipliers:
    """Test suite for Fourier multipliers and derivatives."""

    def test_derivative_of_sine(self, grid32):
        """∂_x sin(2x) = 2cos(2x) to round-off."""
        assert np.allclose(dx(sine(grid32, 2)).values, 2 * np.cos(2 * grid32.x), atol=1e-12)

    def test_nyquist_derivative_vanishes(self, grid32):
        """Odd multipliers annihilate the Nyquist mode."""
        assert dx(cosine(grid32, 16)).max_abs() < 1e-12

    def test_non_symmetric_multiplier(self, grid16):
        """A symbol with m(-ξ) != conj m(ξ) is refused."""
        with pytest.raises(SpectralError, match="conjugate-symmetric"):
            apply_multiplier(cosine(grid16, 1), lambda k: 1j * np.abs(k))

    def test_dx_inv(self, grid32):
        """The antiderivative of cos x is sin x."""
        assert np.allclose(dx_inv(cosine(grid32, 1)).values, np.sin(grid32.x), atol=1e-13)

    def test_dx_inv_needs_zero_mean(self, grid32):
        """A non-zero mean is refused."""
        with pytest.raises(SpectralError, match="zero-mean"):
            dx_inv(cosine(grid32, 1) + 0.5)

    def test_project_zero_mean(self, grid32):
        """Projection removes the mean only."""
        f = project_zero_mean(cosine(grid32, 1) + 3.0)
        assert abs(f.mean()) < 1e-15
        assert np.allclose(f.values, np.cos(grid32.x), atol=1e-14)


class TestNormsAndDealiasing:
    """Test suite for norms, the pairing and the truncation rule."""

    def test_pairing(self, grid32):
        """∫cos² = π and ∫cos·sin = 0."""
        assert np.isclose(pairing(cosine(grid32, 1), cosine(grid32, 1)), np.pi)
        assert abs(pairing(cosine(grid32, 1), sine(grid32, 1))) < 1e-14

    def test_sobolev_norm(self, grid32):
        """‖cos x‖_{H^0} = √π and ‖cos x‖_{H^1} = √(2π)."""
        f = cosine(grid32, 1)
        assert np.isclose(sobolev_norm(f, 0.0), np.sqrt(np.pi))
        assert np.isclose(sobolev_norm(f, 1.0), np.sqrt(2 * np.pi))
        assert np.isclose(f.l2(), np.sqrt(np.pi))

    def test_two_thirds_rule(self, grid32):
        """Modes above n/3 are removed, lower ones kept."""
        f = cosine(grid32, 10) + cosine(grid32, 15)
        assert np.allclose(dealias(f).values, np.cos(10 * grid32.x), atol=1e-14)

    def test_invalid_rule(self, grid32):
        """Rules outside (0, 1] are refused."""
        with pytest.raises(SpectralError):
            dealias(cosine(grid32, 1), rule=1.5)


class TestVerticalGrid:
    """Test suite for the Chebyshev grid on [-h, 0]."""

    def test_endpoints(self):
        """w_0 = 0 and w_{m-1} = -h exactly."""
        v = VerticalGrid(12, 2.0)
        assert v.w[0] == 0.0
        assert v.w[-1] == -2.0
        assert np.all(np.diff(v.w) < 0)

    def test_differentiates_polynomials(self):
        """D and D2 are exact on low-degree polynomials."""
        v = VerticalGrid(8, 1.5)
        w = v.w
        assert np.allclose(cheb_apply(v.D, w**3), 3 * w**2, atol=1e-11)
        assert np.allclose(cheb_apply(v.D2, w**3), 6 * w, atol=1e-10)

    def test_tensor_application(self):
        """cheb_apply acts along the last axis of an (n, m) array."""
        v = VerticalGrid(6, 1.0)
        g = np.outer(np.arange(4.0), v.w**2)
        assert np.allclose(cheb_apply(v.D, g), np.outer(np.arange(4.0), 2 * v.w), atol=1e-12)

    def test_wrong_shape(self):
        """A vertical axis of the wrong length is refused."""
        v = VerticalGrid(6, 1.0)
        with pytest.raises(SpectralError):
            cheb_apply(v.D, np.zeros((4, 5)))

    def test_invalid_parameters(self):
        """Too few nodes or non-positive depth are refused."""
        with pytest.raises(SpectralError):
            VerticalGrid(2, 1.0)
        with pytest.raises(SpectralError):
            VerticalGrid(8, 0.0)
