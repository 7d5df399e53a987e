"""Shared fixtures for the vortwave test suite."""

import numpy as np
import pytest

from vortwave.services.dno_family import PhysicalParams
from vortwave.services.grid_spectral import PeriodicGrid, SpectralField
from vortwave.services.straightening import BathymetryProfile


def cosine(grid: PeriodicGrid, k: int, amplitude: float = 1.0) -> SpectralField:
    return SpectralField(grid, amplitude * np.cos(k * grid.x))


def sine(grid: PeriodicGrid, k: int, amplitude: float = 1.0) -> SpectralField:
    return SpectralField(grid, amplitude * np.sin(k * grid.x))


def poisson_kernel(grid: PeriodicGrid, r: float, amplitude: float = 1.0) -> SpectralField:
    """Zero-mean (1 - r²)/(1 - 2r cos x + r²), Fourier coefficients r^|k|."""
    values = (1.0 - r**2) / (1.0 - 2.0 * r * np.cos(grid.x) + r**2)
    return amplitude * (SpectralField(grid, values) - float(np.mean(values)))


@pytest.fixture
def grid16():
    return PeriodicGrid(16)


@pytest.fixture
def grid32():
    return PeriodicGrid(32)


@pytest.fixture
def grid64():
    return PeriodicGrid(64)


@pytest.fixture
def params():
    return PhysicalParams(g=1.0, h=1.0, kappa=0.1, gamma=1.0, h0=0.5)


@pytest.fixture
def flat32(grid32):
    return BathymetryProfile.flat(grid32, 1.0, 0.5)


@pytest.fixture
def bumpy32(grid32):
    return BathymetryProfile(cosine(grid32, 2, 0.05), 1.0, 0.5)
