import numpy as np
import pytest

from fbst.arrays import ArrayGeometry, half_wavelength
from fbst.errors import ConfigError
from fbst.fan import (
    BeamGrid,
    FanTransform,
    FourierExtensionBasis,
    fan_project,
    fan_project_direct,
)
from fbst.signals import SignalSpec, SnapshotBlock

SPEC = SignalSpec()


def _random_block(geometry, n_samples, seed=0):
    rng = np.random.default_rng(seed)
    shape = (geometry.element_count, n_samples)
    samples = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return SnapshotBlock(samples, SPEC, geometry)


def _assert_close(result, expected, tol):
    assert np.linalg.norm(result - expected) <= tol * np.linalg.norm(expected)


@pytest.mark.parametrize("n_elements, n_samples, n_beams", [(16, 8, 17), (32, 16, 33), (16, 8, 16)])
def test_ula_fan_matches_direct(n_elements, n_samples, n_beams):
    """Test the chirp-z fan projection against direct evaluation at the grid angles."""
    geometry = ArrayGeometry.ula(n_elements, SPEC)
    basis = FourierExtensionBasis.from_gamma(n_samples, 2.0, SPEC)
    grid = BeamGrid.ula(n_beams)
    block = _random_block(geometry, n_samples)

    coeffs = fan_project(block, basis, grid)
    assert coeffs.flat.shape == (n_beams, basis.n_frequencies)
    _assert_close(coeffs.flat, fan_project_direct(block, basis, grid.angles), 1e-10)


def test_upa_fan_matches_direct_on_valid_beams():
    geometry = ArrayGeometry.upa(16, SPEC)
    basis = FourierExtensionBasis.from_gamma(8, 2.0, SPEC)
    grid = BeamGrid.upa(16)
    block = _random_block(geometry, 8, seed=1)

    coeffs = fan_project(block, basis, grid)
    assert coeffs.w.shape == (4, 4, basis.n_frequencies)
    valid = grid.valid
    expected = fan_project_direct(block, basis, grid.angles[valid])
    _assert_close(coeffs.flat[valid], expected, 1e-10)


@pytest.mark.parametrize("n_beams", [17, 16])
def test_nonuniform_fan_matches_direct(n_beams):
    """Test the NUFFT path on a perturbed linear array."""
    rng = np.random.default_rng(2)
    offsets = rng.uniform(-0.25, 0.25, 16)
    offsets[0] = 0.0
    positions = (np.arange(16) + offsets) * half_wavelength(SPEC.max_frequency)
    geometry = ArrayGeometry.linear(positions, SPEC)
    basis = FourierExtensionBasis.from_gamma(8, 2.0, SPEC)
    grid = BeamGrid.ula(n_beams)

    transform = FanTransform(geometry, basis, grid, SPEC, accuracy=1e-12)
    assert transform.uses_nufft
    block = _random_block(geometry, 8, seed=3)
    _assert_close(
        transform.project(block).flat,
        fan_project_direct(block, basis, grid.angles),
        1e-8,
    )


def test_affine_linear_array_uses_chirp_z():
    positions = (0.5 + 0.9 * np.arange(12)) * half_wavelength(SPEC.max_frequency)
    geometry = ArrayGeometry.linear(positions, SPEC)
    basis = FourierExtensionBasis.from_gamma(8, 2.0, SPEC)
    grid = BeamGrid.ula(13)

    transform = FanTransform(geometry, basis, grid, SPEC)
    assert not transform.uses_nufft
    block = _random_block(geometry, 8, seed=4)
    _assert_close(
        transform.project(block).flat,
        fan_project_direct(block, basis, grid.angles),
        1e-10,
    )


def test_fan_rejects_wrong_grid():
    geometry = ArrayGeometry.ula(16, SPEC)
    basis = FourierExtensionBasis.from_gamma(8, 2.0, SPEC)
    with pytest.raises(ConfigError):
        FanTransform(geometry, basis, BeamGrid.upa(16), SPEC)


def test_temporal_plan_matches_matrix():
    basis = FourierExtensionBasis.from_gamma(16, 2.0, SPEC)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 16)) + 1j * rng.standard_normal((3, 16))
    expected = x @ np.exp(-1j * np.outer(basis.omegas, basis.sample_times)).T
    np.testing.assert_allclose(basis.temporal_plan(x), expected, rtol=1e-10, atol=1e-10)


def test_basis_frequencies():
    """Test omega_l = 2 pi epsilon (l - L/2) / (L T_s) with L = 2 round(gamma N / 2)."""
    basis = FourierExtensionBasis.from_gamma(64, 2.0, SPEC)
    assert basis.n_frequencies == 128
    assert basis.gamma == pytest.approx(2.0)
    np.testing.assert_array_equal(basis.offsets, np.arange(-63, 65))
    expected = 2 * np.pi * SPEC.epsilon * np.arange(-63, 65) / (128 * SPEC.sample_interval)
    np.testing.assert_allclose(basis.omegas, expected, rtol=1e-12)
    assert FourierExtensionBasis.from_gamma(10, 1.5, SPEC).n_frequencies == 16


def test_basis_rejects_odd_length():
    with pytest.raises(ConfigError):
        FourierExtensionBasis(8, 15, SPEC.epsilon, SPEC.sample_interval)


def test_for_array_enforces_gamma_bound():
    geometry = ArrayGeometry.ula(128, SPEC)
    with pytest.raises(ConfigError):
        FourierExtensionBasis.for_array(geometry, SPEC, 64, 1.2)
    basis = FourierExtensionBasis.for_array(geometry, SPEC, 64, 1.5)
    assert basis.n_frequencies == 96


@pytest.mark.parametrize(
    "n_beams, sines",
    [
        (5, [-1.0, -0.5, 0.0, 0.5, 1.0]),
        (4, [-0.75, -0.25, 0.25, 0.75]),
        (1, [0.0]),
    ],
)
def test_linear_grid_sines(n_beams, sines):
    np.testing.assert_allclose(BeamGrid.ula(n_beams).sines, sines, atol=1e-15)


def test_planar_grid_flags_vacuous_beams():
    grid = BeamGrid.upa(9)
    # the four corners (|mu|, |kappa|) = (1, 1) lie outside the unit disk
    assert grid.valid.sum() == 5
    assert not grid.valid[0] and grid.valid[4]
    np.testing.assert_allclose(grid.cosines[1], [-1.0, 0.0])
    with pytest.raises(ConfigError):
        BeamGrid.upa(10)
