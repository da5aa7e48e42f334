import numpy as np
import pytest
from scipy import linalg

from fbst.arrays import ArrayGeometry, delays
from fbst.beamformers import FbstBeamformer, FbstPlanBeamformer, FdsBeamformer
from fbst.beamspace import (
    InterferenceSet,
    beam_pattern,
    beamspace_couplers,
    interpolate_offgrid,
    null_arrayspace,
    null_beamspace,
    null_timedomain,
    timedomain_couplers,
)
from fbst.core import FbstConfig
from fbst.errors import ConfigError, NumericalError
from fbst.fan import (
    BeamGrid,
    BeamspaceCoefficients,
    FourierExtensionBasis,
    fan_constants,
    fan_project,
    fan_project_direct,
)
from fbst.signals import (
    PlaneWaveSource,
    SignalSpec,
    make_sum_of_sinusoids,
    simulate_snapshots,
)
from fbst.toeplitz import gs_factorize, toeplitz_from_delays

SPEC = SignalSpec()
DELTA = 1e-2


@pytest.fixture
def scene():
    """An 8-element ULA observing a source at 0.3 rad and interferers at
    -0.5 and 0.9 rad."""
    geometry = ArrayGeometry.ula(8, SPEC)
    basis = FourierExtensionBasis.for_array(geometry, SPEC, 16, 2.0)
    grid = BeamGrid.ula(9)
    sources = [
        PlaneWaveSource(angle, make_sum_of_sinusoids(SPEC, 6, seed=k))
        for k, angle in enumerate([0.3, -0.5, 0.9])
    ]
    block = simulate_snapshots(geometry, SPEC, sources, 0.01, 16, seed=7)
    interferers = InterferenceSet(np.array([-0.5, 0.9]), DELTA)
    return geometry, basis, grid, block, interferers


def _coefficients(grid, basis, values):
    zeta, xi = fan_constants(grid, basis, SPEC)
    return BeamspaceCoefficients(values, grid, basis, zeta, xi)


def test_interpolation_reproduces_knots():
    basis = FourierExtensionBasis.from_gamma(8, 2.0, SPEC)
    grid = BeamGrid.ula(9)
    rng = np.random.default_rng(0)
    w = rng.standard_normal((9, 16)) + 1j * rng.standard_normal((9, 16))
    coeffs = _coefficients(grid, basis, w)
    for b in (0, 3, 8):
        np.testing.assert_array_equal(interpolate_offgrid(coeffs, grid.angles[b]), w[b])


def test_interpolation_is_exact_for_linear_coefficients():
    """Test that a natural spline reproduces coefficients linear in sin(theta)."""
    basis = FourierExtensionBasis.from_gamma(8, 2.0, SPEC)
    grid = BeamGrid.ula(17)
    slope = np.arange(16) * (1.0 + 2.0j)
    w = np.outer(grid.sines, slope) + 3.0
    coeffs = _coefficients(grid, basis, w)
    for angle in (0.1, -0.83, 1.4):
        expected = np.sin(angle) * slope + 3.0
        np.testing.assert_allclose(interpolate_offgrid(coeffs, angle, 6), expected, atol=1e-10)


def test_interpolation_rejects_uncovered_angles():
    basis = FourierExtensionBasis.from_gamma(8, 2.0, SPEC)
    grid = BeamGrid.ula(8)
    coeffs = _coefficients(grid, basis, np.zeros((8, 16), complex))
    with pytest.raises(ConfigError):
        interpolate_offgrid(coeffs, np.pi / 2)
    with pytest.raises(ConfigError):
        interpolate_offgrid(coeffs, 0.1, neighbours=3)


@pytest.mark.parametrize("angles", [[0.3, 0.3], [[0.1, 0.2], [0.1, 0.2]]])
def test_interferers_must_be_distinct(angles):
    with pytest.raises(ConfigError):
        InterferenceSet(np.array(angles))


def test_empty_interference_set():
    interferers = InterferenceSet(np.array([]))
    assert len(interferers) == 0


def test_beamspace_nulling_matches_arrayspace(scene):
    """Test A^-1 (w - sum_p G_p w_p) against FBST of the projected array data."""
    geometry, basis, grid, block, interferers = scene
    target_delays = grid.delays(geometry)
    system = toeplitz_from_delays(basis, target_delays, DELTA)

    w = fan_project(block, basis, grid).flat
    w_p = fan_project_direct(block, basis, interferers.angles)
    couplers = beamspace_couplers(basis, geometry, SPEC, target_delays, interferers)
    assert couplers.shape == (2, 9, basis.n_frequencies, basis.n_frequencies)
    beta = null_beamspace(w, w_p, couplers, system)

    projected = null_arrayspace(block, basis, interferers)
    w_projected = fan_project_direct(projected, basis, grid.angles)
    expected = np.stack(
        [linalg.solve(system.dense(k), w_projected[k]) for k in range(grid.n_beams)]
    )
    assert np.linalg.norm(beta - expected) <= 1e-8 * np.linalg.norm(expected)

    # the superfast solve gives the same coefficients
    superfast = null_beamspace(w, w_p, couplers, gs_factorize(system))
    assert np.linalg.norm(superfast - expected) <= 1e-8 * np.linalg.norm(expected)


def test_nulling_without_interferers_is_passthrough(scene):
    geometry, basis, grid, block, _ = scene
    interferers = InterferenceSet(np.array([]), DELTA)
    target_delays = grid.delays(geometry)
    system = toeplitz_from_delays(basis, target_delays, DELTA)
    w = fan_project(block, basis, grid).flat

    couplers = beamspace_couplers(basis, geometry, SPEC, target_delays, interferers)
    assert couplers.shape == (0, 9, basis.n_frequencies, basis.n_frequencies)
    beta = null_beamspace(w, np.zeros((0, basis.n_frequencies)), couplers, system)
    expected = np.stack([linalg.solve(system.dense(k), w[k]) for k in range(9)])
    np.testing.assert_allclose(beta, expected, rtol=1e-10, atol=1e-12)

    np.testing.assert_array_equal(
        null_arrayspace(block, basis, interferers).samples, block.samples
    )


def test_null_beamspace_checks_interferer_count(scene):
    geometry, basis, grid, block, interferers = scene
    target_delays = grid.delays(geometry)
    couplers = beamspace_couplers(basis, geometry, SPEC, target_delays, interferers)
    system = toeplitz_from_delays(basis, target_delays, DELTA)
    w = fan_project(block, basis, grid).flat
    with pytest.raises(ConfigError):
        null_beamspace(w, w[:1], couplers, system)


def test_timedomain_nulling_with_square_reconstruction(scene):
    """Test G'_p = F_u H_p F_u^+ on L times where F_u is a scaled DFT matrix."""
    geometry, basis, grid, block, interferers = scene
    L = basis.n_frequencies
    times = np.arange(L) * basis.sample_interval / basis.epsilon
    targets = grid.angles[[2, 6]]
    target_delays = grid.delays(geometry)[[2, 6]]
    systems = toeplitz_from_delays(basis, target_delays, DELTA)

    couplers = timedomain_couplers(
        basis, geometry, SPEC, target_delays, systems, interferers, times
    )
    assert couplers.maps.shape == (2, 2, L, L)
    assert couplers.deviation <= 1e-10

    Fu = basis.reconstruction_matrix(times)
    w = fan_project_direct(block, basis, targets)
    w_p = fan_project_direct(block, basis, interferers.angles)
    beams = np.stack([Fu @ linalg.solve(systems.dense(k), w[k]) for k in range(2)])
    interferer_systems = toeplitz_from_delays(
        basis, delays(geometry, interferers.angles), DELTA
    )
    interferer_beams = np.stack(
        [Fu @ linalg.solve(interferer_systems.dense(p), w_p[p]) for p in range(2)]
    )
    result = null_timedomain(beams, interferer_beams, couplers)

    couplers_b = beamspace_couplers(basis, geometry, SPEC, target_delays, interferers)
    expected = null_beamspace(w, w_p, couplers_b, systems) @ Fu.T
    assert np.linalg.norm(result - expected) <= 1e-7 * np.linalg.norm(expected)


def test_timedomain_refuses_rank_deficient_reconstruction(scene):
    geometry, basis, grid, _, interferers = scene
    target_delays = grid.delays(geometry)[:1]
    systems = toeplitz_from_delays(basis, target_delays, DELTA)
    with pytest.raises(NumericalError):
        timedomain_couplers(
            basis, geometry, SPEC, target_delays, systems, interferers, np.zeros(8)
        )


def test_beam_pattern_normalization_and_nulls():
    geometry = ArrayGeometry.ula(8, SPEC)
    config = FbstConfig(geometry, SPEC, 16, 9, delta=1e-3)
    interferers = InterferenceSet(np.array([0.8]), 1e-3)
    beamformer = FbstBeamformer(config, 0.3, interferers)
    angles = np.array([-1.2, -0.4, 0.3, 0.8, 1.3])
    pattern = beam_pattern(
        beamformer, geometry, SPEC, 16, 0.3, angles, SPEC.band(3), beamformer.exclude
    )

    assert pattern.gain_db.shape == (3, 5)
    assert pattern.gain_db.max() == pytest.approx(0.0)
    assert pattern.null_depth(0.8) >= pattern.worst_null_depth(0.8)
    assert pattern.worst_null_depth(0.8) > 10.0
    assert len(list(pattern.rows())) == 15


def test_beam_pattern_absolute_gain():
    """Test that an unnormalized steered beam passes a broadside tone at unit gain."""
    geometry = ArrayGeometry.ula(8, SPEC)
    beamformer = FbstBeamformer(FbstConfig(geometry, SPEC, 16, 9), 0.0)
    pattern = beam_pattern(
        beamformer,
        geometry,
        SPEC,
        16,
        0.0,
        [0.0],
        [SPEC.carrier],
        beamformer.exclude,
        normalize=False,
    )
    assert abs(pattern.gain_db[0, 0]) < 0.5


def test_plan_beamformer_matches_dense_reference(scene):
    """Test the fast steered beam against the dense operator on a grid beam."""
    geometry, _, _, block, _ = scene
    config = FbstConfig(geometry, SPEC, 16, 9, gamma=2.0, delta=DELTA)
    steering = np.arcsin(0.25)
    fast = FbstPlanBeamformer(config, steering)(block)
    reference = FbstBeamformer(config, steering)(block)
    assert np.linalg.norm(fast - reference) <= 1e-6 * np.linalg.norm(reference)


def test_plan_beamformer_nulls_offgrid_interferer():
    geometry = ArrayGeometry.ula(8, SPEC)
    config = FbstConfig(geometry, SPEC, 16, 33, delta=1e-3)
    interferers = InterferenceSet(np.array([0.8]), 1e-3)
    beamformer = FbstPlanBeamformer(config, 0.3, interferers)
    angles = np.array([-1.2, -0.4, 0.3, 0.8, 1.3])
    pattern = beam_pattern(
        beamformer, geometry, SPEC, 16, 0.3, angles, SPEC.band(3), beamformer.exclude
    )
    assert pattern.worst_null_depth(0.8) > 10.0
    assert pattern.response(0.3).max() > -3.0


def test_plan_beamformer_needs_linear_grid():
    geometry = ArrayGeometry.upa(16, SPEC)
    with pytest.raises(ConfigError):
        FbstPlanBeamformer(FbstConfig(geometry, SPEC, 8, 25), (0.5, 0.6))


def test_fds_steered_spread_exceeds_fbst():
    """Test that FDS gain in the steered direction varies more over the band
    than FBST gain."""
    geometry = ArrayGeometry.ula(8, SPEC)
    steering = np.arcsin(5.0 / 8.0)
    handles = [
        FbstPlanBeamformer(FbstConfig(geometry, SPEC, 32, 17, delta=1e-3), steering),
        FdsBeamformer(geometry, SPEC, 32, steering, 8),
    ]
    spread = {}
    for handle in handles:
        pattern = beam_pattern(
            handle, geometry, SPEC, 32, steering, [steering], SPEC.band(5), handle.exclude
        )
        spread[handle.name] = pattern.steered_spread()
    assert spread["fds"] > spread["fbst"]
