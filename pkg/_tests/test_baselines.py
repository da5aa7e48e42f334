import numpy as np
import pytest

from fbst.arrays import ArrayGeometry, delays
from fbst.baselines import (
    FdsPlan,
    FractionalDelayFilter,
    das_beamform,
    fds_beamform_ula,
    fds_beamform_upa,
    fractional_shift,
)
from fbst.baselines.fds import stage_cosines
from fbst.beamformers import DasBeamformer, FdsBeamformer
from fbst.errors import ConfigError
from fbst.fan import BeamGrid
from fbst.signals import (
    PlaneWaveSource,
    SignalSpec,
    SnapshotBlock,
    simulate_snapshots,
    tone,
)
from fbst.utils import guard_mask, snr_db

SPEC = SignalSpec()


def _tone_block(geometry, angle, frequency=1e9, n_samples=64):
    source = PlaneWaveSource(angle, tone(frequency))
    block = simulate_snapshots(geometry, SPEC, [source], 0.0, n_samples)
    return block, source(block.sample_times)


@pytest.mark.parametrize("shift", [0, 3, -2])
def test_integer_shift_is_exact(shift):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 16)) + 1j * rng.standard_normal((1, 16))
    shifted, edge = fractional_shift(x, np.array([shift]), 4)
    keep = ~edge[0]
    idx = np.arange(16)[keep] + shift
    np.testing.assert_allclose(shifted[0, keep], x[0, idx], atol=1e-12)
    # outputs whose filter support leaves the block are flagged
    assert edge[0, -1] if shift >= 0 else edge[0, 0]


def test_fractional_shift_of_slow_tone():
    n = np.arange(64)
    x = np.exp(2j * np.pi * 0.05 * n)
    filt = FractionalDelayFilter(0.4, 16)
    shifted = filt(x)
    expected = np.exp(2j * np.pi * 0.05 * (n + 0.4))
    inner = slice(10, 50)
    np.testing.assert_allclose(shifted[inner], expected[inner], atol=0.1)
    assert filt.integer == 0 and filt.fraction == pytest.approx(0.4)


def test_filter_taps_are_plain_truncated_sinc():
    filt = FractionalDelayFilter(2.3, 8, scale=0.5)
    k = np.arange(8)
    np.testing.assert_allclose(filt.taps, 0.5 * np.sinc(0.3 - k + 3), atol=1e-12)
    # no window: the outermost taps keep their full sinc weight
    assert abs(filt.taps[0]) == pytest.approx(0.5 * abs(np.sinc(3.3)))


def test_filter_rejects_odd_taps():
    with pytest.raises(ConfigError):
        FractionalDelayFilter(0.5, 5)


def test_das_broadside_is_exact():
    geometry = ArrayGeometry.ula(8, SPEC)
    block, clean = _tone_block(geometry, 0.0)
    beams = das_beamform(block, 0.0, 16)
    np.testing.assert_allclose(beams[0], clean, atol=1e-12)


def test_das_steered_tone():
    """Test that DS recovers a steered in-band tone away from the block edges."""
    geometry = ArrayGeometry.ula(8, SPEC)
    block, clean = _tone_block(geometry, np.deg2rad(30.0))
    beams = das_beamform(block, np.deg2rad(30.0), 16)
    exclude = beams.edge | guard_mask(64)
    assert snr_db(beams[0], clean, exclude) > 20.0


def test_das_rejects_long_filters():
    geometry = ArrayGeometry.ula(8, SPEC)
    block, _ = _tone_block(geometry, 0.0, n_samples=16)
    with pytest.raises(ConfigError):
        das_beamform(block, 0.0, 32)


def test_das_matches_double_sum():
    """Test DS against an explicit sum over sensors and sinc filter taps."""
    geometry = ArrayGeometry.ula(2, SPEC)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 8)) + 1j * rng.standard_normal((2, 8))
    angle = np.deg2rad(40.0)
    beams = das_beamform(SnapshotBlock(x, SPEC, geometry), angle, 4)

    tau = delays(geometry, angle)
    expected = np.zeros(8, dtype=complex)
    for n in range(8):
        for m in range(2):
            t = n + tau[m] / SPEC.sample_interval
            first = int(np.floor(t)) - 1
            for i in range(max(first, 0), min(first + 4, 8)):
                weight = np.exp(2j * np.pi * SPEC.carrier * tau[m]) / 2
                expected[n] += weight * x[m, i] * np.sinc(t - i)
    np.testing.assert_allclose(beams[0], expected, atol=1e-12)


def test_stage_cosines():
    np.testing.assert_allclose(stage_cosines(2), [-0.5, 0.5])
    np.testing.assert_allclose(stage_cosines(4), [-0.75, -0.25, 0.25, 0.75])
    plan = FdsPlan(8, 4, SPEC)
    assert plan.n_stages == 3
    np.testing.assert_allclose(plan.cosines, stage_cosines(8))


def test_fds_needs_power_of_two():
    with pytest.raises(ConfigError):
        FdsPlan(6, 4, SPEC)


@pytest.mark.parametrize("n_elements", [2, 8, 16])
def test_fds_beams_lie_on_even_grid(n_elements):
    geometry = ArrayGeometry.ula(n_elements, SPEC)
    block, _ = _tone_block(geometry, 0.3)
    beams = fds_beamform_ula(block, 16)
    assert beams.samples.shape == (n_elements, 64)
    np.testing.assert_allclose(
        np.sin(beams.angles), BeamGrid.ula(n_elements).sines, atol=1e-12
    )


def test_fds_two_elements_equal_das():
    """Test that a single-stage FDS is the two-beam DS with the same filters."""
    geometry = ArrayGeometry.ula(2, SPEC)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 32)) + 1j * rng.standard_normal((2, 32))
    block = SnapshotBlock(x, SPEC, geometry)
    fds = fds_beamform_ula(block, 8)
    das = das_beamform(block, fds.angles, 8)
    np.testing.assert_allclose(fds.samples, das.samples, atol=1e-12)


def test_fds_bias_exceeds_das_bias():
    """Test that the stage approximations leave FDS further from an on-grid
    oblique source than DS."""
    geometry = ArrayGeometry.ula(8, SPEC)
    angle = np.arcsin(5.0 / 8.0)
    block, clean = _tone_block(geometry, angle)
    fds = fds_beamform_ula(block, 16)
    das = das_beamform(block, angle, 16)
    assert fds.angles[6] == pytest.approx(angle)

    exclude = fds.edge | das.edge | guard_mask(64)
    fds_snr = snr_db(fds[6], clean, exclude)
    das_snr = snr_db(das[0], clean, exclude)
    assert fds_snr < das_snr
    assert fds_snr > 5.0


@pytest.mark.parametrize("algorithm", ["das", "fds"])
def test_baselines_are_linear(algorithm):
    geometry = ArrayGeometry.ula(8, SPEC)
    rng = np.random.default_rng(3)
    x, y = (rng.standard_normal((8, 32)) + 1j * rng.standard_normal((8, 32)) for _ in range(2))
    a, b = 0.7 - 0.2j, -1.3

    def run(samples):
        block = SnapshotBlock(samples, SPEC, geometry)
        if algorithm == "das":
            return das_beamform(block, np.deg2rad([-30.0, 0.0, 45.0]), 8).samples
        return fds_beamform_ula(block, 8).samples

    np.testing.assert_allclose(run(a * x + b * y), a * run(x) + b * run(y), atol=1e-12)


def test_fds_upa_grid():
    geometry = ArrayGeometry.upa(16, SPEC)
    block, _ = _tone_block(geometry, (0.0, 0.0))
    beams = fds_beamform_upa(block, 8)
    assert beams.samples.shape == (16, 64)

    # beam a * 4 + b points at (mu_a, kappa_b)
    grid = BeamGrid.upa(16)
    azimuth, off_normal = beams.angles.T
    cosines = np.sin(off_normal)[:, np.newaxis] * np.stack(
        [np.cos(azimuth), np.sin(azimuth)], axis=-1
    )
    np.testing.assert_array_equal(beams.valid, grid.valid)
    np.testing.assert_allclose(cosines[beams.valid], grid.cosines[grid.valid], atol=1e-12)
    assert not beams.valid[0]


def test_steered_handles():
    geometry = ArrayGeometry.ula(8, SPEC)
    angle = np.arcsin(5.0 / 8.0)
    block, clean = _tone_block(geometry, angle)
    das = DasBeamformer(geometry, SPEC, 64, angle, 16)
    fds = FdsBeamformer(geometry, SPEC, 64, angle + 0.02, 16)
    assert fds.beam == 6
    assert fds.beam_angle == pytest.approx(angle)
    assert snr_db(das(block), clean, das.exclude) > 20.0
    assert snr_db(fds(block), clean, fds.exclude) > 5.0
