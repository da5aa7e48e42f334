import numpy as np
import pytest

from fbst.analysis import (
    bias_estimate,
    interference_bias,
    interval_gram,
    monte_carlo_error,
    monte_carlo_interference_bias,
    monte_carlo_variance,
    observation_interval,
    sample_locations,
    slepian_decompose,
    variance_estimate,
)
from fbst.arrays import ArrayGeometry
from fbst.errors import ConfigError
from fbst.fan import FourierExtensionBasis
from fbst.signals import SignalSpec

SPEC = SignalSpec()
DELTA = 1e-5


@pytest.fixture(scope="module")
def beam():
    """Sample locations of an 8-element ULA beam at 0.3 rad, N = 16."""
    geometry = ArrayGeometry.ula(8, SPEC)
    basis = FourierExtensionBasis.for_array(geometry, SPEC, 16, 2.0)
    locations = sample_locations(geometry, SPEC, 16, 0.3)
    start, interval = observation_interval(locations)
    slepian = slepian_decompose(interval, SPEC.bandwidth, start=start)
    return geometry, basis, locations, start, interval, slepian


def test_slepian_eigenvalues(beam):
    """Test the eigenvalue sum against the kernel trace 2 Omega T."""
    *_, slepian = beam
    assert np.sum(slepian.eigenvalues) == pytest.approx(slepian.trace, rel=1e-6)
    assert np.all(np.diff(slepian.eigenvalues) <= 1e-12)
    assert slepian.eigenvalues[0] <= 1.0 + 1e-8
    assert slepian.eigenvalues[0] > 0.99


def test_slepian_orthonormality(beam):
    *_, slepian = beam
    assert slepian.orthonormality_error() < 1e-8


def test_slepian_extension_at_nodes(beam):
    """Test that the Nystrom extension reproduces the functions at the nodes."""
    *_, slepian = beam
    values = slepian.evaluate(slepian.nodes)
    scale = np.abs(slepian.functions[:10]).max()
    np.testing.assert_allclose(values[:10], slepian.functions[:10], atol=1e-8 * scale)


@pytest.mark.parametrize(
    "kwargs", [{"grid_density": 4}, {"n_max": 10_000}, {"rule": "simpson"}]
)
def test_slepian_rejects_invalid(kwargs):
    with pytest.raises(ConfigError):
        slepian_decompose(1e-9, SPEC.bandwidth, **kwargs)


def test_trapezoid_rule_agrees():
    gauss = slepian_decompose(1.6e-9, SPEC.bandwidth, n_max=5)
    trapezoid = slepian_decompose(1.6e-9, SPEC.bandwidth, n_max=5, rule="trapezoid")
    np.testing.assert_allclose(trapezoid.eigenvalues, gauss.eigenvalues, atol=2e-2)


def test_sample_locations():
    geometry = ArrayGeometry.ula(4, SPEC)
    locations = sample_locations(geometry, SPEC, 8, 0.0)
    assert locations.shape == (32,)
    np.testing.assert_allclose(locations[:8], np.arange(8) * SPEC.sample_interval)
    start, interval = observation_interval(locations)
    assert start == 0.0
    assert interval == pytest.approx(7 * SPEC.sample_interval)


def test_interval_gram_diagonal():
    omegas = np.array([-1e9, 0.0, 2e9])
    gram = interval_gram(omegas, 3e-9, start=1e-9)
    np.testing.assert_allclose(np.diag(gram), 3e-9)
    np.testing.assert_allclose(gram, gram.conj().T)


def test_variance_scales_with_noise(beam):
    _, basis, locations, start, interval, _ = beam
    one = variance_estimate(basis, locations, DELTA, 1.0, interval, start)
    two = variance_estimate(basis, locations, DELTA, 2.0, interval, start)
    assert one > 0
    assert two == pytest.approx(2.0 * one, rel=1e-10)
    unnormalized = variance_estimate(
        basis, locations, DELTA, 1.0, interval, start, normalize=False
    )
    assert unnormalized == pytest.approx(one * interval, rel=1e-10)


def test_variance_matches_monte_carlo(beam):
    _, basis, locations, start, interval, _ = beam
    analytic = variance_estimate(basis, locations, DELTA, 0.5, interval, start)
    mean, error = monte_carlo_variance(
        basis, locations, DELTA, 0.5, interval, start, n_trials=4000, seed=0
    )
    assert abs(mean - analytic) <= 5 * error


def test_bias_matches_monte_carlo(beam):
    """Test the analytic bias against noiseless random Slepian signals."""
    _, basis, locations, _, _, slepian = beam
    analytic = bias_estimate(slepian, basis, locations, DELTA)
    mean, error = monte_carlo_error(
        slepian, basis, locations, DELTA, 0.0, n_trials=2000, seed=1
    )
    assert abs(mean - analytic) <= 5 * error
    normalized = bias_estimate(slepian, basis, locations, DELTA, normalize=True)
    assert normalized == pytest.approx(analytic / np.sum(slepian.eigenvalues))


def test_bias_decreases_with_oversampling(beam):
    _, _, locations, _, _, slepian = beam
    coarse = FourierExtensionBasis.from_gamma(16, 1.25, SPEC)
    fine = FourierExtensionBasis.from_gamma(16, 2.5, SPEC)
    assert bias_estimate(slepian, fine, locations, DELTA) < bias_estimate(
        slepian, coarse, locations, DELTA
    )


def test_interference_bias_without_interferer(beam):
    geometry, basis, _, _, _, slepian = beam
    bias = interference_bias(slepian, basis, geometry, SPEC, 0.3, delta=DELTA)
    assert bias.source == 0.0 and bias.interference == 0.0


@pytest.mark.slow
def test_interference_bias_matches_monte_carlo(beam):
    geometry, basis, _, _, _, slepian = beam
    bias = interference_bias(slepian, basis, geometry, SPEC, 0.3, -0.2, slepian, DELTA)
    assert bias.total == pytest.approx(bias.source + bias.interference)
    mean, error = monte_carlo_interference_bias(
        slepian, basis, geometry, SPEC, 0.3, -0.2, slepian, DELTA, n_trials=2000, seed=2
    )
    assert abs(mean - bias.total) <= 5 * error


def test_interference_bias_grows_as_separation_shrinks(beam):
    geometry, basis, _, _, _, slepian = beam
    biases = [
        interference_bias(slepian, basis, geometry, SPEC, 0.3, 0.3 - sep, slepian, DELTA)
        for sep in (0.25, 0.1, 0.03)
    ]
    assert np.all(np.diff([b.source for b in biases]) > 0)
    assert np.all(np.diff([b.total for b in biases]) > 0)
