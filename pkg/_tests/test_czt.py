import numpy as np
import pytest

from fbst.czt import CztPlan, czt_apply, czt_plan
from fbst.errors import ConfigError


def _direct(x, n_out, a, w):
    n = np.arange(x.size)
    k = np.arange(n_out)
    z = a * w ** k
    return np.array([np.sum(x * zk ** (-n)) for zk in z])


@pytest.mark.parametrize("n", [1, 8, 17, 64])
def test_czt_matches_fft(n):
    """Test that the unit-circle contour with W = exp(-2 pi j / n) is the DFT."""
    rng = np.random.default_rng(n)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    plan = czt_plan(n, n, 1.0, np.exp(-2j * np.pi / n))
    np.testing.assert_allclose(czt_apply(plan, x), np.fft.fft(x), atol=1e-10 * n)


@pytest.mark.parametrize("n_in, n_out", [(16, 16), (16, 40), (33, 7)])
def test_czt_arbitrary_contour(n_in, n_out):
    """Test an arbitrary arc against the direct sum."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n_in) + 1j * rng.standard_normal(n_in)
    a = np.exp(0.3j)
    w = np.exp(-0.071j)
    expected = _direct(x, n_out, a, w)
    result = CztPlan(n_in, n_out, a, w)(x)
    assert np.linalg.norm(result - expected) <= 1e-11 * np.linalg.norm(expected)


def test_czt_batched_contours():
    """Test that an array of contours transforms each row on its own contour."""
    rng = np.random.default_rng(1)
    a = np.exp(1j * np.array([0.1, -0.4, 2.0]))
    w = np.exp(-1j * np.array([0.05, 0.2, 0.01]))
    x = rng.standard_normal((3, 12)) + 1j * rng.standard_normal((3, 12))
    plan = CztPlan(12, 9, a, w)
    assert plan.contour_shape == (3,)
    result = plan(x)
    for row in range(3):
        np.testing.assert_allclose(
            result[row], _direct(x[row], 9, a[row], w[row]), rtol=1e-10, atol=1e-10
        )


def test_czt_rejects_off_circle():
    """Test that contours off the unit circle are refused."""
    with pytest.raises(ConfigError):
        CztPlan(8, 8, 1.1, np.exp(-0.1j))


def test_czt_rejects_wrong_length():
    plan = CztPlan(8, 8, 1.0, np.exp(-0.1j))
    with pytest.raises(ValueError):
        plan(np.zeros(9))


def test_czt_nfft_is_fast_length():
    """Test that the convolution covers n_in + n_out - 1 points."""
    plan = CztPlan(100, 37, 1.0, np.exp(-0.1j))
    assert plan.nfft >= 136
