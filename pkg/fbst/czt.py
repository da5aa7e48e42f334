from typing import Union

import numpy as np
from scipy import fft

from .errors import ConfigError
from .utils import unit_modulus

Complex = Union[complex, np.ndarray]


def _chirp(phase: np.ndarray) -> np.ndarray:
    """exp(j pi phase) with the phase (in units of pi) reduced modulo 2."""
    return np.exp(1j * np.pi * np.mod(phase, 2.0))


class CztPlan:
    """CztPlan.

    Precomputed chirp-z transform along one or more unit-circle contours

        X[k] = sum_n x[n] (A W^k)^(-n),  k = 0..n_out-1,

    evaluated with Bluestein's identity nk = (n^2 + k^2 - (k - n)^2) / 2 as a
    linear convolution of length n_in + n_out - 1, padded to a fast FFT size.

    Parameters
    ----------
    n_in : int
        Input length.
    n_out : int
        Number of output points.
    a : complex or np.ndarray
        Start point A of the contour, |A| = 1. An array of starts (with `w`
        broadcast against it) gives one contour per row of the input.
    w : complex or np.ndarray
        Ratio W between successive contour points, |W| = 1.

    Usage
    -----
    dft = CztPlan(64, 64, 1.0, np.exp(-2j * np.pi / 64))
    X = dft(x)
    """

    def __init__(self, n_in: int, n_out: int, a: Complex, w: Complex):
        if n_in < 1 or n_out < 1:
            raise ConfigError("CZT input and output lengths must be >= 1.")
        a = np.asarray(a, dtype=complex)
        w = np.asarray(w, dtype=complex)
        if not unit_modulus(a) or not unit_modulus(w):
            raise ConfigError("CZT contours must lie on the unit circle (|A| = |W| = 1).")

        a, w = np.broadcast_arrays(a, w)
        self._n_in = int(n_in)
        self._n_out = int(n_out)
        self._contours = a.shape
        self._nfft = fft.next_fast_len(self._n_in + self._n_out - 1)

        # contour angles in units of pi
        alpha = (np.angle(a) / np.pi)[..., np.newaxis]
        omega = (np.angle(w) / np.pi)[..., np.newaxis]

        n = np.arange(self._n_in, dtype=float)
        k = np.arange(self._n_out, dtype=float)

        self._pre = _chirp(-alpha * n - omega * n ** 2 / 2.0)
        self._post = _chirp(-omega * k ** 2 / 2.0)

        kernel = np.zeros(self._contours + (self._nfft,), dtype=complex)
        kernel[..., : self._n_out] = _chirp(omega * k ** 2 / 2.0)
        if self._n_in > 1:
            j = np.arange(1, self._n_in, dtype=float)
            kernel[..., self._nfft - np.arange(1, self._n_in)] = _chirp(
                omega * j ** 2 / 2.0
            )
        self._kernel = fft.fft(kernel, axis=-1)

        for arr in (self._pre, self._post, self._kernel):
            arr.setflags(write=False)

    @property
    def n_in(self) -> int:
        return self._n_in

    @property
    def n_out(self) -> int:
        return self._n_out

    @property
    def nfft(self) -> int:
        """Convolution length."""
        return self._nfft

    @property
    def contour_shape(self) -> tuple:
        return self._contours

    @property
    def nbytes(self) -> int:
        return self._pre.nbytes + self._post.nbytes + self._kernel.nbytes

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Apply the transform along the last axis of `x`.

        For a plan with a contour array of shape C, the trailing axes of `x`
        preceding the sample axis must broadcast against C.
        """
        x = np.asarray(x)
        if x.shape[-1] != self._n_in:
            raise ValueError(
                f"CZT plan expects inputs of length {self._n_in}, got {x.shape[-1]}."
            )
        spectrum = fft.fft(x * self._pre, n=self._nfft, axis=-1)
        y = fft.ifft(spectrum * self._kernel, axis=-1)
        return y[..., : self._n_out] * self._post


def czt_plan(n_in: int, n_out: int, a: Complex, w: Complex) -> CztPlan:
    """Build a reusable chirp-z plan."""
    return CztPlan(n_in, n_out, a, w)


def czt_apply(plan: CztPlan, x: np.ndarray) -> np.ndarray:
    """Apply `plan` to one input (1D) or a batch of inputs (rows)."""
    return plan(x)
