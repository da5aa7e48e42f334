from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import ConfigError

# shifts this close to an integer are treated as integer sample shifts
INTEGER_TOL = 1e-9


def check_taps(n_taps: int, n_samples: int):
    if n_taps < 2 or n_taps % 2 != 0:
        raise ConfigError(f"Filter length R must be even and >= 2, got {n_taps}.")
    if n_taps > n_samples:
        raise ConfigError(f"Filter length R = {n_taps} exceeds N = {n_samples}.")


def split_shift(shift: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split shifts (in samples) into integer and fractional parts, f in
    [0, 1)."""
    shift = np.asarray(shift, dtype=float)
    nearest = np.round(shift)
    shift = np.where(np.abs(shift - nearest) < INTEGER_TOL, nearest, shift)
    whole = np.floor(shift)
    return whole.astype(int), shift - whole


def sinc_taps(fraction: np.ndarray, n_taps: int) -> np.ndarray:
    """Truncated sinc interpolator taps, shape (..., R).

    Tap k weights sample n + k - R/2 + 1 when interpolating at n + fraction.
    """
    k = np.arange(n_taps)
    return np.sinc(np.asarray(fraction)[..., np.newaxis] - k + n_taps // 2 - 1)


def fractional_shift(
    x: np.ndarray, shifts: np.ndarray, n_taps: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Resample each row of `x` at n + shift with an R-tap sinc filter.

    Parameters
    ----------
    x : np.ndarray
        (K, N) signals, zero outside [0, N).
    shifts : np.ndarray
        (K,) shifts in samples; a positive shift advances the signal.
    n_taps : int
        Filter length R (even).

    Returns
    -------
    shifted : np.ndarray
        (K, N) resampled signals.
    edge : np.ndarray
        (K, N) flags for outputs whose filter support left the block.
    """
    x = np.atleast_2d(x)
    n_rows, n_samples = x.shape
    whole, fraction = split_shift(np.broadcast_to(shifts, (n_rows,)))
    taps = sinc_taps(fraction, n_taps)

    n = np.arange(n_samples)
    k = np.arange(n_taps) - n_taps // 2 + 1
    idx = n[np.newaxis, :, np.newaxis] + whole[:, np.newaxis, np.newaxis] + k
    inside = (idx >= 0) & (idx < n_samples)
    rows = np.arange(n_rows)[:, np.newaxis, np.newaxis]
    gathered = np.where(inside, x[rows, np.clip(idx, 0, n_samples - 1)], 0.0)

    shifted = np.einsum("knr,kr->kn", gathered, taps)
    return shifted, ~np.all(inside, axis=-1)


@dataclass(frozen=True)
class FractionalDelayFilter:
    """FractionalDelayFilter.

    R-tap truncated sinc filter that advances a sensor signal by `shift`
    samples, with the carrier phase and array normalization folded into a
    complex scale.

    Parameters
    ----------
    shift : float
        Advance in samples (tau / T_s).
    n_taps : int
        Filter length R (even).
    scale : complex
        Weight applied to the output, exp(j 2 pi f_c tau) / M for a
        delay-and-sum beamformer.
    """

    shift: float
    n_taps: int
    scale: complex = 1.0

    def __post_init__(self):
        if self.n_taps < 2 or self.n_taps % 2 != 0:
            raise ConfigError(f"Filter length R must be even and >= 2, got {self.n_taps}.")

    @property
    def integer(self) -> int:
        return int(split_shift(self.shift)[0])

    @property
    def fraction(self) -> float:
        return float(split_shift(self.shift)[1])

    @property
    def taps(self) -> np.ndarray:
        return self.scale * sinc_taps(self.fraction, self.n_taps)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        shifted, _ = fractional_shift(np.asarray(x)[np.newaxis, :], self.shift, self.n_taps)
        return self.scale * shifted[0]
