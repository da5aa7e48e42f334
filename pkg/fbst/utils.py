import numpy as np

from .errors import DenseCapError

SPEED_OF_LIGHT = 299792458.0

# largest number of complex entries a dense oracle may materialize
DENSE_CAP = 2**24


def check_dense_cap(*dims: int, cap: int = DENSE_CAP):
    """Raise a `DenseCapError` if the product of `dims` exceeds `cap`."""
    if int(np.prod([int(d) for d in dims])) > cap:
        raise DenseCapError(tuple(int(d) for d in dims), cap)


def guard_interval(n_samples: int) -> int:
    """Number of samples excluded at each end of a block by accuracy metrics."""
    return int(np.ceil(n_samples / 8))


def guard_mask(n_samples: int) -> np.ndarray:
    """Boolean mask that is True on the guard samples at both block ends."""
    g = guard_interval(n_samples)
    mask = np.zeros(n_samples, dtype=bool)
    mask[:g] = True
    mask[n_samples - g :] = True
    return mask


def next_pow2(n: int) -> int:
    """Smallest power of two >= n."""
    return 1 << max(int(n) - 1, 0).bit_length()


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def unit_modulus(z: complex, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(np.abs(np.asarray(z)) - 1.0) <= tol))


def relative_error(x: np.ndarray, reference: np.ndarray) -> float:
    """Relative L2 error of `x` against `reference` (absolute if the reference
    is zero)."""
    num = np.linalg.norm(np.ravel(x) - np.ravel(reference))
    den = np.linalg.norm(np.ravel(reference))
    return float(num / den) if den > 0 else float(num)


def snr_db(estimate: np.ndarray, clean: np.ndarray, mask: np.ndarray = None) -> float:
    """Signal power over residual power, in dB, over the unmasked samples.

    Parameters
    ----------
    estimate : np.ndarray
        Estimated samples, last axis is time.
    clean : np.ndarray
        Known clean waveform, broadcastable against `estimate`.
    mask : np.ndarray, optional
        Boolean mask of samples to exclude (True = excluded).
    """
    estimate = np.asarray(estimate)
    clean = np.broadcast_to(clean, estimate.shape)
    if mask is not None:
        keep = ~np.asarray(mask, dtype=bool)
        estimate = estimate[..., keep]
        clean = clean[..., keep]
    signal = np.sum(np.abs(clean) ** 2)
    residual = np.sum(np.abs(estimate - clean) ** 2)
    return float(10.0 * np.log10(signal / residual))
