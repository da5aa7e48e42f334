import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from .arrays import ArrayGeometry, delays
from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignalSpec:
    """SignalSpec.

    Band and sampling description of the demodulated array signals.

    Parameters
    ----------
    carrier : float
        Carrier frequency f_c in Hz.
    bandwidth : float
        One-sided baseband bandwidth Omega in Hz; the modulated signal occupies
        [f_c - Omega, f_c + Omega].
    sample_interval : float, optional
        Sample interval T_s in seconds. Defaults to critical sampling,
        1 / (2 Omega).
    epsilon : float
        Corner-frequency expansion factor of the Fourier extension basis.
        Must exceed 1 when the signal is critically sampled.
    """

    carrier: float = 20e9
    bandwidth: float = 5e9
    sample_interval: Optional[float] = None
    epsilon: float = 1.01

    def __post_init__(self):
        if self.carrier <= 0 or self.bandwidth <= 0:
            raise ConfigError("Carrier and bandwidth must be positive.")
        if self.sample_interval is None:
            object.__setattr__(self, "sample_interval", 1.0 / (2.0 * self.bandwidth))
        nyquist = 1.0 / (2.0 * self.bandwidth)
        if self.sample_interval <= 0 or self.sample_interval > nyquist * (1 + 1e-12):
            raise ConfigError(
                f"Sample interval {self.sample_interval:g} s must lie in "
                f"(0, 1/(2 Omega)] = (0, {nyquist:g}]."
            )
        if self.epsilon < 1.0:
            raise ConfigError(f"epsilon must be >= 1, got {self.epsilon}.")
        if self.critically_sampled and self.epsilon <= 1.0:
            raise ConfigError(
                "Critically sampled signals (T_s = 1/(2 Omega)) need epsilon > 1."
            )

    @property
    def max_frequency(self) -> float:
        """Highest frequency in the band, f_c + Omega."""
        return self.carrier + self.bandwidth

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.sample_interval

    @property
    def critically_sampled(self) -> bool:
        nyquist = 1.0 / (2.0 * self.bandwidth)
        return abs(self.sample_interval - nyquist) <= 1e-12 * nyquist

    def band(self, n_frequencies: int = 20) -> np.ndarray:
        """Evenly spaced RF frequencies spanning [f_c - Omega, f_c + Omega]."""
        return np.linspace(
            self.carrier - self.bandwidth, self.carrier + self.bandwidth, n_frequencies
        )


@dataclass(frozen=True, eq=False)
class Waveform:
    """Sum-of-sinusoids baseband waveform s(t) = sum_k a_k exp(j 2 pi f_k t).

    Parameters
    ----------
    frequencies : np.ndarray
        Baseband component frequencies in Hz.
    amplitudes : np.ndarray
        Complex component weights.
    """

    frequencies: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        if freqs.shape != amps.shape or freqs.ndim != 1:
            raise ValueError("Frequencies and amplitudes must be matching 1D arrays.")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "amplitudes", amps)

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        phase = 2.0 * np.pi * t[..., np.newaxis] * self.frequencies
        return np.exp(1j * phase) @ self.amplitudes

    @property
    def power(self) -> float:
        """Time-averaged power for distinct component frequencies."""
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def check_band(self, spec: SignalSpec):
        if np.any(np.abs(self.frequencies) > spec.bandwidth * (1 + 1e-12)):
            raise ConfigError("Waveform components must lie in [-Omega, Omega].")


@dataclass(frozen=True, eq=False)
class PlaneWaveSource:
    """A broadband plane wave arriving from `angle`.

    Parameters
    ----------
    angle : float or tuple
        Arrival direction, in the angle convention of the receiving geometry
        (see `fbst.arrays.direction_vectors`).
    waveform : Waveform
        Baseband waveform.
    power : float
        Power scale applied to the waveform (amplitude scales by its root).
    """

    angle: Union[float, Sequence[float]]
    waveform: Waveform
    power: float = 1.0

    def __post_init__(self):
        if self.power < 0:
            raise ConfigError("Source power must be non-negative.")

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return np.sqrt(self.power) * self.waveform(t)


def make_sum_of_sinusoids(
    spec: SignalSpec,
    n_components: int,
    seed: Optional[int] = None,
    frequencies: Optional[np.ndarray] = None,
    amplitudes: Optional[np.ndarray] = None,
) -> Waveform:
    """Random sum-of-sinusoids waveform within the signal band.

    Parameters
    ----------
    spec : SignalSpec
        Signal band definition.
    n_components : int
        Number of sinusoids.
    seed : int, optional
        Seed of the random generator.
    frequencies, amplitudes : np.ndarray, optional
        Force the component frequencies and/or weights instead of drawing
        them.

    Returns
    -------
    waveform : Waveform
        Frequencies uniform on [-Omega, Omega]; complex Gaussian weights with
        unit expected total power.
    """
    if n_components < 1:
        raise ConfigError("n_components must be >= 1.")
    rng = np.random.default_rng(seed)
    if frequencies is None:
        frequencies = rng.uniform(-spec.bandwidth, spec.bandwidth, n_components)
    if amplitudes is None:
        amplitudes = (
            rng.standard_normal(n_components) + 1j * rng.standard_normal(n_components)
        ) / np.sqrt(2.0 * n_components)
    waveform = Waveform(frequencies, amplitudes)
    waveform.check_band(spec)
    return waveform


def tone(frequency: float) -> Waveform:
    """Unit-amplitude complex exponential at a baseband frequency."""
    return Waveform(np.array([frequency]), np.array([1.0 + 0.0j]))


@dataclass(frozen=True, eq=False)
class SnapshotBlock:
    """SnapshotBlock.

    A block of N demodulated snapshots from an M element array.

    Parameters
    ----------
    samples : np.ndarray
        (M, N) complex samples y_m[n] taken at t_n = n T_s.
    spec : SignalSpec
        Band and sampling of the block.
    geometry : ArrayGeometry
        The receiving array.
    """

    samples: np.ndarray
    spec: SignalSpec
    geometry: ArrayGeometry

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.ndim != 2 or samples.shape[0] != self.geometry.element_count:
            raise ValueError(
                f"Samples must have shape (M={self.geometry.element_count}, N), "
                f"got {samples.shape}."
            )
        if samples.shape[1] % 2 != 0 or samples.shape[1] < 2:
            raise ConfigError("Snapshot blocks need an even number of samples.")
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def n_elements(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.spec.sample_interval

    def with_samples(self, samples: np.ndarray) -> "SnapshotBlock":
        """A block with new samples and the same timing and geometry."""
        return SnapshotBlock(samples, self.spec, self.geometry)


@dataclass(frozen=True, eq=False)
class BeamSamples:
    """BeamSamples.

    Beamformed time samples, one row per beam.

    Parameters
    ----------
    samples : np.ndarray
        (B, N) complex beam samples.
    angles : np.ndarray
        (B,) angles or (B, 2) angle pairs of the beams.
    valid : np.ndarray
        (B,) flags, False for vacuous planar-array directions.
    edge : np.ndarray
        (N,) flags marking samples contaminated by block edges.
    """

    samples: np.ndarray
    angles: np.ndarray
    valid: np.ndarray
    edge: np.ndarray

    @property
    def n_beams(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, idx: int) -> np.ndarray:
        return self.samples[idx]


def simulate_snapshots(
    geometry: ArrayGeometry,
    spec: SignalSpec,
    sources: List[PlaneWaveSource],
    noise_variance: float,
    n_samples: int,
    seed: Optional[int] = None,
) -> SnapshotBlock:
    """Simulate a block of demodulated array snapshots.

    y_m[n] = sum_sources exp(-j 2 pi f_c tau_m) s(t_n - tau_m) + noise, with
    circularly symmetric complex Gaussian noise of variance `noise_variance`.

    Parameters
    ----------
    geometry : ArrayGeometry
        The receiving array.
    spec : SignalSpec
        Band and sampling.
    sources : list of PlaneWaveSource
        Plane waves; they superpose linearly.
    noise_variance : float
        Per-sample noise variance sigma^2.
    n_samples : int
        Even number of snapshots N.
    seed : int, optional
        Seed of the noise generator.
    """
    if noise_variance < 0:
        raise ConfigError(f"Noise variance must be >= 0, got {noise_variance}.")
    if n_samples < 2 or n_samples % 2 != 0:
        raise ConfigError(f"N must be even and positive, got {n_samples}.")
    if not sources and noise_variance == 0:
        raise ConfigError("Need at least one source or a positive noise variance.")

    t = np.arange(n_samples) * spec.sample_interval
    samples = np.zeros((geometry.element_count, n_samples), dtype=complex)
    for source in sources:
        tau = delays(geometry, source.angle)
        phase = np.exp(-2j * np.pi * spec.carrier * tau)
        samples += phase[:, np.newaxis] * source(t[np.newaxis, :] - tau[:, np.newaxis])

    if noise_variance > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(samples.shape) + 1j * rng.standard_normal(
            samples.shape
        )
        samples += np.sqrt(noise_variance / 2.0) * noise

    log.debug(
        f"Simulated {len(sources)} source(s) on {geometry.element_count} elements, "
        f"N={n_samples}, noise variance {noise_variance:g}"
    )
    return SnapshotBlock(samples, spec, geometry)
