import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from .arrays import ArrayGeometry, Angle, direction_vectors
from .errors import ConfigError, NumericalError
from .fan import (
    BeamspaceCoefficients,
    FourierExtensionBasis,
    GridKind,
    extension_matrix,
    projection_phases,
)
from .signals import PlaneWaveSource, SignalSpec, SnapshotBlock, simulate_snapshots, tone
from .toeplitz import GsGenerators, ToeplitzSystem, apply_inverse_superfast

log = logging.getLogger(__name__)

# largest condition number of F_u accepted for time-domain nulling
MAX_RECONSTRUCTION_COND = 1e10


def interpolate_offgrid(
    coeffs: BeamspaceCoefficients, angle: float, neighbours: int = 8
) -> np.ndarray:
    """Beamspace coefficients of an off-grid beam by spline interpolation.

    A natural cubic spline in sin(theta) through the `neighbours` grid beams
    around `angle` is evaluated per basis frequency, separately on the real
    and imaginary parts. Near the grid edges the neighbourhood is clamped
    to the grid.

    Parameters
    ----------
    coeffs : BeamspaceCoefficients
        Coefficients on a linear beam grid.
    angle : float
        Target angle theta*.
    neighbours : int
        Number of grid beams used, even.

    Returns
    -------
    w : np.ndarray
        (L,) coefficients at theta*.
    """
    grid = coeffs.grid
    if grid.kind != GridKind.ULA:
        raise ConfigError("Off-grid interpolation needs a linear beam grid.")
    if neighbours < 2 or neighbours % 2 != 0:
        raise ConfigError(f"Neighbourhood size must be even and >= 2, got {neighbours}.")

    sines = grid.sines
    target = np.sin(angle)
    if target < sines[0] - 1e-12 or target > sines[-1] + 1e-12:
        raise ConfigError(
            f"Angle {angle:.6f} rad lies outside the grid coverage "
            f"[{np.arcsin(sines[0]):.6f}, {np.arcsin(sines[-1]):.6f}]."
        )

    w = coeffs.flat
    nearest = int(np.argmin(np.abs(sines - target)))
    if abs(sines[nearest] - target) <= 1e-12:
        return w[nearest].copy()

    n = min(neighbours, grid.n_beams)
    right = int(np.searchsorted(sines, target))
    start = int(np.clip(right - n // 2, 0, grid.n_beams - n))
    window = slice(start, start + n)

    knots = sines[window]
    real = CubicSpline(knots, w[window].real, axis=0, bc_type="natural")
    imag = CubicSpline(knots, w[window].imag, axis=0, bc_type="natural")
    return real(target) + 1j * imag(target)


@dataclass(frozen=True, eq=False)
class InterferenceSet:
    """InterferenceSet.

    Parameters
    ----------
    angles : np.ndarray
        Interferer directions, (P,) or (P, 2); may be off-grid.
    delta : float
        Regularization of the interferer systems.
    """

    angles: np.ndarray
    delta: float = 1e-5

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        if angles.ndim == 0:
            angles = angles[np.newaxis]
        object.__setattr__(self, "angles", angles)
        if self.delta <= 0:
            raise ConfigError("delta must be positive.")
        flat = angles.reshape(len(angles), -1) if len(angles) else angles
        for i in range(len(flat)):
            for j in range(i + 1, len(flat)):
                if np.allclose(flat[i], flat[j]):
                    raise ConfigError("Interferer directions must be distinct.")

    def __len__(self) -> int:
        return len(self.angles)

    def __iter__(self):
        return iter(self.angles)


def null_arrayspace(
    block: SnapshotBlock, basis: FourierExtensionBasis, interferers: InterferenceSet
) -> SnapshotBlock:
    """Remove each interferer's Fourier extension subspace from the array
    data: y - sum_p F_p (F_p^H F_p + delta I)^-1 F_p^H y."""
    y = block.samples.ravel()
    residual = y.copy()
    for angle in interferers:
        F = extension_matrix(block.geometry, block.spec, basis, angle)
        gram = F.conj().T @ F + interferers.delta * np.eye(basis.n_frequencies)
        beta = linalg.cho_solve(linalg.cho_factor(gram), F.conj().T @ y)
        residual -= F @ beta
    return block.with_samples(residual.reshape(block.samples.shape))


def _cross_gram(
    basis: FourierExtensionBasis,
    spec: SignalSpec,
    target_delays: np.ndarray,
    interferer_delays: np.ndarray,
) -> np.ndarray:
    """F^H F_p for every target beam, (K, L, L), using the separable form
    (temporal Gram) * (U^H V)."""
    t = basis.sample_times
    temporal = np.exp(1j * np.outer(t, basis.omegas))
    temporal_gram = temporal.conj().T @ temporal
    U = projection_phases(target_delays, basis, spec)
    V = projection_phases(interferer_delays, basis, spec)
    return temporal_gram * np.einsum("kml,mj->klj", U.conj(), V)


def _interferer_delays(geometry: ArrayGeometry, angle: Angle) -> np.ndarray:
    return geometry.delays_for_directions(direction_vectors(geometry.kind, angle))


def _interferer_gram(
    basis: FourierExtensionBasis, spec: SignalSpec, delays: np.ndarray, delta: float
) -> np.ndarray:
    gram = _cross_gram(basis, spec, delays[np.newaxis], delays)[0]
    return gram + delta * np.eye(basis.n_frequencies)


def beamspace_couplers(
    basis: FourierExtensionBasis,
    geometry: ArrayGeometry,
    spec: SignalSpec,
    target_delays: np.ndarray,
    interferers: InterferenceSet,
) -> np.ndarray:
    """Couplers G_p = F^H F_p (F_p^H F_p + delta I)^-1.

    Parameters
    ----------
    target_delays : np.ndarray
        (K, M) element delays of the beams to clean, e.g. `grid.delays`.

    Returns
    -------
    couplers : np.ndarray
        (P, K, L, L).
    """
    target_delays = np.atleast_2d(target_delays)
    couplers = []
    for angle in interferers:
        tau = _interferer_delays(geometry, angle)
        cross = _cross_gram(basis, spec, target_delays, tau)
        factor = linalg.cho_factor(_interferer_gram(basis, spec, tau, interferers.delta))
        # A_p Hermitian: (A_p^-1 cross^H)^H = cross A_p^-1
        solved = np.stack([linalg.cho_solve(factor, c.conj().T) for c in cross])
        couplers.append(solved.conj().transpose(0, 2, 1))
    L = basis.n_frequencies
    return np.stack(couplers) if couplers else np.zeros((0, len(target_delays), L, L), complex)


def null_beamspace(
    w: np.ndarray,
    interferer_w: np.ndarray,
    couplers: np.ndarray,
    system: Union[GsGenerators, ToeplitzSystem],
) -> np.ndarray:
    """Interference-nulled coefficients A^-1 (w - sum_p G_p w_p).

    Parameters
    ----------
    w : np.ndarray
        (K, L) beam coefficients.
    interferer_w : np.ndarray
        (P, L) coefficients F_p^H y of the interferer directions.
    couplers : np.ndarray
        (P, K, L, L) from `beamspace_couplers`.
    system : GsGenerators or ToeplitzSystem
        Systems of the K beams.
    """
    w = np.atleast_2d(w)
    interferer_w = np.asarray(interferer_w).reshape(-1, w.shape[-1])
    couplers = np.asarray(couplers)
    if couplers.shape[0] != interferer_w.shape[0]:
        raise ConfigError(
            f"{interferer_w.shape[0]} interferers declared but "
            f"{couplers.shape[0]} couplers supplied."
        )
    residual = w.copy()
    for p in range(interferer_w.shape[0]):
        residual -= couplers[p] @ interferer_w[p]

    if isinstance(system, GsGenerators):
        return apply_inverse_superfast(system, residual if system.x.ndim == 2 else residual[0])
    beta = np.stack(
        [linalg.solve(system.dense(k), r, assume_a="pos") for k, r in enumerate(residual)]
    )
    return beta if system.batched else beta[0]


@dataclass(frozen=True, eq=False)
class TimeDomainCouplers:
    """TimeDomainCouplers.

    Maps G'_p = F_u H_p F_u^+ with H_p = A^-1 F^H F_p that remove interferer
    beams from time-domain beams sampled at `times`.

    Parameters
    ----------
    maps : np.ndarray
        (P, K, N_r, N_r).
    times : np.ndarray
        (N_r,) reconstruction times.
    deviation : float
        Spectral-norm deviation of F_u^+ F_u from the identity.
    """

    maps: np.ndarray
    times: np.ndarray
    deviation: float


def timedomain_couplers(
    basis: FourierExtensionBasis,
    geometry: ArrayGeometry,
    spec: SignalSpec,
    target_delays: np.ndarray,
    systems: ToeplitzSystem,
    interferers: InterferenceSet,
    times: Optional[np.ndarray] = None,
) -> TimeDomainCouplers:
    """Time-domain couplers for beams reconstructed at `times`.

    Raises
    ------
    NumericalError
        F_u(times) is too ill-conditioned for a pseudo-inverse.
    """
    Fu = basis.reconstruction_matrix(times)
    cond = np.linalg.cond(Fu)
    if not np.isfinite(cond) or cond > MAX_RECONSTRUCTION_COND:
        raise NumericalError(
            f"Reconstruction matrix is rank deficient (condition number {cond:.3g} "
            f"> {MAX_RECONSTRUCTION_COND:.0e}); widen or oversample the interval."
        )
    pinv = linalg.pinv(Fu)
    deviation = float(np.linalg.norm(pinv @ Fu - np.eye(basis.n_frequencies), 2))
    log.info(f"Time-domain nulling: |F_u^+ F_u - I| = {deviation:.3e}")

    target_delays = np.atleast_2d(target_delays)
    maps = []
    for angle in interferers:
        tau = _interferer_delays(geometry, angle)
        cross = _cross_gram(basis, spec, target_delays, tau)
        H = np.stack(
            [linalg.solve(systems.dense(k), c, assume_a="pos") for k, c in enumerate(cross)]
        )
        maps.append(Fu @ H @ pinv)
    times = basis.sample_times if times is None else np.asarray(times)
    n_r = times.size
    maps = np.stack(maps) if maps else np.zeros((0, len(target_delays), n_r, n_r), complex)
    return TimeDomainCouplers(maps, times, deviation)


def null_timedomain(
    beams: np.ndarray, interferer_beams: np.ndarray, couplers: TimeDomainCouplers
) -> np.ndarray:
    """Subtract sum_p G'_p y_p from time-domain beams of shape (K, N_r)."""
    beams = np.atleast_2d(beams)
    interferer_beams = np.atleast_2d(interferer_beams)
    if couplers.maps.shape[0] != interferer_beams.shape[0]:
        raise ConfigError(
            f"{interferer_beams.shape[0]} interferer beams but "
            f"{couplers.maps.shape[0]} couplers."
        )
    out = beams.copy()
    for p, y_p in enumerate(interferer_beams):
        out -= couplers.maps[p] @ y_p
    return out


@dataclass(frozen=True, eq=False)
class BeamPattern:
    """BeamPattern.

    Parameters
    ----------
    steering : np.ndarray
        Steered direction.
    angles : np.ndarray
        (K,) evaluation angles.
    frequencies : np.ndarray
        (F,) RF test frequencies in Hz.
    gain_db : np.ndarray
        (F, K) output power, normalized so the largest entry is 0 dB.
    """

    steering: np.ndarray
    angles: np.ndarray
    frequencies: np.ndarray
    gain_db: np.ndarray

    def _column(self, angle: float) -> int:
        return int(np.argmin(np.abs(self.angles - angle)))

    def response(self, angle: float) -> np.ndarray:
        """(F,) gain at the evaluation angle closest to `angle`."""
        return self.gain_db[:, self._column(angle)]

    def steered_spread(self) -> float:
        """Peak-to-peak gain variation across frequency in the steered
        direction, in dB."""
        response = self.response(float(np.ravel(self.steering)[0]))
        return float(np.max(response) - np.min(response))

    def null_depth(self, angle: float) -> float:
        """Attenuation at `angle` in dB below the pattern peak, taken at the
        frequency of minimum gain."""
        return float(-np.min(self.response(angle)))

    def worst_null_depth(self, angle: float) -> float:
        """Shallowest attenuation over frequency at `angle`, in dB."""
        return float(-np.max(self.response(angle)))

    def rows(self):
        for f, freq in enumerate(self.frequencies):
            for k, angle in enumerate(self.angles):
                yield {
                    "angle": float(angle),
                    "frequency": float(freq),
                    "gain_db": float(self.gain_db[f, k]),
                }


def beam_pattern(
    beamformer: Callable[[SnapshotBlock], np.ndarray],
    geometry: ArrayGeometry,
    spec: SignalSpec,
    n_samples: int,
    steering: Angle,
    angles: Sequence[float],
    frequencies: Optional[Sequence[float]] = None,
    exclude: Optional[np.ndarray] = None,
    normalize: bool = True,
) -> BeamPattern:
    """Beam pattern of a time-domain beamformer.

    For every (angle, frequency) a noiseless unit-amplitude monochromatic
    plane wave is simulated and the mean output power over the samples not
    flagged in `exclude` is recorded.

    Parameters
    ----------
    beamformer : callable
        Maps a SnapshotBlock to the (N,) samples of the steered beam.
    frequencies : sequence of float, optional
        RF frequencies; defaults to 20 evenly spaced over the band.
    exclude : np.ndarray, optional
        (N,) flags of samples left out of the power average.
    """
    frequencies = spec.band(20) if frequencies is None else np.asarray(frequencies)
    angles = np.asarray(angles, dtype=float)
    keep = np.ones(n_samples, dtype=bool) if exclude is None else ~np.asarray(exclude)

    power = np.empty((len(frequencies), len(angles)))
    for f, freq in enumerate(frequencies):
        waveform = tone(freq - spec.carrier)
        for k, angle in enumerate(angles):
            source = PlaneWaveSource(angle, waveform)
            block = simulate_snapshots(geometry, spec, [source], 0.0, n_samples)
            beam = np.asarray(beamformer(block))
            power[f, k] = np.mean(np.abs(beam[keep]) ** 2)

    reference = np.max(power) if normalize else 1.0
    gain_db = 10.0 * np.log10(np.maximum(power, np.finfo(float).tiny) / reference)
    return BeamPattern(np.asarray(steering, dtype=float), angles, frequencies, gain_db)
