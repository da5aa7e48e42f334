import enum
import hashlib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigError
from .utils import SPEED_OF_LIGHT

if TYPE_CHECKING:
    from .signals import SignalSpec

Angle = Union[float, Sequence[float], np.ndarray]


class ArrayKind(str, enum.Enum):
    ULA = "ula"
    UPA = "upa"
    ARBITRARY = "arbitrary"


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """ArrayGeometry.

    Sensor positions of a receiving array. Positions are stored in units of
    half a wavelength at the highest band frequency, so the delay of element
    m for unit direction v is simply coords[m] . v / (2 f_max).

    Parameters
    ----------
    kind : ArrayKind
        ULA (elements on the y-axis), UPA (square grid in the x-y plane) or
        arbitrary positions.
    coords : np.ndarray
        (M, 3) element positions in half-wavelength units. Element 0 is the
        phase centre of ULA/UPA geometries.
    max_frequency : float
        f_c + Omega in Hz, which fixes the half-wavelength unit.

    Usage
    -----
    spec = SignalSpec(carrier=20e9, bandwidth=5e9)
    geometry = ArrayGeometry.ula(128, spec)
    tau = delays(geometry, np.deg2rad(61.0))
    """

    kind: ArrayKind
    coords: np.ndarray
    max_frequency: float

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float, copy=True)
        if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] < 1:
            raise ConfigError("Array coordinates must be an (M, 3) array, M >= 1.")
        if not np.all(np.isfinite(coords)):
            raise ConfigError("Array coordinates must be finite.")
        if self.max_frequency <= 0:
            raise ConfigError("max_frequency must be positive.")
        kind = ArrayKind(self.kind)
        if kind == ArrayKind.UPA:
            side = int(round(np.sqrt(coords.shape[0])))
            if side * side != coords.shape[0]:
                raise ConfigError(
                    f"A UPA needs a perfect-square element count, got {coords.shape[0]}."
                )
        coords.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def ula(cls, n_elements: int, spec: "SignalSpec") -> "ArrayGeometry":
        """Half-wavelength spaced uniform linear array along the y-axis."""
        if n_elements < 1:
            raise ConfigError("A ULA needs at least one element.")
        coords = np.zeros((n_elements, 3))
        coords[:, 1] = np.arange(n_elements)
        return cls(ArrayKind.ULA, coords, spec.max_frequency)

    @classmethod
    def upa(cls, n_elements: int, spec: "SignalSpec") -> "ArrayGeometry":
        """Half-wavelength spaced sqrt(M) x sqrt(M) planar array. Element
        k * sqrt(M) + m sits at (k, m, 0)."""
        side = int(round(np.sqrt(n_elements)))
        if side < 1 or side * side != n_elements:
            raise ConfigError(
                f"A UPA needs a perfect-square element count, got {n_elements}."
            )
        k, m = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        coords = np.stack([k.ravel(), m.ravel(), np.zeros(n_elements)], axis=-1)
        return cls(ArrayKind.UPA, coords, spec.max_frequency)

    @classmethod
    def linear(cls, positions: np.ndarray, spec: "SignalSpec") -> "ArrayGeometry":
        """Collinear array with arbitrary element positions (meters) along the
        y-axis."""
        positions = np.asarray(positions, dtype=float).ravel()
        coords = np.zeros((positions.size, 3))
        coords[:, 1] = positions / half_wavelength(spec.max_frequency)
        return cls(ArrayKind.ARBITRARY, coords, spec.max_frequency)

    @classmethod
    def arbitrary(cls, positions: np.ndarray, spec: "SignalSpec") -> "ArrayGeometry":
        """Array with (M, 3) element positions in meters."""
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        return cls(
            ArrayKind.ARBITRARY,
            positions / half_wavelength(spec.max_frequency),
            spec.max_frequency,
        )

    @property
    def element_count(self) -> int:
        return self.coords.shape[0]

    @property
    def spacing(self) -> float:
        """Half wavelength at the maximum frequency, in meters."""
        return half_wavelength(self.max_frequency)

    @property
    def positions(self) -> np.ndarray:
        """Element positions in meters."""
        return self.coords * self.spacing

    @property
    def side(self) -> int:
        """Elements per side of a UPA."""
        if self.kind != ArrayKind.UPA:
            raise ConfigError("Only UPA geometries have a side length.")
        return int(round(np.sqrt(self.element_count)))

    @property
    def is_linear(self) -> bool:
        """True if every element lies on the y-axis."""
        return bool(np.all(self.coords[:, [0, 2]] == 0.0))

    @property
    def aperture(self) -> float:
        """Largest element separation in half-wavelength units."""
        if self.element_count == 1:
            return 0.0
        if self.kind == ArrayKind.ULA:
            return float(self.element_count - 1)
        if self.kind == ArrayKind.UPA:
            return float(np.sqrt(2.0) * (self.side - 1))
        return float(np.max(pdist(self.coords)))

    def delays_for_directions(self, directions: np.ndarray) -> np.ndarray:
        """Delays in seconds for unit direction vectors of shape (..., 3)."""
        return np.asarray(directions) @ self.coords.T / (2.0 * self.max_frequency)

    def digest(self) -> str:
        """A stable hash of the geometry, used to key plan caches."""
        m = hashlib.sha256()
        m.update(self.kind.value.encode())
        m.update(np.ascontiguousarray(self.coords).tobytes())
        m.update(np.float64(self.max_frequency).tobytes())
        return m.hexdigest()


def half_wavelength(frequency: float) -> float:
    return SPEED_OF_LIGHT / (2.0 * frequency)


def direction_vectors(kind: ArrayKind, angles: Angle) -> np.ndarray:
    """Unit propagation vectors for one or many arrival angles.

    Parameters
    ----------
    kind : ArrayKind
        Selects the angle convention.
    angles : float or array
        ULA: theta off broadside, shape () or (K,). UPA: (azimuth, off-normal
        angle), shape (2,) or (K, 2). Arbitrary: (azimuth, elevation) pairs,
        or scalar azimuths at zero elevation.

    Returns
    -------
    directions : np.ndarray
        Shape (3,) or (K, 3).
    """
    angles = np.asarray(angles, dtype=float)
    if not np.all(np.isfinite(angles)):
        raise ConfigError("Angles must be finite.")

    kind = ArrayKind(kind)
    if kind == ArrayKind.ULA:
        theta = angles
        _check_range(theta, np.pi / 2, "theta")
        return np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)

    if angles.ndim == 0 or (kind == ArrayKind.ARBITRARY and angles.shape[-1:] != (2,)):
        angles = np.stack([angles, np.zeros_like(angles)], axis=-1)
    if angles.shape[-1] != 2:
        raise ConfigError("Planar and arbitrary arrays take angle pairs.")
    first, second = angles[..., 0], angles[..., 1]
    _check_range(first, np.pi, "azimuth")
    _check_range(second, np.pi / 2, "elevation")

    if kind == ArrayKind.UPA:
        phi, theta = first, second
        return np.stack(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)],
            axis=-1,
        )

    az, el = first, second
    return np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1
    )


def _check_range(x: np.ndarray, bound: float, name: str):
    if np.any(np.abs(x) > bound * (1 + 1e-12)):
        raise ConfigError(f"{name} must lie in [-{bound:.6g}, {bound:.6g}].")


def delays(geometry: ArrayGeometry, angle: Angle) -> np.ndarray:
    """Plane-wave delays tau_m (seconds) of every element for `angle`.

    Batched angles return an array of shape (K, M).
    """
    return geometry.delays_for_directions(direction_vectors(geometry.kind, angle))


def max_delay_span(geometry: ArrayGeometry) -> float:
    """Worst-case max_m tau - min_m tau over all admissible directions."""
    return geometry.aperture / (2.0 * geometry.max_frequency)


def gamma_lower_bound(geometry: ArrayGeometry, spec: "SignalSpec", n_samples: int) -> float:
    """Smallest admissible oversampling factor for an N-sample block.

    gamma must strictly exceed epsilon * T / (N T_s), where T is the worst-case
    support of the delayed sample locations, span + (N - 1) T_s.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1.")
    support = max_delay_span(geometry) + (n_samples - 1) * spec.sample_interval
    return spec.epsilon * support / (n_samples * spec.sample_interval)


def min_snapshots(geometry: ArrayGeometry, spec: "SignalSpec") -> int:
    """Smallest even N exceeding twice the aperture delay span in samples."""
    bound = 2.0 * max_delay_span(geometry) / spec.sample_interval
    return int(2 * (np.floor(bound / 2.0) + 1))


def extension_factor(
    geometry: ArrayGeometry, spec: "SignalSpec", n_samples: int, gamma: float
) -> float:
    """gamma' = (gamma / epsilon) N T_s / T, the effective extension of the
    worst-case sample support."""
    support = max_delay_span(geometry) + (n_samples - 1) * spec.sample_interval
    return gamma / spec.epsilon * n_samples * spec.sample_interval / support


# Bounds quoted for the 128-element ULA and 256-element UPA at N = 64; the
# values computed by `gamma_lower_bound` differ (1.395 and 1.061).
REPORTED_GAMMA_BOUNDS = {ArrayKind.ULA: 1.63, ArrayKind.UPA: 1.11}
