import enum
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import finufft
import numpy as np

from .arrays import (
    ArrayGeometry,
    ArrayKind,
    Angle,
    direction_vectors,
    gamma_lower_bound,
)
from .czt import CztPlan
from .errors import ConfigError
from .signals import SignalSpec, SnapshotBlock
from .utils import check_dense_cap

log = logging.getLogger(__name__)

# deviation from an affine position map below which the chirp-z path is used
AFFINE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FourierExtensionBasis:
    """FourierExtensionBasis.

    Overcomplete sinusoid dictionary on the frequency grid

        omega_l = 2 pi epsilon (l - L/2) / (L T_s),  l = 1..L.

    Parameters
    ----------
    n_samples : int
        Block length N (even).
    n_frequencies : int
        Number of basis frequencies L (even).
    epsilon : float
        Corner-frequency expansion factor.
    sample_interval : float
        T_s in seconds.
    """

    n_samples: int
    n_frequencies: int
    epsilon: float
    sample_interval: float

    def __post_init__(self):
        if self.n_frequencies < 2 or self.n_frequencies % 2 != 0:
            raise ConfigError(f"L must be even and >= 2, got {self.n_frequencies}.")
        if self.n_samples < 1:
            raise ConfigError("N must be >= 1.")
        if self.epsilon <= 0 or self.sample_interval <= 0:
            raise ConfigError("epsilon and T_s must be positive.")

    @classmethod
    def from_gamma(
        cls, n_samples: int, gamma: float, spec: SignalSpec
    ) -> "FourierExtensionBasis":
        """L = gamma N rounded to the nearest even integer."""
        n_frequencies = max(2, 2 * int(round(gamma * n_samples / 2.0)))
        return cls(n_samples, n_frequencies, spec.epsilon, spec.sample_interval)

    @classmethod
    def for_array(
        cls,
        geometry: ArrayGeometry,
        spec: SignalSpec,
        n_samples: int,
        gamma: float,
    ) -> "FourierExtensionBasis":
        """Basis for `geometry`, refusing oversampling factors at or below the
        array's lower bound."""
        bound = gamma_lower_bound(geometry, spec, n_samples)
        basis = cls.from_gamma(n_samples, gamma, spec)
        if basis.gamma <= bound:
            raise ConfigError(
                f"gamma = {basis.gamma:.4f} (L = {basis.n_frequencies}) must exceed "
                f"the lower bound {bound:.4f} for this array and N = {n_samples}."
            )
        return basis

    @classmethod
    def fourier_series(
        cls, n_samples: int, spec: SignalSpec, interval: float, n_terms: int
    ) -> "FourierExtensionBasis":
        """Plain L-term Fourier series, orthogonal on an interval of length
        `interval`."""
        epsilon = n_terms * spec.sample_interval / interval
        return cls(n_samples, n_terms, epsilon, spec.sample_interval)

    @property
    def gamma(self) -> float:
        return self.n_frequencies / self.n_samples

    @property
    def offsets(self) -> np.ndarray:
        """Shifted indices l' = l - L/2 for l = 1..L."""
        return np.arange(1, self.n_frequencies + 1) - self.n_frequencies // 2

    @property
    def spacing(self) -> float:
        """Angular frequency spacing 2 pi epsilon / (L T_s)."""
        return 2.0 * np.pi * self.epsilon / (self.n_frequencies * self.sample_interval)

    @property
    def omegas(self) -> np.ndarray:
        return self.spacing * self.offsets

    @property
    def sample_times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.sample_interval

    @cached_property
    def temporal_plan(self) -> CztPlan:
        """Maps N samples to the L coefficients sum_n y[n] exp(-j omega_l t_n)."""
        L = self.n_frequencies
        first = self.offsets[0]
        return CztPlan(
            self.n_samples,
            L,
            np.exp(2j * np.pi * self.epsilon * first / L),
            np.exp(2j * np.pi * self.epsilon / L),
        )

    @cached_property
    def reconstruction_plan(self) -> CztPlan:
        """Maps L coefficients to N samples, up to the phase in
        `reconstruction_phase`."""
        L = self.n_frequencies
        return CztPlan(L, self.n_samples, 1.0, np.exp(-2j * np.pi * self.epsilon / L))

    @cached_property
    def reconstruction_phase(self) -> np.ndarray:
        n = np.arange(self.n_samples)
        first = self.offsets[0]
        return np.exp(2j * np.pi * self.epsilon * first * n / self.n_frequencies)

    def reconstruction_matrix(self, times: Optional[np.ndarray] = None) -> np.ndarray:
        """Dense F_u with entries exp(j omega_l t_n)."""
        times = self.sample_times if times is None else np.asarray(times)
        return np.exp(1j * np.outer(times, self.omegas))

    def check_block(self, block: SnapshotBlock):
        if block.n_samples != self.n_samples:
            raise ValueError(
                f"Block has N = {block.n_samples}, basis expects {self.n_samples}."
            )
        if not np.isclose(block.spec.sample_interval, self.sample_interval, rtol=1e-12):
            raise ConfigError("Block and basis sample intervals differ.")


class GridKind(str, enum.Enum):
    ULA = "ula"
    UPA = "upa"


def _fan_offsets(n: int) -> np.ndarray:
    """Centred offsets b' = b - (n + 1)/2 for b = 1..n."""
    return np.arange(1, n + 1) - (n + 1) / 2.0


def _fan_denominator(n: int) -> int:
    """Scale D with sine grid 2 b' / D: n - 1 for odd n, n for even n."""
    if n == 1:
        return 1
    return n - 1 if n % 2 else n


@dataclass(frozen=True, eq=False)
class BeamGrid:
    """BeamGrid.

    Sine-equispaced beam directions. Odd grids span [-1, 1] in sine; even
    grids are the symmetric grid 2 b' / B that stops short of endfire.

    Planar grids take the same spacing on both direction cosines; beam
    index a * sqrt(B) + b pairs mu_a (x-axis) with kappa_b (y-axis).
    Directions outside the unit disk are kept and flagged in `valid`.
    """

    kind: GridKind
    n_beams: int

    def __post_init__(self):
        kind = GridKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.n_beams < 1:
            raise ConfigError("A beam grid needs at least one beam.")
        if kind == GridKind.UPA:
            side = int(round(np.sqrt(self.n_beams)))
            if side * side != self.n_beams:
                raise ConfigError(
                    f"Planar beam grids need a perfect-square B, got {self.n_beams}."
                )

    @classmethod
    def ula(cls, n_beams: int) -> "BeamGrid":
        return cls(GridKind.ULA, n_beams)

    @classmethod
    def upa(cls, n_beams: int) -> "BeamGrid":
        return cls(GridKind.UPA, n_beams)

    @property
    def side(self) -> int:
        """Beams per direction-cosine axis."""
        if self.kind == GridKind.ULA:
            return self.n_beams
        return int(round(np.sqrt(self.n_beams)))

    @property
    def offsets(self) -> np.ndarray:
        return _fan_offsets(self.side)

    @property
    def denominator(self) -> int:
        return _fan_denominator(self.side)

    @property
    def axis(self) -> np.ndarray:
        """Direction cosines along one axis: sin(theta_b) for a ULA grid."""
        return 2.0 * self.offsets / self.denominator

    @property
    def sines(self) -> np.ndarray:
        if self.kind != GridKind.ULA:
            raise ConfigError("Only linear grids have beam sines.")
        return self.axis

    @property
    def cosines(self) -> np.ndarray:
        """(B, 2) pairs (mu, kappa) of a planar grid."""
        mu, kappa = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([mu.ravel(), kappa.ravel()], axis=-1)

    @property
    def valid(self) -> np.ndarray:
        if self.kind == GridKind.ULA:
            return np.ones(self.n_beams, dtype=bool)
        return np.sum(self.cosines ** 2, axis=-1) <= 1.0 + 1e-12

    @property
    def angles(self) -> np.ndarray:
        """theta_b for linear grids, (azimuth, off-normal) pairs for planar
        grids (vacuous directions clipped to the horizon)."""
        if self.kind == GridKind.ULA:
            return np.arcsin(np.clip(self.axis, -1.0, 1.0))
        mu, kappa = self.cosines.T
        radius = np.clip(np.hypot(mu, kappa), 0.0, 1.0)
        return np.stack([np.arctan2(kappa, mu), np.arcsin(radius)], axis=-1)

    @property
    def directions(self) -> np.ndarray:
        """(B, 3) propagation vectors; vacuous planar beams get a zero normal
        component."""
        if self.kind == GridKind.ULA:
            s = self.axis
            return np.stack([np.sqrt(1.0 - s ** 2), s, np.zeros_like(s)], axis=-1)
        mu, kappa = self.cosines.T
        normal = np.sqrt(np.clip(1.0 - mu ** 2 - kappa ** 2, 0.0, None))
        return np.stack([mu, kappa, normal], axis=-1)

    def delays(self, geometry: ArrayGeometry) -> np.ndarray:
        """(B, M) element delays for every beam of the grid."""
        return geometry.delays_for_directions(self.directions)

    def check_geometry(self, geometry: ArrayGeometry):
        if geometry.kind == ArrayKind.UPA and self.kind != GridKind.UPA:
            raise ConfigError("Planar arrays need a planar beam grid.")
        if geometry.kind != ArrayKind.UPA and self.kind != GridKind.ULA:
            raise ConfigError("Linear arrays need a linear beam grid.")


@dataclass(frozen=True, eq=False)
class BeamspaceCoefficients:
    """BeamspaceCoefficients.

    Parameters
    ----------
    w : np.ndarray
        (B, L) coefficients of a linear grid, (sqrt(B), sqrt(B), L) for a
        planar grid.
    grid : BeamGrid
    basis : FourierExtensionBasis
    zeta, xi : float
        Fan constants: beam b' at frequency l' sits on the contour
        exp(-j pi (zeta + xi l') b').
    """

    w: np.ndarray
    grid: BeamGrid
    basis: FourierExtensionBasis
    zeta: float
    xi: float

    @property
    def flat(self) -> np.ndarray:
        """(B, L) view with beams in grid order."""
        return self.w.reshape(self.grid.n_beams, self.basis.n_frequencies)

    def beam(self, idx: int) -> np.ndarray:
        return self.flat[idx]


def fan_constants(
    grid: BeamGrid, basis: FourierExtensionBasis, spec: SignalSpec
) -> tuple:
    """zeta = 2 f_c / (D f~), xi = 2 epsilon / (D L T_s f~) with f~ = f_c +
    Omega and D the grid denominator."""
    scale = grid.denominator * spec.max_frequency
    zeta = 2.0 * spec.carrier / scale
    xi = 2.0 * basis.epsilon / (basis.n_frequencies * basis.sample_interval * scale)
    return zeta, xi


class FanTransform:
    """FanTransform.

    Precomputed fan-shaped beamspace projection w_b = F_b^H y for every beam
    of a sine-equispaced grid. A temporal chirp-z maps each sensor's N
    samples to the L basis frequencies; spatial chirp-z transforms along
    lines whose slope grows with frequency then map sensors to beams.

    Parameters
    ----------
    geometry : ArrayGeometry
        ULA, UPA, or a linear array with arbitrary element positions.
    basis : FourierExtensionBasis
    grid : BeamGrid
    spec : SignalSpec
    accuracy : float, optional
        Target accuracy of the non-uniform FFT used for non-affine element
        positions, in (0, 1e-2].
    """

    def __init__(
        self,
        geometry: ArrayGeometry,
        basis: FourierExtensionBasis,
        grid: BeamGrid,
        spec: SignalSpec,
        accuracy: float = 1e-10,
    ):
        grid.check_geometry(geometry)
        if not np.isclose(geometry.max_frequency, spec.max_frequency, rtol=1e-12):
            raise ConfigError(
                "Geometry half-wavelength unit does not match f_c + Omega of the signal spec."
            )
        if not (0.0 < accuracy <= 1e-2):
            raise ConfigError(f"NUFFT accuracy must lie in (0, 1e-2], got {accuracy}.")
        if geometry.kind == ArrayKind.ARBITRARY and not geometry.is_linear:
            raise ConfigError("Arbitrary geometries must be collinear along the y-axis.")

        self.geometry = geometry
        self.basis = basis
        self.grid = grid
        self.spec = spec
        self.accuracy = accuracy
        self.zeta, self.xi = fan_constants(grid, basis, spec)

        # contour slope of every basis frequency
        self._slopes = self.zeta + self.xi * basis.offsets

        self._affine = None
        self._nufft = False
        if geometry.kind == ArrayKind.UPA:
            self._spatial = self._spatial_plan(geometry.side, 1.0)
        elif geometry.kind == ArrayKind.ULA:
            self._spatial = self._spatial_plan(geometry.element_count, 1.0)
        else:
            g = geometry.coords[:, 1]
            self._affine = _affine_map(g)
            if self._affine is not None:
                origin, step = self._affine
                self._spatial = self._spatial_plan(geometry.element_count, step)
                self._origin_phase = np.exp(
                    1j * np.pi * np.outer(grid.offsets, self._slopes) * origin
                )
                log.debug(f"Element positions are affine (step {step:g}): chirp-z path")
            else:
                self._nufft = True
                self._positions = g
                log.debug(f"Non-affine element positions: NUFFT path, eps={accuracy:g}")

    @property
    def uses_nufft(self) -> bool:
        return self._nufft

    def _spatial_plan(self, n_elements: int, step: float) -> CztPlan:
        """Plan for sum_m x[m] exp(j pi s b' step m), one contour per basis
        frequency."""
        s = self._slopes * step
        first = self.grid.offsets[0]
        return CztPlan(
            n_elements,
            self.grid.side,
            np.exp(-1j * np.pi * s * first),
            np.exp(-1j * np.pi * s),
        )

    def temporal(self, samples: np.ndarray) -> np.ndarray:
        """(..., N) -> (..., L)."""
        return self.basis.temporal_plan(samples)

    def __call__(self, samples: np.ndarray) -> np.ndarray:
        """Project an (M, N) block to beamspace."""
        samples = np.asarray(samples)
        if samples.shape != (self.geometry.element_count, self.basis.n_samples):
            raise ValueError(
                f"Expected samples of shape "
                f"{(self.geometry.element_count, self.basis.n_samples)}, "
                f"got {samples.shape}."
            )
        spectra = self.temporal(samples)

        if self.geometry.kind == ArrayKind.UPA:
            side = self.geometry.side
            cube = spectra.reshape(side, side, -1)
            # sum over m (y-axis, kappa) for every row k, then over k (mu)
            partial = self._spatial(cube.transpose(0, 2, 1))
            full = self._spatial(partial.transpose(2, 1, 0))
            return full.transpose(2, 0, 1)

        if self._nufft:
            return self._nonuniform(spectra)

        w = self._spatial(spectra.T).T
        if self._affine is not None:
            w = w * self._origin_phase
        return w

    def _nonuniform(self, spectra: np.ndarray) -> np.ndarray:
        n_beams = self.grid.side
        # half-integer offsets of even grids are split off as a phase
        shift = 0.0 if n_beams % 2 else 0.5
        w = np.empty((n_beams, self.basis.n_frequencies), dtype=complex)
        for idx, slope in enumerate(self._slopes):
            phase = np.pi * slope * self._positions
            points = np.mod(phase + np.pi, 2.0 * np.pi) - np.pi
            weights = spectra[:, idx] * np.exp(1j * shift * phase)
            w[:, idx] = finufft.nufft1d1(
                points,
                np.ascontiguousarray(weights),
                n_beams,
                eps=self.accuracy,
                isign=1,
                modeord=0,
            )
        return w

    def project(self, block: SnapshotBlock) -> BeamspaceCoefficients:
        self.basis.check_block(block)
        if block.geometry is not self.geometry and (
            block.geometry.digest() != self.geometry.digest()
        ):
            raise ConfigError("Block geometry differs from the transform's geometry.")
        return BeamspaceCoefficients(
            self(block.samples), self.grid, self.basis, self.zeta, self.xi
        )


def _affine_map(g: np.ndarray) -> Optional[tuple]:
    """(origin, step) if g[m] = origin + step * m, else None."""
    if g.size == 1:
        return float(g[0]), 1.0
    m = np.arange(g.size)
    step = (g[-1] - g[0]) / (g.size - 1)
    fit = g[0] + step * m
    scale = max(np.max(np.abs(g)), 1.0)
    if step != 0 and np.max(np.abs(fit - g)) <= AFFINE_TOL * scale:
        return float(g[0]), float(step)
    return None


def fan_project_ula(
    block: SnapshotBlock, basis: FourierExtensionBasis, grid: BeamGrid
) -> BeamspaceCoefficients:
    """Beamspace coefficients of a ULA block on a linear beam grid."""
    if block.geometry.kind != ArrayKind.ULA:
        raise ConfigError("fan_project_ula needs a ULA geometry.")
    return FanTransform(block.geometry, basis, grid, block.spec).project(block)


def fan_project_upa(
    block: SnapshotBlock, basis: FourierExtensionBasis, grid: BeamGrid
) -> BeamspaceCoefficients:
    """Beamspace coefficients of a UPA block on a planar beam grid."""
    if block.geometry.kind != ArrayKind.UPA:
        raise ConfigError("fan_project_upa needs a UPA geometry.")
    return FanTransform(block.geometry, basis, grid, block.spec).project(block)


def fan_project_nonuniform(
    block: SnapshotBlock,
    basis: FourierExtensionBasis,
    grid: BeamGrid,
    accuracy: float = 1e-10,
) -> BeamspaceCoefficients:
    """Beamspace coefficients of a collinear array with arbitrary element
    positions, via a type-1 NUFFT (or an exact chirp-z if the positions are
    affine in the element index)."""
    if block.geometry.kind == ArrayKind.UPA:
        raise ConfigError("fan_project_nonuniform needs a linear geometry.")
    return FanTransform(block.geometry, basis, grid, block.spec, accuracy).project(block)


def fan_project(
    block: SnapshotBlock,
    basis: FourierExtensionBasis,
    grid: BeamGrid,
    accuracy: float = 1e-10,
) -> BeamspaceCoefficients:
    """Dispatch on the block's geometry."""
    kind = block.geometry.kind
    if kind == ArrayKind.ULA:
        return fan_project_ula(block, basis, grid)
    if kind == ArrayKind.UPA:
        return fan_project_upa(block, basis, grid)
    return fan_project_nonuniform(block, basis, grid, accuracy)


def _as_delays(geometry: ArrayGeometry, angles: Union[Angle, np.ndarray]) -> np.ndarray:
    return np.atleast_2d(
        geometry.delays_for_directions(direction_vectors(geometry.kind, angles))
    )


def projection_phases(
    delays: np.ndarray, basis: FourierExtensionBasis, spec: SignalSpec
) -> np.ndarray:
    """exp(-j (2 pi f_c + omega_l) tau_m) of shape (..., M, L)."""
    rate = 2.0 * np.pi * spec.carrier + basis.omegas
    return np.exp(-1j * delays[..., np.newaxis] * rate)


def fan_project_direct(
    block: SnapshotBlock, basis: FourierExtensionBasis, angles: Angle
) -> np.ndarray:
    """Direct evaluation of F_theta^H y for arbitrary angles.

    Returns
    -------
    w : np.ndarray
        (K, L) coefficients, one row per angle (a single angle gives K = 1).
    """
    basis.check_block(block)
    tau = _as_delays(block.geometry, angles)
    temporal = np.exp(-1j * np.outer(basis.omegas, block.sample_times))
    spectra = block.samples @ temporal.T
    phases = projection_phases(tau, basis, block.spec)
    return np.einsum("kml,ml->kl", np.conj(phases), spectra)


def extension_matrix(
    geometry: ArrayGeometry,
    spec: SignalSpec,
    basis: FourierExtensionBasis,
    angle: Angle,
    times: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Dense Fourier extension matrix F_theta of shape (M N, L).

    Row m * N + n holds exp(-j 2 pi f_c tau_m) exp(j omega_l (t_n - tau_m)),
    matching `samples.ravel()` of an (M, N) block.
    """
    times = basis.sample_times if times is None else np.asarray(times)
    check_dense_cap(geometry.element_count, times.size, basis.n_frequencies)
    tau = _as_delays(geometry, angle)[0]
    phases = projection_phases(tau, basis, spec)
    temporal = np.exp(1j * np.outer(times, basis.omegas))
    F = phases[:, np.newaxis, :] * temporal[np.newaxis, :, :]
    return F.reshape(-1, basis.n_frequencies)
