"""Steered single-beam handles with a uniform interface, used by beam
patterns and the experiment runners."""

import logging
from typing import Optional

import numpy as np
from scipy import linalg

from .arrays import ArrayGeometry, ArrayKind, Angle, delays, direction_vectors
from .baselines import das_beamform, fds_beamform_ula, fds_beamform_upa
from .beamspace import (
    InterferenceSet,
    TimeDomainCouplers,
    beamspace_couplers,
    interpolate_offgrid,
    null_beamspace,
    null_timedomain,
    timedomain_couplers,
)
from .core import FbstConfig, Variant, setup
from .errors import ConfigError
from .fan import FourierExtensionBasis, GridKind, extension_matrix
from .signals import SignalSpec, SnapshotBlock
from .toeplitz import build_toeplitz, gs_factorize, reconstruct, toeplitz_from_delays
from .utils import guard_mask

log = logging.getLogger(__name__)


class Beamformer:
    """Beamformer.

    Base class of the steered handles. Calling a handle on a SnapshotBlock
    returns the (N,) time samples of the beam steered at `steering`;
    `exclude` flags samples that accuracy metrics must leave out.

    Parameters
    ----------
    geometry : ArrayGeometry
    spec : SignalSpec
    n_samples : int
    steering : float or tuple
        Steered direction in the geometry's angle convention.
    """

    name = "beamformer"

    def __init__(
        self, geometry: ArrayGeometry, spec: SignalSpec, n_samples: int, steering: Angle
    ):
        self.geometry = geometry
        self.spec = spec
        self.n_samples = n_samples
        self.steering = np.asarray(steering, dtype=float)
        self._exclude = guard_mask(n_samples)

    @property
    def exclude(self) -> np.ndarray:
        return self._exclude

    def __call__(self, block: SnapshotBlock) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(steering={np.round(self.steering, 6).tolist()})"


class FbstBeamformer(Beamformer):
    """FbstBeamformer.

    Dense single-beam FBST operator W = F_u A^-1 (F^H - sum_p G_p F_p^H),
    steered anywhere (on or off the grid) and optionally nulling the
    interferers in `interferers` through the beamspace couplers G_p. This
    is the reference for `FbstPlanBeamformer`; it builds every matrix
    densely.

    Parameters
    ----------
    config : FbstConfig
    steering : float or tuple
    interferers : InterferenceSet, optional
    """

    name = "fbst"

    def __init__(
        self,
        config: FbstConfig,
        steering: Angle,
        interferers: Optional[InterferenceSet] = None,
    ):
        super().__init__(config.geometry, config.spec, config.n_samples, steering)
        self.config = config
        self.basis = FourierExtensionBasis.for_array(
            config.geometry, config.spec, config.n_samples, config.gamma
        )
        self.interferers = interferers

        L = self.basis.n_frequencies
        F = extension_matrix(config.geometry, config.spec, self.basis, steering)
        gram = F.conj().T @ F + config.delta * np.eye(L)
        rhs = F.conj().T
        for angle in interferers if interferers is not None else ():
            F_p = extension_matrix(config.geometry, config.spec, self.basis, angle)
            gram_p = F_p.conj().T @ F_p + interferers.delta * np.eye(L)
            # G_p F_p^H = F^H F_p A_p^-1 F_p^H
            rhs = rhs - (F.conj().T @ F_p) @ linalg.solve(
                gram_p, F_p.conj().T, assume_a="pos"
            )
        beta_map = linalg.solve(gram, rhs, assume_a="pos")
        self._operator = self.basis.reconstruction_matrix() @ beta_map

    def __call__(self, block: SnapshotBlock) -> np.ndarray:
        return self._operator @ block.samples.ravel()


class FbstPlanBeamformer(Beamformer):
    """FbstPlanBeamformer.

    Steered FBST beam on the fast path. The plan's fan transform projects
    the block onto its beam grid; the steered beam and every interferer are
    spline-interpolated from the grid, the interferers are removed in
    beamspace and the steered system is solved with its Gohberg-Semencul
    generators.

    Parameters
    ----------
    config : FbstConfig
        Plan configuration with a linear beam grid covering `steering` and
        the interferers.
    steering : float
    interferers : InterferenceSet, optional
    neighbours : int
        Grid beams per interpolation.
    """

    name = "fbst"

    def __init__(
        self,
        config: FbstConfig,
        steering: float,
        interferers: Optional[InterferenceSet] = None,
        neighbours: int = 8,
    ):
        super().__init__(config.geometry, config.spec, config.n_samples, steering)
        if config.grid_kind != GridKind.ULA:
            raise ConfigError("The fast FBST handle interpolates on linear beam grids.")
        self.plan = setup(config.with_variant(Variant.SUPERFAST))
        self.neighbours = neighbours
        if interferers is None:
            interferers = InterferenceSet(np.zeros(0), config.delta)
        self.interferers = interferers

        basis = self.plan.basis
        angle = float(self.steering)
        system = build_toeplitz(basis, config.geometry, angle, config.delta)
        self._generators = gs_factorize(system, fallback=config.fallback)
        self._couplers = beamspace_couplers(
            basis,
            config.geometry,
            config.spec,
            delays(config.geometry, angle)[np.newaxis],
            interferers,
        )

    def __call__(self, block: SnapshotBlock) -> np.ndarray:
        coeffs = self.plan.beamspace(block)
        w = interpolate_offgrid(coeffs, float(self.steering), self.neighbours)
        w_p = np.zeros((len(self.interferers), w.size), dtype=complex)
        for p, angle in enumerate(self.interferers):
            w_p[p] = interpolate_offgrid(coeffs, float(angle), self.neighbours)
        beta = null_beamspace(w, w_p, self._couplers, self._generators)
        return reconstruct(self.plan.basis, beta)


class _TimeDomainNulling:
    """Mixin applying time-domain interferer removal to a baseline's beams."""

    def _prepare_nulls(
        self,
        config: Optional[FbstConfig],
        target: Angle,
        interferers: Optional[InterferenceSet],
    ) -> Optional[TimeDomainCouplers]:
        if interferers is None or len(interferers) == 0:
            return None
        if config is None:
            raise ConfigError("Time-domain nulling needs an FbstConfig for the couplers.")
        basis = FourierExtensionBasis.for_array(
            config.geometry, config.spec, config.n_samples, config.gamma
        )
        tau = np.atleast_2d(delays(config.geometry, target))
        systems = toeplitz_from_delays(basis, tau, config.delta)
        return timedomain_couplers(
            basis, config.geometry, config.spec, tau, systems, interferers
        )


class DasBeamformer(Beamformer, _TimeDomainNulling):
    """DasBeamformer.

    Delay-and-sum with R-tap sinc fractional delays, steered exactly at
    `steering`. With `interferers`, the interferers' DS beams are removed
    through time-domain couplers computed from `config`.
    """

    name = "das"

    def __init__(
        self,
        geometry: ArrayGeometry,
        spec: SignalSpec,
        n_samples: int,
        steering: Angle,
        n_taps: int = 16,
        interferers: Optional[InterferenceSet] = None,
        config: Optional[FbstConfig] = None,
    ):
        super().__init__(geometry, spec, n_samples, steering)
        self.n_taps = n_taps
        self.interferers = interferers

        silent = SnapshotBlock(
            np.zeros((geometry.element_count, n_samples), dtype=complex), spec, geometry
        )
        angles = [self.steering] + (list(interferers) if interferers is not None else [])
        edge = guard_mask(n_samples)
        for angle in angles:
            edge |= das_beamform(silent, angle, n_taps).edge
        self._exclude = edge
        self._couplers = self._prepare_nulls(config, self.steering, interferers)

    def __call__(self, block: SnapshotBlock) -> np.ndarray:
        beam = das_beamform(block, self.steering, self.n_taps).samples[0]
        if self._couplers is None:
            return beam
        interfering = np.stack(
            [das_beamform(block, a, self.n_taps).samples[0] for a in self.interferers]
        )
        return null_timedomain(beam, interfering, self._couplers)[0]


class FdsBeamformer(Beamformer, _TimeDomainNulling):
    """FdsBeamformer.

    Fast delay-and-sum; the output is the FDS beam closest to `steering`.
    Interferers are removed with the FDS beams closest to them, through
    time-domain couplers built for those beam directions.
    """

    name = "fds"

    def __init__(
        self,
        geometry: ArrayGeometry,
        spec: SignalSpec,
        n_samples: int,
        steering: Angle,
        n_taps: int = 16,
        interferers: Optional[InterferenceSet] = None,
        config: Optional[FbstConfig] = None,
    ):
        super().__init__(geometry, spec, n_samples, steering)
        if geometry.kind not in (ArrayKind.ULA, ArrayKind.UPA):
            raise ConfigError("FDS needs a ULA or UPA geometry.")
        self.n_taps = n_taps
        self._run = fds_beamform_upa if geometry.kind == ArrayKind.UPA else fds_beamform_ula

        silent = SnapshotBlock(
            np.zeros((geometry.element_count, n_samples), dtype=complex), spec, geometry
        )
        beams = self._run(silent, n_taps)
        self._angles = beams.angles
        self._directions = direction_vectors(geometry.kind, beams.angles)
        self._directions[~beams.valid] = 0.0
        self._exclude = guard_mask(n_samples) | beams.edge

        self.beam = self._nearest(self.steering)
        self._interferer_beams = []
        fds_interferers = None
        if interferers is not None and len(interferers) > 0:
            self._interferer_beams = [self._nearest(a) for a in interferers]
            fds_interferers = InterferenceSet(
                self._angles[self._interferer_beams], interferers.delta
            )
            log.debug(
                f"FDS nulls steered at beams {self._interferer_beams} for "
                f"interferers at {np.round(interferers.angles, 4).tolist()}"
            )
        self._couplers = self._prepare_nulls(config, self._angles[self.beam], fds_interferers)

    def _nearest(self, angle: Angle) -> int:
        target = direction_vectors(self.geometry.kind, angle)
        return int(np.argmax(self._directions @ target))

    @property
    def beam_angle(self) -> np.ndarray:
        """Direction of the FDS beam used as output."""
        return self._angles[self.beam]

    def __call__(self, block: SnapshotBlock) -> np.ndarray:
        samples = self._run(block, self.n_taps).samples
        if self._couplers is None:
            return samples[self.beam]
        return null_timedomain(
            samples[self.beam], samples[self._interferer_beams], self._couplers
        )[0]
