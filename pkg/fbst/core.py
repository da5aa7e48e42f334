import enum
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np
from scipy import linalg

from .arrays import (
    ArrayGeometry,
    ArrayKind,
    Angle,
    direction_vectors,
    extension_factor,
    min_snapshots,
)
from .beamspace import interpolate_offgrid
from .errors import ConfigError
from .fan import (
    BeamGrid,
    BeamspaceCoefficients,
    FanTransform,
    FourierExtensionBasis,
    GridKind,
    extension_matrix,
)
from .signals import BeamSamples, SignalSpec, SnapshotBlock
from .toeplitz import (
    GsGenerators,
    ToeplitzSystem,
    apply_inverse_precomputed,
    apply_inverse_superfast,
    build_toeplitz,
    dense_inverse_map,
    gs_factorize,
    gs_generators,
    reconstruct,
    toeplitz_from_delays,
)
from .tools.io import PlanCacheReader, PlanCacheWriter
from .utils import guard_mask

log = logging.getLogger(__name__)

# block length up to which the dense inverse maps are the default
PRECOMPUTE_MAX_SAMPLES = 128


class Variant(str, enum.Enum):
    PRECOMPUTE = "precompute"
    SUPERFAST = "superfast"


def _variant(value: Union[Variant, str]) -> Variant:
    try:
        return Variant(value)
    except ValueError:
        choices = ", ".join(v.value for v in Variant)
        raise ConfigError(f"Unknown FBST variant '{value}', choose from {choices}.")


def default_beams(
    geometry: ArrayGeometry, spec: SignalSpec, n_samples: int, gamma: float
) -> int:
    """Smallest odd beam count per axis >= 2 n / gamma', with n the elements
    along that axis; squared for planar arrays."""
    gamma_ext = extension_factor(geometry, spec, n_samples, gamma)
    if geometry.kind == ArrayKind.UPA:
        n_axis = geometry.side
    else:
        n_axis = geometry.element_count
    per_axis = int(np.ceil(2.0 * n_axis / gamma_ext - 1e-9))
    if per_axis % 2 == 0:
        per_axis += 1
    per_axis = max(per_axis, 1)
    return per_axis ** 2 if geometry.kind == ArrayKind.UPA else per_axis


@dataclass(frozen=True, eq=False)
class FbstConfig:
    """FbstConfig.

    Parameters
    ----------
    geometry : ArrayGeometry
    spec : SignalSpec
        Band and sampling; carries epsilon.
    n_samples : int
        Block length N.
    n_beams : int, optional
        Grid size B, a perfect square for planar arrays. Defaults to
        `default_beams`.
    gamma : float
        Oversampling factor, L = gamma N. Must exceed the array's bound.
    delta : float
        Tikhonov regularization.
    variant : Variant, optional
        Defaults to precompute for N <= 128 and superfast otherwise.
    nufft_accuracy : float
        Accuracy of the non-uniform projection (non-affine linear arrays).
    fallback : bool
        Fall back to a dense Cholesky solve on Levinson breakdown.
    """

    geometry: ArrayGeometry
    spec: SignalSpec
    n_samples: int = 64
    n_beams: Optional[int] = None
    gamma: float = 2.0
    delta: float = 1e-5
    variant: Optional[Union[Variant, str]] = None
    nufft_accuracy: float = 1e-10
    fallback: bool = True

    def __post_init__(self):
        if self.n_samples < 2 or self.n_samples % 2 != 0:
            raise ConfigError(f"N must be even and >= 2, got {self.n_samples}.")
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}.")
        if not np.isclose(self.geometry.max_frequency, self.spec.max_frequency, rtol=1e-12):
            raise ConfigError("Geometry and spec disagree on f_c + Omega.")

        if self.n_beams is None:
            n_beams = default_beams(self.geometry, self.spec, self.n_samples, self.gamma)
            object.__setattr__(self, "n_beams", n_beams)
        if self.variant is None:
            variant = (
                Variant.PRECOMPUTE
                if self.n_samples <= PRECOMPUTE_MAX_SAMPLES
                else Variant.SUPERFAST
            )
        else:
            variant = _variant(self.variant)
        object.__setattr__(self, "variant", variant)

        guideline = min_snapshots(self.geometry, self.spec)
        if self.n_samples < guideline:
            log.warning(
                f"N = {self.n_samples} is below the snapshot guideline N >= "
                f"{guideline} for this array"
            )

    @property
    def grid_kind(self) -> GridKind:
        return GridKind.UPA if self.geometry.kind == ArrayKind.UPA else GridKind.ULA

    def with_variant(self, variant: Union[Variant, str]) -> "FbstConfig":
        return FbstConfig(
            self.geometry,
            self.spec,
            self.n_samples,
            self.n_beams,
            self.gamma,
            self.delta,
            variant,
            self.nufft_accuracy,
            self.fallback,
        )

    def cache_key(self) -> str:
        """sha256 over everything that determines the plan arrays."""
        fields = {
            "geometry": self.geometry.digest(),
            "carrier": self.spec.carrier,
            "bandwidth": self.spec.bandwidth,
            "sample_interval": self.spec.sample_interval,
            "epsilon": self.spec.epsilon,
            "n_samples": self.n_samples,
            "n_beams": self.n_beams,
            "gamma": self.gamma,
            "delta": self.delta,
            "variant": Variant(self.variant).value,
            "grid": self.grid_kind.value,
        }
        m = hashlib.sha256(json.dumps(fields, sort_keys=True).encode())
        return m.hexdigest()


class FbstPlan:
    """FbstPlan.

    Everything the runtime path needs for one configuration: the basis, the
    beam grid, the fan transform, the per-beam Toeplitz systems, and either
    their Gohberg-Semencul generators (superfast) or the dense maps
    F_u A_b^-1 (precompute).

    Plans are built with `setup` and are not modified afterwards.
    """

    def __init__(
        self,
        config: FbstConfig,
        basis: FourierExtensionBasis,
        grid: BeamGrid,
        transform: FanTransform,
        system: ToeplitzSystem,
        generators: Optional[GsGenerators] = None,
        maps: Optional[np.ndarray] = None,
        setup_time: float = 0.0,
    ):
        if (generators is None) == (maps is None):
            raise ValueError("A plan holds exactly one of generators or maps.")
        self.config = config
        self.basis = basis
        self.grid = grid
        self.transform = transform
        self.system = system
        self.generators = generators
        self.maps = maps
        self.setup_time = setup_time

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @property
    def n_beams(self) -> int:
        return self.grid.n_beams

    @property
    def nbytes(self) -> int:
        """Storage of the inverse representation."""
        if self.generators is not None:
            return self.generators.nbytes
        return self.maps.nbytes

    def cache_key(self) -> str:
        return self.config.cache_key()

    def arrays(self) -> Dict[str, np.ndarray]:
        """Arrays needed to restore the plan from a cache."""
        arrays = {"column": np.atleast_2d(self.system.column)}
        if self.generators is not None:
            arrays["x"] = np.atleast_2d(self.generators.x)
        else:
            arrays["maps"] = self.maps
        return arrays

    def beamspace(self, block: SnapshotBlock) -> BeamspaceCoefficients:
        return self.transform.project(block)

    def solve(self, w: np.ndarray) -> np.ndarray:
        """(B, L) beam coefficients to (B, N) time samples."""
        if self.generators is not None:
            beta = apply_inverse_superfast(self.generators, w)
            return reconstruct(self.basis, beta)
        return apply_inverse_precomputed(self.maps, w)

    def __call__(self, block: SnapshotBlock) -> np.ndarray:
        return self.solve(self.beamspace(block).flat)

    def nearest_beam(self, angle: Angle) -> int:
        """Index of the grid beam whose direction is closest to `angle`."""
        target = direction_vectors(self.config.geometry.kind, angle)
        return int(np.argmax(self.grid.directions @ target))

    def offgrid_coefficients(
        self, block: SnapshotBlock, angle: float, neighbours: int = 8
    ) -> np.ndarray:
        return interpolate_offgrid(self.beamspace(block), angle, neighbours)

    def offgrid_beam(
        self, block: SnapshotBlock, angle: float, neighbours: int = 8
    ) -> np.ndarray:
        """Time samples of a beam steered between grid beams.

        Coefficients are interpolated from the `neighbours` closest grid beams
        and passed through the Toeplitz system of the off-grid direction.
        """
        w = self.offgrid_coefficients(block, angle, neighbours)
        system = build_toeplitz(self.basis, self.config.geometry, angle, self.config.delta)
        generators = gs_factorize(system, fallback=self.config.fallback)
        return reconstruct(self.basis, apply_inverse_superfast(generators, w))


def _build_basis(config: FbstConfig) -> FourierExtensionBasis:
    return FourierExtensionBasis.for_array(
        config.geometry, config.spec, config.n_samples, config.gamma
    )


def setup(config: FbstConfig, cache: Optional[str] = None) -> FbstPlan:
    """Assemble the plan for `config`.

    Parameters
    ----------
    config : FbstConfig
    cache : str, optional
        Path of a plan cache index (.json). Plans found there are restored,
        new plans are added to it.

    Raises
    ------
    ConfigError
        gamma does not exceed the array's lower bound.
    """
    start = time.perf_counter()
    basis = _build_basis(config)
    grid = BeamGrid(config.grid_kind, config.n_beams)
    transform = FanTransform(
        config.geometry, basis, grid, config.spec, config.nufft_accuracy
    )

    key = config.cache_key()
    reader = PlanCacheReader(cache) if cache is not None else None
    if reader is not None and key in reader:
        arrays, _ = reader[key]
        system = ToeplitzSystem(arrays["column"], config.delta)
        if config.variant == Variant.SUPERFAST:
            generators, maps = gs_generators(arrays["x"]), None
        else:
            generators, maps = None, arrays["maps"]
        log.info(f"Restored plan {key[:12]} from {cache}")
    else:
        system = toeplitz_from_delays(basis, grid.delays(config.geometry), config.delta)
        if config.variant == Variant.SUPERFAST:
            generators, maps = gs_factorize(system, fallback=config.fallback), None
        else:
            generators, maps = None, dense_inverse_map(basis, system)

    elapsed = time.perf_counter() - start
    plan = FbstPlan(config, basis, grid, transform, system, generators, maps, elapsed)
    log.info(
        f"FBST setup ({config.variant.value}): M={config.geometry.element_count}, "
        f"N={config.n_samples}, L={basis.n_frequencies}, B={grid.n_beams} in "
        f"{elapsed:.3f} s, {plan.nbytes / 1e6:.2f} MB"
    )

    if cache is not None and (reader is None or key not in reader):
        with PlanCacheWriter(cache) as writer:
            writer.write(
                key,
                plan.arrays(),
                metadata={
                    "variant": config.variant.value,
                    "M": config.geometry.element_count,
                    "N": config.n_samples,
                    "L": basis.n_frequencies,
                    "B": grid.n_beams,
                },
            )
    return plan


def multibeamform(plan: FbstPlan, block: SnapshotBlock) -> BeamSamples:
    """All B beams of a snapshot block.

    Raises
    ------
    ValueError, ConfigError
        The block does not match the plan's geometry, spec or N.
    """
    if block.spec != plan.config.spec:
        raise ConfigError("Block spec differs from the plan's spec.")
    samples = plan(block)
    return BeamSamples(
        samples, plan.grid.angles, plan.grid.valid, guard_mask(block.n_samples)
    )


def single_beam_direct(
    block: SnapshotBlock,
    basis: FourierExtensionBasis,
    angle: Angle,
    delta: float,
) -> np.ndarray:
    """Dense reference beam F_u (F^H F + delta I)^-1 F^H y.

    Raises
    ------
    DenseCapError
        M N L exceeds the dense cap.
    """
    if delta <= 0:
        raise ConfigError(f"delta must be positive, got {delta}.")
    basis.check_block(block)
    F = extension_matrix(block.geometry, block.spec, basis, angle)
    gram = F.conj().T @ F + delta * np.eye(basis.n_frequencies)
    beta = linalg.solve(gram, F.conj().T @ block.samples.ravel(), assume_a="pos")
    return basis.reconstruction_matrix() @ beta
