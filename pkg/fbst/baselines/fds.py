import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from ..arrays import ArrayKind
from ..errors import ConfigError
from ..signals import BeamSamples, SignalSpec, SnapshotBlock
from ..utils import is_pow2
from .filters import FractionalDelayFilter, check_taps, fractional_shift

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FdsStage:
    """One radix-2 stage: parent beam j combines child beam `children[j]` of
    both halves, delaying the second half through `filters[j]`."""

    children: np.ndarray
    filters: List[FractionalDelayFilter]

    @property
    def n_beams(self) -> int:
        return len(self.filters)


def stage_cosines(n_beams: int) -> np.ndarray:
    """Direction cosines u_j = (2 j - n + 1) / n of the partial beams of a
    stage, the symmetric even grid that stops short of endfire.

    Consecutive stage grids interleave rather than nest: beam j of an
    n-beam stage extends beam j // 2 of the previous stage, which points
    1 / n away from it, so no beam past the first stage is steered exactly.
    """
    return (2.0 * np.arange(n_beams) - n_beams + 1.0) / n_beams


class FdsPlan:
    """FdsPlan.

    Radix-2 fast delay-and-sum schedule along one array axis of `n_elements`
    half-wavelength spaced sensors. Stage s merges pairs of adjacent groups
    of 2^(s-1) sensors into groups of 2^s, doubling the partial beams from
    2^(s-1) to 2^s. Each group's partial beam is referenced to its first
    sensor, so merging delays the second group by 2^(s-1) u / (2 f~).

    Parameters
    ----------
    n_elements : int
        Sensors along the axis, a power of two.
    n_taps : int
        Sinc filter length R, kept fixed across stages.
    spec : SignalSpec
    """

    def __init__(self, n_elements: int, n_taps: int, spec: SignalSpec):
        if not is_pow2(n_elements):
            raise ConfigError(f"FDS needs a power-of-two element count, got {n_elements}.")
        if n_taps < 2 or n_taps % 2 != 0:
            raise ConfigError(f"Filter length R must be even and >= 2, got {n_taps}.")
        self.n_elements = n_elements
        self.n_taps = n_taps
        self.spec = spec
        self.stages = []

        n_stages = int(np.log2(n_elements))
        # Stage s: 2^s beams at u_j = (2 j - 2^s + 1) / 2^s, each extending
        # partial beam j // 2 of stage s - 1 and delaying the second group by
        # its 2^(s-1) sensor offset. The last stage lands on the even beam grid
        # 2 b' / M.
        for s in range(1, n_stages + 1):
            n_beams = 2 ** s
            u = stage_cosines(n_beams)
            delay = (n_beams // 2) * u / (2.0 * spec.max_frequency)
            filters = [
                FractionalDelayFilter(
                    d / spec.sample_interval,
                    n_taps,
                    np.exp(2j * np.pi * spec.carrier * d),
                )
                for d in delay
            ]
            self.stages.append(FdsStage(np.arange(n_beams) // 2, filters))

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def cosines(self) -> np.ndarray:
        """Direction cosines of the final beams."""
        return stage_cosines(self.n_elements)

    def __call__(self, x: np.ndarray) -> tuple:
        """Beamform along the second-to-last axis.

        Parameters
        ----------
        x : np.ndarray
            (..., n_elements, N) sensor (or virtual sensor) signals.

        Returns
        -------
        beams : np.ndarray
            (..., n_elements, N) unnormalized beams, one per final cosine.
        edge : np.ndarray
            (N,) flags for samples touched by zero padding in any stage.
        """
        x = np.asarray(x)
        if x.shape[-2] != self.n_elements:
            raise ValueError(
                f"Expected {self.n_elements} sensors on axis -2, got {x.shape[-2]}."
            )
        lead = x.shape[:-2]
        n_samples = x.shape[-1]
        check_taps(self.n_taps, n_samples)

        # (..., groups, beams per group, N)
        partial = x[..., np.newaxis, :]
        edge = np.zeros(n_samples, dtype=bool)
        for stage in self.stages:
            first = partial[..., 0::2, :, :][..., stage.children, :]
            second = partial[..., 1::2, :, :][..., stage.children, :]

            shifts = np.array([f.shift for f in stage.filters])
            scales = np.array([f.scale for f in stage.filters])
            rows = second.reshape(-1, n_samples)
            delayed, contaminated = fractional_shift(
                rows, np.resize(shifts, rows.shape[0]), self.n_taps
            )
            delayed = delayed.reshape(second.shape)
            partial = first + scales[:, np.newaxis] * delayed
            edge |= np.any(contaminated, axis=0)

        return partial.reshape(lead + (self.n_elements, n_samples)), edge


def fds_beamform_ula(block: SnapshotBlock, n_taps: int) -> BeamSamples:
    """Radix-2 fast delay-and-sum over a ULA, M beams at sin(theta) = 2 b' / M,
    the even beam grid."""
    geometry = block.geometry
    if geometry.kind != ArrayKind.ULA:
        raise ConfigError("fds_beamform_ula needs a ULA geometry.")
    check_taps(n_taps, block.n_samples)
    plan = FdsPlan(geometry.element_count, n_taps, block.spec)
    beams, edge = plan(block.samples)
    return BeamSamples(
        beams / geometry.element_count,
        np.arcsin(plan.cosines),
        np.ones(geometry.element_count, dtype=bool),
        edge,
    )


def fds_beamform_upa(block: SnapshotBlock, n_taps: int) -> BeamSamples:
    """Separable two-pass fast delay-and-sum over a UPA.

    The first pass beamforms every row of sensors along the y-axis (kappa),
    leaving one virtual sensor per row and kappa; the second pass combines
    the rows along the x-axis (mu). Beam a * sqrt(M) + b points at
    (mu_a, kappa_b).
    """
    geometry = block.geometry
    if geometry.kind != ArrayKind.UPA:
        raise ConfigError("fds_beamform_upa needs a UPA geometry.")
    check_taps(n_taps, block.n_samples)
    side = geometry.side
    plan = FdsPlan(side, n_taps, block.spec)

    cube = block.samples.reshape(side, side, block.n_samples)
    rows, edge_rows = plan(cube)
    columns, edge_columns = plan(rows.transpose(1, 0, 2))
    beams = columns.transpose(1, 0, 2).reshape(geometry.element_count, -1)

    mu, kappa = np.meshgrid(plan.cosines, plan.cosines, indexing="ij")
    mu, kappa = mu.ravel(), kappa.ravel()
    radius = np.hypot(mu, kappa)
    angles = np.stack(
        [np.arctan2(kappa, mu), np.arcsin(np.clip(radius, 0.0, 1.0))], axis=-1
    )
    return BeamSamples(
        beams / geometry.element_count,
        angles,
        radius <= 1.0 + 1e-12,
        edge_rows | edge_columns,
    )
