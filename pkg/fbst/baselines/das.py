import logging

import numpy as np

from ..arrays import Angle, ArrayKind, delays
from ..signals import BeamSamples, SnapshotBlock
from .filters import check_taps, fractional_shift

log = logging.getLogger(__name__)


def das_beamform(block: SnapshotBlock, angles: Angle, n_taps: int) -> BeamSamples:
    """Delay-and-sum beamformer with truncated sinc fractional delays.

    Each beam is (1/M) sum_m exp(j 2 pi f_c tau_m) y_m(t_n + tau_m), with the
    advance realized by an R-tap sinc interpolator and zero padding outside
    the block.

    Parameters
    ----------
    block : SnapshotBlock
    angles : float or array
        Beam direction(s) in the geometry's angle convention.
    n_taps : int
        Filter length R (even, <= N).
    """
    check_taps(n_taps, block.n_samples)
    tau = np.atleast_2d(delays(block.geometry, angles))
    n_beams, n_elements = tau.shape
    spec = block.spec

    weights = np.exp(2j * np.pi * spec.carrier * tau) / n_elements
    shifts = tau / spec.sample_interval

    beams = np.empty((n_beams, block.n_samples), dtype=complex)
    edge = np.zeros(block.n_samples, dtype=bool)
    for b in range(n_beams):
        shifted, contaminated = fractional_shift(block.samples, shifts[b], n_taps)
        beams[b] = weights[b] @ shifted
        edge |= np.any(contaminated, axis=0)

    angles = np.asarray(angles, dtype=float)
    if block.geometry.kind == ArrayKind.ULA:
        angles = angles.reshape(n_beams)
    else:
        angles = angles.reshape(n_beams, -1)
    return BeamSamples(
        beams,
        angles,
        np.ones(n_beams, dtype=bool),
        edge,
    )
