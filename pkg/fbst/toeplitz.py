import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft, linalg

from .arrays import ArrayGeometry, Angle, direction_vectors
from .errors import ConfigError, ToeplitzBreakdownError
from .fan import FourierExtensionBasis
from .utils import next_pow2

log = logging.getLogger(__name__)

# reflection coefficient magnitude treated as a singular leading minor
BREAKDOWN_TOL = 1e-12

# delays within this fraction of the largest delay count as affine in the
# element index
AFFINE_TOL = 1e-12

# complex entries materialized per chunk when summing over elements
LAG_CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class ToeplitzSystem:
    """ToeplitzSystem.

    Regularized Gram matrices A_b = F_b^H F_b + delta I of one or more beams.
    Entry (l, k) depends only on l - k, so each system is stored through its
    first column; the first row is its conjugate.

    Parameters
    ----------
    column : np.ndarray
        (L,) or (B, L) first columns, delta included on lag 0.
    delta : float
        Regularization.
    """

    column: np.ndarray
    delta: float

    @property
    def n_frequencies(self) -> int:
        return self.column.shape[-1]

    @property
    def batched(self) -> bool:
        return self.column.ndim == 2

    @property
    def row(self) -> np.ndarray:
        return np.conj(self.column)

    def __len__(self) -> int:
        return self.column.shape[0] if self.batched else 1

    def __getitem__(self, idx: int) -> "ToeplitzSystem":
        return ToeplitzSystem(np.atleast_2d(self.column)[idx], self.delta)

    def dense(self, idx: Optional[int] = None) -> np.ndarray:
        """Dense L x L matrix of a (selected) system."""
        column = np.atleast_2d(self.column)[0 if idx is None else idx]
        return linalg.toeplitz(column, np.conj(column))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """A v for every system; `v` has shape (L,) or (B, L)."""
        columns = np.atleast_2d(self.column)
        v = np.broadcast_to(v, columns.shape)
        out = np.stack(
            [linalg.matmul_toeplitz((c, np.conj(c)), x) for c, x in zip(columns, v)]
        )
        return out if self.batched else out[0]


def _dirichlet(phase: np.ndarray, n: int) -> np.ndarray:
    """sum_{m < n} exp(j m phase), through the Dirichlet kernel."""
    phase = phase - 2.0 * np.pi * np.round(phase / (2.0 * np.pi))
    half = 0.5 * phase
    den = np.sin(half)
    zero = den == 0.0
    ratio = np.sin(n * half) / np.where(zero, 1.0, den)
    ratio = np.where(zero, float(n), ratio)
    return np.exp(1j * (n - 1) * half) * ratio


def _affine_steps(delays: np.ndarray) -> Optional[np.ndarray]:
    """Per-row step of delays that grow linearly with the element index, or
    None when any row does not."""
    n = delays.shape[-1]
    if n < 2:
        return np.zeros(delays.shape[:-1])
    steps = np.asarray((delays[..., -1] - delays[..., 0]) / (n - 1))
    fitted = delays[..., :1] + steps[..., np.newaxis] * np.arange(n)
    scale = np.max(np.abs(delays))
    if np.all(np.abs(delays - fitted) <= AFFINE_TOL * scale):
        return steps
    return None


def spatial_lag_sums(delays: np.ndarray, lags: np.ndarray) -> np.ndarray:
    """sum_m exp(j lag tau_m) for every row of `delays` and every lag.

    Affine delays (ULA and evenly spaced linear arrays) use the closed-form
    geometric sum; other geometries accumulate over chunks of elements, so
    the peak footprint stays near one (B, L) array.
    """
    delays = np.asarray(delays, dtype=float)
    lags = np.asarray(lags, dtype=float)
    steps = _affine_steps(delays)
    if steps is not None:
        first = delays[..., :1]
        geometric = _dirichlet(steps[..., np.newaxis] * lags, delays.shape[-1])
        return np.exp(1j * first * lags) * geometric

    n_elements = delays.shape[-1]
    n_rows = int(np.prod(delays.shape[:-1], dtype=int))
    chunk = max(1, LAG_CHUNK // max(n_rows * lags.size, 1))
    spatial = np.zeros(delays.shape[:-1] + lags.shape, dtype=complex)
    for start in range(0, n_elements, chunk):
        part = delays[..., start:start + chunk, np.newaxis]
        spatial += np.exp(1j * part * lags).sum(axis=-2)
    return spatial


def _lag_sums(
    basis: FourierExtensionBasis, delays: np.ndarray, times: Optional[np.ndarray]
) -> np.ndarray:
    """sum over sample locations t_n - tau_m of exp(-j p domega (t_n - tau_m)),
    for lags p = 0..L-1 and every row of `delays`: the first column of F^H F."""
    times = basis.sample_times if times is None else np.asarray(times)
    lags = np.arange(basis.n_frequencies) * basis.spacing
    temporal = np.exp(-1j * np.outer(lags, times)).sum(axis=-1)
    return temporal * spatial_lag_sums(delays, lags)


def toeplitz_from_delays(
    basis: FourierExtensionBasis,
    delays: np.ndarray,
    delta: float,
    times: Optional[np.ndarray] = None,
) -> ToeplitzSystem:
    """Gram systems for element delays of shape (M,) or (B, M)."""
    if delta <= 0:
        raise ConfigError(f"delta must be positive, got {delta}.")
    column = _lag_sums(basis, np.asarray(delays, dtype=float), times)
    column[..., 0] += delta
    return ToeplitzSystem(column, float(delta))


def build_toeplitz(
    basis: FourierExtensionBasis,
    geometry: ArrayGeometry,
    angle: Angle,
    delta: float,
    times: Optional[np.ndarray] = None,
) -> ToeplitzSystem:
    """Regularized Gram system of the beam steered at `angle` (a batch of
    angles gives a batch of systems).

    Parameters
    ----------
    basis : FourierExtensionBasis
    geometry : ArrayGeometry
    angle : float or array
        Beam direction(s) in the geometry's angle convention.
    delta : float
        Regularization, > 0.
    times : np.ndarray, optional
        Sample times; defaults to n T_s, n = 0..N-1.
    """
    tau = geometry.delays_for_directions(direction_vectors(geometry.kind, angle))
    return toeplitz_from_delays(basis, tau, delta, times)


@dataclass(frozen=True, eq=False)
class GsGenerators:
    """GsGenerators.

    First and last columns x, y of A^-1 together with the FFT-domain
    embeddings of the four triangular Toeplitz factors in

        x_0 A^-1 = L(x) U(J y) - L(Z y) U(Z J x),

    where L(v) is lower triangular with first column v, U(u) upper
    triangular with first row u, J the exchange and Z the down-shift.
    """

    x: np.ndarray
    y: np.ndarray
    size: int
    lower_x: np.ndarray
    upper_y: np.ndarray
    lower_y: np.ndarray
    upper_x: np.ndarray

    @property
    def n_frequencies(self) -> int:
        return self.x.shape[-1]

    @property
    def nbytes(self) -> int:
        return sum(
            a.nbytes
            for a in (self.x, self.y, self.lower_x, self.upper_y, self.lower_y, self.upper_x)
        )

    def dense(self, idx: Optional[int] = None) -> np.ndarray:
        """Dense A^-1 assembled from the generators."""
        x = np.atleast_2d(self.x)[0 if idx is None else idx]
        y = np.atleast_2d(self.y)[0 if idx is None else idx]
        zero = np.zeros(1, dtype=complex)
        lx = _lower(x)
        uy = _lower(y[::-1]).T
        ly = _lower(np.concatenate([zero, y[:-1]]))
        ux = _lower(np.concatenate([zero, x[::-1][:-1]])).T
        return (lx @ uy - ly @ ux) / x[0]


def _lower(v: np.ndarray) -> np.ndarray:
    return np.tril(linalg.toeplitz(v))


def _levinson(column: np.ndarray) -> tuple:
    """Batched Hermitian Levinson recursion.

    Returns the normalized forward predictors `a` (a[:, 0] = 1) with
    A a = E e_1, the prediction errors E, and per-system breakdown steps
    (-1 where the recursion completed).
    """
    n_sys, L = column.shape
    a = np.zeros((n_sys, L), dtype=complex)
    a[:, 0] = 1.0
    error = column[:, 0].real.copy()
    failed = np.full(n_sys, -1)
    if np.any(error <= 0):
        failed[error <= 0] = 0

    for n in range(L - 1):
        active = failed < 0
        # Delta_n = sum_i c[n + 1 - i] a_n[i]
        delta = np.einsum("bi,bi->b", column[:, n + 1 : 0 : -1], a[:, : n + 1])
        k = np.zeros(n_sys, dtype=complex)
        k[active] = -delta[active] / error[active]

        broken = active & ((np.abs(k) >= 1.0 - BREAKDOWN_TOL) | (error <= 0))
        failed[broken] = n + 1
        k[~(failed < 0)] = 0.0

        reflected = np.conj(a[:, n::-1])
        a[:, 1 : n + 2] += k[:, np.newaxis] * reflected
        error = error * (1.0 - np.abs(k) ** 2)

    return a, error, failed


def gs_factorize(
    system: ToeplitzSystem, fallback: bool = True
) -> GsGenerators:
    """Gohberg-Semencul generators of one or many Toeplitz systems.

    Parameters
    ----------
    system : ToeplitzSystem
    fallback : bool
        If the Levinson recursion breaks down, solve that system with a dense
        Cholesky factorization instead of raising.

    Raises
    ------
    ToeplitzBreakdownError
        A leading minor is (numerically) singular and the fallback is
        disabled or fails.
    """
    column = np.atleast_2d(system.column).astype(complex)
    a, error, failed = _levinson(column)

    with np.errstate(divide="ignore", invalid="ignore"):
        x = a / error[:, np.newaxis]
    for beam in np.flatnonzero(failed >= 0):
        step = int(failed[beam])
        if not fallback:
            raise ToeplitzBreakdownError(step, int(beam) if system.batched else None)
        log.warning(
            f"Levinson breakdown at step {step} (beam {beam}); "
            f"falling back to a dense Cholesky solve"
        )
        dense = linalg.toeplitz(column[beam], np.conj(column[beam]))
        rhs = np.zeros(dense.shape[0], dtype=complex)
        rhs[0] = 1.0
        try:
            x[beam] = linalg.cho_solve(linalg.cho_factor(dense, lower=True), rhs)
        except linalg.LinAlgError as err:
            raise ToeplitzBreakdownError(step, int(beam)) from err

    return gs_generators(x if system.batched else x[0])


def gs_generators(x: np.ndarray) -> GsGenerators:
    """Generators from the first column(s) x of A^-1, shape (L,) or (B, L)."""
    batched = np.ndim(x) == 2
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    y = np.conj(x[:, ::-1])
    L = x.shape[-1]
    size = next_pow2(2 * L - 1)
    zero = np.zeros((x.shape[0], 1), dtype=complex)
    x0 = x[:, :1]

    lower_x = fft.fft(x / x0, n=size, axis=-1)
    upper_y = fft.fft(y[:, ::-1], n=size, axis=-1)
    lower_y = fft.fft(np.concatenate([zero, y[:, :-1]], axis=-1) / x0, n=size, axis=-1)
    upper_x = fft.fft(
        np.concatenate([zero, x[:, ::-1][:, :-1]], axis=-1), n=size, axis=-1
    )

    if not batched:
        x, y = x[0], y[0]
        lower_x, upper_y, lower_y, upper_x = (
            lower_x[0], upper_y[0], lower_y[0], upper_x[0]
        )
    return GsGenerators(x, y, size, lower_x, upper_y, lower_y, upper_x)


def apply_inverse_superfast(gens: GsGenerators, w: np.ndarray) -> np.ndarray:
    """beta = A^-1 w through circulant-embedded triangular Toeplitz products.

    `w` has shape (L,) for a single system or (B, L) for batched generators.
    """
    w = np.asarray(w)
    L = gens.n_frequencies
    if w.shape[-1] != L:
        raise ValueError(f"Expected coefficient vectors of length {L}, got {w.shape[-1]}.")
    size = gens.size

    # U(u) w = J L(u) J w
    reversed_w = fft.fft(w[..., ::-1], n=size, axis=-1)
    upper_1 = fft.ifft(gens.upper_y * reversed_w, axis=-1)[..., :L][..., ::-1]
    upper_2 = fft.ifft(gens.upper_x * reversed_w, axis=-1)[..., :L][..., ::-1]

    spectrum = gens.lower_x * fft.fft(upper_1, n=size, axis=-1) - gens.lower_y * fft.fft(
        upper_2, n=size, axis=-1
    )
    return fft.ifft(spectrum, axis=-1)[..., :L]


def reconstruct(basis: FourierExtensionBasis, beta: np.ndarray) -> np.ndarray:
    """Uniform time samples b[n] = sum_l beta_l exp(j omega_l t_n)."""
    beta = np.asarray(beta)
    if beta.shape[-1] != basis.n_frequencies:
        raise ValueError(
            f"Expected {basis.n_frequencies} coefficients, got {beta.shape[-1]}."
        )
    return basis.reconstruction_plan(beta) * basis.reconstruction_phase


def dense_inverse_map(
    basis: FourierExtensionBasis, system: ToeplitzSystem
) -> np.ndarray:
    """Precomputed maps F_u A_b^-1, (N, L) per system."""
    Fu = basis.reconstruction_matrix()
    columns = np.atleast_2d(system.column)
    maps = np.empty((columns.shape[0], basis.n_samples, basis.n_frequencies), complex)
    for idx, column in enumerate(columns):
        dense = linalg.toeplitz(column, np.conj(column))
        try:
            factor = linalg.cho_factor(dense, lower=True)
        except linalg.LinAlgError as err:
            raise ToeplitzBreakdownError(dense.shape[0], idx) from err
        maps[idx] = linalg.cho_solve(factor, Fu.conj().T).conj().T
    return maps if system.batched else maps[0]


def apply_inverse_precomputed(dense_map: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Time samples F_u A_b^-1 w_b for one map (N, L) or a stack (B, N, L)."""
    dense_map = np.asarray(dense_map)
    w = np.asarray(w)
    if dense_map.shape[-1] != w.shape[-1]:
        raise ValueError(
            f"Map expects {dense_map.shape[-1]} coefficients, got {w.shape[-1]}."
        )
    return np.einsum("...nl,...l->...n", dense_map, w)
