import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .arrays import ArrayGeometry, Angle, delays
from .errors import ConfigError
from .fan import FourierExtensionBasis, extension_matrix
from .signals import SignalSpec
from .utils import check_dense_cap

log = logging.getLogger(__name__)

# eigenvalues below this fraction of the largest are dropped as round-off
EIGENVALUE_FLOOR = 1e-13


@dataclass(frozen=True, eq=False)
class SlepianBasis:
    """SlepianBasis.

    Leading eigenpairs of the time-limited bandlimiting operator with kernel

        k(t, s) = sin(2 pi Omega (t - s)) / (pi (t - s))

    on [start, start + interval], discretized by a Nystrom method.

    Parameters
    ----------
    start : float
        Left end of the interval in seconds.
    interval : float
        Interval length T in seconds.
    bandwidth : float
        Omega in Hz.
    eigenvalues : np.ndarray
        (n,) descending eigenvalues.
    nodes, weights : np.ndarray
        (G,) quadrature rule on the interval.
    functions : np.ndarray
        (n, G) eigenfunctions at the nodes, orthonormal under the weights.
    """

    start: float
    interval: float
    bandwidth: float
    eigenvalues: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    functions: np.ndarray

    @property
    def n_terms(self) -> int:
        return self.eigenvalues.size

    @property
    def trace(self) -> float:
        """Kernel trace, 2 Omega T."""
        return 2.0 * self.bandwidth * self.interval

    def kernel(self, t: np.ndarray, s: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        diff = t[:, np.newaxis] - s[np.newaxis, :]
        return 2.0 * self.bandwidth * np.sinc(2.0 * self.bandwidth * diff)

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        """Eigenfunctions at arbitrary times through the Nystrom extension
        phi_n(t) = sum_i w_i k(t, t_i) phi_n(t_i) / lambda_n. Returns (n, K)."""
        K = self.kernel(times, self.nodes) * self.weights
        return (K @ self.functions.T).T / self.eigenvalues[:, np.newaxis]

    def orthonormality_error(self) -> float:
        gram = (self.functions * self.weights) @ self.functions.T
        return float(np.max(np.abs(gram - np.eye(self.n_terms))))


def _quadrature(start: float, interval: float, n_nodes: int, rule: str) -> tuple:
    if rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        return start + 0.5 * interval * (x + 1.0), 0.5 * interval * w
    if rule == "trapezoid":
        nodes = np.linspace(start, start + interval, n_nodes)
        w = np.full(n_nodes, interval / (n_nodes - 1))
        w[[0, -1]] *= 0.5
        return nodes, w
    raise ConfigError(f"Unknown quadrature rule '{rule}'.")


def slepian_decompose(
    interval: float,
    bandwidth: float,
    n_max: Optional[int] = None,
    grid_density: float = 8.0,
    start: float = 0.0,
    rule: str = "gauss",
) -> SlepianBasis:
    """Slepian decomposition of the bandlimiting kernel on an interval.

    Parameters
    ----------
    interval : float
        T in seconds.
    bandwidth : float
        Omega in Hz.
    n_max : int, optional
        Number of eigenpairs kept, default ceil(2 Omega T) + 20.
    grid_density : float
        Quadrature nodes per Nyquist interval 1 / (2 Omega), >= 8.
    start : float
        Left end of the interval.
    rule : str
        'gauss' (Gauss-Legendre) or 'trapezoid'.

    Raises
    ------
    ConfigError
        n_max exceeds the number of quadrature nodes, or the grid is too
        coarse.
    """
    if interval <= 0 or bandwidth <= 0:
        raise ConfigError("Interval and bandwidth must be positive.")
    if grid_density < 8:
        raise ConfigError(f"grid_density must be >= 8, got {grid_density}.")
    dimension = 2.0 * bandwidth * interval
    if n_max is None:
        n_max = int(np.ceil(dimension)) + 20
    n_nodes = max(int(np.ceil(grid_density * dimension)), 32)
    if n_max > n_nodes:
        raise ConfigError(
            f"n_max = {n_max} exceeds the {n_nodes} quadrature nodes of the grid."
        )

    nodes, weights = _quadrature(start, interval, n_nodes, rule)
    root = np.sqrt(weights)
    diff = nodes[:, np.newaxis] - nodes[np.newaxis, :]
    K = 2.0 * bandwidth * np.sinc(2.0 * bandwidth * diff)
    eigenvalues, vectors = linalg.eigh(root[:, np.newaxis] * K * root[np.newaxis, :])

    order = np.argsort(eigenvalues)[::-1][:n_max]
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    keep = eigenvalues > EIGENVALUE_FLOOR * eigenvalues[0]
    if not np.all(keep):
        log.debug(
            f"Dropped {np.count_nonzero(~keep)} Slepian terms below the "
            f"round-off floor"
        )
    functions = (vectors[:, keep] / root[:, np.newaxis]).T
    return SlepianBasis(
        float(start),
        float(interval),
        float(bandwidth),
        eigenvalues[keep],
        nodes,
        weights,
        functions,
    )


def sample_locations(
    geometry: ArrayGeometry, spec: SignalSpec, n_samples: int, angle: Angle
) -> np.ndarray:
    """Effective sample times t_n - tau_m of a beam, flattened element-major
    (index m N + n)."""
    t = np.arange(n_samples) * spec.sample_interval
    tau = delays(geometry, angle)
    return (t[np.newaxis, :] - tau[:, np.newaxis]).ravel()


def observation_interval(locations: np.ndarray) -> Tuple[float, float]:
    """(start, length) of the support of a set of sample locations."""
    locations = np.asarray(locations)
    return float(locations.min()), float(locations.max() - locations.min())


def interval_gram(omegas: np.ndarray, interval: float, start: float = 0.0) -> np.ndarray:
    """I[k, l] = integral over [start, start + T] of exp(j (w_k - w_l) t),
    with the diagonal limit T."""
    diff = omegas[:, np.newaxis] - omegas[np.newaxis, :]
    return (
        interval
        * np.sinc(diff * interval / (2.0 * np.pi))
        * np.exp(1j * diff * (start + 0.5 * interval))
    )


def _dictionary(basis: FourierExtensionBasis, locations: np.ndarray) -> np.ndarray:
    check_dense_cap(locations.size, basis.n_frequencies)
    return np.exp(1j * np.outer(locations, basis.omegas))


def _energies(coeffs: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """L2 energy of sum_k c_k exp(j w_k t) for every column of `coeffs`."""
    return np.einsum("kn,kl,ln->n", coeffs, gram, coeffs.conj()).real


def variance_estimate(
    basis: FourierExtensionBasis,
    locations: np.ndarray,
    delta: float,
    noise_variance: float,
    interval: float,
    start: float = 0.0,
    normalize: bool = True,
) -> float:
    """Expected L2 energy of the noise propagated through the regularized
    least-squares reconstruction,

        sigma^2 sum_kl Q_kl integral exp(j (w_k - w_l) t) dt,
        Q = (F^H F + delta I)^-1 F^H F (F^H F + delta I)^-1.

    With `normalize` the energy is divided by T, giving a per-unit-time
    variance comparable with sigma^2 / M.
    """
    if noise_variance < 0:
        raise ConfigError("Noise variance must be >= 0.")
    locations = np.asarray(locations, dtype=float).ravel()
    F = _dictionary(basis, locations)
    gram = F.conj().T @ F
    factor = linalg.cho_factor(gram + delta * np.eye(basis.n_frequencies))
    Q = linalg.cho_solve(factor, linalg.cho_solve(factor, gram).conj().T)

    total = noise_variance * np.sum(Q * interval_gram(basis.omegas, interval, start))
    if abs(total.imag) > 1e-10 * max(abs(total.real), 1.0):
        log.warning(f"Variance trace has imaginary residue {total.imag:.3e}")
    value = float(total.real)
    return value / interval if normalize else value


def _reconstruction_error(
    slepian: SlepianBasis, basis: FourierExtensionBasis, coeffs: np.ndarray
) -> np.ndarray:
    """(G, n) pointwise error F* coeffs - phi on the quadrature nodes."""
    check_dense_cap(slepian.nodes.size, basis.n_frequencies)
    synth = np.exp(1j * np.outer(slepian.nodes, basis.omegas))
    return synth @ coeffs - slepian.functions.T


def bias_estimate(
    slepian: SlepianBasis,
    basis: FourierExtensionBasis,
    locations: np.ndarray,
    delta: float,
    normalize: bool = False,
) -> float:
    """Expected squared L2 bias for a Gaussian bandlimited signal with
    Slepian coefficients alpha_n ~ CN(0, lambda_n),

        trace((F* P A - S) Lambda (A* P^H F - S*)),  P = (F^H F + delta I)^-1 F^H,

    evaluated term by term as sum_n lambda_n |F* P a_n - phi_n|^2 on the
    Slepian quadrature grid. With `normalize` the result is divided by the
    expected signal energy sum_n lambda_n.
    """
    locations = np.asarray(locations, dtype=float).ravel()
    F = _dictionary(basis, locations)
    check_dense_cap(locations.size, slepian.n_terms)
    A = slepian.evaluate(locations).T
    factor = linalg.cho_factor(F.conj().T @ F + delta * np.eye(basis.n_frequencies))
    coeffs = linalg.cho_solve(factor, F.conj().T @ A)

    error = _reconstruction_error(slepian, basis, coeffs)
    per_mode = slepian.weights @ np.abs(error) ** 2
    bias = float(per_mode @ slepian.eigenvalues)
    return bias / float(np.sum(slepian.eigenvalues)) if normalize else bias


@dataclass(frozen=True)
class InterferenceBias:
    """Expected squared error added by projecting out an interferer: the
    part of the source removed with the interferer subspace, and the part
    of the interferer that survives the projection."""

    source: float
    interference: float

    @property
    def total(self) -> float:
        return self.source + self.interference


def _slepian_samples(
    slepian: SlepianBasis,
    geometry: ArrayGeometry,
    spec: SignalSpec,
    n_samples: int,
    angle: Angle,
) -> np.ndarray:
    """(M N, n) array samples of every Slepian function arriving from
    `angle`, carrier phases included."""
    tau = delays(geometry, angle)
    locations = sample_locations(geometry, spec, n_samples, angle)
    check_dense_cap(locations.size, slepian.n_terms)
    phases = np.repeat(np.exp(-2j * np.pi * spec.carrier * tau), n_samples)
    return phases[:, np.newaxis] * slepian.evaluate(locations).T


def _interference_operators(
    source: SlepianBasis,
    basis: FourierExtensionBasis,
    geometry: ArrayGeometry,
    spec: SignalSpec,
    angle: Angle,
    interferer_angle: Optional[Angle],
    interferer: Optional[SlepianBasis],
    delta: float,
) -> tuple:
    """Coefficient maps C_s = P P_I A and C_i = P P_I^perp A_I."""
    n = basis.n_samples
    L = basis.n_frequencies
    F = extension_matrix(geometry, spec, basis, angle)
    factor = linalg.cho_factor(F.conj().T @ F + delta * np.eye(L))
    A = _slepian_samples(source, geometry, spec, n, angle)

    if interferer_angle is None:
        return np.zeros((L, source.n_terms), complex), np.zeros((L, 0), complex)

    F_I = extension_matrix(geometry, spec, basis, interferer_angle)
    factor_I = linalg.cho_factor(F_I.conj().T @ F_I + delta * np.eye(L))

    def project(x: np.ndarray) -> np.ndarray:
        return F_I @ linalg.cho_solve(factor_I, F_I.conj().T @ x)

    C_s = linalg.cho_solve(factor, F.conj().T @ project(A))
    if interferer is None:
        return C_s, np.zeros((L, 0), complex)
    A_I = _slepian_samples(interferer, geometry, spec, n, interferer_angle)
    C_i = linalg.cho_solve(factor, F.conj().T @ (A_I - project(A_I)))
    return C_s, C_i


def interference_bias(
    source: SlepianBasis,
    basis: FourierExtensionBasis,
    geometry: ArrayGeometry,
    spec: SignalSpec,
    angle: Angle,
    interferer_angle: Optional[Angle] = None,
    interferer: Optional[SlepianBasis] = None,
    delta: float = 1e-5,
) -> InterferenceBias:
    """Expected squared L2 distortion of the beam at `angle` after
    projecting out the Fourier extension subspace of `interferer_angle`,

        trace((F* P P_I A) Lambda (.)^H) + trace((F* P P_I^perp A_I) Lambda_I (.)^H),

    with both signals Gaussian bandlimited processes described by their
    Slepian bases. Energies are taken over the source basis interval.

    Parameters
    ----------
    interferer_angle : float, optional
        None means no projection (P_I = 0).
    interferer : SlepianBasis, optional
        None means no interfering signal.
    """
    C_s, C_i = _interference_operators(
        source, basis, geometry, spec, angle, interferer_angle, interferer, delta
    )
    gram = interval_gram(basis.omegas, source.interval, source.start)
    source_term = float(_energies(C_s, gram) @ source.eigenvalues)
    interference_term = 0.0
    if interferer is not None and C_i.shape[1]:
        interference_term = float(_energies(C_i, gram) @ interferer.eigenvalues)
    return InterferenceBias(source_term, interference_term)


def _complex_normal(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _mean_and_error(samples: np.ndarray) -> Tuple[float, float]:
    return float(np.mean(samples)), float(np.std(samples, ddof=1) / np.sqrt(samples.size))


def monte_carlo_variance(
    basis: FourierExtensionBasis,
    locations: np.ndarray,
    delta: float,
    noise_variance: float,
    interval: float,
    start: float = 0.0,
    n_trials: int = 10_000,
    seed: Optional[int] = None,
    normalize: bool = True,
) -> Tuple[float, float]:
    """Monte Carlo counterpart of `variance_estimate`: (mean, standard
    error) of the reconstructed noise energy."""
    locations = np.asarray(locations, dtype=float).ravel()
    F = _dictionary(basis, locations)
    factor = linalg.cho_factor(F.conj().T @ F + delta * np.eye(basis.n_frequencies))
    rng = np.random.default_rng(seed)
    noise = np.sqrt(noise_variance) * _complex_normal(rng, (locations.size, n_trials))
    beta = linalg.cho_solve(factor, F.conj().T @ noise)
    energy = _energies(beta, interval_gram(basis.omegas, interval, start))
    return _mean_and_error(energy / interval if normalize else energy)


def monte_carlo_error(
    slepian: SlepianBasis,
    basis: FourierExtensionBasis,
    locations: np.ndarray,
    delta: float,
    noise_variance: float,
    n_trials: int = 10_000,
    seed: Optional[int] = None,
    batch: int = 1000,
) -> Tuple[float, float]:
    """(mean, standard error) of the squared L2 reconstruction error over
    random Slepian signals and noise; its expectation is bias + variance
    (unnormalized) on the Slepian interval."""
    locations = np.asarray(locations, dtype=float).ravel()
    F = _dictionary(basis, locations)
    A = slepian.evaluate(locations).T
    factor = linalg.cho_factor(F.conj().T @ F + delta * np.eye(basis.n_frequencies))
    synth = np.exp(1j * np.outer(slepian.nodes, basis.omegas))
    scale = np.sqrt(slepian.eigenvalues)[:, np.newaxis]
    rng = np.random.default_rng(seed)

    errors = []
    for done in range(0, n_trials, batch):
        k = min(batch, n_trials - done)
        alpha = scale * _complex_normal(rng, (slepian.n_terms, k))
        noise = np.sqrt(noise_variance) * _complex_normal(rng, (locations.size, k))
        beta = linalg.cho_solve(factor, F.conj().T @ (A @ alpha + noise))
        residual = synth @ beta - slepian.functions.T @ alpha
        errors.append(slepian.weights @ np.abs(residual) ** 2)
    return _mean_and_error(np.concatenate(errors))


def monte_carlo_interference_bias(
    source: SlepianBasis,
    basis: FourierExtensionBasis,
    geometry: ArrayGeometry,
    spec: SignalSpec,
    angle: Angle,
    interferer_angle: Angle,
    interferer: SlepianBasis,
    delta: float = 1e-5,
    n_trials: int = 1000,
    seed: Optional[int] = None,
) -> Tuple[float, float]:
    """(mean, standard error) of |F* beta_hat - F* beta_tilde|^2 over random
    source and interferer signals."""
    C_s, C_i = _interference_operators(
        source, basis, geometry, spec, angle, interferer_angle, interferer, delta
    )
    rng = np.random.default_rng(seed)
    alpha = np.sqrt(source.eigenvalues)[:, np.newaxis] * _complex_normal(
        rng, (source.n_terms, n_trials)
    )
    alpha_I = np.sqrt(interferer.eigenvalues)[:, np.newaxis] * _complex_normal(
        rng, (interferer.n_terms, n_trials)
    )
    coeffs = C_s @ alpha - C_i @ alpha_I
    gram = interval_gram(basis.omegas, source.interval, source.start)
    return _mean_and_error(_energies(coeffs, gram))
