"""Experiment runners.

Each runner takes an `ExperimentConfig`, runs one sweep and writes its rows
to a CSV through `ResultWriter`. Configurations are INI files, see
`configs/reference.cfg` for every key and its default.
"""

import configparser
import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from . import __version__
from .analysis import (
    bias_estimate,
    interference_bias,
    monte_carlo_error,
    monte_carlo_interference_bias,
    monte_carlo_variance,
    observation_interval,
    sample_locations,
    slepian_decompose,
    variance_estimate,
)
from .arrays import (
    ArrayGeometry,
    ArrayKind,
    Angle,
    direction_vectors,
    gamma_lower_bound,
    half_wavelength,
    min_snapshots,
)
from .baselines import das_beamform, fds_beamform_ula, fds_beamform_upa
from .beamformers import (
    DasBeamformer,
    FbstBeamformer,
    FbstPlanBeamformer,
    FdsBeamformer,
)
from .beamspace import (
    InterferenceSet,
    beam_pattern,
    beamspace_couplers,
    interpolate_offgrid,
    null_arrayspace,
    null_beamspace,
    null_timedomain,
    timedomain_couplers,
)
from .core import FbstConfig, Variant, multibeamform, setup
from .errors import ConfigError
from .fan import (
    BeamGrid,
    BeamspaceCoefficients,
    FourierExtensionBasis,
    GridKind,
    fan_project_direct,
)
from .signals import (
    BeamSamples,
    PlaneWaveSource,
    SignalSpec,
    SnapshotBlock,
    make_sum_of_sinusoids,
    simulate_snapshots,
)
from .toeplitz import apply_inverse_superfast, build_toeplitz, gs_factorize, reconstruct
from .tools.io import ResultWriter
from .utils import guard_mask, relative_error, snr_db

log = logging.getLogger(__name__)

KINDS = (
    "snr_sweep",
    "runtime_sweep",
    "beam_pattern",
    "error_analysis",
    "nulling",
    "offgrid",
)
ALGORITHMS = ("fbst_superfast", "fbst_precompute", "das", "fds")
NULLING_MODES = ("arrayspace", "beamspace", "timedomain")


def _floats(value: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in value.replace(",", " ").split())


def _ints(value: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in value.replace(",", " ").split())


def _strings(value: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _boolean(value: str) -> bool:
    try:
        return configparser.ConfigParser.BOOLEAN_STATES[value.strip().lower()]
    except KeyError:
        raise ConfigError(f"Not a boolean: '{value}'.")


def _optional(convert: Callable) -> Callable:
    def _convert(value: str):
        if value.strip().lower() in ("", "none", "auto"):
            return None
        return convert(value)

    return _convert


# (section, key) -> (field, converter)
_SCHEMA = {
    ("experiment", "kind"): ("kind", str),
    ("experiment", "algorithms"): ("algorithms", _strings),
    ("experiment", "seed"): ("seed", int),
    ("experiment", "output"): ("output", str),
    ("experiment", "parallel"): ("parallel", _boolean),
    ("array", "kind"): ("array", str),
    ("array", "elements"): ("elements", int),
    ("array", "perturbation"): ("perturbation", float),
    ("signal", "carrier"): ("carrier", float),
    ("signal", "bandwidth"): ("bandwidth", float),
    ("signal", "sample_rate"): ("sample_rate", _optional(float)),
    ("signal", "epsilon"): ("epsilon", float),
    ("signal", "components"): ("components", int),
    ("signal", "angle"): ("angle", _floats),
    ("signal", "snr_db"): ("snr_db", float),
    ("fbst", "snapshots"): ("snapshots", int),
    ("fbst", "beams"): ("beams", _optional(int)),
    ("fbst", "gamma"): ("gamma", float),
    ("fbst", "delta"): ("delta", float),
    ("fbst", "variant"): ("variant", _optional(str)),
    ("fbst", "nufft_accuracy"): ("nufft_accuracy", float),
    ("baseline", "taps"): ("taps", int),
    ("sweep", "snr_db"): ("sweep_snr_db", _floats),
    ("sweep", "trials"): ("trials", int),
    ("sweep", "elements"): ("sweep_elements", _ints),
    ("sweep", "repeats"): ("repeats", int),
    ("sweep", "warmup"): ("warmup", int),
    ("sweep", "steering"): ("steering", float),
    ("sweep", "pattern_angles"): ("pattern_angles", _floats),
    ("sweep", "pattern_frequencies"): ("pattern_frequencies", int),
    ("sweep", "pattern_nulls"): ("pattern_nulls", _floats),
    ("sweep", "offgrid_beams"): ("offgrid_beams", _optional(int)),
    ("sweep", "neighbours"): ("neighbours", int),
    ("nulling", "interferers"): ("interferers", _floats),
    ("nulling", "delta"): ("nulling_delta", float),
    ("nulling", "snapshots"): ("nulling_snapshots", _ints),
    ("nulling", "counts"): ("nulling_counts", _ints),
    ("nulling", "elements"): ("nulling_elements", int),
    ("nulling", "modes"): ("nulling_modes", _strings),
    ("analysis", "elements"): ("analysis_elements", int),
    ("analysis", "snapshots"): ("analysis_snapshots", _ints),
    ("analysis", "bias_snapshots"): ("bias_snapshots", int),
    ("analysis", "gamma_factors"): ("gamma_factors", _floats),
    ("analysis", "noise_variance"): ("noise_variance", float),
    ("analysis", "separations"): ("separations", _floats),
    ("analysis", "trials"): ("analysis_trials", int),
    ("analysis", "grid_density"): ("grid_density", float),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """ExperimentConfig.

    Flat view of an experiment INI file. Angles are given in degrees; a
    planar array takes `angle` as (azimuth, off-normal) and interferers as
    consecutive pairs.

    Usage
    -----
    config = ExperimentConfig.from_file('configs/reference.cfg')
    rows = run_experiment(config.with_overrides(kind='beam_pattern'))
    """

    kind: str = "snr_sweep"
    algorithms: Tuple[str, ...] = ("fbst_superfast", "das")
    seed: int = 0
    output: str = "results.csv"
    parallel: bool = False

    array: str = "ula"
    elements: int = 128
    perturbation: float = 0.0

    carrier: float = 20e9
    bandwidth: float = 5e9
    sample_rate: Optional[float] = None
    epsilon: float = 1.01
    components: int = 32
    angle: Tuple[float, ...] = (61.0,)
    snr_db: float = 10.0

    snapshots: int = 64
    beams: Optional[int] = None
    gamma: float = 2.0
    delta: float = 1e-5
    variant: Optional[str] = None
    nufft_accuracy: float = 1e-10

    taps: int = 16

    sweep_snr_db: Tuple[float, ...] = (-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0)
    trials: int = 20
    sweep_elements: Tuple[int, ...] = (64, 128, 256, 512)
    repeats: int = 5
    warmup: int = 2
    steering: float = 60.0
    pattern_angles: Tuple[float, ...] = (-90.0, 90.0, 361.0)
    pattern_frequencies: int = 20
    pattern_nulls: Tuple[float, ...] = ()
    offgrid_beams: Optional[int] = None
    neighbours: int = 8

    interferers: Tuple[float, ...] = (20.0, -35.0, 45.0)
    nulling_delta: float = 1e-5
    nulling_snapshots: Tuple[int, ...] = (16, 32, 64)
    nulling_counts: Tuple[int, ...] = (0, 1, 3)
    nulling_elements: int = 32
    nulling_modes: Tuple[str, ...] = NULLING_MODES

    analysis_elements: int = 8
    analysis_snapshots: Tuple[int, ...] = (4, 8, 16, 32, 64)
    bias_snapshots: int = 16
    gamma_factors: Tuple[float, ...] = (1.0, 1.1, 1.25, 1.5, 2.0)
    noise_variance: float = 1.0
    separations: Tuple[float, ...] = (40.0, 20.0, 10.0)
    analysis_trials: int = 1000
    grid_density: float = 8.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"Unknown experiment '{self.kind}', expected one of {KINDS}.")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ConfigError(
                f"Unknown algorithm(s) {sorted(unknown)}, expected a subset of {ALGORITHMS}."
            )
        modes = set(self.nulling_modes) - set(NULLING_MODES)
        if modes:
            raise ConfigError(f"Unknown nulling mode(s) {sorted(modes)}.")
        if self.array not in ("ula", "upa", "linear"):
            raise ConfigError("Array kind must be ula, upa or linear.")
        if self.variant is not None and self.variant not in {v.value for v in Variant}:
            raise ConfigError(f"Unknown FBST variant '{self.variant}'.")
        if self.repeats < 5:
            raise ConfigError(f"Timing needs at least 5 repeats, got {self.repeats}.")
        if self.warmup < 0 or self.trials < 1 or self.analysis_trials < 2:
            raise ConfigError("warmup must be >= 0, trials >= 1 and analysis trials >= 2.")
        if len(self.pattern_angles) != 3:
            raise ConfigError("pattern_angles takes start, stop and count.")
        if list(self.sweep_elements) != sorted(self.sweep_elements):
            raise ConfigError("Array sizes of a runtime sweep must be ascending.")
        pair = 2 if self.array == "upa" else 1
        if len(self.angle) != pair:
            raise ConfigError(f"A {self.array} source angle takes {pair} value(s).")
        if len(self.interferers) % pair != 0:
            raise ConfigError("Planar interferers are given as (azimuth, off-normal) pairs.")

    @classmethod
    def from_file(cls, filename: str) -> "ExperimentConfig":
        """Parse an INI file; keys that are absent keep their defaults.

        Raises
        ------
        ConfigError
            Unknown section or key, or a value that fails to parse.
        """
        parser = configparser.ConfigParser()
        if not parser.read(filename):
            raise ConfigError(f"Cannot read configuration file '{filename}'.")

        values = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                if (section, key) not in _SCHEMA:
                    raise ConfigError(f"Unknown configuration key [{section}] {key}.")
                name, convert = _SCHEMA[(section, key)]
                try:
                    values[name] = convert(raw)
                except ValueError as err:
                    raise ConfigError(f"[{section}] {key} = {raw!r}: {err}") from err
        return cls(**values)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """A copy with the given fields replaced; None values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def spec(self) -> SignalSpec:
        interval = None if self.sample_rate is None else 1.0 / self.sample_rate
        return SignalSpec(self.carrier, self.bandwidth, interval, self.epsilon)

    def geometry(self, n_elements: Optional[int] = None) -> ArrayGeometry:
        """The array; linear arrays perturb half-wavelength positions by up to
        +/- perturbation / 2 half-wavelengths, drawn from the seed."""
        spec = self.spec()
        n_elements = self.elements if n_elements is None else n_elements
        if self.array == "ula":
            return ArrayGeometry.ula(n_elements, spec)
        if self.array == "upa":
            return ArrayGeometry.upa(n_elements, spec)
        rng = np.random.default_rng(self.seed)
        offsets = self.perturbation * rng.uniform(-0.5, 0.5, n_elements)
        offsets[0] = 0.0
        positions = (np.arange(n_elements) + offsets) * half_wavelength(spec.max_frequency)
        return ArrayGeometry.linear(positions, spec)

    def _angles(self, degrees: Sequence[float]) -> np.ndarray:
        radians = np.deg2rad(np.asarray(degrees, dtype=float))
        return radians.reshape(-1, 2) if self.array == "upa" else radians

    def source_angle(self) -> Angle:
        angle = self._angles(self.angle)
        return angle[0] if self.array == "upa" else float(angle[0])

    def interferer_angles(self, count: Optional[int] = None) -> np.ndarray:
        angles = self._angles(self.interferers)
        if count is not None:
            if count > len(angles):
                raise ConfigError(
                    f"{count} interferers requested but only {len(angles)} configured."
                )
            angles = angles[:count]
        return angles

    def fbst(
        self,
        geometry: Optional[ArrayGeometry] = None,
        n_samples: Optional[int] = None,
        n_beams: Optional[int] = None,
        variant: Optional[str] = None,
    ) -> FbstConfig:
        geometry = self.geometry() if geometry is None else geometry
        return FbstConfig(
            geometry,
            self.spec(),
            self.snapshots if n_samples is None else n_samples,
            self.beams if n_beams is None else n_beams,
            self.gamma,
            self.delta,
            self.variant if variant is None else variant,
            self.nufft_accuracy,
        )

    def digest(self) -> str:
        fields = dataclasses.asdict(self)
        m = hashlib.sha256(json.dumps(fields, sort_keys=True).encode())
        return m.hexdigest()

    def metadata(self, **extra) -> dict:
        metadata = {
            "experiment": self.kind,
            "config_hash": self.digest(),
            "seed": self.seed,
            "version": __version__,
        }
        metadata.update(extra)
        return metadata


def _matched_beams(geometry: ArrayGeometry) -> int:
    """Beam count whose grid is the FDS grid: B = M even sines 2 b' / M, one
    axis per side for planar arrays."""
    return geometry.element_count


def _interpolation_beams(config: ExperimentConfig, geometry: ArrayGeometry) -> int:
    """Beam count of grids that off-grid beams are interpolated from: 2M
    unless configured. Planar arrays keep B = M."""
    if geometry.kind == ArrayKind.UPA:
        return geometry.element_count
    return config.offgrid_beams or 2 * geometry.element_count


def _beam_grid(geometry: ArrayGeometry, n_beams: int) -> BeamGrid:
    if geometry.kind == ArrayKind.UPA:
        return BeamGrid.upa(n_beams)
    return BeamGrid.ula(n_beams)


def _snap(grid: BeamGrid, geometry: ArrayGeometry, angle: Angle) -> Angle:
    """Angle of the grid beam closest to `angle`."""
    target = direction_vectors(geometry.kind, angle)
    return grid.angles[int(np.argmax(grid.directions @ target))]


def _map(fn: Callable, items: Sequence, parallel: bool, desc: str) -> List:
    """Apply `fn` to every item in order, optionally on a thread pool."""
    if parallel:
        with ThreadPoolExecutor() as pool:
            return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, leave=False))
    return [fn(item) for item in tqdm(items, desc=desc, leave=False)]


def _median_time(fn: Callable, repeats: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def _write(config: ExperimentConfig, columns: Sequence[str], rows: List[dict], **extra):
    with ResultWriter(config.output, columns, config.metadata(**extra)) as writer:
        writer.extend(rows)
    log.info(f"Wrote {len(rows)} rows to {config.output}")


def simulate_block(
    config: ExperimentConfig,
    snr: Optional[float] = None,
    n_samples: Optional[int] = None,
    seed: Optional[int] = None,
    geometry: Optional[ArrayGeometry] = None,
    angle: Optional[Angle] = None,
) -> Tuple[SnapshotBlock, np.ndarray]:
    """A block with one sum-of-sinusoids source at `snr` dB per element.

    Returns
    -------
    block : SnapshotBlock
    clean : np.ndarray
        (N,) source waveform at the phase centre, the ideal beam output.
    """
    spec = config.spec()
    geometry = config.geometry() if geometry is None else geometry
    n_samples = config.snapshots if n_samples is None else n_samples
    seed = config.seed if seed is None else seed
    snr = config.snr_db if snr is None else snr
    angle = config.source_angle() if angle is None else angle

    waveform_seed, noise_seed = np.random.default_rng(seed).integers(0, 2**31, size=2)
    waveform = make_sum_of_sinusoids(spec, config.components, seed=int(waveform_seed))
    source = PlaneWaveSource(angle, waveform)
    noise_variance = waveform.power * 10.0 ** (-snr / 10.0)
    block = simulate_snapshots(
        geometry, spec, [source], noise_variance, n_samples, seed=int(noise_seed)
    )
    clean = source(np.arange(n_samples) * spec.sample_interval)
    return block, clean


def beamform_block(
    config: ExperimentConfig, block: SnapshotBlock, algorithm: str
) -> BeamSamples:
    """All beams of `block` with one algorithm: the FBST grid for the FBST
    variants and DS, the radix-2 grid for FDS."""
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"Unknown algorithm '{algorithm}'.")
    geometry = block.geometry
    if algorithm == "fds":
        if geometry.kind == ArrayKind.UPA:
            return fds_beamform_upa(block, config.taps)
        return fds_beamform_ula(block, config.taps)

    fbst_config = config.fbst(geometry, block.n_samples)
    if algorithm == "das":
        plan_grid = _beam_grid(geometry, fbst_config.n_beams)
        beams = das_beamform(block, plan_grid.angles, config.taps)
        return BeamSamples(beams.samples, beams.angles, plan_grid.valid, beams.edge)

    variant = Variant.SUPERFAST if algorithm == "fbst_superfast" else Variant.PRECOMPUTE
    return multibeamform(setup(fbst_config.with_variant(variant)), block)


def _steered_handles(
    config: ExperimentConfig,
    geometry: ArrayGeometry,
    n_samples: int,
    angle: Angle,
) -> Dict[str, Tuple[Callable, np.ndarray]]:
    """One steered beam per configured algorithm, with its excluded
    samples."""
    spec = config.spec()
    fbst_config = config.fbst(geometry, n_samples, n_beams=config.beams or _matched_beams(geometry))
    handles = {}
    for algorithm in config.algorithms:
        if algorithm.startswith("fbst"):
            variant = Variant(algorithm.split("_", 1)[1])
            plan = setup(fbst_config.with_variant(variant))
            beam = plan.nearest_beam(angle)
            handles[algorithm] = (lambda b, p=plan, k=beam: p(b)[k], guard_mask(n_samples))
        elif algorithm == "das":
            das = DasBeamformer(geometry, spec, n_samples, angle, config.taps)
            handles[algorithm] = (das, das.exclude)
        else:
            fds = FdsBeamformer(geometry, spec, n_samples, angle, config.taps)
            handles[algorithm] = (fds, fds.exclude)
    return handles


def run_snr_sweep(config: ExperimentConfig) -> List[dict]:
    """Beamformed against nominal SNR.

    The source is placed on the FBST grid beam (B = M unless configured)
    nearest the configured angle, which is also an FDS beam. The beamformed
    SNR pools signal and residual power over all trials; every algorithm
    leaves out the guard interval and its own edge-contaminated samples.
    """
    geometry = config.geometry()
    n_samples = config.snapshots
    n_elements = geometry.element_count
    n_beams = config.beams or _matched_beams(geometry)
    grid = _beam_grid(geometry, n_beams)
    angle = _snap(grid, geometry, config.source_angle())
    log.info(
        f"SNR sweep: M={n_elements}, N={n_samples}, source at "
        f"{np.round(np.rad2deg(angle), 3).tolist()} deg"
    )

    handles = _steered_handles(config, geometry, n_samples, angle)
    seeds = np.random.default_rng(config.seed).integers(
        0, 2**31, size=(len(config.sweep_snr_db), config.trials)
    )

    def _point(index: int) -> List[dict]:
        snr = config.sweep_snr_db[index]
        outputs = {name: [] for name in handles}
        cleans = []
        for seed in seeds[index]:
            block, clean = simulate_block(config, snr, n_samples, int(seed), geometry, angle)
            cleans.append(clean)
            for name, (handle, _) in handles.items():
                outputs[name].append(handle(block))
        rows = []
        for name, (_, exclude) in handles.items():
            rows.append(
                {
                    "nominal_snr_db": snr,
                    "algorithm": name,
                    "beamformed_snr_db": snr_db(
                        np.stack(outputs[name]), np.stack(cleans), exclude
                    ),
                    "ideal_snr_db": snr + 10.0 * np.log10(n_elements),
                    "trials": config.trials,
                }
            )
        return rows

    points = _map(_point, list(range(len(config.sweep_snr_db))), config.parallel, "snr")
    rows = [row for point in points for row in point]
    _write(
        config,
        ["nominal_snr_db", "algorithm", "beamformed_snr_db", "ideal_snr_db", "trials"],
        rows,
        M=n_elements,
        N=n_samples,
    )
    return rows


def run_runtime_sweep(config: ExperimentConfig) -> List[dict]:
    """Per-sample runtime over ascending array sizes.

    N follows the snapshot guideline of each array and B = M (the FDS grid,
    per axis for planar arrays). Setup is timed once and separately; the
    per-sample time is the median over `repeats` runs after `warmup`
    discarded runs, divided by N.
    """
    if config.parallel:
        log.warning("Runtime sweeps ignore the parallel flag")
    spec = config.spec()
    rows = []
    for n_elements in tqdm(config.sweep_elements, desc="runtime", leave=False):
        geometry = config.geometry(n_elements)
        n_samples = max(config.snapshots, min_snapshots(geometry, spec))
        n_beams = _matched_beams(geometry)
        block, _ = simulate_block(config, n_samples=n_samples, geometry=geometry)

        for algorithm in config.algorithms:
            setup_time = 0.0
            if algorithm.startswith("fbst"):
                variant = Variant(algorithm.split("_", 1)[1])
                plan = setup(config.fbst(geometry, n_samples, n_beams, variant))
                setup_time = plan.setup_time
                produced = plan.n_beams
                run = lambda p=plan: p(block)
            elif algorithm == "das":
                grid = _beam_grid(geometry, n_beams)
                angles = grid.angles[grid.valid]
                produced = len(angles)
                run = lambda a=angles: das_beamform(block, a, config.taps)
            else:
                if geometry.kind not in (ArrayKind.ULA, ArrayKind.UPA):
                    log.warning("FDS needs a uniform array; skipped")
                    continue
                fds = fds_beamform_upa if geometry.kind == ArrayKind.UPA else fds_beamform_ula
                produced = n_elements
                run = lambda f=fds: f(block, config.taps)

            elapsed = _median_time(run, config.repeats, config.warmup)
            log.info(
                f"{algorithm}: M={n_elements}, B={produced}, N={n_samples}, "
                f"{elapsed / n_samples:.3e} s per sample"
            )
            rows.append(
                {
                    "M": n_elements,
                    "B": produced,
                    "N": n_samples,
                    "algorithm": algorithm,
                    "per_sample_time": elapsed / n_samples,
                    "setup_time": setup_time,
                }
            )

    _write(config, ["M", "B", "N", "algorithm", "per_sample_time", "setup_time"], rows)
    return rows


def _pattern_angles(config: ExperimentConfig) -> np.ndarray:
    start, stop, count = config.pattern_angles
    return np.deg2rad(np.linspace(start, stop, int(count)))


def _steered_beamformers(
    config: ExperimentConfig,
    geometry: ArrayGeometry,
    steering: float,
    interferers: Optional[InterferenceSet],
) -> list:
    fbst_config = config.fbst(geometry)
    spec = config.spec()
    n_samples = config.snapshots
    beamformers = []
    for algorithm in config.algorithms:
        if algorithm.startswith("fbst"):
            if any(b.name == "fbst" for _, b in beamformers):
                continue
            plan_config = config.fbst(geometry, n_beams=_interpolation_beams(config, geometry))
            fbst = FbstPlanBeamformer(plan_config, steering, interferers, config.neighbours)
            beamformers.append(("fbst", fbst))
        elif algorithm == "das":
            das = DasBeamformer(
                geometry, spec, n_samples, steering, config.taps, interferers, fbst_config
            )
            beamformers.append(("das", das))
        else:
            fds = FdsBeamformer(
                geometry, spec, n_samples, steering, config.taps, interferers, fbst_config
            )
            beamformers.append(("fds", fds))
    return beamformers


def run_beam_pattern(config: ExperimentConfig) -> List[dict]:
    """Beam patterns of every configured algorithm over `pattern_frequencies`
    evenly spaced frequencies, with optional nulls. Each pattern is
    normalized to a 0 dB peak."""
    geometry = config.geometry()
    if geometry.kind == ArrayKind.UPA:
        raise ConfigError("Beam patterns are swept over a single angle; use a linear array.")
    spec = config.spec()
    steering = float(np.deg2rad(config.steering))
    interferers = None
    if config.pattern_nulls:
        interferers = InterferenceSet(np.deg2rad(config.pattern_nulls), config.nulling_delta)

    angles = _pattern_angles(config)
    frequencies = spec.band(config.pattern_frequencies)
    rows = []
    for name, beamformer in _steered_beamformers(config, geometry, steering, interferers):
        pattern = beam_pattern(
            beamformer,
            geometry,
            spec,
            config.snapshots,
            steering,
            angles,
            frequencies,
            beamformer.exclude,
        )
        message = f"{name}: steered spread {pattern.steered_spread():.3f} dB"
        for null in interferers if interferers is not None else ():
            message += f", null depth at {np.rad2deg(null):.2f} deg {pattern.null_depth(null):.1f} dB"
        log.info(message)
        rows.extend(dict(row, algorithm=name) for row in pattern.rows())

    _write(
        config,
        ["algorithm", "angle", "frequency", "gain_db"],
        rows,
        steering=config.steering,
        nulls=list(config.pattern_nulls),
    )
    return rows


def run_offgrid(config: ExperimentConfig) -> List[dict]:
    """Steered-direction gain of the spline-interpolated off-grid beam
    against the directly computed beam at the same angle, per frequency."""
    geometry = config.geometry()
    if geometry.kind == ArrayKind.UPA:
        raise ConfigError("Off-grid interpolation runs on linear arrays.")
    spec = config.spec()
    target = float(np.deg2rad(config.steering))
    n_beams = _interpolation_beams(config, geometry)
    fbst_config = config.fbst(geometry, n_beams=n_beams, variant=Variant.SUPERFAST)
    plan = setup(fbst_config)
    direct = FbstBeamformer(fbst_config, target)

    frequencies = spec.band(config.pattern_frequencies)
    exclude = guard_mask(config.snapshots)
    patterns = [
        beam_pattern(
            beamformer,
            geometry,
            spec,
            config.snapshots,
            target,
            [target],
            frequencies,
            exclude,
            normalize=False,
        )
        for beamformer in (
            lambda block: plan.offgrid_beam(block, target, config.neighbours),
            direct,
        )
    ]
    interpolated, reference = (p.gain_db[:, 0] for p in patterns)
    rows = [
        {
            "frequency": float(f),
            "interpolated_gain_db": float(a),
            "direct_gain_db": float(b),
            "difference_db": float(a - b),
        }
        for f, a, b in zip(frequencies, interpolated, reference)
    ]
    log.info(
        f"Off-grid beam at {config.steering} deg (B={n_beams}): largest gain "
        f"difference {np.max(np.abs(interpolated - reference)):.3f} dB"
    )
    _write(
        config,
        ["frequency", "interpolated_gain_db", "direct_gain_db", "difference_db"],
        rows,
        B=n_beams,
    )
    return rows


class _NullingCase:
    """Precomputed quantities of one (N, P) nulling point. Nothing built
    here is part of the timed runtime path.

    The timed beamspace and time-domain paths interpolate the interferer
    coefficients from the plan's grid of 2M beams (planar grids project
    them directly); `exact=True` projects them directly for the equivalence
    check against the array-space path.
    """

    def __init__(self, config: ExperimentConfig, n_samples: int, count: int):
        self.config = config
        geometry = config.geometry(config.nulling_elements)
        self.geometry = geometry
        spec = config.spec()
        fbst_config = config.fbst(
            geometry, n_samples, _interpolation_beams(config, geometry), Variant.SUPERFAST
        )
        self.plan = setup(fbst_config)
        self.basis = self.plan.basis
        self.interferers = InterferenceSet(
            config.interferer_angles(count), config.nulling_delta
        )
        self.interpolate = self.plan.grid.kind == GridKind.ULA
        target_delays = self.plan.grid.delays(geometry)

        angle = self.plan.grid.angles[self.plan.nearest_beam(config.source_angle())]
        self.beam = self.plan.nearest_beam(angle)
        waveform = make_sum_of_sinusoids(spec, config.components, seed=config.seed)
        sources = [PlaneWaveSource(angle, waveform)]
        for p, interferer in enumerate(self.interferers):
            interfering = make_sum_of_sinusoids(spec, config.components, seed=config.seed + p + 1)
            sources.append(PlaneWaveSource(interferer, interfering))
        self.block = simulate_snapshots(geometry, spec, sources, 0.0, n_samples)
        self.clean = sources[0](self.basis.sample_times)
        self.exclude = guard_mask(n_samples)

        modes = config.nulling_modes
        if "beamspace" in modes:
            self.couplers = beamspace_couplers(
                self.basis, geometry, spec, target_delays, self.interferers
            )
        if "timedomain" in modes:
            self.time_couplers = timedomain_couplers(
                self.basis, geometry, spec, target_delays, self.plan.system, self.interferers
            )
            self.interferer_generators = [
                gs_factorize(build_toeplitz(self.basis, geometry, a, self.interferers.delta))
                for a in self.interferers
            ]

    def _interferer_coefficients(
        self, coeffs: BeamspaceCoefficients, exact: bool
    ) -> np.ndarray:
        w_p = np.zeros((len(self.interferers), self.basis.n_frequencies), complex)
        if len(self.interferers) == 0:
            return w_p
        if exact or not self.interpolate:
            return fan_project_direct(self.block, self.basis, self.interferers.angles)
        for p, angle in enumerate(self.interferers):
            w_p[p] = interpolate_offgrid(coeffs, float(angle), self.config.neighbours)
        return w_p

    def arrayspace(self, exact: bool = False) -> np.ndarray:
        return self.plan(null_arrayspace(self.block, self.basis, self.interferers))

    def beamspace(self, exact: bool = False) -> np.ndarray:
        coeffs = self.plan.beamspace(self.block)
        w_p = self._interferer_coefficients(coeffs, exact)
        beta = null_beamspace(coeffs.flat, w_p, self.couplers, self.plan.generators)
        return reconstruct(self.basis, beta)

    def timedomain(self, exact: bool = False) -> np.ndarray:
        coeffs = self.plan.beamspace(self.block)
        beams = self.plan.solve(coeffs.flat)
        w_p = self._interferer_coefficients(coeffs, exact)
        interfering = np.zeros((len(w_p), self.basis.n_samples), complex)
        for p, (generators, w) in enumerate(zip(self.interferer_generators, w_p)):
            interfering[p] = reconstruct(self.basis, apply_inverse_superfast(generators, w))
        return null_timedomain(beams, interfering, self.time_couplers)

    def residual(self, beams: np.ndarray) -> float:
        """Relative error of the source beam against the clean waveform."""
        keep = ~self.exclude
        return relative_error(beams[self.beam][keep], self.clean[keep])


def run_nulling(config: ExperimentConfig) -> List[dict]:
    """Runtime and equivalence of the three nulling paths.

    The array-space path projects the interferer subspaces out of the array
    data before FBST and serves as the reference. The equivalence error
    compares each path fed with directly projected interferer coefficients;
    the interpolation error compares the timed path, which interpolates
    them. Couplers and interferer factorizations are precomputed; the timed
    path starts from the snapshot block.
    """
    if config.parallel:
        log.warning("Nulling sweeps ignore the parallel flag")
    rows = []
    points = [(n, p) for n in config.nulling_snapshots for p in config.nulling_counts]
    for n_samples, count in tqdm(points, desc="nulling", leave=False):
        case = _NullingCase(config, n_samples, count)
        reference = case.arrayspace()
        for mode in config.nulling_modes:
            run = getattr(case, mode)
            beams = run()
            runtime = _median_time(run, config.repeats, config.warmup)
            rows.append(
                {
                    "mode": mode,
                    "P": count,
                    "N": n_samples,
                    "runtime": runtime,
                    "residual": case.residual(beams),
                    "equivalence_error": relative_error(run(exact=True), reference),
                    "interpolation_error": relative_error(beams, reference),
                }
            )
            log.debug(f"{mode}: N={n_samples}, P={count}, {runtime:.3e} s")

    _write(
        config,
        [
            "mode",
            "P",
            "N",
            "runtime",
            "residual",
            "equivalence_error",
            "interpolation_error",
        ],
        rows,
        M=config.nulling_elements,
    )
    return rows


def _analysis_geometry(config: ExperimentConfig) -> Tuple[ArrayGeometry, float]:
    if config.array == "upa":
        raise ConfigError("The error analysis runs on a linear array.")
    spec = config.spec()
    return ArrayGeometry.ula(config.analysis_elements, spec), config.source_angle()


def _variance_rows(config: ExperimentConfig) -> List[dict]:
    geometry, angle = _analysis_geometry(config)
    spec = config.spec()

    def _point(n_samples: int) -> dict:
        basis = FourierExtensionBasis.for_array(geometry, spec, n_samples, config.gamma)
        locations = sample_locations(geometry, spec, n_samples, angle)
        start, interval = observation_interval(locations)
        analytic = variance_estimate(
            basis, locations, config.delta, config.noise_variance, interval, start
        )
        mean, error = monte_carlo_variance(
            basis,
            locations,
            config.delta,
            config.noise_variance,
            interval,
            start,
            config.analysis_trials,
            seed=config.seed + n_samples,
        )
        return {
            "sweep": "variance",
            "parameter": n_samples,
            "analytic": analytic,
            "monte_carlo": mean,
            "monte_carlo_se": error,
            "reference": config.noise_variance / geometry.element_count,
        }

    return _map(_point, list(config.analysis_snapshots), config.parallel, "variance")


def _bias_rows(config: ExperimentConfig) -> List[dict]:
    geometry, angle = _analysis_geometry(config)
    spec = config.spec()
    n_samples = config.bias_snapshots
    locations = sample_locations(geometry, spec, n_samples, angle)
    start, interval = observation_interval(locations)
    slepian = slepian_decompose(
        interval, spec.bandwidth, grid_density=config.grid_density, start=start
    )
    energy = float(np.sum(slepian.eigenvalues))
    bound = gamma_lower_bound(geometry, spec, n_samples)

    def _point(factor: float) -> dict:
        basis = FourierExtensionBasis.from_gamma(n_samples, factor * bound, spec)
        series = FourierExtensionBasis.fourier_series(
            n_samples, spec, interval, basis.n_frequencies
        )
        mean, error = monte_carlo_error(
            slepian,
            basis,
            locations,
            config.delta,
            0.0,
            config.analysis_trials,
            seed=config.seed + basis.n_frequencies,
        )
        return {
            "sweep": "bias",
            "parameter": basis.gamma,
            "analytic": bias_estimate(slepian, basis, locations, config.delta, normalize=True),
            "monte_carlo": mean / energy,
            "monte_carlo_se": error / energy,
            "reference": bias_estimate(slepian, series, locations, config.delta, normalize=True),
        }

    return _map(_point, list(config.gamma_factors), config.parallel, "bias")


def _interference_rows(config: ExperimentConfig) -> List[dict]:
    geometry, angle = _analysis_geometry(config)
    spec = config.spec()
    n_samples = config.bias_snapshots
    basis = FourierExtensionBasis.for_array(geometry, spec, n_samples, config.gamma)
    locations = sample_locations(geometry, spec, n_samples, angle)
    start, interval = observation_interval(locations)
    slepian = slepian_decompose(
        interval, spec.bandwidth, grid_density=config.grid_density, start=start
    )

    def _point(separation: float) -> dict:
        interferer_angle = angle - np.deg2rad(separation)
        if abs(interferer_angle) > np.pi / 2:
            raise ConfigError(f"Separation {separation} deg puts the interferer past endfire.")
        bias = interference_bias(
            slepian, basis, geometry, spec, angle, interferer_angle, slepian, config.delta
        )
        mean, error = monte_carlo_interference_bias(
            slepian,
            basis,
            geometry,
            spec,
            angle,
            interferer_angle,
            slepian,
            config.delta,
            config.analysis_trials,
            seed=config.seed,
        )
        return {
            "sweep": "interference",
            "parameter": separation,
            "analytic": bias.total,
            "monte_carlo": mean,
            "monte_carlo_se": error,
            "reference": bias.source,
        }

    return _map(_point, list(config.separations), config.parallel, "interference")


def run_error_analysis(config: ExperimentConfig) -> List[dict]:
    """Variance over N, bias over gamma and interference bias over angular
    separation, each with a Monte Carlo column.

    The `reference` column holds sigma^2 / M for the variance sweep, the
    bias of a plain Fourier series with the same number of terms for the
    bias sweep, and the source-leakage part of the interference bias.
    """
    rows = _variance_rows(config) + _bias_rows(config) + _interference_rows(config)
    _write(
        config,
        ["sweep", "parameter", "analytic", "monte_carlo", "monte_carlo_se", "reference"],
        rows,
        M=config.analysis_elements,
    )
    return rows


RUNNERS = {
    "snr_sweep": run_snr_sweep,
    "runtime_sweep": run_runtime_sweep,
    "beam_pattern": run_beam_pattern,
    "error_analysis": run_error_analysis,
    "nulling": run_nulling,
    "offgrid": run_offgrid,
}


def run_experiment(config: ExperimentConfig) -> List[dict]:
    log.info(f"Running {config.kind} (config {config.digest()[:12]}, seed {config.seed})")
    return RUNNERS[config.kind](config)
