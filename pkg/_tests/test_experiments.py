import os

import numpy as np
import pytest

from fbst.errors import ConfigError
from fbst.experiments import (
    ExperimentConfig,
    beamform_block,
    run_experiment,
    simulate_block,
)
from fbst.tools.io import read_results

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def _small(tmp_path, kind, **overrides):
    """A quick 8-element configuration writing into `tmp_path`."""
    return ExperimentConfig(
        kind=kind,
        algorithms=("fbst_superfast", "fbst_precompute", "das", "fds"),
        output=str(tmp_path / f"{kind}.csv"),
        elements=8,
        components=8,
        taps=8,
        warmup=0,
        **overrides,
    )


def _write_ini(tmp_path, text):
    filename = tmp_path / "experiment.cfg"
    filename.write_text(text)
    return str(filename)


def test_reference_config_parses():
    config = ExperimentConfig.from_file(os.path.join(CONFIG_DIR, "reference.cfg"))
    assert config.kind == "snr_sweep"
    assert config.beams is None and config.variant is None
    assert config.sample_rate is None
    assert config.pattern_nulls == (20.0,)
    assert config.nulling_modes == ("arrayspace", "beamspace", "timedomain")


def test_from_file_keeps_defaults(tmp_path):
    filename = _write_ini(tmp_path, "[array]\nelements = 16\n\n[fbst]\nbeams = 33\n")
    config = ExperimentConfig.from_file(filename)
    assert config.elements == 16 and config.beams == 33
    assert config.snapshots == ExperimentConfig().snapshots


@pytest.mark.parametrize(
    "text",
    [
        "[array]\ncolour = blue\n",
        "[wiring]\nelements = 8\n",
        "[array]\nelements = many\n",
        "[experiment]\nparallel = sometimes\n",
        "[experiment]\nkind = tomography\n",
        "[fbst]\nvariant = fast\n",
        "[sweep]\nrepeats = 3\n",
        "[array]\nkind = upa\n",
        "[sweep]\nelements = 256, 64\n",
    ],
)
def test_from_file_rejects_invalid(tmp_path, text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(_write_ini(tmp_path, text))


def test_from_file_missing(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(str(tmp_path / "missing.cfg"))


def test_with_overrides():
    config = ExperimentConfig()
    changed = config.with_overrides(kind="nulling", seed=None, variant="superfast")
    assert changed.kind == "nulling" and changed.variant == "superfast"
    assert changed.seed == config.seed
    assert changed.digest() != config.digest()
    with pytest.raises(ConfigError):
        config.with_overrides(algorithms=("beamscan",))


def test_planar_angles():
    config = ExperimentConfig(array="upa", elements=16, angle=(57.0, 77.0), interferers=(10, 20, 30, 40))
    np.testing.assert_allclose(config.source_angle(), np.deg2rad([57.0, 77.0]))
    assert config.interferer_angles().shape == (2, 2)
    with pytest.raises(ConfigError):
        config.interferer_angles(3)


def test_perturbed_linear_geometry_is_reproducible():
    config = ExperimentConfig(array="linear", elements=8, perturbation=0.2, seed=3)
    assert config.geometry().digest() == config.geometry().digest()
    assert config.geometry().digest() != config.with_overrides(seed=4).geometry().digest()


@pytest.mark.parametrize("algorithm", ["fbst_superfast", "das", "fds"])
def test_beamform_block_shapes(tmp_path, algorithm):
    config = _small(tmp_path, "snr_sweep", snapshots=32)
    block, _ = simulate_block(config)
    beams = beamform_block(config, block, algorithm)
    assert beams.samples.shape[1] == 32
    assert beams.samples.shape[0] == (8 if algorithm == "fds" else config.fbst().n_beams)


def test_snr_sweep(tmp_path):
    config = _small(tmp_path, "snr_sweep", trials=2, sweep_snr_db=(0.0, 20.0))
    rows = run_experiment(config)
    assert len(rows) == 8
    assert all(np.isfinite(row["beamformed_snr_db"]) for row in rows)
    at_zero = {row["algorithm"]: row["beamformed_snr_db"] for row in rows if row["nominal_snr_db"] == 0.0}
    assert at_zero["das"] > 3.0
    assert at_zero["fbst_superfast"] > 3.0

    metadata, written = read_results(config.output)
    assert metadata["experiment"] == "snr_sweep"
    assert metadata["config_hash"] == config.digest()
    assert len(written) == 8


def test_runtime_sweep(tmp_path):
    config = _small(tmp_path, "runtime_sweep", sweep_elements=(8, 16), snapshots=32)
    rows = run_experiment(config)
    assert len(rows) == 8
    assert all(row["per_sample_time"] > 0 for row in rows)
    fbst_rows = [row for row in rows if row["algorithm"].startswith("fbst")]
    assert all(row["B"] == row["M"] for row in fbst_rows)
    assert all(row["setup_time"] > 0 for row in fbst_rows)


def test_beam_pattern(tmp_path):
    config = _small(
        tmp_path,
        "beam_pattern",
        pattern_angles=(-90.0, 90.0, 13.0),
        pattern_frequencies=3,
        pattern_nulls=(20.0,),
        nulling_delta=1e-3,
    )
    rows = run_experiment(config)
    # both FBST variants share one beamformer
    assert len(rows) == 3 * 13 * 3
    for algorithm in ("fbst", "das", "fds"):
        gains = [row["gain_db"] for row in rows if row["algorithm"] == algorithm]
        assert max(gains) == pytest.approx(0.0, abs=1e-9)


def test_offgrid(tmp_path):
    config = _small(tmp_path, "offgrid", snapshots=32, pattern_frequencies=3)
    rows = run_experiment(config)
    assert len(rows) == 3
    for row in rows:
        assert np.isfinite(row["difference_db"])
        assert row["difference_db"] == pytest.approx(
            row["interpolated_gain_db"] - row["direct_gain_db"]
        )


def test_nulling(tmp_path):
    config = _small(
        tmp_path,
        "nulling",
        nulling_elements=8,
        nulling_snapshots=(16,),
        nulling_counts=(0, 1),
        delta=1e-3,
        nulling_delta=1e-3,
        offgrid_beams=32,
    )
    rows = run_experiment(config)
    assert len(rows) == 6
    for row in rows:
        assert row["runtime"] > 0
        if row["mode"] in ("arrayspace", "beamspace") or row["P"] == 0:
            assert row["equivalence_error"] < 1e-6
        # interpolated interferer beams only approximate the projection
        assert row["interpolation_error"] < 0.5
        if row["P"] == 0 or row["mode"] == "arrayspace":
            assert row["interpolation_error"] == pytest.approx(row["equivalence_error"], abs=1e-12)


def test_nulling_needs_enough_interferers(tmp_path):
    config = _small(tmp_path, "nulling", nulling_elements=8, nulling_counts=(4,))
    with pytest.raises(ConfigError):
        run_experiment(config)


def test_error_analysis(tmp_path):
    config = _small(
        tmp_path,
        "error_analysis",
        analysis_elements=4,
        analysis_snapshots=(8, 16),
        bias_snapshots=8,
        gamma_factors=(1.5, 2.0),
        separations=(40.0,),
        analysis_trials=200,
    )
    rows = run_experiment(config)
    assert [row["sweep"] for row in rows] == [
        "variance",
        "variance",
        "bias",
        "bias",
        "interference",
    ]
    for row in rows:
        assert abs(row["monte_carlo"] - row["analytic"]) <= 5 * row["monte_carlo_se"]
    assert rows[0]["reference"] == pytest.approx(config.noise_variance / 4)


def test_pattern_rejects_planar_arrays(tmp_path):
    config = _small(tmp_path, "beam_pattern").with_overrides(
        array="upa", elements=16, angle=(57.0, 77.0), interferers=(10.0, 20.0)
    )
    with pytest.raises(ConfigError):
        run_experiment(config)
