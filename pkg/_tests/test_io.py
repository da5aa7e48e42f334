import numpy as np
import pytest

from fbst.errors import CacheError
from fbst.tools.io import (
    PlanCacheReader,
    PlanCacheWriter,
    ResultWriter,
    clear_cache,
    read_results,
)
from fbst.tools.plotting import plot_results


@pytest.fixture
def arrays():
    rng = np.random.default_rng(0)
    return {
        "column": rng.standard_normal(16) + 1j * rng.standard_normal(16),
        "zeta": np.arange(9, dtype=float),
    }


def test_plan_cache_round_trip(tmp_path, arrays):
    index = str(tmp_path / "cache" / "index.json")
    with PlanCacheWriter(index) as writer:
        writer.write("abc123", arrays, metadata={"B": 9})

    cache = PlanCacheReader(index)
    assert "abc123" in cache
    assert "other" not in cache
    assert len(cache) == 1
    assert list(cache) == ["abc123"]

    loaded, metadata = cache["abc123"]
    assert metadata["B"] == 9
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])


def test_plan_cache_keeps_existing_entries(tmp_path, arrays):
    index = str(tmp_path / "index.json")
    with PlanCacheWriter(index) as writer:
        writer.write("first", arrays)
    with PlanCacheWriter(index) as writer:
        writer.write("second", arrays)
    assert len(PlanCacheReader(index)) == 2


def test_plan_cache_detects_tampering(tmp_path, arrays):
    index = str(tmp_path / "index.json")
    with PlanCacheWriter(index) as writer:
        writer.write("abc123", arrays)
    np.savez(str(tmp_path / "abc123.npz"), **dict(arrays, zeta=np.zeros(9)))

    with pytest.raises(CacheError):
        PlanCacheReader(index)["abc123"]


def test_plan_cache_missing_key(tmp_path):
    with pytest.raises(CacheError):
        PlanCacheReader(str(tmp_path / "index.json"))["abc123"]


def test_plan_cache_needs_json_index(tmp_path):
    with pytest.raises(ValueError):
        PlanCacheWriter(str(tmp_path / "index.txt"))


def test_clear_cache(tmp_path, arrays):
    index = str(tmp_path / "index.json")
    with PlanCacheWriter(index) as writer:
        writer.write("a", arrays)
        writer.write("b", arrays)
    assert clear_cache(index) == 2
    assert not list(tmp_path.iterdir())
    assert clear_cache(index) == 0


def test_results_round_trip(tmp_path):
    filename = str(tmp_path / "out" / "snr.csv")
    with ResultWriter(filename, ["nominal_snr_db", "algorithm"], {"experiment": "snr_sweep"}) as out:
        out.write({"nominal_snr_db": -30, "algorithm": "das", "ignored": 1})
        out.extend([(0, "fds"), (10, "fbst_superfast")])

    metadata, rows = read_results(filename)
    assert metadata == {"experiment": "snr_sweep"}
    assert [r["algorithm"] for r in rows] == ["das", "fds", "fbst_superfast"]
    assert float(rows[0]["nominal_snr_db"]) == -30


def test_results_need_every_column(tmp_path):
    writer = ResultWriter(str(tmp_path / "r.csv"), ["a", "b"])
    with pytest.raises(ValueError):
        writer.write({"a": 1})


def test_results_not_written_after_failure(tmp_path):
    filename = tmp_path / "partial.csv"
    with pytest.raises(RuntimeError):
        with ResultWriter(str(filename), ["a"]) as out:
            out.write({"a": 1})
            raise RuntimeError("trial failed")
    assert not filename.exists()


def _write(filename, kind, columns, rows, **metadata):
    with ResultWriter(filename, columns, {"experiment": kind, **metadata}) as out:
        out.extend(rows)


@pytest.mark.parametrize("kind", ["snr_sweep", "runtime_sweep", "beam_pattern"])
def test_plot_results(tmp_path, kind):
    filename = str(tmp_path / f"{kind}.csv")
    if kind == "snr_sweep":
        rows = [(s, a, s + 15.0, s + 18.0, 2) for a in ("das", "fds") for s in (-10, 0, 10)]
        columns = ["nominal_snr_db", "algorithm", "beamformed_snr_db", "ideal_snr_db", "trials"]
        _write(filename, kind, columns, rows, M=64)
    elif kind == "runtime_sweep":
        rows = [(m, m + 1, 64, "das", 1e-6 * m, 0.0) for m in (64, 128, 256)]
        columns = ["M", "B", "N", "algorithm", "per_sample_time", "setup_time"]
        _write(filename, kind, columns, rows)
    else:
        rows = [
            (a, angle, f, -abs(angle) * 10.0)
            for a in ("das", "fbst")
            for f in (19e9, 21e9)
            for angle in np.linspace(-1.5, 1.5, 7)
        ]
        _write(filename, kind, ["algorithm", "angle", "frequency", "gain_db"], rows, steering=60.0)

    output = str(tmp_path / f"{kind}.png")
    plot_results(filename, output)
    assert (tmp_path / f"{kind}.png").stat().st_size > 0


def test_plot_results_unknown_experiment(tmp_path):
    filename = str(tmp_path / "nulling.csv")
    _write(filename, "nulling", ["mode"], [("beamspace",)])
    with pytest.raises(ValueError):
        plot_results(filename)
