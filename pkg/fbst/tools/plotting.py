from collections import defaultdict
from typing import List, Optional

import matplotlib.pyplot as plt
import numpy as np

from .io import read_results


def _group(rows: List[dict], key: str) -> dict:
    groups = defaultdict(list)
    for row in rows:
        groups[row[key]].append(row)
    return groups


def plot_beam_pattern(rows: List[dict], title: Optional[str] = None):
    """Returns a matplotlib figure with one axes per algorithm, each showing
    the beam pattern of every test frequency superimposed.

    Parameters
    ----------
    rows : list of dict
        Rows with `algorithm`, `angle` (radians), `frequency` and `gain_db`,
        as written by the pattern experiment. Rows without an algorithm are
        drawn on a single axes.
    """
    rows = [dict(r, algorithm=r.get("algorithm", "")) for r in rows]
    groups = sorted(_group(rows, "algorithm").items())
    figure, axes = plt.subplots(
        len(groups), 1, figsize=(8, 3 * len(groups)), sharex=True, squeeze=False
    )
    for ax, (algorithm, group) in zip(axes[:, 0], groups):
        for frequency, points in sorted(
            _group(group, "frequency").items(), key=lambda g: float(g[0])
        ):
            angles = np.rad2deg([float(r["angle"]) for r in points])
            gain = np.asarray([float(r["gain_db"]) for r in points])
            order = np.argsort(angles)
            ax.plot(angles[order], gain[order], linewidth=0.8)
        ax.set_ylim(bottom=-80, top=5)
        ax.set_ylabel("Gain (dB)")
        if algorithm:
            ax.set_title(algorithm)
        ax.grid(alpha=0.3)

    axes[-1, 0].set_xlabel("Angle (degrees)")
    if title:
        figure.suptitle(title)
    figure.tight_layout()
    return figure


def plot_snr_sweep(rows: List[dict], n_elements: Optional[int] = None):
    """Returns a figure of beamformed against nominal SNR, one line per
    algorithm, with the ideal array gain as reference if `n_elements` is
    given."""
    figure = plt.figure(figsize=(6, 5))
    for algorithm, group in sorted(_group(rows, "algorithm").items()):
        nominal = [float(r["nominal_snr_db"]) for r in group]
        output = [float(r["beamformed_snr_db"]) for r in group]
        plt.plot(nominal, output, "o-", label=algorithm)

    if n_elements is not None:
        nominal = sorted({float(r["nominal_snr_db"]) for r in rows})
        ideal = np.asarray(nominal) + 10.0 * np.log10(n_elements)
        plt.plot(nominal, ideal, "k--", label="ideal")

    plt.xlabel("Nominal SNR (dB)")
    plt.ylabel("Beamformed SNR (dB)")
    plt.legend()
    plt.grid(alpha=0.3)
    plt.tight_layout()
    return figure


def plot_runtime_sweep(rows: List[dict]):
    """Returns a log-log figure of per-sample runtime against array size."""
    figure = plt.figure(figsize=(6, 5))
    for algorithm, group in sorted(_group(rows, "algorithm").items()):
        M = [int(r["M"]) for r in group]
        t = [float(r["per_sample_time"]) for r in group]
        plt.loglog(M, t, "o-", label=algorithm, base=2)

    plt.xlabel("Array elements M")
    plt.ylabel("Per-sample runtime (s)")
    plt.legend()
    plt.grid(alpha=0.3, which="both")
    plt.tight_layout()
    return figure


def plot_results(filename: str, output: Optional[str] = None):
    """Plot a results CSV according to its `experiment` metadata entry and
    optionally save the figure."""
    metadata, rows = read_results(filename)
    kind = metadata.get("experiment")
    if kind == "beam_pattern":
        figure = plot_beam_pattern(rows, title=f"Steered to {metadata.get('steering', '?')} deg")
    elif kind == "snr_sweep":
        figure = plot_snr_sweep(rows, int(metadata["M"]) if "M" in metadata else None)
    elif kind == "runtime_sweep":
        figure = plot_runtime_sweep(rows)
    else:
        raise ValueError(f"No plot defined for experiment '{kind}'.")

    if output is not None:
        figure.savefig(output, dpi=150)
        plt.close(figure)
    return figure
