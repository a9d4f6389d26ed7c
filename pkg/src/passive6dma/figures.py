"""Figure rendering for experiment output.

Imported lazily by the experiment driver so the library itself does not pull
in matplotlib.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_MARKERS = {
    "distributed-6dma": "o",
    "centralized-6dma": "s",
    "fixed-irs": "^",
}


def _aggregates(rows):
    return [r for r in rows if r["row_type"] == "aggregate"]


def _series(rows, scheme, pattern):
    points = sorted(
        (r["power_dbm"], r["sum_rate_bps_hz"], r["sum_rate_std_bps_hz"])
        for r in rows
        if r["scheme"] == scheme and r["pattern"] == pattern
    )
    return ([p for p, _, _ in points], [m for _, m, _ in points],
            [s for _, _, s in points])


def rate_figure(rows, pattern: str, path: Path):
    """Mean sum rate versus transmit power, one line per scheme."""
    rows = _aggregates(rows)
    schemes = sorted({r["scheme"] for r in rows})
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for scheme in schemes:
        powers, means, stds = _series(rows, scheme, pattern)
        if not powers:
            continue
        ax.errorbar(powers, means, yerr=stds, marker=_MARKERS.get(scheme, "x"),
                    capsize=3, label=scheme)
    ax.set_xlabel("transmit power (dBm)")
    ax.set_ylabel("sum rate (bps/Hz)")
    ax.set_title(f"{pattern} pattern")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def gap_figure(rows, path: Path):
    """Isotropic-minus-directive mean-rate gap versus power per scheme."""
    rows = _aggregates(rows)
    schemes = sorted({r["scheme"] for r in rows})
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    drew = False
    for scheme in schemes:
        powers_i, means_i, _ = _series(rows, scheme, "isotropic")
        powers_d, means_d, _ = _series(rows, scheme, "directive")
        if not powers_i or powers_i != powers_d:
            continue
        gaps = [i - d for i, d in zip(means_i, means_d)]
        ax.plot(powers_i, gaps, marker=_MARKERS.get(scheme, "x"), label=scheme)
        drew = True
    if not drew:
        plt.close(fig)
        return None
    ax.set_xlabel("transmit power (dBm)")
    ax.set_ylabel("isotropic minus directive sum rate (bps/Hz)")
    ax.set_title("radiation pattern gap")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_all(rows, out_dir, config) -> list:
    """Render every figure the row set supports; returns the written paths."""
    out_dir = Path(out_dir)
    paths = []
    for pattern in config.patterns:
        paths.append(rate_figure(rows, pattern, out_dir / f"rate_vs_power_{pattern}.png"))
    if {"directive", "isotropic"} <= set(config.patterns):
        gap_path = gap_figure(rows, out_dir / "pattern_gap_vs_power.png")
        if gap_path is not None:
            paths.append(gap_path)
    return paths
