"""Plot-data CSVs and rendered figures for the concentration report.

Three data files back the three figures:

  ratio_vs_eps.csv        scaled least energy over its limit, per eps
  peak_radius_vs_eps.csv  original-coordinate peak radii vs eps
  decay_profile.csv       log|v| against sphere distance to nearest peak

Each CSV starts with a '#' comment line documenting its columns, so the
files are self-describing for external plotting.  Figures are rendered
with the Agg backend straight to PNG next to the data.
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import nearest_peak_distance

__all__ = [
    "write_ratio_csv", "write_peak_radius_csv", "write_decay_csv",
    "decay_profile_points", "render_figures", "emit_plot_data",
]


def _fmt(x) -> str:
    return "%.12g" % x


def write_ratio_csv(records, path) -> None:
    """One row per eps: the ratio eps^k d_eps / (2 omega_k M0) and its
    deviation from 1."""
    recs = sorted(records, key=lambda r: -r.eps)
    lines = ["# eps: semiclassical parameter; ratio: eps^k * d_eps over "
             "the limit value; deviation: |ratio - 1|",
             "eps,ratio,deviation"]
    for r in recs:
        lines.append(",".join([_fmt(r.eps), _fmt(r.ratio),
                               _fmt(abs(r.ratio - 1.0))]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_peak_radius_csv(records, rstar, path) -> None:
    """One row per eps: radii of the original-coordinate peaks and the
    minimizer radius of the concentration weight for reference."""
    recs = sorted(records, key=lambda r: -r.eps)
    lines = ["# eps: semiclassical parameter; r_plus/r_minus: radii of "
             "the positive and negative peaks; r_star: weight minimizer",
             "eps,r_plus,r_minus,r_star"]
    for r in recs:
        lines.append(",".join([_fmt(r.eps), _fmt(r.P1.r), _fmt(r.P2.r),
                               _fmt(rstar)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def decay_profile_points(grid, values, peaks, floor=1e-12):
    """Distance to the nearest peak and log|v| for every node with |v|
    above the floor, sorted by distance."""
    values = np.asarray(values, dtype=float)
    dist = nearest_peak_distance(grid, peaks)
    mask = np.abs(values) > floor
    d = dist[mask]
    y = np.log(np.abs(values[mask]))
    order = np.argsort(d, kind="stable")
    return d[order], y[order]


def write_decay_csv(grid, values, peaks, path, floor=1e-12) -> None:
    """Decay profile of one solution; rows with |v| <= floor are
    excluded since their logs are noise."""
    d, y = decay_profile_points(grid, values, peaks, floor=floor)
    lines = ["# distance: sphere distance to the nearest peak (reduced "
             "coordinates); log_abs_v: log of |v| at the node",
             "distance,log_abs_v"]
    for di, yi in zip(d, y):
        lines.append(_fmt(di) + "," + _fmt(yi))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def render_figures(records, rstar, out_dir, grid=None, values=None,
                   peaks=None, fit=None, decay_eps=None) -> list:
    """Render the three report figures into out_dir; returns the paths.
    The decay figure is only drawn when a solution field is supplied."""
    recs = sorted(records, key=lambda r: -r.eps)
    eps = [r.eps for r in recs]
    written = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(eps, [r.ratio for r in recs], "o-", label="measured ratio")
    ax.axhline(1.0, color="gray", linestyle="--", label="limit value")
    ax.set_xlabel("eps")
    ax.set_ylabel("scaled energy / limit")
    ax.set_title("Energy concentration ratio")
    ax.invert_xaxis()
    ax.legend()
    path = os.path.join(str(out_dir), "ratio_vs_eps.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(eps, [r.P1.r for r in recs], "o-", label="positive peak")
    ax.plot(eps, [r.P2.r for r in recs], "s-", label="negative peak")
    ax.axhline(rstar, color="gray", linestyle="--",
               label="weight minimizer")
    ax.set_xlabel("eps")
    ax.set_ylabel("peak radius")
    ax.set_title("Peak migration")
    ax.invert_xaxis()
    ax.legend()
    path = os.path.join(str(out_dir), "peak_radius_vs_eps.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    if grid is not None and values is not None and peaks:
        d, y = decay_profile_points(grid, values, peaks)
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        step = max(1, len(d) // 4000)
        ax.plot(d[::step], y[::step], ".", markersize=2,
                label="nodes" if decay_eps is None
                else "nodes (eps=%g)" % decay_eps)
        if fit is not None:
            dd = np.linspace(0.0, float(d.max()), 50)
            ax.plot(dd, fit.log_amplitude - fit.beta * dd, "-",
                    label="fit: rate %.3f" % fit.beta)
        ax.set_xlabel("distance to nearest peak")
        ax.set_ylabel("log |v|")
        ax.set_title("Exponential decay profile")
        ax.legend()
        path = os.path.join(str(out_dir), "decay_profile.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def emit_plot_data(records, rstar, out_dir, grid=None, values=None,
                   peaks=None) -> list:
    """Write the plot-data CSVs; the decay profile is included when a
    solution field is supplied.  Returns the written paths."""
    ratio_path = os.path.join(str(out_dir), "ratio_vs_eps.csv")
    write_ratio_csv(records, ratio_path)
    peaks_path = os.path.join(str(out_dir), "peak_radius_vs_eps.csv")
    write_peak_radius_csv(records, rstar, peaks_path)
    written = [ratio_path, peaks_path]
    if grid is not None and values is not None and peaks:
        decay_path = os.path.join(str(out_dir), "decay_profile.csv")
        write_decay_csv(grid, values, peaks, decay_path)
        written.append(decay_path)
    return written
