"""Render figures from the CSV/JSON files written by the ``vshp`` CLI.

Usage::

    vshp simulate --scenario fig6.scn --out runs
    vshp modes --model euler --out runs
    vshp sweep --model euler --grid pstar --out runs
    vshp efficiency-map --out runs
    python scripts/plot_figures.py runs

Every file found in the directory is plotted to ``<name>.png`` next to it.
"""

import argparse
import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_table(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def numeric(rows, header, name):
    i = header.index(name)
    return np.array([float(r[i]) if r[i] not in ("", "nan") else np.nan for r in rows])


def plot_trace(path):
    header, rows = read_table(path)
    t = numeric(rows, header, "t")
    panels = [("omega", "speed [pu]"), ("P_m", "power [pu]"), ("g", "opening [pu]"),
              ("h", "head [pu]")]
    fig, axes = plt.subplots(len(panels), 1, sharex=True, figsize=(7, 8))
    for ax, (name, label) in zip(axes, panels):
        if name in header:
            ax.plot(t, numeric(rows, header, name), lw=1)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    if "P_g" in header:
        axes[1].plot(t, numeric(rows, header, "P_g"), lw=1, ls="--", label="P_g")
        axes[1].legend()
    axes[-1].set_xlabel("time [s]")
    fig.suptitle(path.stem)
    return fig


def plot_modes(path):
    data = json.loads(path.read_text())
    modes = data["modes"]
    states = data["states"]
    P = np.array([[np.nan if v is None else v for v in row] for row in data["participation"]])
    keep = [k for k, m in enumerate(modes) if m["imag"] >= 0]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    re = [modes[k]["real"] for k in keep]
    im = [modes[k]["imag"] for k in keep]
    ax1.scatter(re, im, marker="x")
    for k in keep:
        ax1.annotate(modes[k]["dominant_state"], (modes[k]["real"], modes[k]["imag"]),
                     fontsize=7)
    ax1.set_xlabel("real part [1/s]")
    ax1.set_ylabel("imaginary part [rad/s]")
    ax1.grid(alpha=0.3)
    im2 = ax2.imshow(P[:, keep], aspect="auto", cmap="viridis", vmin=0, vmax=1)
    ax2.set_yticks(range(len(states)), states, fontsize=7)
    ax2.set_xticks(range(len(keep)),
                   [f"{modes[k]['frequency_hz']:.3g} Hz" for k in keep], rotation=60, fontsize=7)
    fig.colorbar(im2, ax=ax2, label="relative participation")
    fig.suptitle(path.stem)
    fig.tight_layout()
    return fig


def plot_sweep(path):
    header, rows = read_table(path)
    fig, ax = plt.subplots(figsize=(6, 5))
    groups = {}
    for r in rows:
        rec = dict(zip(header, r))
        if rec.get("governor_mode") != "1" or not rec.get("real"):
            continue
        key = (rec["P_star"], rec["omega_star"])
        groups.setdefault(key, []).append((float(rec["real"]), float(rec["imag"])))
    for (P, w), pts in groups.items():
        pts = np.array(pts)
        ax.scatter(pts[:, 0], pts[:, 1], label=f"P*={float(P):.2f}, w*={float(w):.2f}", s=18)
    ax.set_xlabel("real part [1/s]")
    ax.set_ylabel("imaginary part [rad/s]")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    ax.set_title(path.stem)
    return fig


def plot_efficiency(path):
    header, rows = read_table(path)
    x = numeric(rows, header, header[0])
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in header[1:]:
        ax.plot(x, numeric(rows, header, name), label=name)
    ax.set_xlabel(header[0])
    ax.set_ylabel("efficiency [-]")
    ax.grid(alpha=0.3)
    ax.legend()
    ax.set_title(path.stem)
    return fig


def figure_for(path):
    name = path.name
    if name.startswith("modes_") and name.endswith(".json"):
        return plot_modes(path)
    if name.startswith("sweep_") and name.endswith(".csv"):
        return plot_sweep(path)
    if name.startswith("efficiency_") and name.endswith(".csv"):
        return plot_efficiency(path)
    if name.endswith(".csv"):
        return plot_trace(path)
    return None


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("directory", type=Path)
    args = parser.parse_args(argv)
    for path in sorted(args.directory.iterdir()):
        fig = figure_for(path)
        if fig is None:
            continue
        out = path.with_suffix(".png")
        fig.savefig(out, dpi=120)
        plt.close(fig)
        print(out)


if __name__ == "__main__":
    main()
