"""Figure rendering for scenario output directories.

Figures are drawn from the delimited files a run leaves behind, not from
in-memory state, so a report can be re-rendered from disk at any time.
"""

from __future__ import annotations

import glob
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_trajectories", "plot_vtraces", "plot_stability"]


def _read_csv(path: str) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.shape == ():  # single row
        data = data.reshape(1)
    return {name: np.asarray(data[name], dtype=float) for name in data.dtype.names}


def plot_trajectories(out_dir: str, fname: str = "trajectories.png") -> str:
    """Overlay x(t) for every traj_*.csv in the directory."""
    paths = sorted(glob.glob(os.path.join(out_dir, "traj_*.csv")))
    if not paths:
        raise FileNotFoundError(f"no traj_*.csv under {out_dir!r}")
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for path in paths:
        cols = _read_csv(path)
        ax.plot(cols["t"], cols["x"], lw=0.8, alpha=0.8)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("t")
    ax.set_ylabel("x(t)")
    ax.set_title(f"{len(paths)} runs")
    target = os.path.join(out_dir, fname)
    fig.tight_layout()
    fig.savefig(target, dpi=130)
    plt.close(fig)
    return target


def plot_vtraces(out_dir: str, fname: str = "vtrace.png") -> str:
    """Step plot of the sign-change count along every run."""
    paths = sorted(glob.glob(os.path.join(out_dir, "vtrace_*.csv")))
    if not paths:
        raise FileNotFoundError(f"no vtrace_*.csv under {out_dir!r}")
    fig, ax = plt.subplots(figsize=(9, 4.5))
    cap = 0.0
    for path in paths:
        cols = _read_csv(path)
        finite = cols["v"][np.isfinite(cols["v"])]
        if finite.size:
            cap = max(cap, float(finite.max()))
    clip = cap + 2.0 if cap else 3.0
    for path in paths:
        cols = _read_csv(path)
        v = cols["v"].copy()
        inf_mask = np.isinf(v)
        v[inf_mask] = clip
        ax.step(cols["t"], v, where="post", lw=0.9, alpha=0.8)
        if np.any(inf_mask):
            ax.plot(cols["t"][inf_mask], v[inf_mask], "x", ms=4, color="crimson")
    ax.set_xlabel("t")
    ax.set_ylabel("V over [eta(t), t]")
    ax.set_ylim(-0.3, clip + 0.7)
    ax.set_title("sign-change functional (x marks clipped infinities)")
    target = os.path.join(out_dir, fname)
    fig.tight_layout()
    fig.savefig(target, dpi=130)
    plt.close(fig)
    return target


def plot_stability(sweep_csv: str, fname: str = "stability.png") -> str:
    """Unstable-count chart over the swept (B, tau) plane, one panel per A."""
    cols = _read_csv(sweep_csv)
    a_vals = np.unique(cols["A"])
    fig, axes = plt.subplots(
        1, len(a_vals), figsize=(4.0 * len(a_vals), 3.6), squeeze=False, sharey=True
    )
    for ax, a in zip(axes[0], a_vals):
        sel = cols["A"] == a
        sc = ax.scatter(
            cols["B"][sel],
            cols["tau"][sel],
            c=cols["m_star"][sel],
            cmap="viridis",
            s=42,
            edgecolors="k",
            linewidths=0.4,
        )
        edge = cols["hyperbolic"][sel] == 0
        if np.any(edge):
            ax.scatter(
                cols["B"][sel][edge],
                cols["tau"][sel][edge],
                marker="s",
                facecolors="none",
                edgecolors="crimson",
                s=110,
                linewidths=1.2,
            )
        ax.set_xlabel("B")
        ax.set_title(f"A = {a:g}")
    axes[0][0].set_ylabel("tau")
    fig.colorbar(sc, ax=axes[0][-1], label="unstable roots")
    target = os.path.join(os.path.dirname(sweep_csv), fname)
    fig.tight_layout()
    fig.savefig(target, dpi=130)
    plt.close(fig)
    return target
