"""Figure rendering for the report paths.

Everything draws from data the caller already computed; nothing here touches
the integrators. Files are PNG via the Agg backend, safe for headless runs.
The byte-identical output contract covers the text and CSV artifacts only;
images carry backend-dependent encoding.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["fig_trajectories", "fig_sweep", "fig_verify"]

_BRANCH_COLORS = {
    "gg": "#c0392b",
    "gf": "#2980b9",
    "fg": "#27ae60",
    "ff": "#7f8c8d",
}


def fig_trajectories(report, path) -> None:
    """Excitation histories of the four branches from one gate run."""
    trajs = report.trajectories
    if not trajs:
        raise ValueError("report carries no trajectories; rerun with keep_trajectories")
    fig, (ax_e, ax_n) = plt.subplots(2, 1, figsize=(7.0, 5.4), sharex=True)
    labels = ("gg", "gf", "fg", "ff")
    for lbl, tr in zip(labels, trajs):
        color = _BRANCH_COLORS[lbl]
        ax_e.plot(tr.times, tr.observables["pe"], color=color, lw=0.9, label=lbl)
        ax_n.plot(tr.times, tr.observables["nph"], color=color, lw=0.9)
    ax_e.set_ylabel("excited-state population")
    ax_n.set_ylabel("photon number")
    ax_n.set_xlabel("t (1/g)")
    ax_e.legend(loc="upper right", ncol=4, fontsize=8)
    ax_e.set_title(
        f"{report.engine}: conditional phase {report.conditional_phase:.4f} rad "
        f"over t = {report.gate_time:g}",
        fontsize=10,
    )
    for ax in (ax_e, ax_n):
        ax.grid(alpha=0.25, lw=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def fig_sweep(axes, rows, path) -> None:
    """Phase rate and infidelity across the sweep grid.

    One axis: line plots. Two axes: the rate as a color map. Failed points
    are dropped from the plotted data but still counted in the caption.
    """
    good = [r for r in rows if not r.get("error")]
    n_bad = len(rows) - len(good)
    if not good:
        raise ValueError("no successful sweep points to plot")
    if len(axes) == 1:
        name = axes[0]
        x = np.array([float(r[name]) for r in good])
        rate = np.array([float(r["phase_rate"]) for r in good])
        infid = np.array([float(r["infidelity_estimate"]) for r in good])
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 5.0), sharex=True)
        ax1.plot(x, rate, "o-", color="#2c3e50", ms=3.5, lw=1.0)
        ax1.set_ylabel("conditional-phase rate (g)")
        ax2.plot(x, infid, "o-", color="#c0392b", ms=3.5, lw=1.0)
        ax2.set_ylabel("infidelity estimate")
        ax2.set_xlabel(name)
        for ax in (ax1, ax2):
            ax.grid(alpha=0.25, lw=0.4)
    else:
        n1, n2 = axes
        v1 = sorted({float(r[n1]) for r in good})
        v2 = sorted({float(r[n2]) for r in good})
        grid = np.full((len(v2), len(v1)), np.nan)
        for r in good:
            i = v2.index(float(r[n2]))
            j = v1.index(float(r[n1]))
            grid[i, j] = float(r["phase_rate"])
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        mesh = ax.pcolormesh(v1, v2, grid, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="conditional-phase rate (g)")
        ax.set_xlabel(n1)
        ax.set_ylabel(n2)
    title = f"sweep over {', '.join(axes)} ({len(good)} points"
    title += f", {n_bad} failed)" if n_bad else ")"
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def fig_verify(summary, path) -> None:
    """Checklist panel: one row per check, pass/fail colored."""
    results = summary.results
    fig_h = 0.8 + 0.42 * len(results)
    fig, ax = plt.subplots(figsize=(7.2, fig_h))
    ax.set_axis_off()
    ax.set_xlim(0, 1)
    ax.set_ylim(0, len(results))
    for k, res in enumerate(results):
        y = len(results) - 1 - k + 0.5
        ok = res.passed
        ax.add_patch(plt.Rectangle(
            (0.0, y - 0.44), 1.0, 0.88,
            color="#eaf7ea" if ok else "#fdecea", zorder=0,
        ))
        ax.text(0.015, y, f"{res.ident}", va="center", ha="left",
                fontsize=10, family="monospace")
        ax.text(0.06, y, res.name, va="center", ha="left", fontsize=10)
        ax.text(0.84, y, "pass" if ok else "FAIL", va="center", ha="left",
                fontsize=10, weight="bold",
                color="#1e7d32" if ok else "#b71c1c")
        ax.text(0.995, y, f"{res.seconds:.1f}s", va="center", ha="right",
                fontsize=8, color="#555555")
    n_ok = sum(r.passed for r in results)
    ax.set_title(f"acceptance checklist: {n_ok}/{len(results)} passed", fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
