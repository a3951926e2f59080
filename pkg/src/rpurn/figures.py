"""File-based figure rendering for the report paths.

Every function writes a PNG next to the delimited output and returns the
path; nothing is shown interactively (the Agg backend is forced), so these
are safe from headless runs and the CLI.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .coupling import ContractionDiagnostic
from .gof import reference_distribution
from .simulate import Trajectory

__all__ = [
    "trajectory_figure",
    "contraction_figure",
    "chi_squared_figure",
    "decay_figure",
]


def trajectory_figure(traj: Trajectory, path, coordinate: int = 1) -> Path:
    """Predictive mean (when recorded) and running empirical mean of one
    coordinate along the trajectory."""
    if not 1 <= coordinate <= traj.params.k:
        raise ValueError(f"coordinate must lie in 1..{traj.params.k}")
    i = coordinate - 1
    steps = np.arange(1, traj.n_steps + 1)
    running_mean = np.cumsum(traj.draws == coordinate) / steps
    fig, ax = plt.subplots(figsize=(7, 4))
    if traj.psi_path is not None:
        ax.plot(np.arange(traj.n_steps + 1), traj.psi_path[:, i], lw=0.7, color="tab:red",
                label=f"predictive mean, color {coordinate}")
    ax.plot(steps, running_mean, lw=1.2, color="tab:blue",
            label=f"running empirical mean, color {coordinate}")
    ax.set_xlabel("step")
    ax.set_ylabel("probability")
    ax.set_title(f"alpha={traj.params.alpha:g}, beta={traj.params.beta:g}")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def contraction_figure(diag: ContractionDiagnostic, path) -> Path:
    """Mean coupled distance per step against the analytic envelope."""
    steps = np.arange(diag.mean_distance.size)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.errorbar(steps, diag.mean_distance, yerr=3 * diag.stderr, fmt="o-", ms=3,
                lw=1, label="mean L1 distance (3 se)")
    ax.plot(steps, diag.envelope, "k--", lw=1, label="contraction envelope")
    positive = diag.mean_distance > 0
    if positive.sum() > 1:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("|psi1 - psi2|_1")
    ax.set_title(f"coupled contraction, gamma={diag.gamma:.4g}")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def chi_squared_figure(stats, dof: int, lam: float, path) -> Path:
    """Histogram of replicate fit statistics with the gamma reference density,
    and the ECDF against the reference CDF."""
    stats = np.sort(np.asarray(stats, dtype=float))
    dist = reference_distribution(dof, lam)
    grid = np.linspace(0, max(stats.max(), dist.mean * 3), 400)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.hist(stats, bins=60, density=True, alpha=0.6, color="tab:blue", label="replicates")
    ax1.plot(grid[1:], [dist.pdf(x) for x in grid[1:]], "k-", lw=1.2, label="reference density")
    ax1.set_xlabel("fit statistic")
    ax1.set_ylabel("density")
    ax1.legend(loc="best", fontsize=8)
    ecdf = np.arange(1, stats.size + 1) / stats.size
    ax2.step(stats, ecdf, where="post", label="empirical CDF")
    ax2.plot(grid, [dist.cdf(x) for x in grid], "k--", lw=1, label="reference CDF")
    ax2.set_xlabel("fit statistic")
    ax2.set_ylabel("CDF")
    ax2.legend(loc="best", fontsize=8)
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
    fig.suptitle(f"fit statistic vs Gamma({dof}/2, 1/(2*{lam:g}))")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def decay_figure(grid, medians, bound: float, beta: float, path) -> Path:
    """Medians of the scaled predictive-mean gap over the step grid."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, medians, "o-", label="median of beta^N |psi_N - psi_2N|")
    ax.axhline(bound, color="k", ls="--", lw=1, label="closed-form bound")
    ax.set_ylim(0, max(bound * 1.2, max(medians) * 1.2, 1e-12))
    ax.set_xlabel("N")
    ax.set_ylabel("scaled gap")
    ax.set_title(f"geometric decay, beta={beta:g}")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
