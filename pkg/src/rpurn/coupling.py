"""Maximal coupling of categorical draws and coupled urn trajectories.

Two categorical laws x and y are coupled through a single uniform u by
partitioning (0,1] into left-open intervals, laid out left to right:

* first the overlap blocks ``A_i`` of width ``min(x_i, y_i)`` for i = 1..k,
  where both coordinates return category i;
* then the excess blocks of width ``x_i - min(x_i, y_i)`` (first coordinate)
  and, over the same remaining span, of width ``y_i - min(y_i, x_i)`` (second
  coordinate), again in index order.

The construction is a deterministic measurable function of (x, y, u); the two
coordinates have exactly the marginals x and y and disagree with probability
``1 - sum(min(x, y)) = |x - y|_1 / 2``, which is the total-variation optimum.
Because the map is piecewise constant in u, marginals and disagreement can be
integrated exactly over u, and the unit tests do exactly that instead of
sampling.

Coupled trajectories evolve two urns that share (alpha, beta, b0) but may
start from different compositions B0, feeding the same uniform stream through
the coupling at every step.  Each coordinate is then distributed exactly as a
single urn with its own B0.  For beta in [0,1) with |b0| > 0 the expected L1
distance between the two predictive means contracts:

    E |psi1_{n+1} - psi2_{n+1}|  <=  gamma |psi1_n - psi2_n| + c1_{n+1} + c2_{n+1}

where the slack terms vanish when the total mass starts at its fixed point
``|B0| = alpha / (1 - beta)`` and otherwise decay like beta^n; here they are
computed from the exact total-mass sequence rather than an order bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ModelParams, derive_constants, predictive_mean
from .simulate import MAX_TOTAL_MASS, Seed, Trajectory, make_generator

__all__ = [
    "maximal_coupling_pair",
    "coupling_intervals",
    "disagreement_probability",
    "CoupledPair",
    "coupled_trajectories",
    "coupled_distance_matrix",
    "ContractionDiagnostic",
    "contraction_diagnostic",
    "contraction_diagnostic_from_distances",
]

_SIMPLEX_TOL = 1e-9


def _check_simplex(vec, name: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"{name} must be a probability vector with at least 2 entries")
    if np.any(arr < -_SIMPLEX_TOL) or abs(arr.sum() - 1.0) > _SIMPLEX_TOL:
        raise ValueError(f"{name} is off the probability simplex beyond tolerance {_SIMPLEX_TOL:g}")
    return arr


def maximal_coupling_pair(x, y, u: float) -> tuple[int, int]:
    """Coupled categories (i, j), 1-based, for marginals x and y at uniform u."""
    x = _check_simplex(x, "x")
    y = _check_simplex(y, "y")
    if x.size != y.size:
        raise ValueError("x and y must have the same number of categories")
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValueError(f"uniform draw must lie strictly in (0,1), got {u}")
    k = x.size
    overlap = np.minimum(x, y)
    cum_overlap = np.cumsum(overlap)
    u0 = cum_overlap[-1]
    if u <= u0:
        i = int((cum_overlap < u).sum())
        i = min(i, k - 1)
        return i + 1, i + 1
    cum_x = u0 + np.cumsum(x - overlap)
    cum_y = u0 + np.cumsum(y - overlap)
    i = min(int((cum_x < u).sum()), k - 1)
    j = min(int((cum_y < u).sum()), k - 1)
    return i + 1, j + 1


def coupling_intervals(x, y) -> list[tuple[float, float, int, int]]:
    """Exact partition of (0,1] into ``(lo, hi, i, j)`` pieces on which the
    coupling is constant (empty pieces omitted).  Categories are 1-based."""
    x = _check_simplex(x, "x")
    y = _check_simplex(y, "y")
    if x.size != y.size:
        raise ValueError("x and y must have the same number of categories")
    overlap = np.minimum(x, y)
    pieces = []
    lo = 0.0
    for i, width in enumerate(overlap):
        if width > 0:
            pieces.append((lo, lo + width, i + 1, i + 1))
            lo += width
    u0 = lo
    excess_x = x - overlap
    excess_y = y - overlap
    # Both excess sequences tile (u0, 1]; walk their breakpoints jointly.
    bounds_x = u0 + np.cumsum(excess_x)
    bounds_y = u0 + np.cumsum(excess_y)
    cuts = sorted(set([u0, 1.0]) | set(bounds_x.tolist()) | set(bounds_y.tolist()))
    for lo_c, hi_c in zip(cuts[:-1], cuts[1:]):
        if hi_c - lo_c <= 0:
            continue
        mid = 0.5 * (lo_c + hi_c)
        i = min(int((bounds_x < mid).sum()), x.size - 1)
        j = min(int((bounds_y < mid).sum()), y.size - 1)
        pieces.append((lo_c, hi_c, i + 1, j + 1))
    return pieces


def disagreement_probability(x, y) -> float:
    """Exact probability that the coupled pair disagrees: 1 - sum(min(x,y))."""
    x = _check_simplex(x, "x")
    y = _check_simplex(y, "y")
    return max(0.0, float(1.0 - np.minimum(x, y).sum()))


@dataclass(frozen=True)
class CoupledPair:
    """Two trajectories driven by one uniform stream, plus their predictive-
    mean L1 distances at steps 0..n."""

    traj1: Trajectory
    traj2: Trajectory
    distances: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        if np.any(d < 0):
            raise ValueError("distances must be nonnegative")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)


def _check_shared_dynamics(params1: ModelParams, params2: ModelParams) -> None:
    if params1.k != params2.k:
        raise ValueError("coupled urns must have the same number of colors")
    if params1.alpha != params2.alpha or params1.beta != params2.beta:
        raise ValueError("coupled urns must share alpha and beta")
    if not np.array_equal(params1.b0, params2.b0):
        raise ValueError("coupled urns must share the intrinsic composition b0")


def coupled_trajectories(
    params1: ModelParams, params2: ModelParams, n_steps: int, seed: Seed
) -> CoupledPair:
    """Generate one coupled pair; the coordinates differ only through B0."""
    _check_shared_dynamics(params1, params2)
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    gen = make_generator(seed)
    b0 = params1.b0
    alpha, beta = params1.alpha, params1.beta
    B1 = params1.B0.copy()
    B2 = params2.B0.copy()
    k = params1.k
    draws1 = np.empty(n_steps, dtype=np.int64)
    draws2 = np.empty(n_steps, dtype=np.int64)
    psi1 = np.empty((n_steps + 1, k))
    psi2 = np.empty((n_steps + 1, k))
    psi1[0] = predictive_mean(b0, B1)
    psi2[0] = predictive_mean(b0, B2)
    uniforms = gen.random(n_steps)
    for n in range(n_steps):
        c1, c2 = maximal_coupling_pair(psi1[n], psi2[n], uniforms[n])
        draws1[n], draws2[n] = c1, c2
        B1 *= beta
        B1[c1 - 1] += alpha
        B2 *= beta
        B2[c2 - 1] += alpha
        if b0.sum() + max(B1.sum(), B2.sum()) > MAX_TOTAL_MASS:
            raise OverflowError(f"total mass exceeds {MAX_TOTAL_MASS:g} at step {n + 1}")
        psi1[n + 1] = predictive_mean(b0, B1)
        psi2[n + 1] = predictive_mean(b0, B2)
    distances = np.abs(psi1 - psi2).sum(axis=1)
    traj1 = Trajectory(params=params1, seed=seed, draws=draws1, psi_path=psi1)
    traj2 = Trajectory(params=params2, seed=seed, draws=draws2, psi_path=psi2)
    return CoupledPair(traj1=traj1, traj2=traj2, distances=distances)


def coupled_distance_matrix(
    params1: ModelParams,
    params2: ModelParams,
    n_steps: int,
    n_pairs: int,
    master_seed: int,
) -> np.ndarray:
    """L1 distances for ``n_pairs`` independent coupled pairs, vectorized.

    Pair p runs on stream ``(master_seed, p)`` and consumes one uniform per
    step, exactly like :func:`coupled_trajectories`; rows reproduce the
    scalar path bit for bit.  Returns an ``(n_pairs, n_steps + 1)`` array.
    """
    _check_shared_dynamics(params1, params2)
    n_steps, n_pairs = int(n_steps), int(n_pairs)
    if n_steps < 1 or n_pairs < 1:
        raise ValueError("n_steps and n_pairs must both be >= 1")
    alpha, beta = params1.alpha, params1.beta
    b0 = params1.b0[None, :]
    k = params1.k
    rows = np.arange(n_pairs)
    B1 = np.tile(params1.B0, (n_pairs, 1))
    B2 = np.tile(params2.B0, (n_pairs, 1))
    gens = [make_generator((master_seed, p)) for p in range(n_pairs)]
    distances = np.empty((n_pairs, n_steps + 1))

    def _psi(B):
        total = b0 + B
        return total / total.sum(axis=1)[:, None]

    psi1, psi2 = _psi(B1), _psi(B2)
    distances[:, 0] = np.abs(psi1 - psi2).sum(axis=1)
    chunk = 4096
    done = 0
    while done < n_steps:
        m = min(chunk, n_steps - done)
        uniforms = np.empty((n_pairs, m))
        for p, gen in enumerate(gens):
            uniforms[p] = gen.random(m)
        for t in range(m):
            u = uniforms[:, t][:, None]
            overlap = np.minimum(psi1, psi2)
            cum_overlap = np.cumsum(overlap, axis=1)
            u0 = cum_overlap[:, -1][:, None]
            same = (u <= u0)[:, 0]
            cat_same = np.minimum((cum_overlap < u).sum(axis=1), k - 1)
            cum_x = u0 + np.cumsum(psi1 - overlap, axis=1)
            cum_y = u0 + np.cumsum(psi2 - overlap, axis=1)
            cat1 = np.where(same, cat_same, np.minimum((cum_x < u).sum(axis=1), k - 1))
            cat2 = np.where(same, cat_same, np.minimum((cum_y < u).sum(axis=1), k - 1))
            B1 *= beta
            B1[rows, cat1] += alpha
            B2 *= beta
            B2[rows, cat2] += alpha
            if beta > 1 and params1.b0_total + max(B1.sum(axis=1).max(), B2.sum(axis=1).max()) > MAX_TOTAL_MASS:
                raise OverflowError(f"total mass exceeds {MAX_TOTAL_MASS:g} at step {done + t + 1}")
            psi1, psi2 = _psi(B1), _psi(B2)
            distances[:, done + t + 1] = np.abs(psi1 - psi2).sum(axis=1)
        done += m
    return distances


def _slack_bounds(params1: ModelParams, params2: ModelParams, n_steps: int) -> np.ndarray:
    """Per-step bound on the non-stationary perturbation |l_n| of each
    coordinate, from the exact total-mass sequence (zero at the fixed point)."""
    alpha, beta = params1.alpha, params1.beta
    s = params1.b0_total
    r_star = s + alpha / (1.0 - beta)
    out = np.zeros(n_steps + 1)
    for params in (params1, params2):
        r_n = s + params.B0_total
        for n in range(1, n_steps + 1):
            r_next = s + beta * (r_n - s) + alpha
            out[n] += abs(r_star / r_next - 1.0) * (1.0 - beta) + abs(r_n / r_next - 1.0) * beta
            r_n = r_next
    return out


@dataclass(frozen=True)
class ContractionDiagnostic:
    """Per-step Monte Carlo distance summary against the analytic envelope."""

    n_pairs: int
    gamma: float
    mean_distance: np.ndarray
    stderr: np.ndarray
    envelope: np.ndarray
    empirical_slack: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "gamma": self.gamma,
            "mean_distance": self.mean_distance.tolist(),
            "stderr": self.stderr.tolist(),
            "envelope": self.envelope.tolist(),
            "empirical_slack": self.empirical_slack.tolist(),
        }


def contraction_diagnostic_from_distances(
    distances: np.ndarray, params1: ModelParams, params2: ModelParams
) -> ContractionDiagnostic:
    """Summarize a ``(pairs, steps + 1)`` distance matrix.

    The envelope starts from the mean initial distance and applies the
    one-step contraction plus the exact per-step slack; the empirical slack
    column reports how far the observed means sit above the pure
    ``gamma^n |Delta_0|`` geometric decay.
    """
    distances = np.asarray(distances, dtype=float)
    if distances.ndim != 2 or distances.shape[0] < 1:
        raise ValueError("need a nonempty (pairs, steps + 1) distance matrix")
    consts = derive_constants(params1)
    if consts.gamma is None or consts.gamma >= 1.0:
        raise ValueError("contraction diagnostic requires beta in [0,1) with |b0| > 0")
    gamma = consts.gamma
    n_pairs, n_grid = distances.shape
    mean = distances.mean(axis=0)
    if n_pairs > 1:
        stderr = distances.std(axis=0, ddof=1) / np.sqrt(n_pairs)
    else:
        stderr = np.zeros(n_grid)
    slack = _slack_bounds(params1, params2, n_grid - 1)
    envelope = np.empty(n_grid)
    envelope[0] = mean[0]
    for n in range(1, n_grid):
        envelope[n] = gamma * envelope[n - 1] + slack[n]
    geometric = mean[0] * gamma ** np.arange(n_grid)
    return ContractionDiagnostic(
        n_pairs=n_pairs,
        gamma=gamma,
        mean_distance=mean,
        stderr=stderr,
        envelope=envelope,
        empirical_slack=mean - geometric,
    )


def contraction_diagnostic(pairs: Sequence[CoupledPair]) -> ContractionDiagnostic:
    """Diagnostic over a collection of coupled pairs sharing one step grid."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one coupled pair")
    n_grid = pairs[0].distances.size
    for pair in pairs:
        if pair.distances.size != n_grid:
            raise ValueError("all pairs must share a common step grid")
    distances = np.stack([pair.distances for pair in pairs])
    return contraction_diagnostic_from_distances(
        distances, pairs[0].traj1.params, pairs[0].traj2.params
    )
