"""Exact forward simulation of the urn in every parameter regime.

Randomness contract
-------------------
All draws come from numpy's Philox counter-based generator (Philox 4x64-10).
A stream is identified by a pair ``(master_seed, stream)`` of nonnegative
64-bit integers used directly as the Philox key, so replicate ``r`` of a
Monte Carlo run owns the stream ``(master_seed, r)``: streams are independent
and can be generated in any order.  One uniform in (0,1) is consumed per urn
step, in step order.  Given identical ``(params, n_steps, seed)`` a
trajectory is bitwise reproducible within this implementation (the generator
algorithm is fixed, so reproducibility is promised per implementation, not
across languages).

Category sampling is inverse-CDF on the predictive mean with cumulative sums
taken left to right and ties broken toward the smaller index.  The
composition ``B_n`` is propagated by the exact recursion (never renormalized);
the predictive mean is recomputed on demand, dividing by the running total so
large totals never overflow inside the normalization.  For ``beta > 1`` the
total grows geometrically; once it would leave double range the simulator
raises ``OverflowError`` rather than continuing with infinities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import ModelParams, predictive_mean

__all__ = [
    "Seed",
    "make_generator",
    "UrnState",
    "Trajectory",
    "step",
    "simulate_trajectory",
    "empirical_mean",
    "trajectory_to_csv",
    "MAX_TOTAL_MASS",
]

Seed = Union[int, tuple]

# Total-mass ceiling: beyond this the beta > 1 recursion is about to leave
# double range, so stepping refuses to continue.
MAX_TOTAL_MASS = 1e300

_MASK64 = (1 << 64) - 1


def _as_key_pair(seed: Seed) -> tuple[int, int]:
    if isinstance(seed, (tuple, list)):
        if len(seed) != 2:
            raise ValueError(f"stream seed must be (master_seed, stream), got {seed!r}")
        master, stream = seed
    else:
        master, stream = seed, 0
    master, stream = int(master), int(stream)
    if master < 0 or stream < 0:
        raise ValueError("seed components must be nonnegative integers")
    return master & _MASK64, stream & _MASK64


def make_generator(seed: Seed) -> np.random.Generator:
    """Generator for the stream named by ``seed`` (an int or a
    ``(master_seed, stream)`` pair, used verbatim as the Philox key)."""
    master, stream = _as_key_pair(seed)
    key = np.array([master, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class UrnState:
    """Step index and fluctuating composition ``B_n``."""

    n: int
    B: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float).copy()
        B.setflags(write=False)
        object.__setattr__(self, "B", B)
        if self.n < 0:
            raise ValueError("step index must be nonnegative")


def step(state: UrnState, params: ModelParams, u: float) -> tuple[UrnState, int]:
    """Advance one draw using the uniform ``u``.

    Returns the updated state and the drawn category in 1..k.  The category
    is the smallest index whose cumulative predictive mean reaches ``u``.
    """
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValueError(f"uniform draw must lie strictly in (0,1), got {u}")
    psi = predictive_mean(params.b0, state.B)
    cat = int((np.cumsum(psi) < u).sum())
    if cat >= params.k:  # cumulative rounding can land just short of 1
        cat = params.k - 1
    B_next = params.beta * state.B
    B_next[cat] += params.alpha
    if params.b0_total + B_next.sum() > MAX_TOTAL_MASS:
        raise OverflowError(
            f"total mass exceeds {MAX_TOTAL_MASS:g} at step {state.n + 1}; "
            "beta > 1 trajectories of this length are not representable"
        )
    return UrnState(n=state.n + 1, B=B_next), cat + 1


@dataclass(frozen=True)
class Trajectory:
    """A simulated draw history.

    ``draws[n-1]`` is the category (1..k) drawn at step n.  When recorded,
    ``psi_path[n]`` is the predictive mean after n draws, so ``psi_path`` has
    ``n_steps + 1`` rows starting from ``(b0 + B0) / |b0 + B0|``.
    """

    params: ModelParams
    seed: Seed
    draws: np.ndarray
    psi_path: Optional[np.ndarray] = None

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=np.int64)
        draws.setflags(write=False)
        object.__setattr__(self, "draws", draws)
        if self.psi_path is not None:
            psi = np.asarray(self.psi_path, dtype=float)
            if psi.shape != (draws.size + 1, self.params.k):
                raise ValueError(
                    f"psi_path must have shape ({draws.size + 1}, {self.params.k}), got {psi.shape}"
                )
            psi.setflags(write=False)
            object.__setattr__(self, "psi_path", psi)

    @property
    def n_steps(self) -> int:
        return self.draws.size


def simulate_trajectory(
    params: ModelParams,
    n_steps: int,
    seed: Seed,
    record_psi: bool = False,
) -> Trajectory:
    """Run ``n_steps`` draws from ``B0`` on the stream named by ``seed``."""
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    gen = make_generator(seed)
    state = UrnState(n=0, B=params.B0)
    draws = np.empty(n_steps, dtype=np.int64)
    psi_path = None
    if record_psi:
        psi_path = np.empty((n_steps + 1, params.k))
        psi_path[0] = predictive_mean(params.b0, state.B)

    done = 0
    chunk = 4096
    while done < n_steps:
        m = min(chunk, n_steps - done)
        uniforms = gen.random(m)
        for t in range(m):
            state, cat = step(state, params, uniforms[t])
            draws[done + t] = cat
            if record_psi:
                psi_path[done + t + 1] = predictive_mean(params.b0, state.B)
        done += m
    return Trajectory(params=params, seed=seed, draws=draws, psi_path=psi_path)


def empirical_mean(traj: Trajectory, prefix_len: Optional[int] = None) -> np.ndarray:
    """Relative draw frequencies over the first ``prefix_len`` steps."""
    n = traj.n_steps if prefix_len is None else int(prefix_len)
    if not 1 <= n <= traj.n_steps:
        raise ValueError(f"prefix length must lie in [1, {traj.n_steps}], got {n}")
    counts = np.bincount(traj.draws[:n] - 1, minlength=traj.params.k).astype(float)
    return counts / n


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write ``step,draw[,psi_1..psi_k]`` rows; psi columns appear only when
    the trajectory recorded its predictive-mean path."""
    k = traj.params.k
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["step", "draw"]
        if traj.psi_path is not None:
            header += [f"psi_{i}" for i in range(1, k + 1)]
        writer.writerow(header)
        for n in range(traj.n_steps):
            row = [n + 1, int(traj.draws[n])]
            if traj.psi_path is not None:
                row += [repr(float(v)) for v in traj.psi_path[n + 1]]
            writer.writerow(row)
