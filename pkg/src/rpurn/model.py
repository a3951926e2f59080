"""Urn parameters, regime classification, and closed-form derived constants.

The urn is driven by four parameters: a reinforcement weight ``alpha``, a
scaling factor ``beta``, a fixed intrinsic composition ``b0`` and an initial
fluctuating composition ``B0`` (one entry per color).  The composition evolves
as ``B_{n+1} = beta * B_n + alpha * e_cat``, on top of the constant ``b0``.

Two scalar constants govern the ``beta < 1`` regimes:

* the contraction factor ``gamma = beta + (1 - beta) * alpha /
  ((1 - beta) * |b0| + alpha)``, which is the one-step Lipschitz constant of
  the predictive-mean chain, and
* the inflation factor ``lambda = (1 - beta)^2 / ((gamma - beta)^2 +
  (1 - gamma^2)) * (1 + 2 * gamma / (1 - gamma))``, the multiplier by which
  the asymptotic chi-squared law of the fit statistic is scaled.

Both are plain algebra over (alpha, beta, |b0|); everything here is a pure
function of its inputs and all values are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

__all__ = [
    "ModelParams",
    "RegimeTag",
    "Regime",
    "DerivedConstants",
    "classify_regime",
    "derive_constants",
    "predictive_mean",
]


def _as_composition(vec, name: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=float).copy()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} entries must be finite")
    if np.any(arr < 0):
        raise ValueError(f"{name} entries must be nonnegative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Validated urn parameters.

    ``b0`` and ``B0`` are stored as read-only float arrays.  ``b0`` entries
    are the per-color intrinsic masses (their normalization is the long-run
    distribution ``p0``); ``B0`` is the starting fluctuating composition.

    An all-zero ``b0`` switches the process into the edge regimes (constant
    draws for ``beta = 0``, vertex absorption for ``beta`` in (0,1)) and must
    be requested explicitly via ``allow_zero_intrinsic=True``.
    """

    alpha: float
    beta: float
    b0: np.ndarray
    B0: np.ndarray
    allow_zero_intrinsic: bool = False

    def __post_init__(self):
        alpha = float(self.alpha)
        beta = float(self.beta)
        if not np.isfinite(alpha) or alpha < 0:
            raise ValueError(f"alpha must be a finite nonnegative real, got {self.alpha}")
        if not np.isfinite(beta) or beta < 0:
            raise ValueError(f"beta must be a finite nonnegative real, got {self.beta}")
        b0 = _as_composition(self.b0, "b0")
        B0 = _as_composition(self.B0, "B0")
        if b0.shape != B0.shape:
            raise ValueError(f"b0 and B0 must have the same length, got {b0.shape} and {B0.shape}")
        if b0.size < 2:
            raise ValueError(f"need at least 2 colors, got {b0.size}")
        if np.any(b0 + B0 <= 0):
            bad = int(np.argmin(b0 + B0)) + 1
            raise ValueError(f"b0 + B0 must be strictly positive in every color (color {bad} is empty)")
        if b0.sum() == 0 and not self.allow_zero_intrinsic:
            raise ValueError(
                "b0 sums to zero; pass allow_zero_intrinsic=True to opt into the zero-intrinsic edge regimes"
            )
        if beta > 1 and alpha == 0 and B0.sum() == 0:
            raise ValueError("beta > 1 with alpha = 0 requires a nonzero B0")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "B0", B0)

    @property
    def k(self) -> int:
        """Number of colors."""
        return self.b0.size

    @property
    def b0_total(self) -> float:
        return float(self.b0.sum())

    @property
    def B0_total(self) -> float:
        return float(self.B0.sum())

    def to_dict(self) -> dict:
        d = {
            "alpha": self.alpha,
            "beta": self.beta,
            "b0": self.b0.tolist(),
            "B0": self.B0.tolist(),
        }
        if self.allow_zero_intrinsic:
            d["allow_zero_intrinsic"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        try:
            return cls(
                alpha=d["alpha"],
                beta=d["beta"],
                b0=d["b0"],
                B0=d["B0"],
                allow_zero_intrinsic=bool(d.get("allow_zero_intrinsic", False)),
            )
        except KeyError as exc:
            raise ValueError(f"parameter set is missing required field {exc}") from None


class RegimeTag(str, Enum):
    BETA_ZERO = "BetaZero"
    BETA_IN_UNIT_INTERVAL = "BetaInUnitInterval"
    BETA_ONE = "BetaOne"
    BETA_ABOVE_ONE = "BetaAboveOne"


@dataclass(frozen=True)
class Regime:
    """Case split used throughout: the tag depends only on beta, the flags
    only on alpha and |b0|."""

    tag: RegimeTag
    alpha_zero: bool
    b0_zero: bool

    def to_dict(self) -> dict:
        return {"tag": self.tag.value, "alpha_zero": self.alpha_zero, "b0_zero": self.b0_zero}


def classify_regime(params: ModelParams) -> Regime:
    beta = params.beta
    if beta == 0:
        tag = RegimeTag.BETA_ZERO
    elif beta < 1:
        tag = RegimeTag.BETA_IN_UNIT_INTERVAL
    elif beta == 1:
        tag = RegimeTag.BETA_ONE
    else:
        tag = RegimeTag.BETA_ABOVE_ONE
    return Regime(tag=tag, alpha_zero=params.alpha == 0, b0_zero=params.b0_total == 0)


@dataclass(frozen=True)
class DerivedConstants:
    """Closed-form constants of the urn, with regime-dependent gaps.

    Fields that are meaningless in the parameter regime are ``None`` and the
    reason is recorded in ``undefined`` (keyed by field name).  In particular
    ``lam`` (the inflation factor) exists only for ``beta`` in [0,1) with a
    nonzero intrinsic composition; probing other regimes is not an error.
    """

    gamma: Optional[float]
    lam: Optional[float]
    r_star: Optional[float]
    p0: Optional[np.ndarray]
    regime: Regime
    undefined: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "lambda": self.lam,
            "r_star": self.r_star,
            "p0": None if self.p0 is None else self.p0.tolist(),
            "regime": self.regime.to_dict(),
            "undefined": dict(self.undefined),
        }


def derive_constants(params: ModelParams) -> DerivedConstants:
    """Compute gamma, lambda, the limit total mass r* and the intrinsic
    distribution p0 for a validated parameter set.

    For beta in [0,1) with |b0| > 0 the two defining relations hold exactly:
    ``gamma - beta = alpha / r_star`` and
    ``1 - gamma = (1 - beta) * |b0| / r_star``.
    """
    regime = classify_regime(params)
    alpha, beta = params.alpha, params.beta
    s = params.b0_total
    undefined: dict = {}

    gamma: Optional[float] = None
    lam: Optional[float] = None
    r_star: Optional[float] = None
    p0: Optional[np.ndarray] = None

    if s > 0:
        p0 = params.b0 / s
        p0.setflags(write=False)
    else:
        undefined["p0"] = "intrinsic composition b0 is zero"

    if beta < 1:
        r_star = s + alpha / (1.0 - beta)
        if s > 0:
            gamma = beta + (1.0 - beta) * alpha / ((1.0 - beta) * s + alpha)
        elif alpha > 0:
            # |b0| = 0 collapses the formula to beta + (1 - beta); keep it
            # exactly 1 so the degenerate regime is flagged, not mis-scaled.
            gamma = 1.0
        else:
            # alpha = 0 and |b0| = 0: the chain is constant, no contraction rate.
            undefined["gamma"] = "alpha = 0 and |b0| = 0 leave the contraction factor 0/0"
        if gamma is not None and gamma < 1.0:
            lam = (
                (1.0 - beta) ** 2
                / ((gamma - beta) ** 2 + (1.0 - gamma**2))
                * (1.0 + 2.0 * gamma / (1.0 - gamma))
            )
        else:
            undefined["lambda"] = "gamma = 1 (zero or negligible intrinsic mass); inflation factor diverges"
    else:
        undefined["gamma"] = "undefined for regime (beta >= 1)"
        undefined["lambda"] = "undefined for regime (beta >= 1)"
        if beta == 1 and alpha == 0:
            # With no reinforcement and no rescaling the total mass never moves.
            r_star = s + params.B0_total
        else:
            undefined["r_star"] = "total mass does not converge for beta >= 1"

    return DerivedConstants(
        gamma=gamma, lam=lam, r_star=r_star, p0=p0, regime=regime, undefined=undefined
    )


def predictive_mean(b0, B) -> np.ndarray:
    """Normalized composition (b0 + B) / |b0 + B|.

    This is the conditional law of the next draw given the current state.
    Requires every per-color total to be nonnegative and the overall mass to
    be positive; the output sums to 1 exactly up to float rounding.
    """
    b0 = np.asarray(b0, dtype=float)
    B = np.asarray(B, dtype=float)
    if b0.shape != B.shape or b0.ndim != 1:
        raise ValueError("b0 and B must be 1-D vectors of equal length")
    total = b0 + B
    if np.any(total < 0):
        raise ValueError("per-color totals b0 + B must be nonnegative")
    mass = total.sum()
    if mass <= 0:
        raise ValueError("total mass is zero; the predictive mean is undefined")
    return total / mass
