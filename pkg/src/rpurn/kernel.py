"""Exact finite-state analysis for beta = 0 and the affine-chain CLT algebra.

For ``beta = 0`` the predictive mean is a k-state Markov chain whose n-step
transition matrix has the closed form ``P^n = 1 p0^T + gamma^n (Id - 1 p0^T)``
with ``gamma = alpha / (|b0| + alpha)``.

For ``beta`` in [0,1) the empirical-mean CLT covariance comes from an affine
("linear model") representation of the chain: the centered draw is
``f(x, y) = A1 (x - p0) + A2 (y - p0)`` with ``A1 = -beta/(gamma-beta) Id``,
``A2 = 1/(gamma-beta) Id``, and the one-step conditional mean is
``A_P = gamma Id``.  The asymptotic covariance is then assembled as

    Sigma^2 = D1 S D1^T + D1 S A_P^T D2^T + D2 A_P S D1^T + D2 S D2^T

with ``S`` the stationary covariance of the chain, ``D0 = (A1 + A2 A_P)
(Id - A_P)^{-1}``, ``D1 = A1 - D0`` and ``D2 = A2 + D0``.  For the urn this
collapses to ``lambda * (diag(p0) - p0 p0^T)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ModelParams, derive_constants

__all__ = [
    "transition_matrix_beta0",
    "matrix_power_closed_form",
    "LinearModel",
    "rp_linear_model",
    "linear_model_sigma",
    "clt_covariance",
    "spectral_radius",
]

_COND_LIMIT = 1e12


def _require_beta0(params: ModelParams) -> None:
    if params.beta != 0:
        raise ValueError(f"finite-state kernel requires beta = 0, got beta = {params.beta}")
    if params.b0_total <= 0:
        raise ValueError("finite-state kernel requires |b0| > 0")


def transition_matrix_beta0(params: ModelParams) -> np.ndarray:
    """One-step transition matrix of the beta = 0 predictive-mean chain.

    Row i is the predictive mean after drawing color i:
    ``P = (1 b0^T + alpha Id) / (|b0| + alpha)``.
    """
    _require_beta0(params)
    k = params.k
    total = params.b0_total + params.alpha
    return (np.tile(params.b0, (k, 1)) + params.alpha * np.eye(k)) / total


def matrix_power_closed_form(params: ModelParams, n: int) -> np.ndarray:
    """n-step transition matrix ``1 p0^T + gamma^n (Id - 1 p0^T)``."""
    _require_beta0(params)
    n = int(n)
    if n < 0:
        raise ValueError(f"power must be a nonnegative integer, got {n}")
    k = params.k
    p0 = params.b0 / params.b0_total
    gamma = params.alpha / (params.b0_total + params.alpha)
    projector = np.tile(p0, (k, 1))
    return projector + gamma**n * (np.eye(k) - projector)


def spectral_radius(mat: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Dominant |eigenvalue| estimate by power iteration on the matrix.

    Deterministic start vector; raises if the ratio estimates have not
    stabilized within ``max_iter`` iterations.
    """
    mat = np.asarray(mat, dtype=float)
    k = mat.shape[0]
    if mat.shape != (k, k):
        raise ValueError(f"matrix must be square, got shape {mat.shape}")
    v = np.cos(np.arange(1, k + 1, dtype=float))  # fixed, generic direction
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        new_estimate = norm
        v = w / norm
        if abs(new_estimate - estimate) <= tol * max(1.0, new_estimate):
            return new_estimate
        estimate = new_estimate
    raise ValueError("power iteration did not converge; spectral radius estimate unreliable")


@dataclass(frozen=True)
class LinearModel:
    """Affine-chain matrices and the two covariances they determine.

    ``sigma_pi`` is the stationary covariance of the predictive-mean chain,
    ``sigma`` the asymptotic covariance of the scaled empirical mean.
    """

    a1: np.ndarray
    a2: np.ndarray
    ap: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    sigma_pi: np.ndarray
    sigma: np.ndarray


def _centered_multinomial(p0: np.ndarray) -> np.ndarray:
    return np.diag(p0) - np.outer(p0, p0)


def rp_linear_model(params: ModelParams) -> LinearModel:
    """Affine-chain representation of the urn for beta in [0,1), |b0| > 0.

    Assumes the stationary normalization ``|B0| = alpha / (1 - beta)`` (the
    coupling reduction makes the asymptotics independent of ``|B0|``, so this
    is without loss of generality).
    """
    if not (0 <= params.beta < 1):
        raise ValueError(f"linear model requires beta in [0,1), got beta = {params.beta}")
    if params.b0_total <= 0:
        raise ValueError("linear model requires |b0| > 0")
    if params.alpha <= 0:
        raise ValueError("linear model requires alpha > 0 (alpha = 0 draws are independent)")
    consts = derive_constants(params)
    gamma, lam, p0 = consts.gamma, consts.lam, consts.p0
    beta = params.beta
    k = params.k
    eye = np.eye(k)
    a1 = -(beta / (gamma - beta)) * eye
    a2 = (1.0 / (gamma - beta)) * eye
    ap = gamma * eye
    d0 = np.linalg.solve((eye - ap).T, (a1 + a2 @ ap).T).T
    d1 = a1 - d0
    d2 = a2 + d0
    m = _centered_multinomial(p0)
    sigma_pi = ((gamma - beta) ** 2 / ((gamma - beta) ** 2 + 1.0 - gamma**2)) * m
    sigma = lam * m
    return LinearModel(a1=a1, a2=a2, ap=ap, d0=d0, d1=d1, d2=d2, sigma_pi=sigma_pi, sigma=sigma)


def linear_model_sigma(
    a1: np.ndarray, a2: np.ndarray, ap: np.ndarray, sigma_pi: np.ndarray
) -> np.ndarray:
    """Four-term covariance assembly for a general affine chain.

    Checks that ``ap`` is a contraction (spectral radius < 1) and that
    ``sigma_pi`` is symmetric PSD before solving for the D matrices.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    ap = np.asarray(ap, dtype=float)
    sigma_pi = np.asarray(sigma_pi, dtype=float)
    k = ap.shape[0]
    for name, matrix in (("a1", a1), ("a2", a2), ("ap", ap), ("sigma_pi", sigma_pi)):
        if matrix.shape != (k, k):
            raise ValueError(f"{name} must be {k}x{k}, got {matrix.shape}")
    radius = spectral_radius(ap)
    if radius >= 1.0:
        raise ValueError(f"spectral radius of ap is {radius:.6g} >= 1; no stationary regime")
    if not np.allclose(sigma_pi, sigma_pi.T, atol=1e-9):
        raise ValueError("sigma_pi must be symmetric")
    scale = max(1.0, float(np.abs(sigma_pi).max()))
    if np.linalg.eigvalsh(0.5 * (sigma_pi + sigma_pi.T)).min() < -1e-10 * scale:
        raise ValueError("sigma_pi must be positive semidefinite")
    resolvent = np.eye(k) - ap
    if np.linalg.cond(resolvent) > _COND_LIMIT:
        raise ValueError("Id - ap is numerically singular")
    d0 = np.linalg.solve(resolvent.T, (a1 + a2 @ ap).T).T
    d1 = a1 - d0
    d2 = a2 + d0
    return d1 @ sigma_pi @ d1.T + d1 @ sigma_pi @ ap.T @ d2.T + d2 @ ap @ sigma_pi @ d1.T + d2 @ sigma_pi @ d2.T


def clt_covariance(params: ModelParams, psi_inf: Optional[np.ndarray] = None) -> np.ndarray:
    """Asymptotic covariance of ``sqrt(N) * (empirical mean - limit)``.

    * beta in [0,1), |b0| > 0: ``lambda * (diag(p0) - p0 p0^T)`` (for
      alpha = 0 the formula gives lambda = 1, the i.i.d. multinomial case);
    * beta > 1 (and alpha > 0): ``diag(psi_inf) - psi_inf psi_inf^T`` for the
      supplied limit vector, which is random and must be passed in;
    * alpha = 0: the limit vector is deterministic and is derived from the
      parameters, so ``psi_inf`` may be omitted.

    beta = 1 with alpha > 0 is the classical exchangeable urn and is rejected.
    """
    beta, alpha = params.beta, params.alpha

    if alpha == 0:
        if psi_inf is None:
            if beta < 1:
                if params.b0_total <= 0:
                    raise ValueError("alpha = 0 with |b0| = 0 has a constant predictive mean; supply psi_inf")
                psi_inf = params.b0 / params.b0_total
            elif beta == 1:
                psi_inf = (params.b0 + params.B0) / (params.b0_total + params.B0_total)
            else:
                psi_inf = params.B0 / params.B0_total
        return _centered_multinomial(np.asarray(psi_inf, dtype=float))

    if beta < 1:
        if params.b0_total <= 0:
            raise ValueError("beta in [0,1) with |b0| = 0 has no deterministic limit (absorbing regime)")
        consts = derive_constants(params)
        return consts.lam * _centered_multinomial(consts.p0)

    if beta == 1:
        raise ValueError("beta = 1 is the classical exchangeable urn and is not supported here")

    if psi_inf is None:
        raise ValueError("beta > 1 requires the realized limit vector psi_inf")
    psi_inf = np.asarray(psi_inf, dtype=float)
    if psi_inf.shape != (params.k,):
        raise ValueError(f"psi_inf must have length {params.k}")
    if np.any(psi_inf < 0) or abs(psi_inf.sum() - 1.0) > 1e-9:
        raise ValueError("psi_inf must be a probability vector")
    return _centered_multinomial(psi_inf)
