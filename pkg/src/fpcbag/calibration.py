"""Bayesian logistic recalibration of aggregated ensemble probabilities.

The model is ``y ~ Bernoulli(expit(b0 + b1 * p))`` with independent
Cauchy(0, s0) and Cauchy(0, s1) priors on the coefficients. Each Cauchy is
a scale mixture of normals, so the posterior mode is found by alternating
a variance update for each coefficient with one penalized IWLS step. At a
fixed point the penalty gradient ``-b / tau^2`` equals the Cauchy
log-density gradient ``-2 b / (b^2 + s^2)``, so the iterate is the exact
posterior mode, not an approximation of it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .classifiers.linear import clamp_proba
from .errors import DegenerateLabelsError, ShapeError


@dataclass(frozen=True)
class CalibrationModel:
    beta0: float
    beta1: float
    prior_scale0: float = 10.0
    prior_scale1: float = 2.5
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.beta0) and np.isfinite(self.beta1)):
            raise ValueError("calibration coefficients must be finite")
        if self.prior_scale0 <= 0 or self.prior_scale1 <= 0:
            raise ValueError("prior scales must be positive")

    @property
    def coef(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1])

    def predict_proba(self, p_hat) -> np.ndarray | float:
        p = np.asarray(p_hat, float)
        out = expit(self.beta0 + self.beta1 * p)
        return float(out) if out.ndim == 0 else out

    def predict_label(self, p_hat) -> np.ndarray | int:
        pi = self.predict_proba(p_hat)
        if np.ndim(pi) == 0:
            return int(pi > 0.5)
        return (pi > 0.5).astype(np.int64)


def _check_pairs(p_hat, y) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p_hat, float)
    y = np.asarray(y)
    if p.ndim != 1 or y.shape != p.shape:
        raise ShapeError(f"expected matching 1-D probabilities and labels, got {p.shape} and {y.shape}")
    if p.size < 2:
        raise ShapeError("calibration needs at least two pairs")
    if not np.all(np.isfinite(p)):
        raise ShapeError("probabilities must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ShapeError("labels must be 0/1")
    if y.min() == y.max():
        raise DegenerateLabelsError(f"all {y.size} calibration labels equal {int(y[0])}")
    return clamp_proba(p), y.astype(float)


def log_posterior(beta, p_hat, y, prior_scale0: float = 10.0, prior_scale1: float = 2.5) -> float:
    """Log-likelihood plus log Cauchy prior densities, up to a constant."""
    b = np.asarray(beta, float)
    eta = b[0] + b[1] * np.asarray(p_hat, float)
    ll = float(np.sum(np.asarray(y, float) * eta - np.logaddexp(0.0, eta)))
    return ll - float(np.log1p((b[0] / prior_scale0) ** 2) + np.log1p((b[1] / prior_scale1) ** 2))


def log_posterior_grad(beta, p_hat, y, prior_scale0: float = 10.0, prior_scale1: float = 2.5) -> np.ndarray:
    b = np.asarray(beta, float)
    p = np.asarray(p_hat, float)
    r = np.asarray(y, float) - expit(b[0] + b[1] * p)
    s2 = np.array([prior_scale0, prior_scale1]) ** 2
    return np.array([r.sum(), r @ p]) - 2.0 * b / (b * b + s2)


def fit_calibration(
    p_hat,
    y,
    prior_scale0: float = 10.0,
    prior_scale1: float = 2.5,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> CalibrationModel:
    """Posterior mode of the Cauchy-prior logistic calibration by EM-IWLS."""
    if prior_scale0 <= 0 or prior_scale1 <= 0:
        raise ValueError("prior scales must be positive")
    p, yf = _check_pairs(p_hat, y)
    X = np.column_stack([np.ones_like(p), p])
    s2 = np.array([prior_scale0, prior_scale1], float) ** 2
    beta = np.zeros(2)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # E-step: conditional mean of the mixing precision given beta
        prec = 2.0 / (beta * beta + s2)
        eta = X @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        z = eta + (yf - mu) / w
        A = X.T @ (w[:, None] * X) + np.diag(prec)
        new = np.linalg.solve(A, X.T @ (w * z))
        step = float(np.max(np.abs(new - beta)))
        beta = new
        if step < tol:
            converged = True
            break
    return CalibrationModel(
        beta0=float(beta[0]),
        beta1=float(beta[1]),
        prior_scale0=float(prior_scale0),
        prior_scale1=float(prior_scale1),
        converged=converged,
        iterations=it,
    )
