"""Logistic regression and Gaussian discriminant classifiers on score vectors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from ..errors import SeparationWarning

PROB_EPS = 1e-12


def clamp_proba(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def _ridged(cov: np.ndarray) -> np.ndarray:
    """Add ``1e-6 * tr/K`` to the diagonal when the covariance is near singular."""
    k = cov.shape[0]
    if np.linalg.eigvalsh(cov)[0] < 1e-10:
        scale = np.trace(cov) / k
        cov = cov + (1e-6 * scale if scale > 0 else 1e-6) * np.eye(k)
    return cov


@dataclass(frozen=True, eq=False)
class LogitModel:
    intercept: float
    coef: np.ndarray
    converged: bool
    n_iter: int

    def decision(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + X @ self.coef

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return clamp_proba(expit(self.decision(X)))


def fit_logit(X: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-8) -> LogitModel:
    """Maximum likelihood by iteratively reweighted least squares.

    Under (quasi-)complete separation the coefficients diverge; the last
    finite iterate is returned and a :class:`SeparationWarning` is issued.
    """
    n, k = X.shape
    A = np.column_stack([np.ones(n), X])
    beta = np.zeros(k + 1)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = A @ beta
        p = expit(eta)
        w = np.maximum(p * (1 - p), 1e-12)
        z = eta + (y - p) / w
        sw = np.sqrt(w)
        new, *_ = np.linalg.lstsq(A * sw[:, None], z * sw, rcond=None)
        if not np.all(np.isfinite(new)):
            break
        step = np.max(np.abs(new - beta))
        beta = new
        if step < tol:
            converged = True
            break
    p = expit(A @ beta)
    if not converged or np.any((p < 1e-10) | (p > 1 - 1e-10)):
        warnings.warn(
            "logistic fit: fitted probabilities numerically 0 or 1 (separation)",
            SeparationWarning,
            stacklevel=3,
        )
    return LogitModel(float(beta[0]), beta[1:].copy(), converged, it)


@dataclass(frozen=True, eq=False)
class LdaModel:
    means: np.ndarray  # (2, K)
    covariance: np.ndarray  # (K, K) pooled
    priors: np.ndarray  # (2,)

    def discriminants(self, X: np.ndarray) -> np.ndarray:
        """Linear discriminant scores, one column per class."""
        inv_mu = np.linalg.solve(self.covariance, self.means.T)  # (K, 2)
        const = -0.5 * np.einsum("jk,kj->j", self.means, inv_mu) + np.log(self.priors)
        return X @ inv_mu + const

    def log_odds(self, X: np.ndarray) -> np.ndarray:
        d = self.discriminants(X)
        return d[:, 1] - d[:, 0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        d = self.discriminants(X)
        return clamp_proba(np.exp(d[:, 1] - logsumexp(d, axis=1)))


def _class_moments(X, y):
    means, covs, counts = [], [], []
    for j in (0, 1):
        Xj = X[y == j]
        counts.append(Xj.shape[0])
        means.append(Xj.mean(0))
        d = Xj - means[-1]
        covs.append(d.T @ d)  # scatter matrix
    return np.array(means), covs, np.array(counts, float)


def fit_lda(X: np.ndarray, y: np.ndarray) -> LdaModel:
    means, scatters, counts = _class_moments(X, y)
    n = counts.sum()
    pooled = (scatters[0] + scatters[1]) / max(n - 2, 1)
    return LdaModel(means, _ridged(pooled), counts / n)


@dataclass(frozen=True, eq=False)
class QdaModel:
    means: np.ndarray  # (2, K)
    covariances: np.ndarray  # (2, K, K)
    priors: np.ndarray

    def discriminants(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], 2))
        for j in (0, 1):
            cov = self.covariances[j]
            d = X - self.means[j]
            _, logdet = np.linalg.slogdet(cov)
            maha = np.einsum("ik,ik->i", d, np.linalg.solve(cov, d.T).T)
            out[:, j] = -0.5 * logdet - 0.5 * maha + np.log(self.priors[j])
        return out

    def log_odds(self, X: np.ndarray) -> np.ndarray:
        d = self.discriminants(X)
        return d[:, 1] - d[:, 0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        d = self.discriminants(X)
        return clamp_proba(np.exp(d[:, 1] - logsumexp(d, axis=1)))


def fit_qda(X: np.ndarray, y: np.ndarray) -> QdaModel:
    means, scatters, counts = _class_moments(X, y)
    covs = np.array([_ridged(s / max(c - 1, 1)) for s, c in zip(scatters, counts)])
    return QdaModel(means, covs, counts / counts.sum())


@dataclass(frozen=True, eq=False)
class NaiveBayesModel:
    means: np.ndarray  # (2, K)
    variances: np.ndarray  # (2, K)
    priors: np.ndarray

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((X.shape[0], 2))
        for j in (0, 1):
            v = self.variances[j]
            ll = -0.5 * (np.log(2 * np.pi * v) + (X - self.means[j]) ** 2 / v)
            out[:, j] = ll.sum(1) + np.log(self.priors[j])
        return out

    def log_odds(self, X: np.ndarray) -> np.ndarray:
        d = self.joint_log_likelihood(X)
        return d[:, 1] - d[:, 0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        d = self.joint_log_likelihood(X)
        return clamp_proba(np.exp(d[:, 1] - logsumexp(d, axis=1)))


def fit_naive_bayes(X: np.ndarray, y: np.ndarray, var_floor: float = 1e-9) -> NaiveBayesModel:
    means, variances, counts = [], [], []
    for j in (0, 1):
        Xj = X[y == j]
        counts.append(Xj.shape[0])
        means.append(Xj.mean(0))
        variances.append(np.maximum(Xj.var(0, ddof=1 if Xj.shape[0] > 1 else 0), var_floor))
    counts = np.array(counts, float)
    return NaiveBayesModel(np.array(means), np.array(variances), counts / counts.sum())
