from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import expit, logit

from lpca.services.core import (
    BERNOULLI,
    FitConfig,
    InputError,
    NumericalError,
    column_signs,
    family_for,
    main_effects,
    top_eigenvectors,
    top_right_singular_vectors,
    validate_binary,
    validate_real,
)
from lpca.services.mm import FitReport, working_variables

logger = logging.getLogger(__name__)

PROBABILITY_CLIP = 1e-10
SCORE_CLAMP = 1e3
NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-8


# =============================================================================
# Standard PCA
# =============================================================================


@dataclass(frozen=True)
class PcaModel:
    U: np.ndarray
    mu: np.ndarray
    variances: np.ndarray

    method = "pca"
    family = "gaussian"

    @property
    def k(self) -> int:
        return int(self.U.shape[1])

    def scores(self, X) -> np.ndarray:
        return pca_scores(self, X)

    def theta(self, X) -> np.ndarray:
        return self.predict_theta(X)

    def predict_theta(self, X) -> np.ndarray:
        """Logit of the clipped reconstruction, so deviance comparisons are possible."""
        return logit(pca_probability_estimate(self, X))


def fit_pca(X, k: int) -> PcaModel:
    """Top-k eigenvectors of the sample covariance (divisor n − 1)."""
    X = validate_real(X)
    n, d = X.shape
    if n < 2:
        raise InputError(f"PCA needs at least two rows, got {n}")
    if not (float(k).is_integer() and 1 <= k <= min(n, d)):
        raise InputError(f"k must be an integer in [1, {min(n, d)}], got {k!r}")
    mu = X.mean(axis=0)
    X0 = X - mu
    vals, U = top_eigenvectors(X0.T @ X0 / (n - 1), int(k))
    return PcaModel(U=U, mu=mu, variances=vals)


def pca_scores(model: PcaModel, X) -> np.ndarray:
    X = _columns_match(validate_real(X), model.U.shape[0])
    return (X - model.mu) @ model.U


def pca_reconstruct(model: PcaModel, X) -> np.ndarray:
    return model.mu + pca_scores(model, X) @ model.U.T


def pca_probability_estimate(model: PcaModel, X) -> np.ndarray:
    return np.clip(pca_reconstruct(model, X), PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)


# =============================================================================
# Logistic SVD
# =============================================================================


@dataclass(frozen=True)
class LsvdModel:
    """Θ = 1μᵀ + ABᵀ with free scores A (n x k) and orthonormal loadings B (d x k)."""

    A: np.ndarray
    B: np.ndarray
    mu: np.ndarray
    report: Optional[FitReport] = field(default=None, compare=False, repr=False)

    method = "lsvd"
    family = BERNOULLI.tag

    @property
    def k(self) -> int:
        return int(self.B.shape[1])

    def theta(self, X=None) -> np.ndarray:
        """In-sample natural parameters; X only checks the shape."""
        out = self.mu + self.A @ self.B.T
        if X is not None and np.shape(X) != out.shape:
            raise InputError(f"data has shape {np.shape(X)}, model was fit on {out.shape}")
        return out

    def predict_theta(self, X) -> np.ndarray:
        return self.mu + lsvd_new_scores(self, X) @ self.B.T


def fit_lsvd(X, config: FitConfig) -> LsvdModel:
    """
    MM for logistic SVD: working variables, then μ from column means of Z − ABᵀ,
    then a rank-k truncated SVD of Z − 1μᵀ.

    The starting point matches the LPCA start (same μ and loadings, with
    scores (mQ − 1μᵀ)B), so ``config.m`` only shapes the initialization.
    """
    X = validate_binary(X)
    n, d = X.shape
    cfg = config.validate(d)
    if family_for(cfg.family) is not BERNOULLI:
        raise InputError("logistic SVD fits Bernoulli data only")
    k = cfg.k_int
    if k > min(n, d):
        raise InputError(f"k must be at most min(n, d) = {min(n, d)}, got {k}")
    started = time.perf_counter()

    Q = 2.0 * X - 1.0
    mu = main_effects(X, cfg.m) if cfg.include_mu else np.zeros(d)
    B = top_right_singular_vectors(Q, k)
    A = (cfg.m * Q - mu) @ B
    theta = mu + A @ B.T
    dev = BERNOULLI.deviance(X, theta)
    trace = [dev / (n * d)]
    logger.info("lsvd fit start n=%s d=%s k=%s", n, d, k)

    converged = False
    it = 0
    for it in range(1, int(cfg.max_iter) + 1):
        Z = working_variables(X, theta)
        if cfg.include_mu:
            mu = (Z - A @ B.T).mean(axis=0)
        A, B = _truncated_svd(Z - mu, k)
        theta = mu + A @ B.T
        new_dev = BERNOULLI.deviance(X, theta)
        if not np.isfinite(new_dev):
            raise NumericalError(f"deviance became non-finite at iteration {it}")
        trace.append(new_dev / (n * d))
        change = abs(dev - new_dev) / (n * d)
        dev = new_dev
        if change < cfg.tol:
            converged = True
            break

    report = FitReport(
        deviance_trace=tuple(trace),
        iterations=it,
        converged=converged,
        termination="converged" if converged else "max_iter",
        elapsed=time.perf_counter() - started,
    )
    logger.info(
        "lsvd fit done termination=%s iterations=%s avg_deviance=%.8g",
        report.termination, report.iterations, report.final_deviance,
    )
    return LsvdModel(A=A, B=B, mu=mu, report=report)


def lsvd_new_scores(model: LsvdModel, X_new) -> np.ndarray:
    """
    Scores for rows the model never saw: per row, minimize the Bernoulli
    deviance over a with B and μ fixed.

    - Newton steps with step-halving, |a|∞ ≤ 1e3, at most 100 iterations
    - separated rows (minimum at infinity) land on the clamp boundary
    """
    X = _columns_match(validate_binary(X_new), model.B.shape[0])
    started = time.perf_counter()
    out = np.empty((X.shape[0], model.k))
    for i, row in enumerate(X):
        out[i] = _newton_row(row, model.mu, model.B)
    logger.info("lsvd new-data scores rows=%s elapsed=%.3fs", X.shape[0], time.perf_counter() - started)
    return out


def parameter_counts(n: int, d: int, k: int, *, include_mu: bool = True) -> dict[str, int]:
    """Free-parameter accounting; LSVD carries kn − k(k−1)/2 more than LPCA."""
    lpca = d * k + (d if include_mu else 0)
    return {"lpca": lpca, "lsvd": lpca + n * k - k * (k - 1) // 2}


# =============================================================================
# Internals
# =============================================================================


def _columns_match(X: np.ndarray, d: int) -> np.ndarray:
    if X.shape[1] != d:
        raise InputError(f"data has {X.shape[1]} columns, model expects {d}")
    return X


def _truncated_svd(M: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    try:
        u, s, vt = linalg.svd(M, full_matrices=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    B = vt[:k].T
    A = u[:, :k] * s[:k]
    signs = column_signs(B)
    return A * signs, B * signs


def _row_objective(x: np.ndarray, eta: np.ndarray) -> float:
    return float(np.logaddexp(0.0, -(2.0 * x - 1.0) * eta).sum())


def _newton_row(x: np.ndarray, mu: np.ndarray, B: np.ndarray) -> np.ndarray:
    a = np.zeros(B.shape[1])
    f = _row_objective(x, mu)
    for _ in range(NEWTON_MAX_ITER):
        p = expit(mu + B @ a)
        grad = B.T @ (p - x)
        if np.abs(grad).max() < NEWTON_TOL:
            break
        hess = (B.T * (p * (1.0 - p))) @ B
        try:
            step = linalg.solve(hess, grad, assume_a="pos")
        except linalg.LinAlgError:
            step = linalg.lstsq(hess, grad)[0]
        t = 1.0
        while t > 1e-12:
            cand = np.clip(a - t * step, -SCORE_CLAMP, SCORE_CLAMP)
            fc = _row_objective(x, mu + B @ cand)
            if fc < f:
                break
            t *= 0.5
        else:
            break
        a, f = cand, fc

    if not np.isfinite(a).all():
        raise NumericalError("new-data scores became non-finite")
    # push along the ray when the optimum sits at infinity
    peak = np.abs(a).max()
    if peak > 0:
        edge = a * (SCORE_CLAMP / peak)
        if _row_objective(x, mu + B @ edge) < f:
            a = edge
    return a
