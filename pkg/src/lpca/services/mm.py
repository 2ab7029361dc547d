from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from lpca.services.core import (
    BERNOULLI,
    FitConfig,
    InitMethod,
    InputError,
    NumericalError,
    check_orthonormal,
    family_for,
    main_effects,
    random_frame,
    top_eigenvectors,
    top_right_singular_vectors,
    validate_binary,
    validate_real,
)

logger = logging.getLogger(__name__)


# =============================================================================
# Public API
# =============================================================================


@dataclass(frozen=True)
class FitReport:
    """
    Solver trace. ``deviance_trace`` holds average deviance (D / nd), one entry
    for the initial point and one per iteration.
    """

    deviance_trace: tuple[float, ...]
    iterations: int
    converged: bool
    termination: str
    elapsed: float
    best_trace: Optional[tuple[float, ...]] = None

    @property
    def final_deviance(self) -> float:
        return self.deviance_trace[-1]

    @property
    def best_deviance(self) -> float:
        return min(self.best_trace or self.deviance_trace)

    def to_dict(self) -> dict:
        out = {
            "deviance_trace": list(self.deviance_trace),
            "iterations": self.iterations,
            "converged": self.converged,
            "termination": self.termination,
            "elapsed": self.elapsed,
        }
        if self.best_trace is not None:
            out["best_trace"] = list(self.best_trace)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "FitReport":
        best = raw.get("best_trace")
        return cls(
            deviance_trace=tuple(float(v) for v in raw["deviance_trace"]),
            iterations=int(raw["iterations"]),
            converged=bool(raw["converged"]),
            termination=str(raw.get("termination", "converged" if raw["converged"] else "max_iter")),
            elapsed=float(raw.get("elapsed", 0.0)),
            best_trace=tuple(float(v) for v in best) if best is not None else None,
        )


@dataclass(frozen=True)
class LpcaModel:
    U: np.ndarray
    mu: np.ndarray
    m: float
    family: str = BERNOULLI.tag
    report: Optional[FitReport] = field(default=None, compare=False, repr=False)

    method = "lpca"

    @property
    def k(self) -> int:
        return int(self.U.shape[1])

    @property
    def d(self) -> int:
        return int(self.U.shape[0])

    def saturated(self, X) -> np.ndarray:
        fam = family_for(self.family)
        X = validate_binary(X) if fam is BERNOULLI else validate_real(X)
        if X.shape[1] != self.d:
            raise InputError(f"data has {X.shape[1]} columns, model expects {self.d}")
        return fam.saturated(X, self.m)

    def theta(self, X) -> np.ndarray:
        return predict_theta(self, X)

    def predict_theta(self, X) -> np.ndarray:
        return predict_theta(self, X)


def working_variables(X, theta, *, family=BERNOULLI) -> np.ndarray:
    """z = θ + (x − b'(θ)) / w; for Bernoulli w = 1/4 so z = θ + 4(x − σ(θ))."""
    fam = family_for(family)
    if fam.curvature_bound is None:
        raise InputError(f"{fam.tag} has no global curvature bound")
    theta = np.asarray(theta, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.shape != theta.shape:
        raise InputError(f"X has shape {X.shape}, Θ has shape {theta.shape}")
    return theta + (X - fam.mean(theta)) / fam.curvature_bound


def mm_update_mu(Z, saturated, U) -> np.ndarray:
    """μ = (1/n)(Z − Θ~UUᵀ)ᵀ1."""
    Z = np.asarray(Z, dtype=np.float64)
    S = np.asarray(saturated, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if Z.shape != S.shape:
        raise InputError(f"Z has shape {Z.shape}, Θ~ has shape {S.shape}")
    if U.shape[0] != S.shape[1]:
        raise InputError(f"U has {U.shape[0]} rows, expected {S.shape[1]}")
    return (Z - (S @ U) @ U.T).mean(axis=0)


def mm_update_U(saturated_c, Z_c, k: int) -> np.ndarray:
    """Top-k eigenvectors of Θ~cᵀZc + Zcᵀ Θ~c − Θ~cᵀΘ~c, sign-normalized."""
    Sc = np.asarray(saturated_c, dtype=np.float64)
    Zc = np.asarray(Z_c, dtype=np.float64)
    if Sc.shape != Zc.shape:
        raise InputError(f"Θ~c has shape {Sc.shape}, Zc has shape {Zc.shape}")
    d = Sc.shape[1]
    if not (1 <= int(k) <= d):
        raise InputError(f"k must be an integer in [1, {d}], got {k!r}")
    cross = Sc.T @ Zc
    M = cross + cross.T - Sc.T @ Sc
    return top_eigenvectors(M, int(k))[1]


def majorizer(X, theta, theta0, *, family=BERNOULLI) -> float:
    """
    Quadratic upper bound of the deviance at Θ built around Θ0:
    D(Θ0) + 2Σ(b'(θ0) − x)(θ − θ0) + wΣ(θ − θ0)².
    """
    fam = family_for(family)
    if fam.curvature_bound is None:
        raise InputError(f"{fam.tag} has no global curvature bound")
    X = np.asarray(X, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    theta0 = np.asarray(theta0, dtype=np.float64)
    delta = theta - theta0
    return (
        fam.deviance(X, theta0)
        + 2.0 * float(((fam.mean(theta0) - X) * delta).sum())
        + fam.curvature_bound * float(np.square(delta).sum())
    )


def fit_lpca(X, config: FitConfig, *, callback: Optional[Callable[[int, np.ndarray], None]] = None) -> LpcaModel:
    """
    Minimize deviance over orthonormal U (and μ) by majorization-minimization.

    - deviance is non-increasing across iterations
    - stops when |ΔD| / nd < tol or after max_iter (reported, not raised)
    - Bernoulli and Gaussian only; Poisson has no curvature bound to majorize with
    - ``callback(t, U)`` sees the starting frame (t = 0) and every iterate
    """
    fam = family_for(config.family)
    if fam.curvature_bound is None:
        raise InputError(f"the MM solver needs a bounded-curvature family; {fam.tag} is not")
    X = validate_binary(X) if fam is BERNOULLI else validate_real(X)
    n, d = X.shape
    cfg = config.validate(d)
    k = cfg.k_int
    m = float(cfg.m)

    started = time.perf_counter()
    S = fam.saturated(X, m)
    mu = main_effects(X, m, fam) if cfg.include_mu else np.zeros(d)
    U = _initial_frame(X, S, mu, cfg, k)

    theta = mu + ((S - mu) @ U) @ U.T
    dev = fam.deviance(X, theta)
    trace = [dev / (n * d)]
    logger.info("lpca fit start n=%s d=%s k=%s m=%s family=%s init=%s", n, d, k, m, fam.tag, cfg.init.value)
    if callback is not None:
        callback(0, U)

    converged = False
    it = 0
    for it in range(1, int(cfg.max_iter) + 1):
        Z = working_variables(X, theta, family=fam)
        if cfg.include_mu:
            mu = mm_update_mu(Z, S, U)
        U = mm_update_U(S - mu, Z - mu, k)
        theta = mu + ((S - mu) @ U) @ U.T
        new_dev = fam.deviance(X, theta)
        if not np.isfinite(new_dev):
            raise NumericalError(f"deviance became non-finite at iteration {it}")
        trace.append(new_dev / (n * d))
        if callback is not None:
            callback(it, U)
        logger.debug("lpca iter=%s avg_deviance=%.10g", it, trace[-1])
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
        "lpca fit done termination=%s iterations=%s avg_deviance=%.8g elapsed=%.3fs",
        report.termination, report.iterations, report.final_deviance, report.elapsed,
    )
    return LpcaModel(U=U, mu=mu, m=m, family=fam.tag, report=report)


def scores(model: LpcaModel, X_new) -> np.ndarray:
    """(Θ~* − 1μᵀ)U for new rows; the model is never refit."""
    S = model.saturated(X_new)
    return (S - model.mu) @ model.U


def predict_theta(model: LpcaModel, X_new) -> np.ndarray:
    return model.mu + scores(model, X_new) @ model.U.T


# =============================================================================
# Internals
# =============================================================================


def _initial_frame(X: np.ndarray, S: np.ndarray, mu: np.ndarray, cfg: FitConfig, k: int) -> np.ndarray:
    if cfg.init is InitMethod.PROVIDED:
        return check_orthonormal(cfg.initial_U, d=X.shape[1])[:, :k].copy()
    if cfg.init is InitMethod.RANDOM:
        return random_frame(X.shape[1], k, np.random.default_rng(cfg.seed))
    if family_for(cfg.family) is BERNOULLI:
        return top_right_singular_vectors(2.0 * X - 1.0, k)
    return top_right_singular_vectors(S - mu, k)
