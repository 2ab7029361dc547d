from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import linalg
from scipy.special import expit

from lpca.services.core import (
    BERNOULLI,
    FitConfig,
    InitMethod,
    InputError,
    NumericalError,
    bernoulli_deviance,
    check_orthonormal,
    family_for,
    main_effects,
    random_frame,
    top_eigenvectors,
    top_right_singular_vectors,
    validate_binary,
)
from lpca.services.mm import FitReport, LpcaModel

logger = logging.getLogger(__name__)

PROJECTION_TOL = 1e-10
_BISECTION_MAX_STEPS = 200


# =============================================================================
# Public API
# =============================================================================


@dataclass(frozen=True)
class FantopeModel:
    """Convex relaxation: H in the rank-k Fantope replaces UUᵀ; μ stays at the main effects."""

    H: np.ndarray
    mu: np.ndarray
    m: float
    k: float
    report: Optional[FitReport] = field(default=None, compare=False, repr=False)

    method = "fantope"
    family = BERNOULLI.tag

    @property
    def d(self) -> int:
        return int(self.H.shape[0])

    def theta(self, X) -> np.ndarray:
        return self.predict_theta(X)

    def predict_theta(self, X) -> np.ndarray:
        X = validate_binary(X)
        if X.shape[1] != self.d:
            raise InputError(f"data has {X.shape[1]} columns, model expects {self.d}")
        return self.mu + (self.m * (2.0 * X - 1.0) - self.mu) @ self.H


def fantope_gradient(X, saturated, mu, H) -> np.ndarray:
    """
    Gradient of the deviance in H, symmetrized: G + Gᵀ − diag(G) with
    G = 2(P̂ − X)ᵀ(Θ~ − 1μᵀ).
    """
    X = validate_binary(X)
    Sc = np.asarray(saturated, dtype=np.float64) - np.asarray(mu, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (X.shape[1], X.shape[1]):
        raise InputError(f"H has shape {H.shape}, expected {(X.shape[1], X.shape[1])}")
    G = _raw_gradient(X, Sc, np.asarray(mu, dtype=np.float64), H)
    return _symmetrize(G)


def fantope_project(M, k: float) -> np.ndarray:
    """
    Frobenius projection onto {H : 0 ⪯ H ⪯ I, tr H = k}.

    Eigenvalues are shifted by ν and clipped to [0, 1]; ν is found by
    bisection on [λ_min − k/d, λ_max] until |Σλ⁺ − k| < 1e-10.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"projection needs a square matrix, got shape {M.shape}")
    d = M.shape[0]
    if not (0 < k <= d):
        raise InputError(f"k must lie in (0, {d}], got {k!r}")
    if not np.isfinite(M).all():
        raise NumericalError("matrix to project has non-finite entries")
    try:
        vals, vecs = linalg.eigh(0.5 * (M + M.T))
    except linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc

    lam = _clipped_eigenvalues(vals, float(k))
    out = (vecs * lam) @ vecs.T
    return 0.5 * (out + out.T)


def lipschitz_constant(saturated, mu) -> float:
    """‖Θ~ − 1μᵀ‖²_F bounds the Lipschitz constant of the symmetrized gradient."""
    Sc = np.asarray(saturated, dtype=np.float64) - np.asarray(mu, dtype=np.float64)
    L = float(np.square(Sc).sum())
    if not L > 0:
        raise InputError("Θ~ − 1μᵀ is zero; the relaxation has nothing to fit")
    return L


def line_search_start(saturated, mu) -> float:
    """First backtracking constant: σ_max(Θ~ − 1μᵀ)² / 2, capped at the global constant."""
    Sc = np.asarray(saturated, dtype=np.float64) - np.asarray(mu, dtype=np.float64)
    L_max = lipschitz_constant(saturated, mu)
    return min(L_max, float(linalg.norm(Sc, 2)) ** 2 / 2.0)


def fit_fantope(
    X,
    config: FitConfig,
    *,
    warm_start: Optional[np.ndarray] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> FantopeModel:
    """
    Accelerated projected gradient over the Fantope.

    - μ is fixed at clamp(logit X̄, ±m) (or 0 without main effects)
    - step 1/L by default; ``config.line_search`` enables backtracking
    - the report carries the raw trace and the best-so-far trace; the
      returned H is the best iterate seen
    - ``callback(t, H)`` sees the start (t = 0) and every iterate
    """
    X = validate_binary(X)
    n, d = X.shape
    if family_for(config.family) is not BERNOULLI:
        raise InputError("the Fantope solver fits Bernoulli data only")
    cfg = config.validate(d, fractional_k=True)
    k = float(cfg.k)
    m = float(cfg.m)
    started = time.perf_counter()

    S = m * (2.0 * X - 1.0)
    mu = main_effects(X, m) if cfg.include_mu else np.zeros(d)
    Sc = S - mu
    L_max = lipschitz_constant(S, mu)
    if cfg.line_search:
        L_t = line_search_start(S, mu)
    else:
        L_t = L_max

    H_prev = H_cur = _initial_H(Sc, cfg, k, warm_start)
    dev_cur = _deviance(X, Sc, mu, H_cur)
    trace = [dev_cur / (n * d)]
    best_trace = [trace[0]]
    best_H = H_cur
    logger.info(
        "fantope fit start n=%s d=%s k=%s m=%s L=%.6g line_search=%s", n, d, k, m, L_max, cfg.line_search
    )
    if callback is not None:
        callback(0, H_cur)

    converged = False
    t = 0
    for t in range(1, int(cfg.max_iter) + 1):
        F = H_cur + ((t - 2) / (t + 1)) * (H_cur - H_prev)
        G = _raw_gradient(X, Sc, mu, F)
        dev_F = _deviance(X, Sc, mu, F) if cfg.line_search else 0.0
        while True:
            H_next = fantope_project(F - _symmetrize(G) / L_t, k)
            dev_next = _deviance(X, Sc, mu, H_next)
            if not cfg.line_search or L_t >= L_max:
                break
            delta = H_next - F
            bound = dev_F + float((G * delta).sum()) + 0.5 * L_t * float(np.square(delta).sum())
            if dev_next <= bound:
                break
            L_t = min(2.0 * L_t, L_max)

        if not np.isfinite(dev_next):
            raise NumericalError(f"deviance became non-finite at iteration {t}")
        H_prev, H_cur = H_cur, H_next
        if callback is not None:
            callback(t, H_cur)
        avg = dev_next / (n * d)
        trace.append(avg)
        prev_best = best_trace[-1]
        if avg <= prev_best:
            best_H = H_cur
        best_trace.append(min(prev_best, avg))
        logger.debug("fantope iter=%s avg_deviance=%.10g best=%.10g", t, avg, best_trace[-1])
        if avg <= prev_best and prev_best - avg < cfg.tol:
            converged = True
            break

    report = FitReport(
        deviance_trace=tuple(trace),
        iterations=t,
        converged=converged,
        termination="converged" if converged else "max_iter",
        elapsed=time.perf_counter() - started,
        best_trace=tuple(best_trace),
    )
    logger.info(
        "fantope fit done termination=%s iterations=%s best_avg_deviance=%.8g elapsed=%.3fs",
        report.termination, report.iterations, report.best_deviance, report.elapsed,
    )
    return FantopeModel(H=best_H, mu=mu, m=m, k=k, report=report)


def fantope_to_projection(model: FantopeModel, k: int, X=None) -> LpcaModel:
    """
    Top-k eigenvectors of H as an LPCA model with the same μ and m.

    With ``X``, the projected model's average deviance on X is computed,
    logged and attached as a one-entry report (termination "projected").
    """
    k = int(k)
    if not (1 <= k <= model.d):
        raise InputError(f"k must be an integer in [1, {model.d}], got {k!r}")
    started = time.perf_counter()
    U = top_eigenvectors(model.H, k)[1]
    projected = LpcaModel(U=U, mu=np.array(model.mu, copy=True), m=model.m, family=BERNOULLI.tag)
    if X is None:
        return projected
    X = validate_binary(X)
    avg = bernoulli_deviance(X, projected.theta(X)) / X.size
    logger.info("fantope projection k=%s avg_deviance=%.8g", k, avg)
    report = FitReport(
        deviance_trace=(avg,),
        iterations=0,
        converged=True,
        termination="projected",
        elapsed=time.perf_counter() - started,
    )
    return replace(projected, report=report)


def fantope_grid(
    X,
    *,
    k_values: Iterable[float],
    m_values: Iterable[float],
    config: FitConfig,
    threads: int = 1,
) -> dict[tuple[float, float], FantopeModel]:
    """
    Fit every (k, m) cell. Within a k row, cells run in ascending m and each
    starts from the previous cell's H. Rows run concurrently; the returned
    mapping is ordered by (k, m).
    """
    X = validate_binary(X)
    ks = sorted({float(k) for k in k_values})
    ms = sorted({float(m) for m in m_values})
    if not ks or not ms:
        raise InputError("k_values and m_values must be non-empty")

    def _row(k: float) -> list[tuple[tuple[float, float], FantopeModel]]:
        out = []
        warm: Optional[np.ndarray] = None
        for m in ms:
            fitted = fit_fantope(X, replace(config, k=k, m=m), warm_start=warm)
            warm = fitted.H
            out.append(((k, m), fitted))
        return out

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        rows = list(pool.map(_row, ks))
    return {key: model for row in rows for key, model in row}


# =============================================================================
# Internals
# =============================================================================


def _raw_gradient(X: np.ndarray, Sc: np.ndarray, mu: np.ndarray, H: np.ndarray) -> np.ndarray:
    P = expit(mu + Sc @ H)
    return 2.0 * (P - X).T @ Sc


def _symmetrize(G: np.ndarray) -> np.ndarray:
    return G + G.T - np.diag(np.diag(G))


def _deviance(X: np.ndarray, Sc: np.ndarray, mu: np.ndarray, H: np.ndarray) -> float:
    theta = mu + Sc @ H
    return float(2.0 * np.logaddexp(0.0, -(2.0 * X - 1.0) * theta).sum())


def _clipped_eigenvalues(vals: np.ndarray, k: float) -> np.ndarray:
    d = vals.shape[0]

    def _trace(nu: float) -> float:
        return float(np.clip(vals - nu, 0.0, 1.0).sum())

    lo = float(vals.min()) - k / d
    hi = float(vals.max())
    nu = 0.5 * (lo + hi)
    for _ in range(_BISECTION_MAX_STEPS):
        nu = 0.5 * (lo + hi)
        gap = _trace(nu) - k
        if abs(gap) < PROJECTION_TOL:
            break
        if gap > 0:
            lo = nu
        else:
            hi = nu
    return np.clip(vals - nu, 0.0, 1.0)


def _initial_H(Sc: np.ndarray, cfg: FitConfig, k: float, warm_start: Optional[np.ndarray]) -> np.ndarray:
    d = Sc.shape[1]
    if warm_start is not None:
        H0 = np.asarray(warm_start, dtype=np.float64)
        if H0.shape != (d, d):
            raise InputError(f"warm start has shape {H0.shape}, expected {(d, d)}")
        return fantope_project(H0, k)
    kc = int(math.ceil(k))
    if cfg.init is InitMethod.PROVIDED:
        U = check_orthonormal(cfg.initial_U, d=d)
    elif cfg.init is InitMethod.RANDOM:
        U = random_frame(d, kc, np.random.default_rng(cfg.seed))
    else:
        U = top_right_singular_vectors(Sc, kc)
    return fantope_project(U @ U.T, k)
