from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Protocol, Sequence

import numpy as np

from lpca.services.core import BERNOULLI, FitConfig, InputError, main_effects, validate_binary
from lpca.services.mm import fit_lpca

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.9
DEFAULT_M_GRID: tuple[float, ...] = tuple(0.5 * i for i in range(1, 11))


class NaturalParameterModel(Protocol):
    def theta(self, X) -> np.ndarray: ...

    def predict_theta(self, X) -> np.ndarray: ...


# =============================================================================
# Public API
# =============================================================================


@dataclass(frozen=True)
class MainEffectsModel:
    """Θ = 1μᵀ; the reference every deviance-explained figure is measured against."""

    mu: np.ndarray

    def theta(self, X) -> np.ndarray:
        return self.predict_theta(X)

    def predict_theta(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.broadcast_to(np.asarray(self.mu, dtype=np.float64), X.shape).copy()


@dataclass(frozen=True)
class ScreeRow:
    k: int
    deviance: float
    cumulative: float
    marginal: float


@dataclass(frozen=True)
class PredictiveDeviance:
    deviance: float
    percent_explained: float


@dataclass(frozen=True)
class CvResult:
    m_grid: tuple[float, ...]
    mean_deviance: tuple[float, ...]
    fold_deviance: tuple[tuple[float, ...], ...]
    chosen_m: float

    def rows(self) -> list[dict]:
        return [
            {"m": m, "mean_predictive_deviance": dev, **{f"fold_{i}": v for i, v in enumerate(folds)}}
            for m, dev, folds in zip(self.m_grid, self.mean_deviance, self.fold_deviance)
        ]


def baseline_mu(X, m: float) -> np.ndarray:
    return main_effects(X, m)


def deviance_explained(X, model: NaturalParameterModel, mu0: np.ndarray) -> float:
    """1 − D(model) / D(1μ̂ᵀ), in-sample."""
    X = validate_binary(X)
    return 1.0 - _deviance(X, model.theta(X)) / _baseline_deviance(X, mu0)


def marginal_deviance_explained(
    X,
    model_k: NaturalParameterModel,
    model_k_minus_1: Optional[NaturalParameterModel],
    mu0: np.ndarray,
) -> float:
    """Deviance explained by moving from k − 1 to k components (k − 1 = 0 is the main-effects model)."""
    X = validate_binary(X)
    before = MainEffectsModel(mu0) if model_k_minus_1 is None else model_k_minus_1
    return (_deviance(X, before.theta(X)) - _deviance(X, model_k.theta(X))) / _baseline_deviance(X, mu0)


def scree_table(
    X,
    *,
    k_max: int,
    fit: Callable[[int], NaturalParameterModel],
    m: float,
    gamma: Optional[float] = None,
) -> list[ScreeRow]:
    """
    Cumulative and marginal deviance explained for k = 1..k_max.

    ``fit(k)`` returns the fitted model for k. When ``gamma`` is given the
    table stops at the first k reaching it.
    """
    X = validate_binary(X)
    if not (1 <= int(k_max) <= X.shape[1]):
        raise InputError(f"k_max must be an integer in [1, {X.shape[1]}], got {k_max!r}")
    mu0 = baseline_mu(X, m)
    base = _baseline_deviance(X, mu0)
    prev = base
    rows: list[ScreeRow] = []
    for k in range(1, int(k_max) + 1):
        dev = _deviance(X, fit(k).theta(X))
        rows.append(ScreeRow(k=k, deviance=dev, cumulative=1.0 - dev / base, marginal=(prev - dev) / base))
        prev = dev
        if gamma is not None and rows[-1].cumulative >= gamma:
            break
    return rows


def choose_k(rows: Sequence[ScreeRow], gamma: float = DEFAULT_GAMMA) -> Optional[int]:
    """Smallest k whose cumulative deviance explained reaches gamma, or None."""
    if not (0 < gamma <= 1):
        raise InputError(f"gamma must lie in (0, 1], got {gamma!r}")
    for row in rows:
        if row.cumulative >= gamma:
            return row.k
    return None


def predictive_deviance(model: NaturalParameterModel, X_new, *, m: float) -> PredictiveDeviance:
    """
    Out-of-sample deviance, and the percentage it explains relative to the
    main-effects model of X_new itself (clamped at ±m).
    """
    X_new = validate_binary(X_new)
    dev = _deviance(X_new, model.predict_theta(X_new))
    base = _baseline_deviance(X_new, baseline_mu(X_new, m))
    return PredictiveDeviance(deviance=dev, percent_explained=100.0 * (1.0 - dev / base))


def fold_assignment(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle of row indices split into contiguous blocks."""
    if not (2 <= int(folds) <= n):
        raise InputError(f"folds must be an integer in [2, {n}], got {folds!r}")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(block) for block in np.array_split(order, int(folds))]


def cross_validate_m(
    X,
    *,
    k: int,
    m_grid: Iterable[float] = DEFAULT_M_GRID,
    folds: int = 5,
    seed: int = 0,
    config: Optional[FitConfig] = None,
    threads: int = 1,
) -> CvResult:
    """
    Mean held-out deviance of LPCA for every m in the grid.

    Cells (m, fold) run on a thread pool; results are collected by key, so
    the outcome does not depend on the thread count. Ties go to the smallest m.
    """
    X = validate_binary(X)
    grid = tuple(sorted(float(m) for m in m_grid))
    if not grid or any(not m > 0 for m in grid):
        raise InputError(f"m_grid must be non-empty with every m > 0, got {grid!r}")
    blocks = fold_assignment(X.shape[0], folds, seed)
    base_cfg = config or FitConfig(k=k, m=grid[0])

    def _cell(job: tuple[int, int]) -> tuple[tuple[int, int], float]:
        mi, fi = job
        held = blocks[fi]
        train = np.delete(X, held, axis=0)
        model = fit_lpca(train, replace(base_cfg, k=k, m=grid[mi]))
        dev = _deviance(X[held], model.predict_theta(X[held]))
        logger.debug("cv cell m=%s fold=%s deviance=%.8g", grid[mi], fi, dev)
        return (mi, fi), dev

    jobs = [(mi, fi) for mi in range(len(grid)) for fi in range(len(blocks))]
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = dict(pool.map(_cell, jobs))

    per_fold = tuple(tuple(results[(mi, fi)] for fi in range(len(blocks))) for mi in range(len(grid)))
    means = tuple(float(np.mean(row)) for row in per_fold)
    best = min(range(len(grid)), key=lambda i: (means[i], grid[i]))
    logger.info("cv chose m=%s (mean predictive deviance %.8g)", grid[best], means[best])
    return CvResult(m_grid=grid, mean_deviance=means, fold_deviance=per_fold, chosen_m=grid[best])


# =============================================================================
# Internals
# =============================================================================


def _deviance(X: np.ndarray, theta: np.ndarray) -> float:
    return BERNOULLI.deviance(X, np.asarray(theta, dtype=np.float64))


def _baseline_deviance(X: np.ndarray, mu0) -> float:
    mu0 = np.asarray(mu0, dtype=np.float64).reshape(-1)
    if mu0.shape[0] != X.shape[1]:
        raise InputError(f"baseline μ has length {mu0.shape[0]}, expected {X.shape[1]}")
    base = _deviance(X, np.broadcast_to(mu0, X.shape))
    if not base > 0:
        raise InputError("main-effects deviance is zero; deviance explained is undefined")
    return base
