"""
Optimality checks for patterned binary data.

Each verifier builds the candidate solution its result predicts and measures
how far the first-order conditions are from holding. Nothing here runs a
solver; the grid oracle evaluates the deviance directly.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from lpca.services.core import InputError, main_effects, validate_binary

logger = logging.getLogger(__name__)

COVARIANCE_TOL = 1e-8
ORACLE_STEP = 0.005


# =============================================================================
# Public API
# =============================================================================


@dataclass(frozen=True)
class OptimalityReport:
    stationarity: float
    mu_residual: float
    ortho_residual: float
    multiplier: np.ndarray

    def holds(self, tol: float) -> bool:
        return self.stationarity < tol and self.ortho_residual < 1e-8


@dataclass(frozen=True)
class IndependentColumnReport:
    column: int
    m: float
    eigenvalue: float
    predicted_eigenvalue: float
    stationarity: float


@dataclass(frozen=True)
class ColumnSelectionReport:
    selected: int
    expected: int
    deviances: tuple[float, ...]

    @property
    def holds(self) -> bool:
        return self.selected == self.expected


@dataclass(frozen=True)
class CompoundSymmetryReport:
    stationarity: float
    beta: Optional[float]
    eigenvalue: float


@dataclass(frozen=True)
class OracleResult:
    U: np.ndarray
    deviance: float
    resolution_bound: float
    evaluations: int


def cm_matrix(X, saturated, mu, U) -> np.ndarray:
    """C = (X − P̂)ᵀ(Θ~ − 1μᵀ) + (Θ~ − 1μᵀ)ᵀ(X − P̂), P̂ at Θ = 1μᵀ + (Θ~ − 1μᵀ)UUᵀ."""
    X, Sc, mu, U = _prepare(X, saturated, mu, U)
    return _cm(X, Sc, mu, U)


def optimality_residuals(X, model) -> OptimalityReport:
    """First-order conditions of a fitted LPCA model on the data it was fit to."""
    return residuals_at(X, model.saturated(X), model.mu, model.U)


def residuals_at(X, saturated, mu, U) -> OptimalityReport:
    """
    - stationarity: ‖CU − U(UᵀCU)‖_F
    - mu_residual: ‖(I − UUᵀ)(X − P̂)ᵀ1‖
    - ortho_residual: ‖UᵀU − I‖_F
    """
    X, Sc, mu, U = _prepare(X, saturated, mu, U)
    C = _cm(X, Sc, mu, U)
    CU = C @ U
    lam = U.T @ CU
    R = X - expit(mu + (Sc @ U) @ U.T)
    col = R.sum(axis=0)
    return OptimalityReport(
        stationarity=float(np.linalg.norm(CU - U @ lam)),
        mu_residual=float(np.linalg.norm(col - U @ (U.T @ col))),
        ortho_residual=float(np.linalg.norm(U.T @ U - np.eye(U.shape[1]))),
        multiplier=lam,
    )


def deviance_gradient_U(X, saturated, mu, U) -> np.ndarray:
    """∂D/∂U = −2 C U (U unconstrained)."""
    X, Sc, mu, U = _prepare(X, saturated, mu, U, orthonormal=False)
    return -2.0 * _cm(X, Sc, mu, U) @ U


def deviance_gradient_mu(X, saturated, mu, U) -> np.ndarray:
    """∂D/∂μ = −2 (I − UUᵀ)(X − P̂)ᵀ1."""
    X, Sc, mu, U = _prepare(X, saturated, mu, U, orthonormal=False)
    col = (X - expit(mu + (Sc @ U) @ U.T)).sum(axis=0)
    return -2.0 * (col - U @ (U.T @ col))


def independent_column_check(X, m: float, column: int) -> IndependentColumnReport:
    """
    Candidate u = e_column with μ at the clamped main effects.

    When the column is uncorrelated with every other column and has mean ½,
    its eigenvalue is 2nm / (1 + e^m) and the stationarity residual vanishes;
    with any other mean the residual shrinks as m grows.
    """
    X = validate_binary(X)
    n, d = X.shape
    if not (0 <= int(column) < d):
        raise InputError(f"column must lie in [0, {d}), got {column!r}")
    _require_uncorrelated(X, columns=[int(column)])
    U = np.zeros((d, 1))
    U[int(column), 0] = 1.0
    mu = main_effects(X, m)
    report = residuals_at(X, m * (2.0 * X - 1.0), mu, U)
    mean = X[:, int(column)].mean()
    q_bar = 2.0 * mean - 1.0
    predicted = 2.0 * n * (m - mu[int(column)] * q_bar) / (1.0 + np.exp(m))
    return IndependentColumnReport(
        column=int(column),
        m=float(m),
        eigenvalue=float(report.multiplier[0, 0]),
        predicted_eigenvalue=float(predicted),
        stationarity=report.stationarity,
    )


def column_selection_check(X, m: float) -> ColumnSelectionReport:
    """
    Among u = e_j with every column mutually uncorrelated, the smallest
    deviance belongs to the column whose mean is closest to ½ (lowest index
    on ties).
    """
    X = validate_binary(X)
    n, d = X.shape
    _require_uncorrelated(X)
    S = m * (2.0 * X - 1.0)
    mu = main_effects(X, m)
    deviances = []
    for j in range(d):
        theta = np.broadcast_to(mu, X.shape).copy()
        theta[:, j] = S[:, j]
        deviances.append(float(2.0 * np.logaddexp(0.0, -(2.0 * X - 1.0) * theta).sum()))
    devs = np.asarray(deviances)
    floor = devs.min()
    selected = int(np.flatnonzero(devs <= floor + 1e-9 * max(1.0, abs(floor)))[0])
    closeness = np.abs(X.mean(axis=0) - 0.5)
    expected = int(np.flatnonzero(closeness <= closeness.min() + 1e-12)[0])
    return ColumnSelectionReport(selected=selected, expected=expected, deviances=tuple(deviances))


def compound_symmetry_check(X, m: float) -> CompoundSymmetryReport:
    """
    With QᵀQ compound symmetric and d ≤ 4, u = 1/√d·1 (μ = 0) is stationary.

    ``beta`` is the shared entry of the fitted mean shift (σ(m/2) − ½)/2 for
    d = 4 and σ(m/3) − ½ for d = 3; None otherwise.
    """
    X = validate_binary(X)
    n, d = X.shape
    if d > 4:
        raise InputError(f"compound symmetry check applies to d <= 4, got d = {d}")
    Q = 2.0 * X - 1.0
    G = Q.T @ Q
    off = G[~np.eye(d, dtype=bool)]
    if off.size and not np.allclose(off, off[0], rtol=0.0, atol=1e-9):
        raise InputError("QᵀQ is not compound symmetric (off-diagonal entries differ)")
    U = np.full((d, 1), 1.0 / np.sqrt(d))
    report = residuals_at(X, m * Q, np.zeros(d), U)
    if d == 4:
        beta = (float(expit(m / 2.0)) - 0.5) / 2.0
    elif d == 3:
        beta = float(expit(m / 3.0)) - 0.5
    else:
        beta = None
    return CompoundSymmetryReport(stationarity=report.stationarity, beta=beta, eigenvalue=float(report.multiplier[0, 0]))


def grid_oracle_rank1(X, m: float, *, mu=None, step: float = ORACLE_STEP) -> OracleResult:
    """
    Brute-force k = 1 optimum for d ≤ 3 over unit vectors on a half-circle
    (d = 2) or half-sphere (d = 3) with the given angular step.

    ``resolution_bound`` is the largest deviance change between the best grid
    point and its neighbours.
    """
    X = validate_binary(X)
    n, d = X.shape
    if d not in (2, 3):
        raise InputError(f"grid oracle supports d = 2 or 3, got d = {d}")
    if not step > 0:
        raise InputError(f"step must be > 0, got {step!r}")
    mu = np.zeros(d) if mu is None else np.asarray(mu, dtype=np.float64).reshape(-1)
    if mu.shape[0] != d:
        raise InputError(f"μ has length {mu.shape[0]}, expected {d}")

    # duplicate rows collapse into counts
    rows, counts = np.unique(X, axis=0, return_counts=True)
    Q = 2.0 * rows - 1.0
    Sc = m * Q - mu

    angles = np.arange(0.0, np.pi, step)
    if d == 2:
        grid = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        shape: tuple[int, ...] = (angles.size,)
    else:
        polar = np.arange(0.0, np.pi + step / 2.0, step)
        t, p = np.meshgrid(angles, polar, indexing="ij")
        grid = np.stack([np.sin(p) * np.cos(t), np.sin(p) * np.sin(t), np.cos(p)], axis=-1).reshape(-1, 3)
        shape = t.shape

    values = _rank1_deviances(Q, Sc, mu, counts, grid).reshape(shape)
    best = np.unravel_index(int(np.argmin(values)), shape)
    neighbours = []
    for axis in range(len(shape)):
        for delta in (-1, 1):
            idx = list(best)
            idx[axis] = (idx[axis] + delta) % shape[axis]
            neighbours.append(values[tuple(idx)])
    best_value = float(values[best])
    bound = float(max(abs(v - best_value) for v in neighbours))
    U = grid.reshape(*shape, d)[best].reshape(d, 1)
    logger.debug("grid oracle d=%s evaluations=%s best=%.8g bound=%.3g", d, values.size, best_value, bound)
    return OracleResult(U=U, deviance=best_value, resolution_bound=bound, evaluations=int(values.size))


# -----------------------------
# Exact designs
# -----------------------------


def independent_design(patterns: Sequence[tuple[int, int]]) -> np.ndarray:
    """
    Full product design: column j repeats a pattern of ``length`` cells with
    ``ones`` ones, and every combination of patterns appears once, so all
    columns are exactly uncorrelated with means ones/length.
    """
    blocks = []
    for ones, length in patterns:
        if not (0 <= ones <= length and length >= 1):
            raise InputError(f"bad column pattern ({ones}, {length})")
        blocks.append([1.0] * ones + [0.0] * (length - ones))
    return np.array(list(itertools.product(*blocks)), dtype=np.float64)


def uncorrelated_column_design(base, *, ones: int = 1, copies: int = 2) -> np.ndarray:
    """
    Append a column uncorrelated with every column of ``base``: each base row is
    repeated ``copies`` times, and the new column is 1 on ``ones`` of the copies.
    """
    base = validate_binary(base, name="base")
    if not (0 <= ones <= copies and copies >= 1):
        raise InputError(f"need 0 <= ones <= copies, got ones={ones}, copies={copies}")
    reps = np.repeat(base, copies, axis=0)
    pattern = np.array([1.0] * ones + [0.0] * (copies - ones))
    extra = np.tile(pattern, base.shape[0]).reshape(-1, 1)
    return np.hstack([reps, extra])


def full_factorial_design(d: int) -> np.ndarray:
    """All 2^d binary rows; QᵀQ = 2^d I."""
    return np.array(list(itertools.product([0.0, 1.0], repeat=int(d))), dtype=np.float64)


# =============================================================================
# Internals
# =============================================================================


def _prepare(X, saturated, mu, U, *, orthonormal: bool = True):
    X = validate_binary(X)
    S = np.asarray(saturated, dtype=np.float64)
    if S.shape != X.shape:
        raise InputError(f"Θ~ has shape {S.shape}, expected {X.shape}")
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    if mu.shape[0] != X.shape[1]:
        raise InputError(f"μ has length {mu.shape[0]}, expected {X.shape[1]}")
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != X.shape[1]:
        raise InputError(f"U must have {X.shape[1]} rows, got shape {U.shape}")
    if orthonormal:
        gap = np.abs(U.T @ U - np.eye(U.shape[1])).max()
        if gap > 1e-8:
            raise InputError(f"U is not orthonormal (max |UᵀU − I| = {gap:.3g})")
    return X, S - mu, mu, U


def _require_uncorrelated(X: np.ndarray, columns: Optional[Sequence[int]] = None) -> None:
    n = X.shape[0]
    means = X.mean(axis=0)
    cov = X.T @ X / n - np.outer(means, means)
    targets = range(X.shape[1]) if columns is None else columns
    for j in targets:
        off = np.delete(np.abs(cov[j]), j)
        if off.size and off.max() > COVARIANCE_TOL:
            other = int(np.argmax(np.abs(np.where(np.arange(X.shape[1]) == j, 0.0, cov[j]))))
            raise InputError(f"column {j} is correlated with column {other} (covariance {cov[j, other]:.3g})")


def _rank1_deviances(Q: np.ndarray, Sc: np.ndarray, mu: np.ndarray, counts: np.ndarray, grid: np.ndarray) -> np.ndarray:
    out = np.empty(grid.shape[0])
    chunk = 4096
    for start in range(0, grid.shape[0], chunk):
        u = grid[start : start + chunk]  # (g, d)
        proj = Sc @ u.T  # (r, g)
        theta = mu[None, :, None] + proj[:, None, :] * u.T[None, :, :]  # (r, d, g)
        cell = 2.0 * np.logaddexp(0.0, -Q[:, :, None] * theta)
        out[start : start + chunk] = np.einsum("r,rdg->g", counts.astype(np.float64), cell)
    return out


def _cm(X: np.ndarray, Sc: np.ndarray, mu: np.ndarray, U: np.ndarray) -> np.ndarray:
    cross = (X - expit(mu + (Sc @ U) @ U.T)).T @ Sc
    return cross + cross.T
