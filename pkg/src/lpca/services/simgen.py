from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from lpca.services.baselines import fit_lsvd, fit_pca, lsvd_new_scores, pca_scores
from lpca.services.core import BERNOULLI, FitConfig, InputError, validate_binary
from lpca.services.mm import fit_lpca, scores
from lpca.services.selection import DEFAULT_M_GRID, cross_validate_m

logger = logging.getLogger(__name__)

RIDGE_FALLBACK = 1e-8
PCR_METHODS = ("pca", "lpca", "lsvd")


# =============================================================================
# Mixture data
# =============================================================================


@dataclass(frozen=True)
class MixtureSpec:
    """
    n rows from k_true cluster centers; each center's d probabilities are
    Beta(α, β) with α = 2φp̄ and β = 2φ(1 − p̄). Small φ pushes centers toward
    0/1; p̄ sets the expected density.
    """

    n: int
    d: int
    k_true: int
    pbar: float = 0.5
    phi: float = 1.0
    seed: int = 0

    @property
    def alpha(self) -> float:
        return 2.0 * self.phi * self.pbar

    @property
    def beta(self) -> float:
        return 2.0 * self.phi * (1.0 - self.pbar)

    def validate(self) -> "MixtureSpec":
        if self.n < 1 or self.d < 1 or self.k_true < 1:
            raise InputError(f"n, d and k_true must be >= 1, got n={self.n}, d={self.d}, k_true={self.k_true}")
        if not (0.0 < self.pbar < 1.0):
            raise InputError(f"pbar must lie in (0, 1), got {self.pbar!r}")
        if not self.phi > 0:
            raise InputError(f"phi must be > 0, got {self.phi!r}")
        return self


@dataclass(frozen=True)
class SimulatedData:
    X: np.ndarray
    P: np.ndarray
    assignments: np.ndarray
    centers: np.ndarray


def simulate(spec: MixtureSpec, *, rng: Optional[np.random.Generator] = None) -> SimulatedData:
    spec = spec.validate()
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    centers = _beta_draws(spec.alpha, spec.beta, (spec.k_true, spec.d), rng)
    assignments = rng.integers(0, spec.k_true, size=spec.n)
    P = centers[assignments]
    X = (rng.random(P.shape) < P).astype(np.float64)
    return SimulatedData(X=X, P=P, assignments=assignments, centers=centers)


def probability_mse(P_hat, P) -> float:
    """‖P̂ − P‖²_F / (nd)."""
    P_hat = np.asarray(P_hat, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if P_hat.shape != P.shape:
        raise InputError(f"P̂ has shape {P_hat.shape}, P has shape {P.shape}")
    return float(np.square(P_hat - P).mean())


# =============================================================================
# Simulation sweep
# =============================================================================


@dataclass(frozen=True)
class Scenario:
    n: int
    d: int
    k_true: int
    pbar: float
    phi: float


@dataclass(frozen=True)
class SweepRow:
    n: int
    d: int
    k_true: int
    pbar: float
    phi: float
    replicate: int
    method: str
    k: int
    m: Optional[float]
    mse: float
    deviance: float
    iterations: int

    def as_dict(self) -> dict:
        return asdict(self)


def run_sweep(
    scenarios: Sequence[Scenario],
    *,
    k_hats: Iterable[int],
    m_grid: Iterable[float] = DEFAULT_M_GRID,
    replicates: int = 1,
    seed: int = 0,
    cv_folds: int = 5,
    max_iter: int = 1000,
    tol: float = 1e-5,
    threads: int = 1,
) -> list[SweepRow]:
    """
    For every scenario and replicate: draw data, then fit LPCA at each m,
    LPCA at its cross-validated m, and LSVD, for each k̂.

    - a cell (scenario, replicate) draws from SeedSequence([seed, cell])
    - main effects are fit whenever p̄ ≠ ½
    - ``deviance`` is the average in-sample deviance D / nd
    """
    ks = sorted({int(k) for k in k_hats})
    grid = tuple(sorted(float(m) for m in m_grid))
    if not ks or not grid:
        raise InputError("k_hats and m_grid must be non-empty")
    cells = [(si, r) for si in range(len(scenarios)) for r in range(int(replicates))]

    def _cell(job: tuple[int, int]) -> list[SweepRow]:
        si, r = job
        sc = scenarios[si]
        cell_index = si * int(replicates) + r
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), cell_index]))
        data = simulate(MixtureSpec(n=sc.n, d=sc.d, k_true=sc.k_true, pbar=sc.pbar, phi=sc.phi), rng=rng)
        include_mu = sc.pbar != 0.5
        out: list[SweepRow] = []

        def _row(method: str, k: int, m: Optional[float], theta: np.ndarray, iterations: int) -> SweepRow:
            return SweepRow(
                n=sc.n, d=sc.d, k_true=sc.k_true, pbar=sc.pbar, phi=sc.phi, replicate=r,
                method=method, k=k, m=m,
                mse=probability_mse(expit(theta), data.P),
                deviance=BERNOULLI.deviance(data.X, theta) / data.X.size,
                iterations=iterations,
            )

        for k in ks:
            if k > sc.d:
                continue
            base = FitConfig(k=k, m=grid[0], max_iter=max_iter, tol=tol, include_mu=include_mu)
            for m in grid:
                model = fit_lpca(data.X, replace(base, m=m))
                out.append(_row("lpca", k, m, model.theta(data.X), model.report.iterations))
            if sc.n >= cv_folds:
                cv = cross_validate_m(data.X, k=k, m_grid=grid, folds=cv_folds, seed=cell_index, config=base)
                model = fit_lpca(data.X, replace(base, m=cv.chosen_m))
                out.append(_row("lpca_cv", k, cv.chosen_m, model.theta(data.X), model.report.iterations))
            if k <= min(sc.n, sc.d):
                lsvd = fit_lsvd(data.X, replace(base, m=grid[-1]))
                out.append(_row("lsvd", k, None, lsvd.theta(), lsvd.report.iterations))
        logger.info("sweep cell scenario=%s replicate=%s rows=%s", si, r, len(out))
        return out

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        chunks = list(pool.map(_cell, cells))
    return [row for chunk in chunks for row in chunk]


# =============================================================================
# Principal component regression
# =============================================================================


@dataclass(frozen=True)
class PcrRow:
    method: str
    k: int
    snr: float
    in_sample_mse: float
    out_of_sample_mse: float
    ridge: bool

    def as_dict(self) -> dict:
        return asdict(self)


def pcr_experiment(
    X_train,
    X_test,
    *,
    k_grid: Iterable[int],
    snr_grid: Iterable[float] = (1.0, 5.0, 10.0),
    m: float = 4.0,
    seed: int = 0,
    methods: Sequence[str] = PCR_METHODS,
    max_iter: int = 1000,
    tol: float = 1e-5,
) -> list[PcrRow]:
    """
    Regress a linear response on the leading k components of each method.

    The response is Xβ + ε with β ~ N(0, I) and noise variance
    var(X_train β) / SNR. Each method is fit once at max(k_grid); a model with
    k components uses the first k score columns. k = 0 is the intercept-only fit.
    """
    X_train = validate_binary(X_train, name="X_train")
    X_test = validate_binary(X_test, name="X_test")
    if X_train.shape[1] != X_test.shape[1]:
        raise InputError(f"train has {X_train.shape[1]} columns, test has {X_test.shape[1]}")
    ks = sorted({int(k) for k in k_grid})
    if not ks or ks[0] < 0 or ks[-1] > X_train.shape[1]:
        raise InputError(f"k_grid must lie in [0, {X_train.shape[1]}], got {ks!r}")
    unknown = sorted(set(methods) - set(PCR_METHODS))
    if unknown:
        raise InputError(f"unknown PCR method(s) {unknown}; expected {list(PCR_METHODS)}")
    snrs = [float(s) for s in snr_grid]
    if any(not s > 0 for s in snrs):
        raise InputError(f"every SNR must be > 0, got {snrs!r}")

    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(X_train.shape[1])
    signal_train = X_train @ beta
    signal_test = X_test @ beta
    signal_var = float(np.var(signal_train))

    k_max = max(ks)
    components = _component_scores(X_train, X_test, methods, k_max, m, max_iter, tol, seed) if k_max > 0 else {}

    rows: list[PcrRow] = []
    for snr in snrs:
        sigma = np.sqrt(signal_var / snr)
        y_train = signal_train + sigma * rng.standard_normal(X_train.shape[0])
        y_test = signal_test + sigma * rng.standard_normal(X_test.shape[0])
        for method in methods:
            Z_train, Z_test = components.get(method, (np.empty((X_train.shape[0], 0)), np.empty((X_test.shape[0], 0))))
            for k in ks:
                in_mse, out_mse, ridge = pcr_fit(Z_train[:, :k], y_train, Z_test[:, :k], y_test)
                rows.append(
                    PcrRow(method=method, k=k, snr=snr, in_sample_mse=in_mse, out_of_sample_mse=out_mse, ridge=ridge)
                )
    return rows


def pcr_fit(Z_train, y_train, Z_test, y_test) -> tuple[float, float, bool]:
    """
    Least squares of y on [1, Z]; returns (in-sample MSE, out-of-sample MSE, ridge used).
    A rank-deficient design falls back to a 1e-8 ridge.
    """
    D_train = _design(np.asarray(Z_train, dtype=np.float64))
    D_test = _design(np.asarray(Z_test, dtype=np.float64))
    coef, ridge = _least_squares(D_train, y_train)
    in_mse = float(np.mean(np.square(y_train - D_train @ coef)))
    out_mse = float(np.mean(np.square(y_test - D_test @ coef)))
    return in_mse, out_mse, ridge


# =============================================================================
# Internals
# =============================================================================


def _beta_draws(a: float, b: float, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    # Beta from two Gamma draws in log space: log G(s) = log G(s + 1) + log(U) / s, U uniform on (0, 1]
    log_x = np.log(rng.standard_gamma(a + 1.0, size=shape)) + np.log1p(-rng.random(shape)) / a
    log_y = np.log(rng.standard_gamma(b + 1.0, size=shape)) + np.log1p(-rng.random(shape)) / b
    return expit(log_x - log_y)


def _component_scores(
    X_train: np.ndarray,
    X_test: np.ndarray,
    methods: Sequence[str],
    k: int,
    m: float,
    max_iter: int,
    tol: float,
    seed: int,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    cfg = FitConfig(k=k, m=m, max_iter=max_iter, tol=tol, seed=seed)
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if "pca" in methods:
        pca = fit_pca(X_train, k)
        out["pca"] = (pca_scores(pca, X_train), pca_scores(pca, X_test))
    if "lpca" in methods:
        lpca = fit_lpca(X_train, cfg)
        out["lpca"] = (scores(lpca, X_train), scores(lpca, X_test))
    if "lsvd" in methods:
        lsvd = fit_lsvd(X_train, cfg)
        out["lsvd"] = (lsvd.A, lsvd_new_scores(lsvd, X_test))
    return out


def _design(Z: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((Z.shape[0], 1)), Z])


def _least_squares(D: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    if np.linalg.matrix_rank(D) < D.shape[1]:
        coef = np.linalg.solve(D.T @ D + RIDGE_FALLBACK * np.eye(D.shape[1]), D.T @ y)
        return coef, True
    return np.linalg.lstsq(D, y, rcond=None)[0], False
