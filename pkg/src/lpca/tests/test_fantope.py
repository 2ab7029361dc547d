import math
from dataclasses import replace

import numpy as np
import pytest
from lpca.services.core import FitConfig, InputError, bernoulli_deviance, main_effects
from lpca.services.fantope import (
    FantopeModel,
    fantope_grid,
    fantope_gradient,
    fantope_project,
    fantope_to_projection,
    fit_fantope,
    line_search_start,
    lipschitz_constant,
)
from lpca.services.mm import fit_lpca
from lpca.services.simgen import MixtureSpec, simulate

from .conftest import random_binary


def _relaxed_deviance(X, Sc, mu, H):
    return bernoulli_deviance(X, mu + Sc @ H)


def _random_symmetric(rng, d, scale=1.0):
    A = scale * rng.standard_normal((d, d))
    return 0.5 * (A + A.T)


def _is_in_fantope(H, k, tol=1e-8):
    vals = np.linalg.eigvalsh(H)
    return (
        np.allclose(H, H.T, atol=1e-12)
        and vals.min() >= -tol
        and vals.max() <= 1 + tol
        and abs(np.trace(H) - k) <= 1e-6
    )


# -----------------------------
# Projection
# -----------------------------


def test_projection_of_a_diagonal_shifts_eigenvalues():
    H = fantope_project(np.diag([0.5, 0.3]), 1)
    assert np.allclose(H, np.diag([0.6, 0.4]), atol=1e-8)


def test_projection_clips_to_the_unit_interval():
    H = fantope_project(np.diag([2.0, 0.1]), 1)
    assert np.allclose(H, np.diag([1.0, 0.0]), atol=1e-10)


def test_projection_lands_in_the_fantope(rng):
    for i in range(50):
        d = int(rng.integers(2, 9))
        k = float(rng.integers(1, d + 1)) if i % 2 else float(rng.uniform(0.5, d))
        H = fantope_project(_random_symmetric(rng, d, scale=3.0), k)
        assert _is_in_fantope(H, k), i


def test_projection_is_idempotent_on_members(rng):
    for _ in range(50):
        V, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        H = (V * np.array([1.0, 0.7, 0.3, 0.0, 0.0])) @ V.T
        assert np.allclose(fantope_project(H, 2), H, atol=1e-9)


def test_projection_rejects_bad_arguments():
    with pytest.raises(InputError):
        fantope_project(np.eye(3), 0)
    with pytest.raises(InputError):
        fantope_project(np.eye(3), 4)
    with pytest.raises(InputError):
        fantope_project(np.ones((2, 3)), 1)


# -----------------------------
# Gradient and Lipschitz constant
# -----------------------------


def test_gradient_matches_central_differences():
    step = 1e-6
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = random_binary(rng, 6, 4)
        m = 2.0
        S = m * (2 * X - 1)
        mu = main_effects(X, m)
        Sc = S - mu
        H = _random_symmetric(rng, 4, scale=0.3)
        G = fantope_gradient(X, S, mu, H)
        for i in range(4):
            for j in range(i, 4):
                E = np.zeros((4, 4))
                E[i, j] = E[j, i] = 1.0
                fd = (
                    _relaxed_deviance(X, Sc, mu, H + step * E) - _relaxed_deviance(X, Sc, mu, H - step * E)
                ) / (2 * step)
                assert abs(fd - G[i, j]) < 1e-4, (seed, i, j)


def test_gradient_is_exactly_symmetric(small_binary, rng):
    S = 3 * (2 * small_binary - 1)
    G = fantope_gradient(small_binary, S, np.zeros(6), _random_symmetric(rng, 6))
    assert np.array_equal(G, G.T)


def test_lipschitz_constant_of_a_single_cell():
    assert lipschitz_constant(np.array([[4.0]]), np.zeros(1)) == pytest.approx(16.0)


def test_lipschitz_constant_rejects_a_degenerate_problem():
    with pytest.raises(InputError):
        lipschitz_constant(np.full((3, 2), 4.0), np.full(2, 4.0))


def test_lipschitz_inequality_holds(small_binary, rng):
    S = 4 * (2 * small_binary - 1)
    mu = main_effects(small_binary, 4)
    L = lipschitz_constant(S, mu)
    for _ in range(100):
        H1 = fantope_project(_random_symmetric(rng, 6), 2)
        H2 = fantope_project(_random_symmetric(rng, 6), 2)
        diff = np.linalg.norm(fantope_gradient(small_binary, S, mu, H1) - fantope_gradient(small_binary, S, mu, H2))
        assert diff <= L * np.linalg.norm(H1 - H2) + 1e-9


# -----------------------------
# Solver
# -----------------------------


def test_scaled_identity_improves_with_m(small_binary):
    n, d = small_binary.shape
    k = 2
    previous = math.inf
    for m in [2.0**p for p in range(10)]:
        model = FantopeModel(H=(k / d) * np.eye(d), mu=np.zeros(d), m=m, k=k)
        dev = bernoulli_deviance(small_binary, model.theta(small_binary))
        assert dev < previous
        previous = dev
        if m * k / d >= 30:
            assert dev < 1e-6 * n * d


def test_fit_returns_a_fantope_member(small_binary):
    model = fit_fantope(small_binary, FitConfig(k=2, m=4, max_iter=200))
    assert _is_in_fantope(model.H, 2)
    assert model.report.best_trace is not None
    assert np.all(np.diff(model.report.best_trace) <= 0)
    assert model.report.best_deviance == pytest.approx(
        bernoulli_deviance(small_binary, model.theta(small_binary)) / small_binary.size, rel=1e-12
    )


def test_fractional_rank_is_accepted(small_binary):
    model = fit_fantope(small_binary, FitConfig(k=1.5, m=4, max_iter=100))
    assert np.trace(model.H) == pytest.approx(1.5, abs=1e-6)


@pytest.mark.parametrize("line_search", [False, True])
def test_relaxation_is_no_worse_than_the_projection_fit(line_search):
    rng = np.random.default_rng(3)
    X = random_binary(rng, 40, 8)
    cfg = FitConfig(k=2, m=3, include_mu=False, tol=1e-12, max_iter=5000, line_search=line_search)
    relaxed = fit_fantope(X, cfg)
    lpca = fit_lpca(X, FitConfig(k=2, m=3, include_mu=False, tol=1e-10, max_iter=5000))
    assert relaxed.report.best_deviance <= lpca.report.final_deviance + 1e-6


def test_gap_stays_under_the_accelerated_rate(small_binary):
    X = small_binary
    n, d = X.shape
    k, m = 2, 4.0
    model = fit_fantope(X, FitConfig(k=k, m=m, tol=1e-14, max_iter=300))
    S = m * (2 * X - 1)
    L = lipschitz_constant(S, main_effects(X, m))
    # two Fantope members are at most 2k apart in squared Frobenius norm
    diameter_sq = 2 * k
    fstar = model.report.best_deviance * n * d
    for t, avg in enumerate(model.report.deviance_trace[1:], start=1):
        assert avg * n * d - fstar <= 2 * L * diameter_sq / (t + 1) ** 2 + 1e-9, t


@pytest.mark.parametrize("k, line_search", [(2, False), (1.5, False), (2, True)])
def test_every_iterate_stays_in_the_fantope(small_binary, k, line_search):
    seen = []

    def check(t, H):
        assert _is_in_fantope(H, k), t
        seen.append(t)

    model = fit_fantope(small_binary, FitConfig(k=k, m=4, max_iter=80, line_search=line_search), callback=check)
    assert seen == list(range(model.report.iterations + 1))


def test_line_search_starts_at_half_the_squared_spectral_norm(small_binary):
    S = 4 * (2 * small_binary - 1)
    mu = main_effects(small_binary, 4)
    start = line_search_start(S, mu)
    assert start == pytest.approx(np.linalg.norm(S - mu, 2) ** 2 / 2, rel=1e-12)
    assert start <= lipschitz_constant(S, mu)


def test_projection_reports_its_deviance(small_binary):
    relaxed = fit_fantope(small_binary, FitConfig(k=2, m=4, max_iter=100))
    assert fantope_to_projection(relaxed, 2).report is None
    projected = fantope_to_projection(relaxed, 2, small_binary)
    assert projected.report.termination == "projected"
    assert projected.report.iterations == 0
    assert projected.report.final_deviance == pytest.approx(
        bernoulli_deviance(small_binary, projected.theta(small_binary)) / small_binary.size, rel=1e-12
    )


def test_projection_of_an_exact_projection_keeps_the_deviance():
    X = np.array([[1, 1], [0, 0], [1, 0], [1, 1]], dtype=float)
    u = np.array([[0.6], [0.8]])
    fantope = FantopeModel(H=u @ u.T, mu=np.zeros(2), m=3.0, k=1)
    lpca = fantope_to_projection(fantope, 1)
    assert np.allclose(lpca.U @ lpca.U.T, u @ u.T, atol=1e-12)
    assert bernoulli_deviance(X, lpca.theta(X)) == pytest.approx(bernoulli_deviance(X, fantope.theta(X)), rel=1e-9)


def test_grid_is_ordered_and_thread_independent(small_binary):
    cfg = FitConfig(k=1, m=1, max_iter=50)
    serial = fantope_grid(small_binary, k_values=[2, 1], m_values=[4, 2], config=cfg, threads=1)
    pooled = fantope_grid(small_binary, k_values=[1, 2], m_values=[2, 4], config=cfg, threads=2)
    assert list(serial) == [(1.0, 2.0), (1.0, 4.0), (2.0, 2.0), (2.0, 4.0)]
    for key, model in serial.items():
        assert np.allclose(model.H, pooled[key].H, atol=1e-12)
        assert model.m == key[1]


def test_gaussian_family_is_rejected(small_binary):
    with pytest.raises(InputError):
        fit_fantope(small_binary, FitConfig(k=1, m=4, family="gaussian"))


@pytest.mark.slow
def test_relaxation_sandwich_over_random_starts():
    data = simulate(MixtureSpec(n=100, d=50, k_true=2, pbar=0.5, phi=3.0, seed=0))
    finals = []
    for seed in range(15):
        cfg = FitConfig(k=2, m=4, init="random", seed=seed, include_mu=False, tol=1e-9, max_iter=5000)
        relaxed = fit_fantope(data.X, replace(cfg, line_search=True))
        lpca = fit_lpca(data.X, cfg)
        projected = fantope_to_projection(relaxed, 2, data.X)
        projected_dev = projected.report.final_deviance
        polished = fit_lpca(data.X, replace(cfg, init="provided", initial_U=projected.U))
        assert relaxed.report.best_deviance <= lpca.report.final_deviance + 1e-6, seed
        assert relaxed.report.best_deviance <= projected_dev + 1e-6, seed
        assert polished.report.final_deviance <= projected_dev + 1e-9, seed
        assert relaxed.report.best_deviance <= polished.report.final_deviance + 1e-6, seed
        finals.append(relaxed.report.best_deviance)
    assert max(finals) - min(finals) < 1e-3
