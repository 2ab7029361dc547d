import math

import numpy as np
import pytest
from lpca.services.baselines import fit_pca, pca_reconstruct
from lpca.services.core import (
    FitConfig,
    InputError,
    bernoulli_deviance,
    main_effects,
    random_frame,
)
from lpca.services.mm import (
    FitReport,
    LpcaModel,
    fit_lpca,
    majorizer,
    mm_update_mu,
    mm_update_U,
    predict_theta,
    scores,
    working_variables,
)
from lpca.services.patterned import optimality_residuals
from lpca.services.selection import deviance_explained
from lpca.services.simgen import MixtureSpec, simulate

from .conftest import random_binary


def _jacobi_eigh(M, sweeps=50):
    """Cyclic Jacobi rotations; returns (values, vectors) in ascending order."""
    A = np.array(M, dtype=float)
    d = A.shape[0]
    V = np.eye(d)
    for _ in range(sweeps):
        for p in range(d - 1):
            for q in range(p + 1, d):
                if abs(A[p, q]) < 1e-15:
                    continue
                tau = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1 + tau * tau))
                c = 1 / math.sqrt(1 + t * t)
                s = t * c
                J = np.eye(d)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A)
    order = np.argsort(vals)
    return vals[order], V[:, order]


def _block_data(rng, n=40, blocks=1, width=3):
    cols = [rng.permutation([1.0] * (n // 2) + [0.0] * (n - n // 2)) for _ in range(blocks)]
    return np.column_stack([c for c in cols for _ in range(width)])


# -----------------------------
# Updates
# -----------------------------


def test_working_variables_at_zero():
    Z = working_variables(np.array([[1.0, 0.0]]), np.zeros((1, 2)))
    assert Z.tolist() == [[2.0, -2.0]]


def test_working_variables_gaussian_is_the_data():
    X = np.array([[1.5, -2.0]])
    assert np.allclose(working_variables(X, np.zeros((1, 2)), family="gaussian"), X)


def test_working_variables_reject_poisson():
    with pytest.raises(InputError):
        working_variables(np.ones((1, 1)), np.zeros((1, 1)), family="poisson")


def test_mm_update_mu_recovers_a_shift():
    S = np.array([[2.0, -2.0], [-2.0, 2.0], [2.0, 2.0]])
    Z = S + np.array([0.5, -0.25])
    assert np.allclose(mm_update_mu(Z, S, np.eye(2)), [0.5, -0.25])


def test_mm_update_U_picks_the_dominant_axis():
    Sc = np.diag([math.sqrt(3.0), 1.0])
    U = mm_update_U(Sc, Sc, 1)
    assert np.allclose(U, [[1.0], [0.0]], atol=1e-12)


def test_mm_update_U_matches_a_jacobi_oracle(rng):
    for _ in range(5):
        Sc = rng.standard_normal((8, 5))
        Zc = Sc + rng.standard_normal((8, 5))
        U = mm_update_U(Sc, Zc, 2)
        cross = Sc.T @ Zc
        vals, vecs = _jacobi_eigh(cross + cross.T - Sc.T @ Sc)
        V = vecs[:, -2:]
        assert np.allclose(U @ U.T, V @ V.T, atol=1e-8)


def test_majorizer_bounds_the_deviance(rng):
    X = random_binary(rng, 10, 4)
    for _ in range(20):
        theta0 = 3 * rng.standard_normal(X.shape)
        theta = theta0 + 2 * rng.standard_normal(X.shape)
        assert majorizer(X, theta, theta0) >= bernoulli_deviance(X, theta) - 1e-9
        assert majorizer(X, theta0, theta0) == pytest.approx(bernoulli_deviance(X, theta0), rel=1e-12)


# -----------------------------
# Fitting
# -----------------------------


def test_deviance_trace_never_increases():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 61))
        d = int(rng.integers(2, 21))
        k = int(rng.integers(1, min(5, d) + 1))
        m = float(rng.choice([2.0, 4.0, 8.0]))
        X = random_binary(rng, n, d, p=float(rng.uniform(0.2, 0.8)))
        model = fit_lpca(X, FitConfig(k=k, m=m, include_mu=bool(seed % 2)))
        assert np.all(np.diff(model.report.deviance_trace) <= 1e-10), seed


def test_fitted_frame_is_orthonormal(small_binary):
    model = fit_lpca(small_binary, FitConfig(k=3, m=4))
    assert np.allclose(model.U.T @ model.U, np.eye(3), atol=1e-8)
    assert model.report.converged
    assert model.report.termination == "converged"


def test_full_rank_fit_reaches_the_saturated_deviance(small_binary):
    n, d = small_binary.shape
    m = 3.0
    model = fit_lpca(small_binary, FitConfig(k=d, m=m))
    assert model.report.final_deviance <= 2 * math.log1p(math.exp(-m)) + 1e-9


def test_iteration_cap_is_reported_not_raised(small_binary):
    model = fit_lpca(small_binary, FitConfig(k=2, m=4, max_iter=1, tol=1e-300))
    assert model.report.iterations == 1
    assert not model.report.converged
    assert model.report.termination == "max_iter"


def test_repeated_fits_are_identical(small_binary):
    a = fit_lpca(small_binary, FitConfig(k=2, m=4, init="random", seed=7))
    b = fit_lpca(small_binary, FitConfig(k=2, m=4, init="random", seed=7))
    assert np.array_equal(a.U, b.U)
    assert np.array_equal(a.mu, b.mu)
    assert a.report.deviance_trace == b.report.deviance_trace


def test_provided_initial_frame_is_used(small_binary, rng):
    U0 = random_frame(small_binary.shape[1], 2, rng)
    model = fit_lpca(small_binary, FitConfig(k=2, m=4, init="provided", initial_U=U0, max_iter=1, tol=1e-300))
    theta0 = main_effects(small_binary, 4) + ((4 * (2 * small_binary - 1) - main_effects(small_binary, 4)) @ U0) @ U0.T
    assert model.report.deviance_trace[0] == pytest.approx(bernoulli_deviance(small_binary, theta0) / small_binary.size)


def test_one_block_of_identical_columns_is_explained_by_one_component(rng):
    X = _block_data(rng, blocks=1, width=6)
    model = fit_lpca(X, FitConfig(k=1, m=8))
    assert np.allclose(np.abs(model.U[:, 0]), 1 / math.sqrt(6), atol=1e-8)
    assert deviance_explained(X, model, main_effects(X, 8)) > 0.99


def test_two_blocks_are_explained_by_two_components(rng):
    X = _block_data(rng, blocks=2, width=3)
    model = fit_lpca(X, FitConfig(k=2, m=8))
    assert deviance_explained(X, model, main_effects(X, 8)) > 0.99


def test_held_out_row_beats_main_effects(rng):
    X = _block_data(rng, n=41, blocks=1, width=6)
    train, held = X[1:], X[:1]
    model = fit_lpca(train, FitConfig(k=1, m=8))
    baseline = np.broadcast_to(main_effects(train, 8), held.shape)
    assert bernoulli_deviance(held, model.predict_theta(held)) < bernoulli_deviance(held, baseline)


def test_stationary_at_convergence(rng):
    X = random_binary(rng, 30, 5)
    model = fit_lpca(X, FitConfig(k=2, m=3, tol=1e-12, max_iter=20000))
    assert optimality_residuals(X, model).stationarity < 1e-3 * X.shape[0] * 3


def test_poisson_and_oversized_k_are_rejected(small_binary):
    with pytest.raises(InputError):
        fit_lpca(small_binary, FitConfig(k=1, m=4, family="poisson"))
    with pytest.raises(InputError):
        fit_lpca(small_binary, FitConfig(k=small_binary.shape[1] + 1, m=4))


def test_gaussian_family_recovers_the_pca_subspace():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((25, 6)) @ np.diag([5.0, 4.0, 3.0, 1.0, 0.5, 0.2])
        lpca = fit_lpca(X, FitConfig(k=2, m=1, family="gaussian", tol=1e-12))
        pca = fit_pca(X, 2)
        assert np.allclose(lpca.U @ lpca.U.T, pca.U @ pca.U.T, atol=1e-6), seed
        assert np.allclose(lpca.predict_theta(X), pca_reconstruct(pca, X), atol=1e-8), seed


# -----------------------------
# New data
# -----------------------------


def test_scores_along_a_coordinate_axis():
    model = LpcaModel(U=np.array([[1.0], [0.0], [0.0]]), mu=np.zeros(3), m=4.0)
    X = np.array([[1, 0, 1], [0, 1, 1]], dtype=float)
    assert scores(model, X).ravel().tolist() == [4.0, -4.0]


def test_scores_reject_mismatched_columns():
    model = LpcaModel(U=np.eye(3)[:, :1], mu=np.zeros(3), m=4.0)
    with pytest.raises(InputError):
        scores(model, np.ones((2, 2)))


def test_predict_theta_on_training_rows_matches_the_fit(small_binary):
    model = fit_lpca(small_binary, FitConfig(k=2, m=4))
    S = 4 * (2 * small_binary - 1)
    expected = model.mu + ((S - model.mu) @ model.U) @ model.U.T
    assert np.allclose(predict_theta(model, small_binary), expected)
    assert bernoulli_deviance(small_binary, expected) / small_binary.size == pytest.approx(
        model.report.final_deviance, rel=1e-12
    )


def test_fit_report_round_trips_through_a_dict():
    report = FitReport(deviance_trace=(1.0, 0.5), iterations=1, converged=True, termination="converged", elapsed=0.1)
    assert FitReport.from_dict(report.to_dict()) == report
    assert report.best_deviance == 0.5


def test_every_iterate_is_orthonormal(small_binary):
    gaps = []

    def record(t, U):
        gaps.append(np.linalg.norm(U.T @ U - np.eye(U.shape[1])))

    model = fit_lpca(small_binary, FitConfig(k=3, m=4, init="random", seed=2, tol=1e-10, max_iter=500), callback=record)
    assert len(gaps) == model.report.iterations + 1
    assert max(gaps) < 1e-8


def test_stationarity_improves_as_the_tolerance_tightens():
    X = simulate(MixtureSpec(n=40, d=8, k_true=2, phi=0.5, seed=3)).X
    residual = {
        tol: optimality_residuals(X, fit_lpca(X, FitConfig(k=2, m=4, tol=tol, max_iter=100_000))).stationarity
        for tol in (1e-5, 1e-9)
    }
    assert residual[1e-9] < residual[1e-5]
