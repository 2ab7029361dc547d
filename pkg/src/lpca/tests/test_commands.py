from io import StringIO

import numpy as np
import pandas as pd
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError
from lpca.models import FitRun, SweepRun
from lpca.services.core import NumericalError
from lpca.services.io import load_model, save_model, write_matrix
from lpca.services.mm import LpcaModel
from lpca.services.patterned import full_factorial_design, independent_design, uncorrelated_column_design
from lpca.services.simgen import MixtureSpec, simulate


def run(name, *args):
    out, err = StringIO(), StringIO()
    call_command(name, *[str(a) for a in args], stdout=out, stderr=err)
    return out.getvalue(), err.getvalue()


def returncode(name, *args):
    with pytest.raises(CommandError) as exc:
        run(name, *args)
    return exc.value.returncode


@pytest.fixture
def data_csv(tmp_path):
    path = tmp_path / "x.csv"
    write_matrix(path, simulate(MixtureSpec(n=40, d=8, k_true=2, phi=0.5, seed=3)).X)
    return path


# -----------------------------
# fit_model / predict_model
# -----------------------------


def test_fit_then_predict_round_trip(tmp_path, data_csv):
    model_path = tmp_path / "m.json"
    out, err = run("fit_model", "--input", data_csv, "--k", 2, "--m", 4, "--output-model", model_path)
    assert "Wrote" in out
    assert "converged" in err or "max_iter" in err

    model = load_model(model_path)
    assert isinstance(model, LpcaModel)
    scores_path, theta_path, prob_path = tmp_path / "s.csv", tmp_path / "t.csv", tmp_path / "p.csv"
    run(
        "predict_model", "--model", model_path, "--input", data_csv,
        "--out-scores", scores_path, "--out-theta", theta_path, "--out-prob", prob_path,
    )
    X = pd.read_csv(data_csv, header=None).to_numpy(dtype=float)
    theta = pd.read_csv(theta_path, header=None).to_numpy()
    assert pd.read_csv(scores_path, header=None).shape == (40, 2)
    assert np.allclose(theta, model.predict_theta(X), rtol=1e-12)
    prob = pd.read_csv(prob_path, header=None).to_numpy()
    assert ((prob > 0) & (prob < 1)).all()


@pytest.mark.parametrize("method", ["lsvd", "pca"])
def test_other_methods_fit_and_predict(tmp_path, data_csv, method):
    model_path = tmp_path / f"{method}.json"
    run("fit_model", "--input", data_csv, "--method", method, "--k", 2, "--output-model", model_path)
    assert load_model(model_path).method == method
    run("predict_model", "--model", model_path, "--input", data_csv, "--out-prob", tmp_path / "p.csv")
    assert pd.read_csv(tmp_path / "p.csv", header=None).shape == (40, 8)


def test_fantope_accepts_fractional_k_but_has_no_scores(tmp_path, data_csv):
    model_path = tmp_path / "f.json"
    run("fit_model", "--input", data_csv, "--method", "fantope", "--k", 1.5, "--max-iter", 50, "--output-model", model_path)
    assert load_model(model_path).k == 1.5
    assert returncode("predict_model", "--model", model_path, "--input", data_csv, "--out-scores", tmp_path / "s.csv") == 2


def test_fractional_k_is_rejected_for_mm(tmp_path, data_csv):
    assert returncode("fit_model", "--input", data_csv, "--k", 1.5, "--output-model", tmp_path / "m.json") == 2


def test_non_binary_input_is_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,0\n0,0.5\n")
    assert returncode("fit_model", "--input", path, "--k", 1, "--output-model", tmp_path / "m.json") == 2


def test_ragged_input_is_rejected(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,0\n1,0,1\n0,1\n")
    assert returncode("fit_model", "--input", path, "--k", 1, "--output-model", tmp_path / "m.json") == 2


def test_numerical_failure_maps_to_exit_code_three(tmp_path, data_csv, monkeypatch):
    def broken(X, config):
        raise NumericalError("eigendecomposition failed")

    monkeypatch.setattr("lpca.management.commands.fit_model.fit_lpca", broken)
    assert returncode("fit_model", "--input", data_csv, "--k", 1, "--output-model", tmp_path / "m.json") == 3


def test_predict_needs_an_output(tmp_path, data_csv):
    assert returncode("predict_model", "--model", tmp_path / "m.json", "--input", data_csv) == 2


@pytest.mark.django_db
def test_fit_can_be_recorded(tmp_path, data_csv):
    run("fit_model", "--input", data_csv, "--k", 2, "--output-model", tmp_path / "m.json", "--record", "--notes", "smoke")
    fit = FitRun.objects.get()
    assert fit.method == "lpca"
    assert fit.k == 2
    assert (fit.n_rows, fit.n_cols) == (40, 8)
    assert fit.notes == "smoke"
    assert fit.deviance_trace


# -----------------------------
# Model selection
# -----------------------------


def test_cross_validation_prints_the_chosen_m(tmp_path, data_csv):
    out, _ = run(
        "cross_validate_m", "--input", data_csv, "--k", 1, "--m-grid", "2,4", "--folds", 3,
        "--sweep-k", "1,2", "--output", tmp_path / "cv.csv",
    )
    assert "chosen m:" in out
    table = pd.read_csv(tmp_path / "cv.csv")
    assert table["m"].tolist() == [2.0, 4.0]
    assert "deviance_explained" in out


def test_cross_validation_rejects_a_bad_grid(data_csv):
    assert returncode("cross_validate_m", "--input", data_csv, "--k", 1, "--m-grid", "2,abc") == 2


def test_scree_table(tmp_path, data_csv):
    out, _ = run("scree_table", "--input", data_csv, "--k-max", 3, "--output", tmp_path / "scree.csv", "--gamma", 0.5)
    table = pd.read_csv(tmp_path / "scree.csv")
    assert table["k"].tolist() == [1, 2, 3]
    assert {"deviance", "cumulative", "marginal"} <= set(table.columns)
    assert "50%" in out


# -----------------------------
# simulate_data
# -----------------------------


def test_simulate_writes_data_probabilities_and_assignments(tmp_path):
    out_path = tmp_path / "sim.csv"
    run("simulate_data", "--n", 20, "--d", 5, "--k", 2, "--seed", 1, "--output", out_path)
    X = pd.read_csv(out_path, header=None).to_numpy()
    P = pd.read_csv(tmp_path / "sim_P.csv", header=None).to_numpy()
    assignments = pd.read_csv(tmp_path / "sim_assignments.csv")
    assert X.shape == P.shape == (20, 5)
    assert set(np.unique(X)) <= {0.0, 1.0}
    assert assignments.columns.tolist() == ["cluster"]


def test_simulate_rejects_a_bad_density(tmp_path):
    assert returncode("simulate_data", "--pbar", 1.5, "--output", tmp_path / "sim.csv") == 2


# -----------------------------
# check_theory
# -----------------------------


def _csv(tmp_path, X, name="x.csv"):
    path = tmp_path / name
    write_matrix(path, X)
    return path


def test_check_half_column(tmp_path):
    X = uncorrelated_column_design(independent_design([(1, 4), (2, 5)]), ones=1, copies=2)
    out, _ = run("check_theory", "--input", _csv(tmp_path, X), "--theorem", "t1", "--column", 2)
    assert "PASS" in out
    assert "tolerance 1e-10" in out


def test_check_column_selection(tmp_path):
    out, _ = run("check_theory", "--input", _csv(tmp_path, independent_design([(1, 2), (9, 10), (1, 10)])), "--theorem", "t2")
    assert "PASS" in out


def test_check_compound_symmetry_and_its_precondition(tmp_path):
    out, _ = run("check_theory", "--input", _csv(tmp_path, full_factorial_design(4)), "--theorem", "t3")
    assert "PASS" in out
    skewed = np.array([[1, 1, 0], [1, 1, 1], [0, 0, 0], [0, 1, 1]], dtype=float)
    assert returncode("check_theory", "--input", _csv(tmp_path, skewed, "s.csv"), "--theorem", "t3") == 2


def test_check_grid_oracle(tmp_path):
    X = np.array([[1, 1]] * 3 + [[0, 0]] * 2 + [[1, 0]], dtype=float)
    out, _ = run("check_theory", "--input", _csv(tmp_path, X), "--theorem", "oracle")
    assert "PASS" in out


def test_check_model_fails_for_an_arbitrary_frame(tmp_path, data_csv):
    U, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((8, 2)))
    model_path = tmp_path / "m.json"
    save_model(model_path, LpcaModel(U=U, mu=np.zeros(8), m=4.0))
    assert returncode("check_theory", "--input", data_csv, "--model", model_path, "--tol", 1e-9) == 1


def test_check_model_passes_for_a_converged_fit(tmp_path, data_csv):
    model_path = tmp_path / "m.json"
    run("fit_model", "--input", data_csv, "--k", 2, "--tol", 1e-12, "--max-iter", 20000, "--output-model", model_path)
    out, _ = run("check_theory", "--input", data_csv, "--model", model_path)
    assert "PASS" in out
    assert "orthonormality residual" in out


# -----------------------------
# Experiments
# -----------------------------


@pytest.mark.django_db
def test_small_sweep_is_written_and_recorded(tmp_path):
    out, _ = run(
        "run_sweep", "--n", 20, "--d", 6, "--k-true", 2, "--phi", "0.1", "--k-hats", "1,2",
        "--m-grid", "1,3", "--folds", 3, "--output", tmp_path / "sweep.csv", "--record",
    )
    table = pd.read_csv(tmp_path / "sweep.csv")
    assert len(table) == 8
    assert set(table["method"]) == {"lpca", "lpca_cv", "lsvd"}
    sweep = SweepRun.objects.get()
    assert sweep.cells.count() == 8
    assert "row(s)" in out


def test_pcr_command(tmp_path):
    data = simulate(MixtureSpec(n=60, d=8, k_true=2, phi=0.5, seed=2)).X
    train, test = _csv(tmp_path, data[:40], "train.csv"), _csv(tmp_path, data[40:], "test.csv")
    run("run_pcr", "--train", train, "--test", test, "--k-grid", "0,1,2", "--snr", "5", "--output", tmp_path / "pcr.csv")
    table = pd.read_csv(tmp_path / "pcr.csv")
    assert len(table) == 9
    assert set(table["method"]) == {"pca", "lpca", "lsvd"}
