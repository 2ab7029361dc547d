from __future__ import annotations

from django.core.management.base import CommandError

from lpca.management.base import EXIT_INPUT, LpcaCommand
from lpca.services.baselines import fit_lsvd, fit_pca
from lpca.services.core import FitConfig, InitMethod, family_for
from lpca.services.fantope import fit_fantope
from lpca.services.io import read_matrix, save_model
from lpca.services.ledger import record_fit
from lpca.services.mm import fit_lpca

METHODS = ("lpca", "lsvd", "fantope", "pca")


class Command(LpcaCommand):
    help = "Fit logistic PCA (MM or Fantope), logistic SVD or standard PCA and write a model file."

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True, help="CSV or .xlsx matrix, optional single header row")
        parser.add_argument("--method", choices=METHODS, default="lpca")
        parser.add_argument("--k", type=float, required=True, help="Components (non-integer allowed for fantope)")
        parser.add_argument("--m", type=float, default=4.0, help="Saturated-parameter magnitude")
        parser.add_argument("--family", default="bernoulli", help="bernoulli or gaussian (lpca only)")
        parser.add_argument("--init", choices=[i.value for i in InitMethod if i is not InitMethod.PROVIDED], default="svd")
        parser.add_argument("--no-main-effects", action="store_true", help="Pin μ to zero")
        parser.add_argument("--line-search", action="store_true", help="Fantope: backtracking step sizes")
        parser.add_argument("--output-model", required=True, help="Where to write the JSON model file")
        parser.add_argument("--record", action="store_true", help="Also record the run in the database ledger")
        parser.add_argument("--notes", default="", help="Free text stored with --record")
        self.add_solver_arguments(parser)

    def handle(self, *args, **opts):
        method: str = opts["method"]
        k: float = opts["k"]
        family = family_for(opts["family"]).tag
        if method != "fantope" and not float(k).is_integer():
            raise CommandError(f"--k must be an integer for --method {method}, got {k!r}", returncode=EXIT_INPUT)
        if family != "bernoulli" and method != "lpca":
            raise CommandError(f"--family {family} is only supported with --method lpca", returncode=EXIT_INPUT)

        data = read_matrix(opts["input"], binary=family == "bernoulli")
        X = data.values
        config = FitConfig(
            k=k,
            m=opts["m"],
            max_iter=opts["max_iter"],
            tol=opts["tol"],
            seed=opts["seed"],
            init=InitMethod(opts["init"]),
            include_mu=not opts["no_main_effects"],
            family=family,
            line_search=opts["line_search"],
        )
        self.stderr.write(f"fitting {method} on {X.shape[0]}x{X.shape[1]} (k={k:g}, m={opts['m']:g})")

        if method == "lpca":
            model = fit_lpca(X, config)
        elif method == "fantope":
            model = fit_fantope(X, config)
        elif method == "lsvd":
            model = fit_lsvd(X, config)
        else:
            model = fit_pca(X, int(k))

        report = getattr(model, "report", None)
        if report is not None:
            self.stderr.write(
                f"{report.termination} after {report.iterations} iterations; "
                f"average deviance {report.best_deviance:.8g} ({report.elapsed:.2f}s)"
            )
            if not report.converged:
                self.stderr.write(self.style.WARNING("iteration cap reached before the tolerance was met"))

        save_model(opts["output_model"], model)
        if opts["record"]:
            run = record_fit(
                model=model,
                n_rows=X.shape[0],
                n_cols=X.shape[1],
                input_path=str(opts["input"]),
                model_path=str(opts["output_model"]),
                notes=opts["notes"],
            )
            self.stderr.write(f"recorded as FitRun {run.pk}")
        self.stdout.write(self.style.SUCCESS(f"Wrote {opts['output_model']}"))
