from __future__ import annotations

from dataclasses import replace

from django.conf import settings

from lpca.management.base import LpcaCommand, parse_float_list, parse_int_list
from lpca.services.core import FitConfig
from lpca.services.io import read_matrix, write_table
from lpca.services.mm import fit_lpca
from lpca.services.reports import table_lines, write_table_pdf
from lpca.services.selection import baseline_mu, cross_validate_m, deviance_explained


class Command(LpcaCommand):
    help = "Choose m for logistic PCA by k-fold cross-validation of held-out deviance."

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True)
        parser.add_argument("--k", type=int, required=True, help="Reference number of components")
        parser.add_argument(
            "--m-grid",
            default=",".join(f"{m:g}" for m in settings.LPCA_M_GRID),
            help="Comma-separated candidate m values",
        )
        parser.add_argument("--folds", type=int, default=5)
        parser.add_argument("--no-main-effects", action="store_true")
        parser.add_argument(
            "--sweep-k",
            default="",
            help="After choosing m at --k, refit these k values with that m and report deviance explained",
        )
        parser.add_argument("--output", default=None, help="CSV for the per-m table (stdout when omitted)")
        parser.add_argument("--pdf", default=None, help="Optional PDF rendering of the per-m table")
        self.add_solver_arguments(parser)
        self.add_threads_argument(parser)

    def handle(self, *args, **opts):
        X = read_matrix(opts["input"]).values
        grid = parse_float_list(opts["m_grid"], flag="--m-grid")
        config = FitConfig(
            k=opts["k"],
            m=grid[0],
            max_iter=opts["max_iter"],
            tol=opts["tol"],
            seed=opts["seed"],
            include_mu=not opts["no_main_effects"],
        )
        result = cross_validate_m(
            X,
            k=opts["k"],
            m_grid=grid,
            folds=opts["folds"],
            seed=opts["seed"],
            config=config,
            threads=opts["threads"],
        )
        rows = result.rows()
        if opts["output"]:
            write_table(opts["output"], rows)
        else:
            for line in table_lines(rows):
                self.stdout.write(line)
        if opts["pdf"]:
            write_table_pdf(opts["pdf"], title="Cross-validated m", rows=rows, subtitle=f"k={opts['k']}, folds={opts['folds']}")

        if opts["sweep_k"]:
            mu0 = baseline_mu(X, result.chosen_m)
            sweep = []
            for k in parse_int_list(opts["sweep_k"], flag="--sweep-k"):
                model = fit_lpca(X, replace(config, k=k, m=result.chosen_m))
                sweep.append({"k": k, "m": result.chosen_m, "deviance_explained": deviance_explained(X, model, mu0)})
            for line in table_lines(sweep):
                self.stdout.write(line)

        self.stdout.write(f"chosen m: {result.chosen_m:g}")
