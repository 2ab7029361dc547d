from __future__ import annotations

from dataclasses import asdict

from django.conf import settings

from lpca.management.base import LpcaCommand
from lpca.services.baselines import fit_lsvd, fit_pca
from lpca.services.core import FitConfig
from lpca.services.fantope import fit_fantope
from lpca.services.io import read_matrix, write_table
from lpca.services.mm import fit_lpca
from lpca.services.reports import table_lines, write_table_pdf
from lpca.services.selection import choose_k, scree_table


class Command(LpcaCommand):
    help = "Cumulative and marginal deviance explained for k = 1..k_max."

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True)
        parser.add_argument("--method", choices=("lpca", "lsvd", "fantope", "pca"), default="lpca")
        parser.add_argument("--k-max", type=int, required=True)
        parser.add_argument("--m", type=float, default=4.0)
        parser.add_argument("--gamma", type=float, default=settings.LPCA_GAMMA, help="Target share of deviance")
        parser.add_argument("--stop-early", action="store_true", help="Stop at the first k reaching --gamma")
        parser.add_argument("--no-main-effects", action="store_true")
        parser.add_argument("--output", default=None, help="CSV path (stdout table when omitted)")
        parser.add_argument("--pdf", default=None)
        self.add_solver_arguments(parser)

    def handle(self, *args, **opts):
        X = read_matrix(opts["input"]).values
        method = opts["method"]

        def _fit(k: int):
            cfg = FitConfig(
                k=k,
                m=opts["m"],
                max_iter=opts["max_iter"],
                tol=opts["tol"],
                seed=opts["seed"],
                include_mu=not opts["no_main_effects"],
            )
            if method == "lpca":
                return fit_lpca(X, cfg)
            if method == "fantope":
                return fit_fantope(X, cfg)
            if method == "lsvd":
                return fit_lsvd(X, cfg)
            return fit_pca(X, k)

        rows = scree_table(
            X,
            k_max=opts["k_max"],
            fit=_fit,
            m=opts["m"],
            gamma=opts["gamma"] if opts["stop_early"] else None,
        )
        table = [asdict(r) for r in rows]
        if opts["output"]:
            write_table(opts["output"], table)
        else:
            for line in table_lines(table):
                self.stdout.write(line)
        if opts["pdf"]:
            write_table_pdf(opts["pdf"], title=f"Deviance explained ({method})", rows=table, subtitle=f"m={opts['m']:g}")

        chosen = choose_k(rows, opts["gamma"])
        if chosen is None:
            self.stdout.write(self.style.WARNING(f"no k up to {rows[-1].k} reaches {opts['gamma']:.0%}"))
        else:
            self.stdout.write(f"smallest k reaching {opts['gamma']:.0%}: {chosen}")
