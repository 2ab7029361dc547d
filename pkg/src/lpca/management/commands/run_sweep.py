from __future__ import annotations

import itertools
from dataclasses import dataclass

from django.conf import settings

from lpca.management.base import LpcaCommand, parse_float_list, parse_int_list
from lpca.services.io import write_table
from lpca.services.ledger import record_sweep
from lpca.services.reports import table_lines, write_table_pdf
from lpca.services.simgen import Scenario, run_sweep


@dataclass
class SweepStats:
    scenarios: int = 0
    rows: int = 0


class Command(LpcaCommand):
    help = "Simulation sweep: probability MSE, deviance and iterations for LPCA (per m and CV m) and LSVD."

    def add_arguments(self, parser):
        parser.add_argument("--n", type=int, default=100)
        parser.add_argument("--d", type=int, default=50)
        parser.add_argument("--k-true", default="3", help="Comma-separated cluster counts")
        parser.add_argument("--pbar", default="0.5", help="Comma-separated densities, e.g. 0.5,0.1")
        parser.add_argument("--phi", default="0.01,0.1,1", help="Comma-separated Beta concentrations")
        parser.add_argument("--k-hats", default="1,2,3,4,5,6", help="Comma-separated fitted ranks")
        parser.add_argument("--m-grid", default=",".join(f"{m:g}" for m in settings.LPCA_M_GRID))
        parser.add_argument("--replicates", type=int, default=1)
        parser.add_argument("--folds", type=int, default=5)
        parser.add_argument("--output", required=True, help="CSV path for the sweep table")
        parser.add_argument("--pdf", default=None)
        parser.add_argument("--record", action="store_true", help="Persist the sweep in the database ledger")
        parser.add_argument("--notes", default="")
        self.add_solver_arguments(parser)
        self.add_threads_argument(parser)

    def handle(self, *args, **opts):
        stats = SweepStats()
        scenarios = [
            Scenario(n=opts["n"], d=opts["d"], k_true=k_true, pbar=pbar, phi=phi)
            for k_true, pbar, phi in itertools.product(
                parse_int_list(opts["k_true"], flag="--k-true"),
                parse_float_list(opts["pbar"], flag="--pbar"),
                parse_float_list(opts["phi"], flag="--phi"),
            )
        ]
        stats.scenarios = len(scenarios)
        rows = run_sweep(
            scenarios,
            k_hats=parse_int_list(opts["k_hats"], flag="--k-hats"),
            m_grid=parse_float_list(opts["m_grid"], flag="--m-grid"),
            replicates=opts["replicates"],
            seed=opts["seed"],
            cv_folds=opts["folds"],
            max_iter=opts["max_iter"],
            tol=opts["tol"],
            threads=opts["threads"],
        )
        stats.rows = len(rows)
        table = [r.as_dict() for r in rows]
        write_table(opts["output"], table)
        if opts["pdf"]:
            write_table_pdf(opts["pdf"], title="Simulation sweep", rows=table, subtitle=f"seed={opts['seed']}")
        if opts["record"]:
            run = record_sweep(rows=rows, seed=opts["seed"], notes=opts["notes"])
            self.stderr.write(f"recorded as SweepRun {run.pk}")

        best = _best_by_method(table)
        for line in table_lines(best):
            self.stdout.write(line)
        self.stdout.write(self.style.SUCCESS(f"{stats.scenarios} scenario(s), {stats.rows} row(s) -> {opts['output']}"))


def _best_by_method(table: list[dict]) -> list[dict]:
    """Lowest mean MSE per (scenario, method) across k and m."""
    groups: dict[tuple, list[dict]] = {}
    for row in table:
        key = (row["k_true"], row["pbar"], row["phi"], row["method"], row["k"], row["m"])
        groups.setdefault(key, []).append(row)
    best: dict[tuple, dict] = {}
    for (k_true, pbar, phi, method, k, m), rows in groups.items():
        mse = sum(r["mse"] for r in rows) / len(rows)
        slot = (k_true, pbar, phi, method)
        if slot not in best or mse < best[slot]["mse"]:
            best[slot] = {"k_true": k_true, "pbar": pbar, "phi": phi, "method": method, "k": k, "m": m, "mse": mse}
    return list(best.values())
