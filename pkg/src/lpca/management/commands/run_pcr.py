from __future__ import annotations

from lpca.management.base import LpcaCommand, parse_float_list, parse_int_list
from lpca.services.io import read_matrix, write_table
from lpca.services.reports import table_lines, write_table_pdf
from lpca.services.simgen import PCR_METHODS, pcr_experiment


class Command(LpcaCommand):
    help = "Principal component regression on PCA, LPCA and LSVD scores with a simulated linear response."

    def add_arguments(self, parser):
        parser.add_argument("--train", required=True, help="Binary training matrix")
        parser.add_argument("--test", required=True, help="Binary test matrix (same columns)")
        parser.add_argument("--k-grid", default="0,1,2,3,4,5")
        parser.add_argument("--snr", default="1,5,10")
        parser.add_argument("--m", type=float, default=4.0)
        parser.add_argument("--methods", default=",".join(PCR_METHODS))
        parser.add_argument("--output", default=None, help="CSV path (stdout table when omitted)")
        parser.add_argument("--pdf", default=None)
        self.add_solver_arguments(parser)

    def handle(self, *args, **opts):
        rows = pcr_experiment(
            read_matrix(opts["train"]).values,
            read_matrix(opts["test"]).values,
            k_grid=parse_int_list(opts["k_grid"], flag="--k-grid"),
            snr_grid=parse_float_list(opts["snr"], flag="--snr"),
            m=opts["m"],
            seed=opts["seed"],
            methods=[m.strip() for m in opts["methods"].split(",") if m.strip()],
            max_iter=opts["max_iter"],
            tol=opts["tol"],
        )
        table = [r.as_dict() for r in rows]
        if opts["output"]:
            write_table(opts["output"], table)
        else:
            for line in table_lines(table):
                self.stdout.write(line)
        if opts["pdf"]:
            write_table_pdf(opts["pdf"], title="Principal component regression", rows=table)
        if any(r.ridge for r in rows):
            self.stderr.write(self.style.WARNING("rank-deficient design: ridge fallback used for some rows"))
        self.stdout.write(self.style.SUCCESS(f"{len(rows)} regression(s) fit"))
