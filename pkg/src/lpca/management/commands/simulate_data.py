from __future__ import annotations

from pathlib import Path

from django.conf import settings

from lpca.management.base import LpcaCommand
from lpca.services.io import write_matrix
from lpca.services.simgen import MixtureSpec, simulate


class Command(LpcaCommand):
    help = "Draw binary data from a Bernoulli mixture with Beta-distributed cluster centers."

    def add_arguments(self, parser):
        parser.add_argument("--n", type=int, default=100)
        parser.add_argument("--d", type=int, default=50)
        parser.add_argument("--k", type=int, default=3, help="Number of clusters")
        parser.add_argument("--pbar", type=float, default=0.5, help="Expected density of ones")
        parser.add_argument("--phi", type=float, default=1.0, help="Beta concentration; small pushes centers to 0/1")
        parser.add_argument("--seed", type=int, default=settings.LPCA_DEFAULT_SEED)
        parser.add_argument(
            "--output",
            required=True,
            help="CSV for X; <stem>_P.csv and <stem>_assignments.csv are written next to it",
        )

    def handle(self, *args, **opts):
        spec = MixtureSpec(
            n=opts["n"], d=opts["d"], k_true=opts["k"], pbar=opts["pbar"], phi=opts["phi"], seed=opts["seed"]
        )
        data = simulate(spec)
        out = Path(opts["output"])
        p_path = out.with_name(f"{out.stem}_P.csv")
        a_path = out.with_name(f"{out.stem}_assignments.csv")
        write_matrix(out, data.X)
        write_matrix(p_path, data.P)
        write_matrix(a_path, data.assignments, header=["cluster"])
        self.stdout.write(self.style.SUCCESS(f"Wrote {out}, {p_path.name}, {a_path.name}"))
