from __future__ import annotations

import logging
from typing import Sequence

from django.db import transaction

from lpca.models import FitRun, SweepCell, SweepRun
from lpca.services.simgen import SweepRow

logger = logging.getLogger(__name__)


def record_fit(
    *,
    model,
    n_rows: int,
    n_cols: int,
    input_path: str = "",
    model_path: str = "",
    notes: str = "",
) -> FitRun:
    """Persist one fit. The report, when the model carries one, supplies the trace."""
    report = getattr(model, "report", None)
    trace = list(report.deviance_trace) if report is not None else []
    run = FitRun.objects.create(
        method=model.method,
        family=getattr(model, "family", "bernoulli"),
        k=float(model.k),
        m=getattr(model, "m", None),
        n_rows=n_rows,
        n_cols=n_cols,
        iterations=report.iterations if report is not None else 0,
        converged=report.converged if report is not None else False,
        termination=report.termination if report is not None else "",
        elapsed_seconds=report.elapsed if report is not None else 0.0,
        final_deviance=report.best_deviance if report is not None else None,
        deviance_trace=trace,
        input_path=input_path,
        model_path=model_path,
        notes=notes,
    )
    logger.info("recorded fit run %s (%s)", run.pk, run.method)
    return run


def record_sweep(*, rows: Sequence[SweepRow], seed: int = 0, notes: str = "") -> SweepRun:
    """One SweepRun plus a SweepCell per row, written atomically."""
    with transaction.atomic():
        run = SweepRun.objects.create(seed=seed, notes=notes)
        if rows:
            SweepCell.objects.bulk_create(
                [
                    SweepCell(
                        run=run,
                        n=r.n,
                        d=r.d,
                        k_true=r.k_true,
                        pbar=r.pbar,
                        phi=r.phi,
                        replicate=r.replicate,
                        method=r.method,
                        k=r.k,
                        m=r.m,
                        mse=r.mse,
                        deviance=r.deviance,
                        iterations=r.iterations,
                    )
                    for r in rows
                ]
            )
    logger.info("recorded sweep run %s with %s cells", run.pk, len(rows))
    return run
