from __future__ import annotations

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from lpca.services.core import InputError, NumericalError

EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def parse_float_list(raw: str, *, flag: str) -> list[float]:
    try:
        values = [float(x) for x in str(raw).split(",") if x.strip()]
    except ValueError:
        raise CommandError(f"{flag} must be a comma-separated list of numbers, got {raw!r}", returncode=EXIT_INPUT)
    if not values:
        raise CommandError(f"{flag} must not be empty", returncode=EXIT_INPUT)
    return values


def parse_int_list(raw: str, *, flag: str) -> list[int]:
    values = parse_float_list(raw, flag=flag)
    if any(not v.is_integer() for v in values):
        raise CommandError(f"{flag} must hold integers, got {raw!r}", returncode=EXIT_INPUT)
    return [int(v) for v in values]


class LpcaCommand(BaseCommand):
    """
    Maps service errors onto the exit-code contract:
    0 success, 1 failed check, 2 invalid input, 3 numerical failure.
    """

    def add_solver_arguments(self, parser) -> None:
        parser.add_argument("--max-iter", type=int, default=settings.LPCA_MAX_ITER, help="Iteration cap")
        parser.add_argument("--tol", type=float, default=settings.LPCA_TOL, help="Stop when |ΔD|/nd falls below this")
        parser.add_argument("--seed", type=int, default=settings.LPCA_DEFAULT_SEED, help="Seed for every random draw")

    def add_threads_argument(self, parser) -> None:
        parser.add_argument(
            "--threads",
            type=int,
            default=settings.LPCA_THREADS,
            help="Worker threads; output order does not depend on it",
        )

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except InputError as exc:
            raise CommandError(str(exc), returncode=EXIT_INPUT) from exc
        except NumericalError as exc:
            raise CommandError(str(exc), returncode=EXIT_NUMERICAL) from exc
