from __future__ import annotations

from django.core.management.base import CommandError

from lpca.management.base import EXIT_INPUT, LpcaCommand
from lpca.services.baselines import LsvdModel, PcaModel, lsvd_new_scores, pca_probability_estimate, pca_scores
from lpca.services.core import BERNOULLI, family_for, fitted_probabilities
from lpca.services.io import load_model, read_matrix, write_matrix
from lpca.services.mm import LpcaModel, scores


class Command(LpcaCommand):
    help = "Apply a saved model to new rows: scores, natural parameters and/or probabilities."

    def add_arguments(self, parser):
        parser.add_argument("--model", required=True, help="JSON model file written by fit_model")
        parser.add_argument("--input", required=True, help="CSV or .xlsx matrix with the training columns")
        parser.add_argument("--out-scores", default=None)
        parser.add_argument("--out-theta", default=None)
        parser.add_argument("--out-prob", default=None)

    def handle(self, *args, **opts):
        if not any(opts[k] for k in ("out_scores", "out_theta", "out_prob")):
            raise CommandError("nothing to do: give --out-scores, --out-theta and/or --out-prob", returncode=EXIT_INPUT)

        model = load_model(opts["model"])
        binary = isinstance(model, PcaModel) or family_for(model.family) is BERNOULLI
        data = read_matrix(opts["input"], binary=binary)
        X = data.values

        if isinstance(model, LsvdModel):
            self.stderr.write(
                self.style.WARNING(f"logistic SVD: solving one logistic regression per row ({X.shape[0]} rows)")
            )
            S = lsvd_new_scores(model, X)
            theta = model.mu + S @ model.B.T
        elif isinstance(model, PcaModel):
            S = pca_scores(model, X)
            theta = model.predict_theta(X)
        elif isinstance(model, LpcaModel):
            S = scores(model, X)
            theta = model.mu + S @ model.U.T
        else:
            S = None
            theta = model.predict_theta(X)

        if opts["out_scores"]:
            if S is None:
                raise CommandError(
                    f"{type(model).__name__} has no score matrix; project it to integer k first",
                    returncode=EXIT_INPUT,
                )
            write_matrix(opts["out_scores"], S)
        if opts["out_theta"]:
            write_matrix(opts["out_theta"], theta, header=data.header)
        if opts["out_prob"]:
            prob = pca_probability_estimate(model, X) if isinstance(model, PcaModel) else fitted_probabilities(theta)
            write_matrix(opts["out_prob"], prob, header=data.header)

        self.stdout.write(self.style.SUCCESS(f"Applied {model.method} model to {X.shape[0]} rows"))
