import uuid

from django.db import models


class Method(models.TextChoices):
    LPCA = "lpca", "Logistic PCA (MM)"
    FANTOPE = "fantope", "Logistic PCA (Fantope relaxation)"
    LSVD = "lsvd", "Logistic SVD"
    PCA = "pca", "Standard PCA"
    LPCA_CV = "lpca_cv", "Logistic PCA, cross-validated m"


# ----------------------------
# Fit ledger
# ----------------------------
class FitRun(models.Model):
    """One recorded solver run and where its model file went."""

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    created_at = models.DateTimeField(auto_now_add=True)

    method = models.CharField(max_length=16, choices=Method.choices)
    family = models.CharField(max_length=16, default="bernoulli")
    k = models.FloatField()
    m = models.FloatField(null=True, blank=True)

    n_rows = models.PositiveIntegerField()
    n_cols = models.PositiveIntegerField()

    iterations = models.PositiveIntegerField(default=0)
    converged = models.BooleanField(default=False)
    termination = models.CharField(max_length=16, blank=True, default="")
    elapsed_seconds = models.FloatField(default=0.0)
    final_deviance = models.FloatField(null=True, blank=True)
    deviance_trace = models.JSONField(default=list, blank=True)

    input_path = models.CharField(max_length=512, blank=True, default="")
    model_path = models.CharField(max_length=512, blank=True, default="")
    notes = models.CharField(max_length=255, blank=True, default="")

    def __str__(self) -> str:
        return f"FitRun {self.created_at:%Y-%m-%d %H:%M} {self.method} k={self.k:g}"

    class Meta:
        ordering = ["-created_at"]
        indexes = [models.Index(fields=["method", "created_at"], name="lpca_fitrun_method_4b1c2e_idx")]
        constraints = [
            models.CheckConstraint(condition=models.Q(k__gt=0), name="fitrun_k_positive"),
        ]


# ----------------------------
# Sweep ledger
# ----------------------------
class SweepRun(models.Model):
    """One simulation sweep invocation. Groups its cells."""

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    created_at = models.DateTimeField(auto_now_add=True)
    seed = models.BigIntegerField(default=0)
    notes = models.CharField(max_length=255, blank=True, default="")

    def __str__(self) -> str:
        return f"SweepRun {self.created_at:%Y-%m-%d %H:%M} (seed {self.seed})"

    class Meta:
        ordering = ["-created_at"]


class SweepCell(models.Model):
    """A single (scenario, replicate, method, k, m) result."""

    run = models.ForeignKey(SweepRun, on_delete=models.CASCADE, related_name="cells")

    n = models.PositiveIntegerField()
    d = models.PositiveIntegerField()
    k_true = models.PositiveIntegerField()
    pbar = models.FloatField()
    phi = models.FloatField()
    replicate = models.PositiveIntegerField(default=0)

    method = models.CharField(max_length=16, choices=Method.choices)
    k = models.PositiveIntegerField()
    m = models.FloatField(null=True, blank=True)

    mse = models.FloatField()
    deviance = models.FloatField()
    iterations = models.PositiveIntegerField(default=0)

    def __str__(self) -> str:
        m = "-" if self.m is None else f"{self.m:g}"
        return f"{self.method} k={self.k} m={m} mse={self.mse:.4g}"

    class Meta:
        ordering = ["run", "id"]
        indexes = [models.Index(fields=["method", "k"], name="lpca_sweepc_method_9e07d1_idx")]
