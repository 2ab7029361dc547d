from django.apps import AppConfig


class LpcaConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "lpca"
    verbose_name = "Logistic PCA"
