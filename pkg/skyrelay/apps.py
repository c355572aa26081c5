from django.apps import AppConfig


class SkyrelayConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "skyrelay"
    verbose_name = "UAV delivery and IoT relay simulator"
