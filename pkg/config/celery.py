import os
from celery import Celery

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")

app = Celery("skyrelay")
app.config_from_object("django.conf:settings", namespace="CELERY")
# Trial batches are CPU-bound and long; one task per worker process at a time.
app.conf.worker_prefetch_multiplier = 1
app.autodiscover_tasks()
