# skyrelay/tasks.py
from __future__ import annotations

import logging
from typing import Any, Dict, List, Mapping

from celery import shared_task

from skyrelay.exceptions import SimulationError
from skyrelay.montecarlo import run_trial_block

logger = logging.getLogger(__name__)


@shared_task
def run_trial_batch(
    study: str,
    params_doc: Mapping[str, Any],
    start: int,
    stop: int,
    seed: int,
    options: Mapping[str, Any] | None = None,
) -> List[Dict[str, Any]]:
    """
    Runs trials [start, stop) of one study and returns their JSON-safe
    records. Called inline by default; a celery worker runs it when
    SKYRELAY_DISPATCH=celery.
    """
    try:
        return run_trial_block(study, params_doc, start, stop, seed, options)
    except SimulationError:
        logger.exception(
            "Trial batch failed",
            extra={"study": study, "start": start, "stop": stop, "seed": seed},
        )
        raise
