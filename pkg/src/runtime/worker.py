from __future__ import annotations

import json
import logging
import sys

from pydantic import ValidationError

from src.cli import handlers
from src.cli.config import RunConfig
from src.core.errors import MhtError

logger = logging.getLogger(__name__)

COMMANDS = {
    "fit": handlers.cmd_fit,
    "simulate": handlers.cmd_simulate,
    "density": handlers.cmd_density,
    "survival": handlers.cmd_survival,
    "check-inversion": handlers.cmd_check_inversion,
}


def error_record(exc: Exception) -> dict:
    if isinstance(exc, ValidationError):
        details = {"errors": json.loads(exc.json())}
    elif isinstance(exc, MhtError):
        details = exc.details()
    else:
        details = {}
    return {"error": type(exc).__name__, "message": str(exc), "details": details}


def run(config: RunConfig | dict) -> int:
    """Run one command; returns the process exit status.

    Failures are logged and reported on stderr as a single JSON record.
    """
    command = config.get("command") if isinstance(config, dict) else config.command
    try:
        if isinstance(config, dict):
            config = RunConfig.model_validate(config)
        logger.info("Running %s", config.command)
        COMMANDS[config.command](config)
        logger.info("%s finished", config.command)
        return 0
    except (MhtError, ValueError, OSError) as exc:
        logger.exception("Command %s failed", command)
        print(json.dumps(error_record(exc), default=str), file=sys.stderr)
        return 1
