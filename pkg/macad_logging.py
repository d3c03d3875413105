import os
import json
from datetime import datetime, timezone
import logging
from typing import Optional

from macad_config import get_config_value

_METRICS_LOG_FILENAME = ""
_SYSTEM_LOG_FILENAME = ""

# Module-level loggers for metrics and system logs
metrics_logger = logging.getLogger('macad_metrics')
system_logger = logging.getLogger('macad_system')


def init(run_name: str, out_dir: Optional[str] = None) -> str:
    """Initialize logging: ensures the output directory and configures log handlers.

    Returns the metrics file path.
    """
    global _METRICS_LOG_FILENAME, _SYSTEM_LOG_FILENAME
    log_dir = out_dir if out_dir is not None else get_config_value("log_path", "")
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
    _METRICS_LOG_FILENAME = os.path.join(log_dir, f"{run_name}.metrics.jsonl")
    _SYSTEM_LOG_FILENAME = os.path.join(log_dir, f"{run_name}.log")
    close()
    # Metrics logger (JSON lines, no timestamps: identical runs give identical files)
    metrics_logger.setLevel(logging.INFO)
    mh = logging.FileHandler(_METRICS_LOG_FILENAME, mode='w', encoding='utf-8')
    mh.setFormatter(logging.Formatter('%(message)s'))
    metrics_logger.addHandler(mh)
    metrics_logger.propagate = False
    # System logger (timestamped text)
    system_logger.setLevel(logging.INFO)
    sh = logging.FileHandler(_SYSTEM_LOG_FILENAME, mode='w', encoding='utf-8')
    sh.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(message)s'))
    system_logger.addHandler(sh)
    system_logger.propagate = False
    return _METRICS_LOG_FILENAME


def close() -> None:
    """Detach and close every handler of both loggers."""
    for logger in (metrics_logger, system_logger):
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
        logger.addHandler(logging.NullHandler())
        logger.propagate = False


close()


def system_log(message: str) -> None:
    """Log a system message with timestamp."""
    system_logger.info(str(message))


def system_warn(message: str) -> None:
    system_logger.warning(str(message))


def metrics_log_json(data: dict) -> None:
    """Log one metrics record as a JSON line."""
    metrics_logger.info(json.dumps(data, sort_keys=True))


def utc_stamp() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")
