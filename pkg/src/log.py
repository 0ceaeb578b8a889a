"""
Logging setup. Library modules only call `logging.getLogger(__name__)`;
entry points (CLI, API) call `configure_logging` once.
"""

import logging

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def configure_logging(level: int = logging.INFO) -> None:
    """Installs a single console handler on the `src` and `app` loggers."""
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))

    for name in ("src", "app"):
        logger = logging.getLogger(name)
        logger.setLevel(level)
        # Re-configuration replaces the handler instead of stacking a second one
        logger.handlers = [handler]
        logger.propagate = False
