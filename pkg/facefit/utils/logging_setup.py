"""Logging configuration for facefit runs"""

import logging
import logging.handlers
from pathlib import Path
from typing import Optional, Union

ROOT_LOGGER = "facefit"

RECORD_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
CALL_SITE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
CONSOLE_FORMAT = '%(levelname)s - %(name)s - %(message)s'

MAX_LOG_BYTES = 10 * 1024 * 1024  # 10MB
LOG_BACKUPS = 5


def _rotating_handler(path: Path, level: int, fmt: str,
                      only: Optional[str] = None) -> logging.handlers.RotatingFileHandler:
    handler = logging.handlers.RotatingFileHandler(path, maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUPS,
                                                   encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt))
    if only is not None:
        handler.addFilter(logging.Filter(only))
    return handler


def setup_application_logging(log_level: int = logging.INFO,
                              log_dir: Optional[Union[str, Path]] = None) -> None:
    """
    Route every facefit record to files under `log_dir` and warnings to stderr.

        app.log      all records at `log_level`
        optim.log    optimizer progress only (stages, iterations, batches, divergence)
        errors.log   ERROR and above, with the call site
        stderr       WARNING and above, [DIAG] diagnostics included

    Calling it again replaces the previous handlers, so repeated CLI
    invocations in one process do not duplicate output.

    Args:
        log_level: Minimum log level (default: INFO)
        log_dir: Directory for log files (default: ./logs)
    """
    log_dir = Path("logs") if log_dir is None else Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    for handler in list(root_logger.handlers):
        handler.close()
        root_logger.removeHandler(handler)

    root_logger.addHandler(_rotating_handler(log_dir / "app.log", log_level, RECORD_FORMAT))
    root_logger.addHandler(_rotating_handler(log_dir / "optim.log", log_level, RECORD_FORMAT,
                                             only=f"{ROOT_LOGGER}.optim"))
    root_logger.addHandler(_rotating_handler(log_dir / "errors.log", logging.ERROR, CALL_SITE_FORMAT))

    # Created here so it binds to the current sys.stderr
    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.WARNING)
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    root_logger.addHandler(console_handler)


def get_logger(name: str) -> logging.Logger:
    """
    Logger under the package namespace: get_logger("optim.fitter") -> "facefit.optim.fitter".

    Components name themselves by subpackage and module ("render.pipeline",
    "services.config"); records from "optim.*" also reach optim.log.
    """
    if name == ROOT_LOGGER or name.startswith(f"{ROOT_LOGGER}."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def log_run_event(component_name: str, message: str) -> None:
    """Stage switches, files written, training steps"""
    get_logger(component_name).info(f"[RUN] {message}")


def log_diagnostic(component_name: str, message: str) -> None:
    """A recoverable numerical condition: the run goes on, the user should know"""
    get_logger(component_name).warning(f"[DIAG] {message}")


def log_config_change(setting_name: str, old_value, new_value) -> None:
    get_logger("services.config").info(f"[CONFIG] {setting_name}: '{old_value}' → '{new_value}'")


def log_error_with_context(component_name: str, error_message: str, exception: Optional[Exception] = None) -> None:
    """ERROR record; an exception adds its traceback"""
    logger = get_logger(component_name)
    if exception is None:
        logger.error(f"[ERROR] {error_message}")
    else:
        logger.error(f"[ERROR] {error_message}: {exception}", exc_info=exception)
