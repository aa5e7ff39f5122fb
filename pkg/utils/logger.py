import logging
import os
from logging.handlers import RotatingFileHandler
from pathlib import Path

LOG_FORMAT = "%(asctime)s  %(levelname)-7s %(name)s - %(message)s"

_configured = False


def setup_logging(level: str | None = None, log_file: str | None = None) -> None:
    """Configure the root logger once; later calls only adjust the level."""
    global _configured
    from config import settings

    # Root level comes from the argument, then settings, then env (default = INFO)
    level = (level or settings.LOG_LEVEL or os.getenv("LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger()

    if _configured:
        root.setLevel(level)
        return

    logging.basicConfig(level=level, format=LOG_FORMAT)

    # Keep LOG_BACKUP_COUNT × LOG_MAX_BYTES per run-time log file
    log_file = log_file or settings.LOG_FILE
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        fh = RotatingFileHandler(
            log_file,
            maxBytes=settings.LOG_MAX_BYTES,
            backupCount=settings.LOG_BACKUP_COUNT,
            encoding="utf-8",
        )
        fh.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(fh)

    # Silence very chatty libraries
    for noisy in ("matplotlib", "numexpr", "concurrent.futures"):
        logging.getLogger(noisy).setLevel(logging.WARNING)

    _configured = True
