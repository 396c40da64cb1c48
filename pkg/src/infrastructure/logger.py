import logging
import os
import sys
from typing import Optional

LOG_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"
LOG_FILE = "skillmove.log"


def setup_logging(level: str = "INFO", log_dir: Optional[str] = None) -> logging.Logger:
    """
    Configure the root logger: stderr always, plus skillmove.log inside log_dir when given

    Calling it again replaces the handlers installed by an earlier call.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_skillmove", False):
            root.removeHandler(handler)
            handler.close()

    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(formatter)
    stream._skillmove = True
    root.addHandler(stream)

    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(log_dir, LOG_FILE), encoding="utf-8")
        file_handler.setFormatter(formatter)
        file_handler._skillmove = True
        root.addHandler(file_handler)

    root.setLevel(level.upper())
    return root


class Logger:
    """Thin named logger facade used by the launcher"""

    def __init__(self, log_dir: str = "", app_name: str = "skillmove"):
        self.log_dir = log_dir
        self._logger = logging.getLogger(app_name)

    def debug(self, message): self._logger.debug(message)
    def info(self, message): self._logger.info(message)
    def warning(self, message): self._logger.warning(message)
    def error(self, message): self._logger.error(message)
    def critical(self, message): self._logger.critical(message)
    def exception(self, message): self._logger.exception(message)

    def set_level(self, level) -> None:
        logging.getLogger().setLevel(level.upper() if isinstance(level, str) else level)
