"""Logging helpers used across edgeband components.

Every module asks for its logger through ``get_logger(__name__)`` so that the
pipe-separated format and the level from ``EDGEBAND_LOG_LEVEL`` apply uniformly.
"""
from __future__ import annotations

import logging
import os
from typing import Optional, Union


_DEFAULT_FORMAT = (
    "%(asctime)s | %(levelname)s | %(name)s | "
    "%(message)s"
)


def _level_from_env() -> int:
    name = os.getenv("EDGEBAND_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def configure_root_logger(level: Optional[Union[int, str]] = None, fmt: str = _DEFAULT_FORMAT) -> None:
    """Configure the root logger once; later calls only adjust the level."""
    if level is None:
        level = _level_from_env()
    elif isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=level, format=fmt)
    else:
        root.setLevel(level)


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Return a logger, making sure the root logger is configured first."""
    configure_root_logger()
    return logging.getLogger(name)
