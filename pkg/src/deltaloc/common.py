#!/usr/bin/env python3
# -*- coding:utf-8 -*-

from __future__ import annotations

import logging
import os
from logging import handlers
from typing import List, Optional

DELTALOC_LOGLEVEL = os.environ.get("DELTALOC_LOGLEVEL", "INFO")
DELTALOC_LOGDIR = os.environ.get("DELTALOC_LOGDIR", "")
DELTALOC_THREADS = int(os.environ.get("DELTALOC_THREADS", 1))
DELTALOC_OUTDIR = os.environ.get("DELTALOC_OUTDIR", "runs")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

_HANDLERS: List[logging.Handler] = []


def setup_logging(
    level: Optional[str] = None, log_dir: Optional[str] = None
) -> logging.Logger:
    """
    setup_logging attach stream and optional rotating file handlers to the
    package logger, replacing handlers attached by a previous call

    Parameters
    ----------
    level : Optional[str]
        logging level name, defaults to DELTALOC_LOGLEVEL
    log_dir : Optional[str]
        directory of ``deltaloc.log``, defaults to DELTALOC_LOGDIR, no file
        handler if empty

    Returns
    -------
    logging.Logger
        the ``deltaloc`` root logger
    """
    level = level or DELTALOC_LOGLEVEL
    log_dir = DELTALOC_LOGDIR if log_dir is None else log_dir

    root_logger = logging.getLogger("deltaloc")
    for handler in _HANDLERS:
        handler.flush()
        handler.close()
        root_logger.removeHandler(handler)
    _HANDLERS.clear()

    formatter = logging.Formatter(LOG_FORMAT)

    stream = logging.StreamHandler()
    stream.setFormatter(formatter)
    _HANDLERS.append(stream)

    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        rotating = handlers.RotatingFileHandler(
            os.path.join(log_dir, "deltaloc.log"),
            mode="a+",
            backupCount=5,
            delay=False,
            maxBytes=1024 * 1024,
        )
        rotating.setFormatter(formatter)
        _HANDLERS.append(rotating)

    for handler in _HANDLERS:
        handler.setLevel(level)
        root_logger.addHandler(handler)
    root_logger.setLevel(level)

    return root_logger
