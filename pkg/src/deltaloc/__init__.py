#!/usr/bin/env python3
# -*- coding:utf-8 -*-

from __future__ import annotations

from pkg_resources import get_distribution, DistributionNotFound
import types

try:
    # Change here if project is renamed and does not equal the package name
    dist_name = __name__
    __version__ = get_distribution(dist_name).version
except DistributionNotFound:
    __version__ = "unknown"
finally:
    del get_distribution, DistributionNotFound


def reload() -> types.ModuleType:
    """
    reload reload deltaloc module without restarting Python

    Returns
    -------
    types.ModuleType
        reloaded deltaloc module
    """
    import importlib
    import deltaloc

    deltaloc = importlib.reload(deltaloc)

    from deltaloc import (
        common,
        commands,
        errors,
        model,
        assembly,
        eigensolve,
        cell,
        boxop,
        estimate,
        experiments,
        config,
        service,
    )

    for module in (
        common,
        commands,
        errors,
        model,
        assembly,
        eigensolve,
        cell,
        boxop,
        estimate,
        experiments,
        config,
        service,
    ):
        importlib.reload(module)

    return deltaloc


from deltaloc.common import (  # noqa: E402
    DELTALOC_LOGDIR,
    DELTALOC_LOGLEVEL,
    DELTALOC_OUTDIR,
    DELTALOC_THREADS,
    setup_logging,
)
from deltaloc.commands import BoundaryCondition, Command, FaceCondition  # noqa: E402
from deltaloc.model import (  # noqa: E402
    CouplingFunction,
    Disorder,
    LayerGeometry,
    Manifold,
    epsilon_star,
    lambda1,
    sample_omega,
)
from deltaloc.cell import robin_trace, solve_cell  # noqa: E402
from deltaloc.boxop import BoxSpec, box_spectrum  # noqa: E402
from deltaloc.config import RunConfig, parse_config  # noqa: E402
from deltaloc.service import ExperimentService  # noqa: E402

__all__ = [
    "BoundaryCondition",
    "BoxSpec",
    "box_spectrum",
    "Command",
    "CouplingFunction",
    "DELTALOC_LOGDIR",
    "DELTALOC_LOGLEVEL",
    "DELTALOC_OUTDIR",
    "DELTALOC_THREADS",
    "Disorder",
    "epsilon_star",
    "ExperimentService",
    "FaceCondition",
    "lambda1",
    "LayerGeometry",
    "Manifold",
    "parse_config",
    "reload",
    "robin_trace",
    "RunConfig",
    "sample_omega",
    "setup_logging",
    "solve_cell",
]
