# -*- coding: utf-8 -*-
"""
    Shared fixtures for deltaloc.

    Everything runs on coarse grids (8 elements per cell) so the suite stays
    fast; the desk-scale checks are marked ``slow``.
"""

import math

import pytest

from deltaloc.commands import BoundaryCondition
from deltaloc.config import RunConfig
from deltaloc.experiments import ExperimentContext
from deltaloc.model import CouplingFunction, LayerGeometry, Manifold

COARSE = 8


@pytest.fixture
def dd_geom() -> LayerGeometry:
    return LayerGeometry(d=math.pi)


@pytest.fixture
def nn_geom() -> LayerGeometry:
    return LayerGeometry(
        d=math.pi, bc_bottom=BoundaryCondition.Neumann, bc_top=BoundaryCondition.Neumann
    )


@pytest.fixture
def circle() -> Manifold:
    # mirror symmetric about x1 = 1/2, so the lateral trace vanishes
    return Manifold.circle((0.5, math.pi / 2), 0.25)


@pytest.fixture
def offset_circle() -> Manifold:
    return Manifold.circle((0.4, 1.2), 0.2)


@pytest.fixture
def unit_f() -> CouplingFunction:
    return CouplingFunction.constant(1.0, 1.0)


def coarse_config(**experiment) -> RunConfig:
    sections = {
        "numerics": {"nodes_per_cell": COARSE},
        "experiment": dict({"eps": 0.05, "n_list": [2]}, **experiment),
    }
    return RunConfig.from_dict(sections)


@pytest.fixture
def config() -> RunConfig:
    return coarse_config()


@pytest.fixture
def context(config) -> ExperimentContext:
    return ExperimentContext(config)


@pytest.fixture
def make_config():
    return coarse_config
