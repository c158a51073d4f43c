#!/usr/bin/env python3
# -*- coding:utf-8 -*-

from __future__ import annotations

import enum
from typing import Any, Generic, TypeVar

T = TypeVar("T")


class Command(Generic[T]):
    def __init__(self, name: str, *args: Any, **kwargs: Any):
        self.name = name
        self.args = args
        self.kwargs = kwargs

    def __repr__(self) -> str:
        return f"Command({self.name!r}, args={self.args}, kwargs={self.kwargs})"


class BoundaryCondition(enum.Enum):
    # u = 0 on the face
    Dirichlet = enum.auto()

    # du/dn = 0 on the face
    Neumann = enum.auto()

    @classmethod
    def parse(cls, value: str) -> "BoundaryCondition":
        try:
            return cls[value.strip().capitalize()]
        except KeyError:
            raise ValueError(f"Invalid boundary condition {value!r}")


class FaceCondition(enum.Enum):
    Dirichlet = enum.auto()
    Neumann = enum.auto()

    # left and right lateral faces identified node by node
    Periodic = enum.auto()

    # du/dn = rho u, rho given at the face nodes
    Robin = enum.auto()

    @classmethod
    def from_boundary(cls, condition: BoundaryCondition) -> "FaceCondition":
        return cls[condition.name]


class Face(enum.Enum):
    Bottom = enum.auto()
    Top = enum.auto()
    Left = enum.auto()
    Right = enum.auto()


class ManifoldKind(enum.Enum):
    Circle = enum.auto()

    # horizontal line across the whole cell, only used by the oracle
    SeparableLine = enum.auto()


class CouplingKind(enum.Enum):
    Constant = enum.auto()

    # depends on the manifold parameter only
    Profile = enum.auto()

    PolynomialInT = enum.auto()
