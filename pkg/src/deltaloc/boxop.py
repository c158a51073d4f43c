#!/usr/bin/env python3
# -*- coding:utf-8 -*-
"""
Finite box of N lattice cells with per-cell couplings eps * omega_k, the
transverse condition B on the walls and the lateral Robin condition built from
the cell ground state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from deltaloc.assembly import (
    QUAD_PER_CROSSING,
    BoundarySpec,
    DiscreteOperator,
    Grid,
    assemble_operator,
)
from deltaloc.cell import RobinTrace
from deltaloc.commands import Face, FaceCondition
from deltaloc.eigensolve import (
    DEFAULT_TOL,
    EigenResult,
    ShiftedSolver,
    lowest_eigenpairs,
    spectrum_up_to,
)
from deltaloc.errors import (
    MissingRobinData,
    ShiftTooCloseToSpectrum,
    ValueOutOfSupport,
    WindowTooHigh,
)
from deltaloc.model import CouplingFunction, LayerGeometry, Manifold

logger = logging.getLogger(__name__)

DEFAULT_PROBES = 30


@dataclass(frozen=True, eq=False)
class BoxSpec:
    N: int
    eps: float
    omega: np.ndarray = field(repr=False)
    robin: Optional[RobinTrace]
    grid: Grid = field(repr=False)
    a: float = -1.0
    lateral: FaceCondition = FaceCondition.Robin

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=float)
        if len(omega) != self.N:
            raise ValueError(f"Expected {self.N} couplings, got {len(omega)}")
        if self.grid.cells != self.N:
            raise ValueError(f"Grid has {self.grid.cells} cells, box has {self.N}")
        if not self.eps >= 0:
            raise ValueError(f"Disorder strength must be non-negative, got {self.eps}")

        outside = omega[(omega < self.a) | (omega > 1.0)]
        if outside.size:
            raise ValueOutOfSupport(f"Values {outside.tolist()} outside [{self.a}, 1]")
        object.__setattr__(self, "omega", omega)

    @property
    def couplings(self):
        return [(k, self.eps * float(w)) for k, w in enumerate(self.omega)]


@dataclass(frozen=True)
class BlockSelector:
    """Sub-box of ``cells`` lattice cells starting at cell ``offset``."""

    offset: int
    cells: int

    def __post_init__(self) -> None:
        if self.offset < 0 or self.cells < 1:
            raise ValueError(f"Invalid block offset={self.offset} cells={self.cells}")

    @classmethod
    def whole(cls, spec: BoxSpec) -> "BlockSelector":
        return cls(0, spec.N)

    @property
    def stop(self) -> int:
        return self.offset + self.cells

    def check_inside(self, N: int) -> None:
        if self.stop > N:
            raise ValueError(f"Block [{self.offset}, {self.stop}) outside a box of {N} cells")

    def distance(self, other: "BlockSelector") -> int:
        """Number of whole cells separating the two blocks, 0 if they touch."""
        return max(0, other.offset - self.stop, self.offset - other.stop)

    def dof_mask(self, op: DiscreteOperator) -> np.ndarray:
        nodes = op.grid.nodes_in_cells(self.offset, self.cells)
        dofs = op.dof_map[nodes]
        mask = np.zeros(op.n_dofs, dtype=bool)
        mask[dofs[dofs >= 0]] = True
        return mask


def assemble_box(
    spec: BoxSpec,
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    quad_per_crossing: int = QUAD_PER_CROSSING,
) -> DiscreteOperator:
    """
    assemble_box box pencil with Robin data tiled periodically along the
    lateral faces

    Raises
    ------
    MissingRobinData
        the lateral condition is Robin and no trace of matching size is given
    """
    manifold.validate_in_cell(geom)

    robin_left = robin_right = None
    if spec.lateral is FaceCondition.Robin:
        if spec.robin is None or len(spec.robin.values) != spec.grid.ny:
            raise MissingRobinData(
                f"Robin lateral condition needs a trace with {spec.grid.ny} values"
            )
        robin_left = spec.robin.outward(Face.Left)
        robin_right = spec.robin.outward(Face.Right)

    bc = BoundarySpec.from_geometry(geom, spec.lateral, robin_left, robin_right)
    return assemble_operator(
        spec.grid, geom, manifold, f, spec.couplings, bc, quad_per_crossing
    )


def box_spectrum(
    spec: BoxSpec,
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    k: int = 1,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    quad_per_crossing: int = QUAD_PER_CROSSING,
) -> EigenResult:
    op = assemble_box(spec, geom, manifold, f, quad_per_crossing)
    return lowest_eigenpairs(op, k, tol=tol, seed=seed)


def lowest_eigenvalue(
    spec: BoxSpec,
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    quad_per_crossing: int = QUAD_PER_CROSSING,
) -> float:
    return box_spectrum(spec, geom, manifold, f, 1, tol, seed, quad_per_crossing).lowest


def count_in_window(eigenvalues: Sequence[float], energy: float, kappa: float) -> int:
    values = np.asarray(eigenvalues, dtype=float)
    return int(np.count_nonzero((values >= energy - kappa) & (values <= energy + kappa)))


@dataclass(frozen=True, eq=False)
class WindowCount:
    count: int
    # computed eigenvalues up to the window top
    eigenvalues: np.ndarray = field(repr=False)
    lowest: float = math.nan

    @property
    def hit(self) -> bool:
        """dist(spectrum, E) <= kappa"""
        return self.count > 0


def count_eigenvalues_near(
    spec: BoxSpec,
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    energy: float,
    kappa: float,
    ceiling: float = math.inf,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    op: Optional[DiscreteOperator] = None,
    quad_per_crossing: int = QUAD_PER_CROSSING,
) -> WindowCount:
    """
    count_eigenvalues_near number of eigenvalues in the closed window
    [energy - kappa, energy + kappa]

    Parameters
    ----------
    ceiling : float
        highest resolvable energy, usually Lambda0 plus a margin
    op : Optional[DiscreteOperator]
        already assembled box operator

    Raises
    ------
    WindowTooHigh
        energy + kappa exceeds ``ceiling``
    """
    if kappa < 0:
        raise ValueError(f"Window half-width must be non-negative, got {kappa}")
    if energy + kappa > ceiling:
        raise WindowTooHigh(f"Window top {energy + kappa} exceeds the ceiling {ceiling}")

    op = op or assemble_box(spec, geom, manifold, f, quad_per_crossing)
    computed = spectrum_up_to(op, energy + kappa, tol=tol, seed=seed)
    below = computed.eigenvalues[computed.eigenvalues <= energy + kappa]
    return WindowCount(
        count=count_in_window(below, energy, kappa),
        eigenvalues=below,
        lowest=computed.lowest,
    )


def resolvent_block_norm(
    spec: BoxSpec,
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    lam: float,
    b1: BlockSelector,
    b2: BlockSelector,
    probes: int = DEFAULT_PROBES,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    op: Optional[DiscreteOperator] = None,
    ground: Optional[float] = None,
    quad_per_crossing: int = QUAD_PER_CROSSING,
) -> float:
    """
    resolvent_block_norm power-iteration estimate of
    ||chi_b1 (H - lam)^-1 chi_b2|| in the lumped-mass norm

    The estimate approaches the norm from below.

    Parameters
    ----------
    lam : float
        energy below the ground value of the box
    b1, b2 : BlockSelector
        output and input blocks
    probes : int
        power iterations
    ground : Optional[float]
        ground value of the box when already known
    """
    if probes < 1:
        raise ValueError(f"Need at least one probe, got {probes}")
    for block in (b1, b2):
        block.check_inside(spec.N)

    op = op or assemble_box(spec, geom, manifold, f, quad_per_crossing)
    if ground is None:
        ground = lowest_eigenpairs(op, 1, tol=tol, seed=seed).lowest

    margin = math.sqrt(tol) * max(1.0, abs(lam))
    if lam >= ground - margin:
        raise ShiftTooCloseToSpectrum(f"Energy {lam} is not below the ground value {ground}")

    solver = ShiftedSolver(op, lam, tol)
    weight = op.lumped_mass
    out_mask = b1.dof_mask(op)
    in_mask = b2.dof_mask(op)

    def forward(v: np.ndarray) -> np.ndarray:
        return np.where(out_mask, solver.solve(weight * np.where(in_mask, v, 0.0)), 0.0)

    def adjoint(w: np.ndarray) -> np.ndarray:
        return np.where(in_mask, solver.solve(weight * np.where(out_mask, w, 0.0)), 0.0)

    def norm(v: np.ndarray) -> float:
        return math.sqrt(float(np.sum(weight * v * v)))

    v = np.where(in_mask, 1.0, 0.0)
    v /= norm(v)
    estimate = 0.0
    for _ in range(probes):
        w = forward(v)
        estimate = norm(w)
        if estimate == 0.0:
            break
        v = adjoint(w)
        size = norm(v)
        if size == 0.0:
            break
        v /= size

    logger.debug(
        "Block norm [%d,%d) <- [%d,%d) at %g: %.6g",
        b1.offset,
        b1.stop,
        b2.offset,
        b2.stop,
        lam,
        estimate,
    )
    return estimate
