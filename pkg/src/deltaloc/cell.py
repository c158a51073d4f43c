#!/usr/bin/env python3
# -*- coding:utf-8 -*-
"""
The periodic cell problem: ground pair (Lambda^eta, Psi^eta) of one lattice
cell with coupling eta on M0, the lateral log-derivative trace of Psi^eta and
the separable-line oracle.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.optimize as opt

from deltaloc.assembly import (
    QUAD_PER_CROSSING,
    BoundarySpec,
    Grid,
    assemble_operator,
    build_grid,
)
from deltaloc.commands import BoundaryCondition, Face, FaceCondition
from deltaloc.eigensolve import DEFAULT_TOL, lowest_eigenpairs
from deltaloc.errors import (
    GroundStateSignChange,
    GroundStateVanishesOnBoundary,
    InvalidModel,
)
from deltaloc.model import CouplingFunction, LayerGeometry, Manifold

logger = logging.getLogger(__name__)

SIGN_TOL = 1e-6
VANISHING_TOL = 1e-12
CELL_BLOCK = 4


@dataclass(frozen=True, eq=False)
class CellSolution:
    eta: float
    lambda_eta: float
    # nodal values on the full cell grid, positive, M-normalized
    psi_eta: np.ndarray = field(repr=False)
    grid: Grid = field(repr=False)
    geom: LayerGeometry = field(repr=False)
    residual: float = 0.0

    @property
    def grid_ref(self) -> Grid:
        return self.grid

    def nodal(self) -> np.ndarray:
        """Ground state as an (nx, ny) array."""
        return self.psi_eta.reshape(self.grid.nx, self.grid.ny)


@dataclass(frozen=True, eq=False)
class RobinTrace:
    """
    Gamma-periodic x1 log-derivative g = (d Psi / d x1) / Psi at the lateral
    nodes. The outward Robin data is -g on the left face and +g on the right.
    """

    eta: float
    values: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    seam_mismatch: float = 0.0

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def face_values(self, face: Face) -> np.ndarray:
        if face not in (Face.Left, Face.Right):
            raise ValueError(f"No lateral trace on the {face.name.lower()} face")
        return self.values

    def outward(self, face: Face) -> np.ndarray:
        values = self.face_values(face)
        return -values if face is Face.Left else values.copy()

    @classmethod
    def zero(cls, y: np.ndarray) -> "RobinTrace":
        return cls(eta=0.0, values=np.zeros(len(y)), y=np.asarray(y))


def cell_grid(geom: LayerGeometry, nodes_per_cell: int) -> Grid:
    return build_grid(geom, 1, nodes_per_cell)


def solve_cell(
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    eta: float,
    grid: Optional[Grid] = None,
    nodes_per_cell: int = 24,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    quad_per_crossing: int = QUAD_PER_CROSSING,
) -> CellSolution:
    """
    solve_cell ground pair of the periodic cell operator with coupling eta

    Parameters
    ----------
    geom : LayerGeometry
        layer and transverse boundary conditions
    manifold : Manifold
        reference manifold M0
    f : CouplingFunction
        coupling function, |eta| <= t0
    eta : float
        coupling on M0
    grid : Optional[Grid]
        single-cell grid, built from ``nodes_per_cell`` when omitted

    Returns
    -------
    CellSolution
        ground pair with the eigenvector sign fixed positive
    """
    manifold.validate_in_cell(geom)
    grid = grid or cell_grid(geom, nodes_per_cell)
    if grid.cells != 1:
        raise InvalidModel(f"Cell problem needs a single-cell grid, got {grid.cells} cells")

    spec = BoundarySpec.from_geometry(geom, FaceCondition.Periodic)
    op = assemble_operator(grid, geom, manifold, f, [(0, eta)], spec, quad_per_crossing)
    result = lowest_eigenpairs(op, 1, tol=tol, seed=seed, block=CELL_BLOCK)

    psi = op.expand(result.eigenvectors[:, 0])
    psi = psi if psi.sum() >= 0 else -psi
    free = op.dof_map >= 0
    scale = np.max(np.abs(psi))
    if np.min(psi[free]) < -SIGN_TOL * scale:
        raise GroundStateSignChange(
            f"Ground state at eta={eta} changes sign (min {np.min(psi[free])}, max {scale})"
        )
    # flush round-off below zero
    psi = np.where(free, np.maximum(psi, 0.0), 0.0)

    logger.debug("Cell eta=%g lambda=%.12g (%s)", eta, result.lowest, result.method)
    return CellSolution(
        eta=float(eta),
        lambda_eta=result.lowest,
        psi_eta=psi,
        grid=grid,
        geom=geom,
        residual=float(result.residuals[0]),
    )


def eta_sweep(
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    grid: Grid,
    etas: Sequence[float],
    threads: int = 1,
    **kwargs,
) -> List[CellSolution]:
    def solve(eta: float) -> CellSolution:
        return solve_cell(geom, manifold, f, eta, grid=grid, **kwargs)

    if threads <= 1:
        return [solve(eta) for eta in etas]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(solve, etas))


def perturbation_slope(
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    grid: Grid,
    eta_list: Sequence[float],
    threads: int = 1,
    **kwargs,
) -> float:
    """
    perturbation_slope least-squares slope of eta -> Lambda^eta at eta = 0

    A quadratic is fitted so the curvature does not bias the slope, which
    approximates -Lambda1.
    """
    etas = np.asarray(eta_list, dtype=float)
    if len(etas) < 4:
        raise ValueError(f"Need at least 4 couplings, got {len(etas)}")
    if not np.allclose(np.sort(etas), np.sort(-etas), rtol=0, atol=1e-12):
        raise ValueError(f"Couplings must be symmetric around 0, got {etas.tolist()}")

    lambdas = [s.lambda_eta for s in eta_sweep(geom, manifold, f, grid, etas, threads, **kwargs)]
    coefficients = np.polyfit(etas, lambdas, 2)
    return float(coefficients[1])


def continuity_constant(
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    grid: Grid,
    eta: float,
    step: float = 1e-3,
    **kwargs,
) -> float:
    """Empirical C in |Lambda^(eta + step) - Lambda^eta| <= C step."""
    first, second = eta_sweep(geom, manifold, f, grid, [eta, eta + step], **kwargs)
    return abs(second.lambda_eta - first.lambda_eta) / step


def robin_trace(sol: CellSolution, grid: Optional[Grid] = None) -> RobinTrace:
    """
    robin_trace lateral log-derivative of the cell ground state

    Second-order one-sided differences are taken from both sides of the
    periodic seam and averaged; their largest difference is reported as
    ``seam_mismatch``.
    """
    grid = grid or sol.grid
    u = sol.psi_eta.reshape(grid.nx, grid.ny)
    h = grid.h_x

    rows = np.arange(grid.ny)
    if sol.geom.bc_bottom is BoundaryCondition.Dirichlet:
        rows = rows[1:]
    if sol.geom.bc_top is BoundaryCondition.Dirichlet:
        rows = rows[:-1]

    boundary = u[0, rows]
    if np.min(boundary) < VANISHING_TOL * np.max(u):
        raise GroundStateVanishesOnBoundary(
            f"Ground state at eta={sol.eta} vanishes on the lateral boundary"
        )

    forward = (-3.0 * u[0, rows] + 4.0 * u[1, rows] - u[2, rows]) / (2.0 * h)
    backward = (3.0 * u[-1, rows] - 4.0 * u[-2, rows] + u[-3, rows]) / (2.0 * h)
    left, right = forward / u[0, rows], backward / u[-1, rows]

    g = np.zeros(grid.ny)
    g[rows] = 0.5 * (left + right)
    # Dirichlet corner nodes are eliminated, their values only enter the
    # edge midpoints of the face mass
    if rows[0] > 0:
        g[0] = 2.0 * g[1] - g[2]
    if rows[-1] < grid.ny - 1:
        g[-1] = 2.0 * g[-2] - g[-3]

    g.setflags(write=False)
    return RobinTrace(
        eta=sol.eta,
        values=g,
        y=grid.y.copy(),
        seam_mismatch=float(np.max(np.abs(left - right))),
    )


def _log_derivative(energy: float, s: float, condition: BoundaryCondition) -> float:
    # Y'(s) / Y(s) for the solution of -Y'' = energy Y started at a wall with
    # the given condition, s the distance from the wall
    dirichlet = condition is BoundaryCondition.Dirichlet
    if energy > 0:
        k = math.sqrt(energy)
        return k / math.tan(k * s) if dirichlet else -k * math.tan(k * s)
    if energy < 0:
        kappa = math.sqrt(-energy)
        return kappa / math.tanh(kappa * s) if dirichlet else kappa * math.tanh(kappa * s)
    return 1.0 / s if dirichlet else 0.0


def _first_pole(s: float, condition: BoundaryCondition) -> float:
    quarter = 1.0 if condition is BoundaryCondition.Dirichlet else 0.5
    return (quarter * math.pi / s) ** 2


def separable_line_oracle(geom: LayerGeometry, height: float, sigma: float) -> float:
    """
    separable_line_oracle ground energy of a line interaction x2 = height
    with strength sigma, from the matching condition

        Y_bottom'/Y_bottom + Y_top'/Y_top = sigma

    which reads k (cot(k h) + cot(k (d - h))) = sigma for Dirichlet walls.

    Parameters
    ----------
    geom : LayerGeometry
        layer width and transverse boundary conditions
    height : float
        line height in (0, d)
    sigma : float
        coupling strength, positive values attract

    Returns
    -------
    float
        lowest energy, negative for strong attraction
    """
    d = geom.d
    if not 0.0 < height < d:
        raise InvalidModel(f"Line height {height} outside (0, {d})")

    below, above = height, d - height

    def mismatch(energy: float) -> float:
        return (
            _log_derivative(energy, below, geom.bc_bottom)
            + _log_derivative(energy, above, geom.bc_top)
            - sigma
        )

    pole = min(_first_pole(below, geom.bc_bottom), _first_pole(above, geom.bc_top))
    upper = pole * (1.0 - 1e-9)
    while mismatch(upper) >= 0:
        upper = 0.5 * (upper + pole)

    lower = -max(1.0, sigma * sigma) - 1.0
    while mismatch(lower) <= 0:
        lower *= 2.0

    root = opt.root_scalar(mismatch, bracket=[lower, upper], method="bisect", xtol=1e-14, rtol=1e-14)
    if not root.converged:
        raise RuntimeError(f"Bisection did not converge: {root.flag}")
    return float(root.root)
