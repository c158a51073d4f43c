#!/usr/bin/env python3
# -*- coding:utf-8 -*-
"""
Bilinear finite elements on cell-conforming tensor grids.

Node (i, j) sits at (i * h_x, j * h_y) and has flat index i * ny + j. The
energy form of the operator is

    u -> u^T K u - u^T S u,  against  u^T M u,

with K the stiffness of the Laplacian (plus the Robin boundary term), M the
mass and S the delta interaction.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from deltaloc.commands import Face, FaceCondition
from deltaloc.errors import CouplingOutOfRange, GridTooCoarse, MissingRobinData
from deltaloc.model import CouplingFunction, LayerGeometry, Manifold

logger = logging.getLogger(__name__)

MIN_NODES_PER_CELL = 8
QUAD_PER_CROSSING = 8


@dataclass(frozen=True, eq=False)
class Grid:
    cells: int
    cell_length: float
    d: float
    nodes_per_cell: int
    nx: int
    ny: int

    @property
    def h_x(self) -> float:
        return self.cell_length / self.nodes_per_cell

    @property
    def h_y(self) -> float:
        return self.d / (self.ny - 1)

    @property
    def box(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        return (0.0, self.cells * self.cell_length), (0.0, self.d)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.h_x

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.h_y

    def node_index(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        return np.asarray(i) * self.ny + np.asarray(j)

    @cached_property
    def cell_of_node(self) -> np.ndarray:
        # nodes on a shared cell line belong to the cell on their right
        column = np.minimum(np.arange(self.nx) // self.nodes_per_cell, self.cells - 1)
        return np.repeat(column, self.ny)

    def face_nodes(self, face: Face) -> np.ndarray:
        if face is Face.Bottom:
            return self.node_index(np.arange(self.nx), 0)
        if face is Face.Top:
            return self.node_index(np.arange(self.nx), self.ny - 1)
        if face is Face.Left:
            return self.node_index(0, np.arange(self.ny))
        return self.node_index(self.nx - 1, np.arange(self.ny))

    def nodes_in_cells(self, first: int, count: int) -> np.ndarray:
        """Flat indices of the nodes in the closed slab of cells [first, first + count)."""
        i_lo = first * self.nodes_per_cell
        i_hi = (first + count) * self.nodes_per_cell
        i, j = np.meshgrid(np.arange(i_lo, i_hi + 1), np.arange(self.ny), indexing="ij")
        return self.node_index(i.ravel(), j.ravel())

    def locate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        locate element nodes and bilinear shape values at the given points

        Returns
        -------
        Tuple[np.ndarray, np.ndarray]
            flat node indices and shape function values, both of shape (m, 4)
        """
        sx = points[:, 0] / self.h_x
        sy = points[:, 1] / self.h_y
        ex = np.clip(np.floor(sx).astype(int), 0, self.nx - 2)
        ey = np.clip(np.floor(sy).astype(int), 0, self.ny - 2)
        xi = np.clip(sx - ex, 0.0, 1.0)
        zeta = np.clip(sy - ey, 0.0, 1.0)

        nodes = np.stack(
            [
                self.node_index(ex, ey),
                self.node_index(ex + 1, ey),
                self.node_index(ex, ey + 1),
                self.node_index(ex + 1, ey + 1),
            ],
            axis=1,
        )
        shape = np.stack(
            [(1 - xi) * (1 - zeta), xi * (1 - zeta), (1 - xi) * zeta, xi * zeta], axis=1
        )
        return nodes, shape


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    bottom: FaceCondition
    top: FaceCondition
    left: FaceCondition
    right: FaceCondition
    robin_left: Optional[np.ndarray] = None
    robin_right: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        for face in (self.bottom, self.top):
            if face in (FaceCondition.Periodic, FaceCondition.Robin):
                raise ValueError(f"{face.name} is only available on lateral faces")
        if (self.left is FaceCondition.Periodic) != (self.right is FaceCondition.Periodic):
            raise ValueError("Periodic conditions must be set on both lateral faces")

    @classmethod
    def from_geometry(
        cls,
        geom: LayerGeometry,
        lateral: FaceCondition = FaceCondition.Periodic,
        robin_left: Optional[np.ndarray] = None,
        robin_right: Optional[np.ndarray] = None,
    ) -> "BoundarySpec":
        return cls(
            bottom=FaceCondition.from_boundary(geom.bc_bottom),
            top=FaceCondition.from_boundary(geom.bc_top),
            left=lateral,
            right=lateral,
            robin_left=robin_left,
            robin_right=robin_right,
        )

    def condition(self, face: Face) -> FaceCondition:
        return {
            Face.Bottom: self.bottom,
            Face.Top: self.top,
            Face.Left: self.left,
            Face.Right: self.right,
        }[face]

    def describe(self) -> Dict[str, str]:
        return {face.name.lower(): self.condition(face).name for face in Face}


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    surface: sp.csr_matrix
    bc_meta: Optional[BoundarySpec] = None
    # full node index -> degree of freedom, -1 for eliminated nodes
    dof_map: Optional[np.ndarray] = None
    grid: Optional[Grid] = None

    @classmethod
    def from_pencil(
        cls, stiffness: sp.spmatrix, mass: sp.spmatrix, surface: Optional[sp.spmatrix] = None
    ) -> "DiscreteOperator":
        stiffness = sp.csr_matrix(stiffness, dtype=float)
        mass = sp.csr_matrix(mass, dtype=float)
        if surface is None:
            surface = sp.csr_matrix(stiffness.shape)
        return cls(stiffness=stiffness, mass=mass, surface=sp.csr_matrix(surface, dtype=float))

    @property
    def n_dofs(self) -> int:
        return self.stiffness.shape[0]

    @cached_property
    def hamiltonian(self) -> sp.csr_matrix:
        return (self.stiffness - self.surface).tocsr()

    @cached_property
    def mass_lu(self):
        return splu(self.mass.tocsc())

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        return np.asarray(self.mass @ np.ones(self.n_dofs)).ravel()

    def expand(self, vectors: np.ndarray) -> np.ndarray:
        """Map degree-of-freedom vectors back onto every grid node."""
        if self.dof_map is None:
            return np.asarray(vectors)

        vectors = np.asarray(vectors)
        free = self.dof_map >= 0
        full = np.zeros((len(self.dof_map),) + vectors.shape[1:], dtype=vectors.dtype)
        full[free] = vectors[self.dof_map[free]]
        return full

    def restrict(self, vectors: np.ndarray) -> np.ndarray:
        if self.dof_map is None:
            return np.asarray(vectors)

        vectors = np.asarray(vectors)
        representative = np.zeros(self.n_dofs, dtype=int)
        free = np.nonzero(self.dof_map >= 0)[0]
        representative[self.dof_map[free]] = free
        return vectors[representative]


def _stiffness_1d(count: int, step: float) -> sp.csr_matrix:
    inv = 1.0 / step
    main = np.full(count, 2.0 * inv)
    main[0] = main[-1] = inv
    off = np.full(count - 1, -inv)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _mass_1d(count: int, step: float) -> sp.csr_matrix:
    main = np.full(count, 2.0 * step / 3.0)
    main[0] = main[-1] = step / 3.0
    off = np.full(count - 1, step / 6.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _coo_sum(
    rows: np.ndarray, cols: np.ndarray, values: np.ndarray, shape: Tuple[int, int]
) -> sp.csr_matrix:
    # duplicates are summed in input order, so mirrored entries receive the
    # same sequence of contributions
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if rows.size == 0:
        return sp.csr_matrix(shape)

    keys = rows * shape[1] + cols
    unique, inverse = np.unique(keys, return_inverse=True)
    summed = np.bincount(inverse.ravel(), weights=values, minlength=len(unique))
    return sp.csr_matrix((summed, (unique // shape[1], unique % shape[1])), shape=shape)


def build_grid(geom: LayerGeometry, cells: int, nodes_per_cell: int) -> Grid:
    """
    build_grid cell-conforming tensor grid over a box of ``cells`` lattice cells

    ``nodes_per_cell`` is the number of elements per cell along x1; the
    transverse axis gets nodes_per_cell * ceil(d / |e1|) elements so both
    spacings halve together under refinement.
    """
    if nodes_per_cell < MIN_NODES_PER_CELL:
        raise GridTooCoarse(
            f"nodes_per_cell must be at least {MIN_NODES_PER_CELL}, got {nodes_per_cell}"
        )
    if cells < 1:
        raise ValueError(f"Box must have at least one cell, got {cells}")

    ratio = max(1, math.ceil(geom.d / geom.cell_length - 1e-12))
    return Grid(
        cells=int(cells),
        cell_length=geom.cell_length,
        d=geom.d,
        nodes_per_cell=int(nodes_per_cell),
        nx=cells * nodes_per_cell + 1,
        ny=nodes_per_cell * ratio + 1,
    )


def assemble_bulk(grid: Grid, geom: LayerGeometry) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    kx, mx = _stiffness_1d(grid.nx, grid.h_x), _mass_1d(grid.nx, grid.h_x)
    ky, my = _stiffness_1d(grid.ny, grid.h_y), _mass_1d(grid.ny, grid.h_y)

    stiffness = (sp.kron(kx, my) + sp.kron(mx, ky)).tocsr()
    mass = sp.kron(mx, my).tocsr()
    return stiffness, mass


def surface_quadrature_count(grid: Grid, manifold: Manifold, per_crossing: int) -> int:
    length = manifold.length()
    crossings = math.ceil(length * (1.0 / grid.h_x + 1.0 / grid.h_y))
    return per_crossing * max(crossings, 1)


def assemble_surface(
    grid: Grid,
    manifold: Manifold,
    f: CouplingFunction,
    couplings: Sequence[Tuple[int, float]],
    quad_per_crossing: int = QUAD_PER_CROSSING,
) -> sp.csr_matrix:
    """
    assemble_surface delta-interaction matrix S = sum_k eta_k Q_k

    Parameters
    ----------
    grid : Grid
        box grid
    manifold : Manifold
        reference manifold, translated by k cells for the k-th coupling
    f : CouplingFunction
        coupling function, frozen at t = eta_k for cell k
    couplings : Sequence[Tuple[int, float]]
        pairs (cell index k, eta_k = eps * omega_k)
    quad_per_crossing : int
        midpoint nodes per element crossing of the curve

    Returns
    -------
    sp.csr_matrix
        surface matrix on the full node set
    """
    couplings = sorted((int(k), float(eta)) for k, eta in couplings)
    for k, eta in couplings:
        if not 0 <= k < grid.cells:
            raise ValueError(f"Cell {k} outside the box of {grid.cells} cells")
        if abs(eta) > f.t0 * (1 + 1e-12):
            raise CouplingOutOfRange(f"Coupling {eta} in cell {k} exceeds t0={f.t0}")

    shape = (grid.n_nodes, grid.n_nodes)
    active = [(k, eta) for k, eta in couplings if eta != 0.0]
    if not active:
        return sp.csr_matrix(shape)

    y, points, weights = manifold.quadrature(
        surface_quadrature_count(grid, manifold, quad_per_crossing)
    )

    rows, cols, values = [], [], []
    for k, eta in active:
        shifted = points + np.array([k * grid.cell_length, 0.0])
        nodes, phi = grid.locate(shifted)
        coefficient = eta * weights * f.eval(y, np.full(y.shape, eta))
        local = phi[:, :, None] * phi[:, None, :]

        rows.append(np.broadcast_to(nodes[:, :, None], local.shape))
        cols.append(np.broadcast_to(nodes[:, None, :], local.shape))
        values.append(coefficient[:, None, None] * local)

    return _coo_sum(
        np.concatenate([r.ravel() for r in rows]),
        np.concatenate([c.ravel() for c in cols]),
        np.concatenate([v.ravel() for v in values]),
        shape,
    )


def _robin_face_matrix(grid: Grid, face: Face, rho: np.ndarray) -> sp.csr_matrix:
    rho = np.asarray(rho, dtype=float)
    nodes = grid.face_nodes(face)
    mid = 0.5 * (rho[:-1] + rho[1:]) * grid.h_y / 6.0

    first, second = nodes[:-1], nodes[1:]
    rows = np.concatenate([first, first, second, second])
    cols = np.concatenate([first, second, first, second])
    values = np.concatenate([2 * mid, mid, mid, 2 * mid])
    return _coo_sum(rows, cols, values, (grid.n_nodes, grid.n_nodes))


def _reduce(matrix: sp.spmatrix, dof_map: np.ndarray, n_dofs: int) -> sp.csr_matrix:
    # accumulate the upper triangle of P^T A P and mirror it
    coo = matrix.tocoo()
    rows, cols = dof_map[coo.row], dof_map[coo.col]
    keep = (rows >= 0) & (cols >= 0) & (rows <= cols)
    upper = _coo_sum(rows[keep], cols[keep], coo.data[keep], (n_dofs, n_dofs))
    return (upper + sp.triu(upper, k=1).T).tocsr()


def apply_boundary_conditions(
    op: DiscreteOperator, grid: Grid, spec: BoundarySpec
) -> DiscreteOperator:
    """
    apply_boundary_conditions eliminate Dirichlet nodes, identify periodic
    node pairs and add the Robin term -int rho u v to the stiffness

    Neumann faces need no change.
    """
    if op.dof_map is not None:
        raise ValueError("Boundary conditions were already applied")

    stiffness = op.stiffness
    for face, rho in ((Face.Left, spec.robin_left), (Face.Right, spec.robin_right)):
        if spec.condition(face) is not FaceCondition.Robin:
            continue
        if rho is None or len(rho) != grid.ny:
            raise MissingRobinData(
                f"Robin data on the {face.name.lower()} face must have {grid.ny} values"
            )
        stiffness = stiffness - _robin_face_matrix(grid, face, rho)

    target = np.arange(grid.n_nodes)
    if spec.left is FaceCondition.Periodic:
        target[grid.face_nodes(Face.Right)] = grid.face_nodes(Face.Left)

    constrained = np.zeros(grid.n_nodes, dtype=bool)
    for face in Face:
        if spec.condition(face) is FaceCondition.Dirichlet:
            constrained[grid.face_nodes(face)] = True
    constrained |= constrained[target]

    dof_map = np.full(grid.n_nodes, -1)
    representatives, numbering = np.unique(target[~constrained], return_inverse=True)
    dof_map[~constrained] = numbering.ravel()
    n_dofs = len(representatives)

    logger.debug(
        "Applied boundary conditions %s: %d nodes -> %d dofs",
        spec.describe(),
        grid.n_nodes,
        n_dofs,
    )

    return DiscreteOperator(
        stiffness=_reduce(stiffness, dof_map, n_dofs),
        mass=_reduce(op.mass, dof_map, n_dofs),
        surface=_reduce(op.surface, dof_map, n_dofs),
        bc_meta=spec,
        dof_map=dof_map,
        grid=grid,
    )


def assemble_operator(
    grid: Grid,
    geom: LayerGeometry,
    manifold: Manifold,
    f: CouplingFunction,
    couplings: Sequence[Tuple[int, float]],
    spec: BoundarySpec,
    quad_per_crossing: int = QUAD_PER_CROSSING,
) -> DiscreteOperator:
    stiffness, mass = assemble_bulk(grid, geom)
    surface = assemble_surface(grid, manifold, f, couplings, quad_per_crossing)
    full = DiscreteOperator(stiffness=stiffness, mass=mass, surface=surface, grid=grid)
    return apply_boundary_conditions(full, grid, spec)


def dump_matrices(op: DiscreteOperator, directory: str, prefix: str = "") -> None:
    """Write K, M and S as "row col value" triples with 17 significant digits."""
    os.makedirs(directory, exist_ok=True)
    for name, matrix in (
        ("stiffness", op.stiffness),
        ("mass", op.mass),
        ("surface", op.surface),
    ):
        coo = sp.coo_matrix(matrix)
        order = np.lexsort((coo.col, coo.row))
        path = os.path.join(directory, f"{prefix}{name}.txt")
        with open(path, "w", newline="\n") as file:
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                file.write(f"{r} {c} {v:.17g}\n")
        logger.info("Wrote %s (%d entries)", path, coo.nnz)
