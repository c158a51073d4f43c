# -*- coding: utf-8 -*-

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence

import deltaloc.eigensolve as eigensolve
from deltaloc.assembly import BoundarySpec, DiscreteOperator, assemble_operator, build_grid
from deltaloc.eigensolve import (
    ShiftedSolver,
    dense_reference,
    eigenvalues_below,
    from_dense,
    lowest_eigenpairs,
    mass_gram,
    shifted_solve,
    spectrum_up_to,
)
from deltaloc.errors import (
    NoConvergence,
    ProblemTooLarge,
    ShiftTooCloseToSpectrum,
    SingularMass,
)


def chain(n: int) -> DiscreteOperator:
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    return DiscreteOperator.from_pencil(
        sp.diags([off, main, off], [-1, 0, 1], format="csr"), sp.identity(n, format="csr")
    )


@pytest.fixture
def box_operator(dd_geom, offset_circle, unit_f):
    grid = build_grid(dd_geom, 2, 8)
    return assemble_operator(
        grid,
        dd_geom,
        offset_circle,
        unit_f,
        [(0, 0.6), (1, -0.4)],
        BoundarySpec.from_geometry(dd_geom),
    )


def test_identity_pencil():
    op = from_dense(np.diag(np.arange(1.0, 11.0)), np.eye(10))
    result = lowest_eigenpairs(op, 3)
    assert result.method == "dense"
    assert np.allclose(result.eigenvalues, [1.0, 2.0, 3.0])
    assert len(result) == 3
    assert np.allclose(mass_gram(result, op), np.eye(3))


def test_chain_matches_analytic_spectrum():
    n = 200
    result = lowest_eigenpairs(chain(n), 3, tol=1e-10, seed=4)
    j = np.arange(1, 4)
    expected = 2.0 - 2.0 * np.cos(j * np.pi / (n + 1))
    assert result.method in ("lobpcg", "shift-invert")
    assert np.allclose(result.eigenvalues, expected, rtol=1e-8)
    assert np.all(result.residuals <= 1e-10 * np.maximum(1.0, expected))


def test_sparse_agrees_with_dense(box_operator):
    sparse = lowest_eigenpairs(box_operator, 4, seed=1)
    dense = dense_reference(box_operator, 4)
    assert sparse.method != "dense"
    assert np.allclose(sparse.eigenvalues, dense.eigenvalues, rtol=1e-8)
    assert np.allclose(mass_gram(sparse, box_operator), np.eye(4), atol=1e-8)


def test_counts_below_threshold_agree_with_dense(box_operator):
    dense = dense_reference(box_operator).eigenvalues
    for threshold in (dense[0] - 0.1, 0.5 * (dense[2] + dense[3]), 0.5 * (dense[9] + dense[10])):
        below = eigenvalues_below(box_operator, threshold)
        assert len(below) == np.count_nonzero(dense <= threshold)

    covered = spectrum_up_to(box_operator, dense[5])
    assert covered.eigenvalues[-1] > dense[5]


def test_seed_reproducible(box_operator):
    first = lowest_eigenpairs(box_operator, 2, seed=9)
    second = lowest_eigenpairs(box_operator, 2, seed=9)
    assert np.array_equal(first.eigenvalues, second.eigenvalues)


def test_input_validation():
    op = chain(20)
    with pytest.raises(ValueError):
        lowest_eigenpairs(op, 1, tol=1e-3)
    with pytest.raises(ValueError):
        lowest_eigenpairs(op, 21)

    singular = DiscreteOperator.from_pencil(sp.identity(4), sp.diags([1.0, 0.0, 1.0, 1.0]))
    with pytest.raises(SingularMass):
        lowest_eigenpairs(singular, 1)

    with pytest.raises(ProblemTooLarge):
        dense_reference(chain(4001))


def test_shifted_solve(box_operator):
    ground = dense_reference(box_operator, 1).lowest
    rng = np.random.default_rng(0)
    rhs = rng.standard_normal(box_operator.n_dofs)

    solver = ShiftedSolver(box_operator, ground - 0.5)
    x = solver(rhs)
    matrix = box_operator.hamiltonian - (ground - 0.5) * box_operator.mass
    assert np.linalg.norm(matrix @ x - rhs) <= 1e-8 * np.linalg.norm(rhs)
    assert solver.distance_bound(x, rhs) >= 0.5 * (1 - 1e-8)

    assert np.array_equal(solver.solve(np.zeros_like(rhs)), np.zeros_like(rhs))
    assert np.allclose(shifted_solve(box_operator, ground - 0.5, rhs), x)


def test_shift_on_eigenvalue_is_rejected():
    op = from_dense(np.diag([1.0, 2.0, 3.0]), np.eye(3))
    with pytest.raises(ShiftTooCloseToSpectrum):
        ShiftedSolver(op, 2.0)


def test_shifted_solution_is_bounded_by_distance(box_operator):
    ground = dense_reference(box_operator, 1).lowest
    M = box_operator.mass.toarray()
    rng = np.random.default_rng(3)

    for distance in (0.1, 0.5, 2.0):
        rhs = rng.standard_normal(box_operator.n_dofs)
        x = shifted_solve(box_operator, ground - distance, rhs)
        x_norm = np.sqrt(x @ M @ x)
        rhs_norm = np.sqrt(rhs @ np.linalg.solve(M, rhs))
        assert x_norm <= rhs_norm / distance * (1 + 1e-8)


def test_singular_mass_factorization_is_reported():
    # positive diagonal, but rank one
    op = from_dense(np.eye(2), np.ones((2, 2)))
    with pytest.raises(SingularMass):
        shifted_solve(op, 0.0, np.array([1.0, 0.0]))


def test_shift_invert_failures_are_wrapped(monkeypatch):
    op = chain(40)
    monkeypatch.setattr(eigensolve, "_lobpcg", lambda *args: None)

    def no_convergence(*args, **kwargs):
        raise ArpackNoConvergence("ARPACK error -1: No convergence", np.array([]), np.array([]))

    monkeypatch.setattr(eigensolve, "eigsh", no_convergence)
    with pytest.raises(NoConvergence):
        lowest_eigenpairs(op, 1)

    def singular(*args, **kwargs):
        raise RuntimeError("Factor is exactly singular")

    monkeypatch.setattr(eigensolve, "eigsh", singular)
    with pytest.raises(ShiftTooCloseToSpectrum):
        lowest_eigenpairs(op, 1)
