# -*- coding: utf-8 -*-

import math

import numpy as np
import pytest

from deltaloc.assembly import build_grid
from deltaloc.boxop import (
    BlockSelector,
    BoxSpec,
    WindowCount,
    assemble_box,
    box_spectrum,
    count_eigenvalues_near,
    count_in_window,
    lowest_eigenvalue,
    resolvent_block_norm,
)
from deltaloc.cell import RobinTrace, robin_trace, solve_cell
from deltaloc.commands import FaceCondition
from deltaloc.model import CouplingFunction
from deltaloc.eigensolve import dense_reference
from deltaloc.errors import (
    MissingRobinData,
    ShiftTooCloseToSpectrum,
    ValueOutOfSupport,
    WindowTooHigh,
)

EPS = 0.05
NODES = 8


@pytest.fixture
def reference(dd_geom, circle, unit_f):
    # Lambda1 > 0 for the centered circle, so eps* = eps
    solution = solve_cell(dd_geom, circle, unit_f, EPS, nodes_per_cell=NODES)
    return solution, robin_trace(solution)


def make_box(dd_geom, trace, omega, lateral=FaceCondition.Robin):
    omega = np.asarray(omega, dtype=float)
    return BoxSpec(
        N=len(omega),
        eps=EPS,
        omega=omega,
        robin=trace,
        grid=build_grid(dd_geom, len(omega), NODES),
        lateral=lateral,
    )


def test_box_spec_validation(dd_geom, reference):
    _, trace = reference
    grid = build_grid(dd_geom, 2, NODES)
    with pytest.raises(ValueError):
        BoxSpec(N=3, eps=EPS, omega=np.zeros(3), robin=trace, grid=grid)
    with pytest.raises(ValueError):
        BoxSpec(N=2, eps=EPS, omega=np.zeros(1), robin=trace, grid=grid)
    with pytest.raises(ValueOutOfSupport):
        BoxSpec(N=2, eps=EPS, omega=np.array([0.0, 1.5]), robin=trace, grid=grid)
    with pytest.raises(ValueOutOfSupport):
        BoxSpec(N=2, eps=EPS, omega=np.array([-0.8, 0.0]), robin=trace, grid=grid, a=-0.5)
    with pytest.raises(ValueError):
        BoxSpec(N=2, eps=-EPS, omega=np.zeros(2), robin=trace, grid=grid)

    spec = BoxSpec(N=2, eps=EPS, omega=[1.0, -1.0], robin=trace, grid=grid)
    assert spec.couplings == [(0, EPS), (1, -EPS)]


def test_block_selector():
    left, right = BlockSelector(0, 2), BlockSelector(5, 1)
    assert left.stop == 2
    assert left.distance(right) == 3 == right.distance(left)
    assert left.distance(BlockSelector(2, 1)) == 0

    left.check_inside(2)
    with pytest.raises(ValueError):
        right.check_inside(5)
    with pytest.raises(ValueError):
        BlockSelector(0, 0)


@pytest.mark.parametrize("shape", ["circle", "offset_circle"])
def test_single_cell_box_reproduces_cell_energy(request, dd_geom, unit_f, shape):
    manifold = request.getfixturevalue(shape)
    solution = solve_cell(dd_geom, manifold, unit_f, EPS, nodes_per_cell=NODES)
    spec = make_box(dd_geom, robin_trace(solution), [1.0])
    assert lowest_eigenvalue(spec, dd_geom, manifold, unit_f) == pytest.approx(
        solution.lambda_eta, abs=1e-6
    )


@pytest.mark.parametrize("shape", ["circle", "offset_circle"])
def test_random_boxes_stay_above_cell_energy(request, dd_geom, unit_f, shape):
    manifold = request.getfixturevalue(shape)
    solution = solve_cell(dd_geom, manifold, unit_f, EPS, nodes_per_cell=NODES)
    trace = robin_trace(solution)
    rng = np.random.default_rng(5)
    for _ in range(5):
        spec = make_box(dd_geom, trace, rng.uniform(-1.0, 1.0, 3))
        assert lowest_eigenvalue(spec, dd_geom, manifold, unit_f) >= solution.lambda_eta - 1e-6


def test_repulsive_coupling_is_minimized_at_lower_edge(dd_geom, offset_circle):
    # Lambda1 < 0, so eps* = eps a and the extremal box holds a everywhere
    a = -0.9
    f = CouplingFunction.constant(-1.0, 1.0)
    solution = solve_cell(dd_geom, offset_circle, f, EPS * a, nodes_per_cell=NODES)
    trace = robin_trace(solution)

    def ground(omega):
        spec = BoxSpec(
            N=len(omega),
            eps=EPS,
            omega=np.asarray(omega, dtype=float),
            robin=trace,
            grid=build_grid(dd_geom, len(omega), NODES),
            a=a,
        )
        return lowest_eigenvalue(spec, dd_geom, offset_circle, f)

    assert ground([a, a]) == pytest.approx(solution.lambda_eta, abs=1e-6)
    assert ground([1.0, 1.0]) > ground([a, a])
    rng = np.random.default_rng(8)
    for _ in range(4):
        assert ground(rng.uniform(a, 1.0, 2)) >= solution.lambda_eta - 1e-6


def test_ground_energy_decreases_as_couplings_grow(dd_geom, offset_circle, unit_f):
    solution = solve_cell(dd_geom, offset_circle, unit_f, EPS, nodes_per_cell=NODES)
    trace = robin_trace(solution)
    omega = np.array([-0.6, 0.1, 0.5])
    energies = [
        lowest_eigenvalue(make_box(dd_geom, trace, omega + shift), dd_geom, offset_circle, unit_f)
        for shift in (0.0, 0.2, 0.4)
    ]
    assert energies[0] >= energies[1] >= energies[2]

    # raising a single site is enough
    raised = omega.copy()
    raised[1] = 0.9
    assert lowest_eigenvalue(
        make_box(dd_geom, trace, raised), dd_geom, offset_circle, unit_f
    ) <= energies[0]


def test_extremal_configuration_attains_minimum(dd_geom, circle, unit_f, reference):
    solution, trace = reference
    extremal = lowest_eigenvalue(make_box(dd_geom, trace, [1.0, 1.0]), dd_geom, circle, unit_f)
    other = lowest_eigenvalue(make_box(dd_geom, trace, [-1.0, -1.0]), dd_geom, circle, unit_f)
    assert extremal == pytest.approx(solution.lambda_eta, abs=1e-6)
    assert other > extremal


def test_missing_robin_data(dd_geom, circle, unit_f):
    spec = make_box(dd_geom, None, [0.5, 0.5])
    with pytest.raises(MissingRobinData):
        assemble_box(spec, dd_geom, circle, unit_f)

    short = make_box(dd_geom, RobinTrace.zero(np.zeros(5)), [0.5, 0.5])
    with pytest.raises(MissingRobinData):
        assemble_box(short, dd_geom, circle, unit_f)

    # other lateral conditions need no trace
    neumann = make_box(dd_geom, None, [0.5, 0.5], FaceCondition.Neumann)
    assert box_spectrum(neumann, dd_geom, circle, unit_f, k=2).eigenvalues.shape == (2,)


def test_count_in_window_is_closed():
    values = [0.9, 1.0, 1.1, 1.3]
    assert count_in_window(values, 1.0, 0.1) == 3
    assert count_in_window(values, 1.0, 0.0) == 1
    assert count_in_window([], 1.0, 0.1) == 0


def test_window_count_matches_dense(dd_geom, offset_circle, unit_f):
    solution = solve_cell(dd_geom, offset_circle, unit_f, EPS, nodes_per_cell=NODES)
    spec = make_box(dd_geom, robin_trace(solution), [0.3, -0.7])
    op = assemble_box(spec, dd_geom, offset_circle, unit_f)
    dense = dense_reference(op).eigenvalues

    for energy, kappa in ((dense[0], 1e-6), (0.5 * (dense[1] + dense[2]), 0.01), (dense[0] - 0.3, 0.1)):
        window = count_eigenvalues_near(
            spec, dd_geom, offset_circle, unit_f, energy, kappa, op=op
        )
        assert isinstance(window, WindowCount)
        expected = np.count_nonzero(np.abs(dense - energy) <= kappa)
        assert window.count == expected
        assert window.hit == (expected > 0)
        assert window.lowest == pytest.approx(dense[0], rel=1e-8)


def test_window_above_ceiling(dd_geom, circle, unit_f, reference):
    _, trace = reference
    spec = make_box(dd_geom, trace, [0.0, 0.0])
    with pytest.raises(WindowTooHigh):
        count_eigenvalues_near(spec, dd_geom, circle, unit_f, 1.4, 0.2, ceiling=1.5)
    with pytest.raises(ValueError):
        count_eigenvalues_near(spec, dd_geom, circle, unit_f, 0.5, -0.1)


def test_whole_box_block_norm_is_inverse_distance(dd_geom, circle, unit_f, reference):
    _, trace = reference
    spec = make_box(dd_geom, trace, [0.4, -0.2, 0.9])
    op = assemble_box(spec, dd_geom, circle, unit_f)
    ground = dense_reference(op, 1).lowest
    lam = ground - 0.3

    whole = BlockSelector.whole(spec)
    norm = resolvent_block_norm(spec, dd_geom, circle, unit_f, lam, whole, whole, op=op)
    assert norm == pytest.approx(1.0 / (ground - lam), rel=0.02)


def test_block_norms_decay_with_distance(dd_geom, circle, unit_f, reference):
    _, trace = reference
    spec = make_box(dd_geom, trace, [0.5, -0.5, 0.1, 0.8, -0.3])
    op = assemble_box(spec, dd_geom, circle, unit_f)
    ground = dense_reference(op, 1).lowest
    lam = ground - 0.4

    first = BlockSelector(0, 1)
    norms = [
        resolvent_block_norm(
            spec, dd_geom, circle, unit_f, lam, first, BlockSelector(1 + d, 1), op=op, ground=ground
        )
        for d in (1, 2, 3)
    ]
    whole = resolvent_block_norm(
        spec, dd_geom, circle, unit_f, lam, BlockSelector.whole(spec), BlockSelector.whole(spec),
        op=op, ground=ground,
    )
    assert norms[0] > norms[1] > norms[2] > 0
    assert norms[0] <= whole


def test_block_norm_is_symmetric_in_blocks(dd_geom, offset_circle, unit_f):
    solution = solve_cell(dd_geom, offset_circle, unit_f, EPS, nodes_per_cell=NODES)
    spec = make_box(dd_geom, robin_trace(solution), [0.5, -0.5, 0.1, 0.8])
    op = assemble_box(spec, dd_geom, offset_circle, unit_f)
    ground = dense_reference(op, 1).lowest
    lam = ground - 0.3

    left, right = BlockSelector(0, 1), BlockSelector(2, 2)
    forward = resolvent_block_norm(
        spec, dd_geom, offset_circle, unit_f, lam, left, right, op=op, ground=ground, probes=60
    )
    backward = resolvent_block_norm(
        spec, dd_geom, offset_circle, unit_f, lam, right, left, op=op, ground=ground, probes=60
    )
    assert backward == pytest.approx(forward, rel=0.02)


def test_block_norm_needs_energy_below_spectrum(dd_geom, circle, unit_f, reference):
    _, trace = reference
    spec = make_box(dd_geom, trace, [0.0, 0.0])
    whole = BlockSelector.whole(spec)
    with pytest.raises(ShiftTooCloseToSpectrum):
        resolvent_block_norm(spec, dd_geom, circle, unit_f, 5.0, whole, whole)
    with pytest.raises(ValueError):
        resolvent_block_norm(spec, dd_geom, circle, unit_f, 0.0, whole, BlockSelector(1, 2))
    with pytest.raises(ValueError):
        resolvent_block_norm(spec, dd_geom, circle, unit_f, 0.0, whole, whole, probes=0)


def test_spectrum_is_symmetric_in_mirrored_couplings(dd_geom, circle, unit_f, reference):
    _, trace = reference
    first = box_spectrum(make_box(dd_geom, trace, [0.9, -0.4]), dd_geom, circle, unit_f, k=3)
    second = box_spectrum(make_box(dd_geom, trace, [-0.4, 0.9]), dd_geom, circle, unit_f, k=3)
    assert np.allclose(first.eigenvalues, second.eigenvalues, rtol=1e-8)
    assert math.isfinite(first.lowest)
