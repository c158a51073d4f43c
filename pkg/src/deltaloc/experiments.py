#!/usr/bin/env python3
# -*- coding:utf-8 -*-
"""
Seeded Monte Carlo drivers over finite boxes.

Trial t on a box of N cells draws its couplings from the stream
t + (N << 32) of the disorder seed, so every trial can be regenerated alone
and results never depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from deltaloc.assembly import Grid, build_grid, dump_matrices
from deltaloc.boxop import (
    BlockSelector,
    BoxSpec,
    assemble_box,
    count_eigenvalues_near,
    count_in_window,
    resolvent_block_norm,
)
from deltaloc.cell import CellSolution, RobinTrace, robin_trace, solve_cell
from deltaloc.config import ModelSetup, RunConfig
from deltaloc.eigensolve import lowest_eigenpairs
from deltaloc.errors import (
    CouplingOutOfRange,
    InsufficientEvents,
    InvalidModel,
    MainAssumptionViolated,
    WindowEmpty,
)
from deltaloc.estimate import Estimate, FitRecord, linear_fit
from deltaloc.model import epsilon_star, lambda1, periodic_configuration, sample_omega

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_TRIALS = {
    "min_spectrum": 100,
    "ilse": 400,
    "wegner": 2000,
    "ct": 1,
    "sigma_band": 100,
}
MIN_SPECTRUM_TRIALS = 100
MIN_EVENTS = 10


@dataclass(frozen=True, eq=False)
class CellReference:
    eps: float
    eps_star: float
    # single-site value realizing eps_star, exactly 1 or a
    omega_star: float
    solution: CellSolution = field(repr=False)
    trace: RobinTrace = field(repr=False)

    @property
    def lambda_star(self) -> float:
        return self.solution.lambda_eta


@dataclass
class TrialRecord:
    trial: int
    seed: int
    N: int
    eps: float
    lambda_1: float
    flags: Dict[str, bool] = field(default_factory=dict)

    def to_row(self, flag_names: Sequence[str]) -> Dict[str, str]:
        row = {
            "trial": str(self.trial),
            "seed": str(self.seed),
            "N": str(self.N),
            "eps": f"{self.eps:.17g}",
            "lambda_1": f"{self.lambda_1:.17g}",
        }
        for name in flag_names:
            row[name] = "1" if self.flags.get(name, False) else "0"
        return row


@dataclass(eq=False)
class ExperimentReport:
    name: str
    parameters: Dict[str, Any]
    probabilities: List[Dict[str, Any]] = field(default_factory=list)
    fits: List[FitRecord] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)
    records: List[TrialRecord] = field(default_factory=list)
    flag_names: List[str] = field(default_factory=list)
    # plotted curves: label, x, y and optional lower/upper bars
    series: List[Dict[str, Any]] = field(default_factory=list)

    def add_probability(self, label: str, estimate: Estimate, **coordinates: Any) -> None:
        entry = {"label": label}
        entry.update(coordinates)
        entry.update(estimate.to_dict())
        self.probabilities.append(entry)

    def probability(self, label: str, **coordinates: Any) -> Dict[str, Any]:
        for entry in self.probabilities:
            if entry["label"] == label and all(entry.get(k) == v for k, v in coordinates.items()):
                return entry
        raise KeyError(f"No probability {label!r} at {coordinates}")

    def fit(self, name: str) -> FitRecord:
        for record in self.fits:
            if record.name == name:
                return record
        raise KeyError(f"No fit named {name!r}")

    def to_dict(self, config: Optional[RunConfig] = None) -> Dict[str, Any]:
        data = {
            "name": self.name,
            "parameters": self.parameters,
            "empirical_probabilities": self.probabilities,
            "fits": [f.to_dict() for f in self.fits],
            "results": self.results,
            "provenance": self.provenance,
        }
        if config is not None:
            data["config"] = config.to_dict()
        return data


class ExperimentContext:
    """
    Model, numerics and cached cell references shared by the experiment
    drivers of one run.
    """

    def __init__(self, config: RunConfig, model: Optional[ModelSetup] = None):
        self.config = config
        self.model = model or config.build_model()
        if self.model.manifold.oracle_only:
            raise InvalidModel("The separable line is only available to the oracle")

        numerics = config.numerics
        self.nodes_per_cell = numerics.nodes_per_cell
        self.tol = numerics.tol
        self.quad_per_crossing = numerics.quad_per_crossing
        self.threads = numerics.threads
        self.dump_directory: Optional[str] = None

        self._grids: Dict[int, Grid] = {}
        self._references: Dict[float, CellReference] = {}
        self._lock = threading.Lock()

    @property
    def geom(self):
        return self.model.geom

    @property
    def disorder(self):
        return self.model.disorder

    @property
    def lambda0(self) -> float:
        return self.model.mode.lambda0

    @property
    def ceiling(self) -> float:
        return self.lambda0 + self.config.numerics.ceiling_margin

    @cached_property
    def lambda1(self) -> float:
        return lambda1(
            self.model.manifold,
            self.model.coupling,
            self.model.mode,
            self.config.numerics.quadrature_order,
        )

    def grid(self, cells: int) -> Grid:
        with self._lock:
            if cells not in self._grids:
                self._grids[cells] = build_grid(self.geom, cells, self.nodes_per_cell)
            return self._grids[cells]

    def solve_cell(self, eta: float) -> CellSolution:
        return solve_cell(
            self.geom,
            self.model.manifold,
            self.model.coupling,
            eta,
            grid=self.grid(1),
            tol=self.tol,
            seed=self.config.seed,
            quad_per_crossing=self.quad_per_crossing,
        )

    def epsilon_star(self, eps: float) -> float:
        if eps == 0:
            return 0.0
        return epsilon_star(
            self.lambda1,
            eps,
            self.disorder.a,
            self.config.numerics.main_assumption_threshold,
        )

    def reference(self, eps: float) -> CellReference:
        if eps in self._references:
            return self._references[eps]

        if eps > self.model.coupling.t0:
            raise CouplingOutOfRange(f"eps={eps} exceeds t0={self.model.coupling.t0}")
        eps_star = self.epsilon_star(eps)
        omega_star = self.disorder.a if eps > 0 and self.lambda1 < 0 else 1.0
        solution = self.solve_cell(eps_star)
        reference = CellReference(
            eps=eps,
            eps_star=eps_star,
            omega_star=omega_star,
            solution=solution,
            trace=robin_trace(solution),
        )
        logger.info(
            "Cell reference eps=%g eps*=%g Lambda=%.12g sup|rho|=%.3g",
            eps,
            eps_star,
            reference.lambda_star,
            reference.trace.sup_norm,
        )
        self._references[eps] = reference
        return reference

    @cached_property
    def delta_grid(self) -> float:
        """Four times the discretization error of the unperturbed cell."""
        error = abs(self.solve_cell(0.0).lambda_eta - self.lambda0)
        return max(4.0 * error, 10.0 * self.tol * max(1.0, self.lambda0))

    def box(self, N: int, eps: float, omega: np.ndarray, trace: RobinTrace) -> BoxSpec:
        return BoxSpec(
            N=N, eps=eps, omega=omega, robin=trace, grid=self.grid(N), a=self.disorder.a
        )

    def operator(self, spec: BoxSpec, tag: str = ""):
        op = assemble_box(
            spec, self.geom, self.model.manifold, self.model.coupling, self.quad_per_crossing
        )
        if self.dump_directory and tag:
            dump_matrices(op, self.dump_directory, prefix=f"{tag}-")
        return op

    def ground(self, spec: BoxSpec, seed: int = 0, tag: str = "") -> float:
        op = self.operator(spec, tag)
        return lowest_eigenpairs(op, 1, tol=self.tol, seed=seed).lowest

    @staticmethod
    def stream(trial: int, N: int) -> int:
        return trial + (N << 32)

    def omega(self, trial: int, N: int) -> np.ndarray:
        return sample_omega(self.disorder, N, self.stream(trial, N))

    def map(self, function: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Ordered results, in parallel when more than one thread is configured."""
        items = list(items)
        if self.threads <= 1:
            return [function(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(function, items))

    def provenance(self) -> Dict[str, Any]:
        grid = self.grid(1)
        return {
            "seed": self.config.seed,
            "stream_rule": "trial + (N << 32)",
            "nodes_per_cell": self.nodes_per_cell,
            "h_x": grid.h_x,
            "h_y": grid.h_y,
            "tol": self.tol,
            "quad_per_crossing": self.quad_per_crossing,
            "quadrature_order": self.config.numerics.quadrature_order,
            "lambda0": self.lambda0,
            "delta_grid": self.delta_grid,
        }

    def warm_up(self, sizes: Iterable[int]) -> None:
        for N in sizes:
            self.grid(N)


def _trials(ctx: ExperimentContext, name: str, trials: Optional[int]) -> int:
    return int(trials or ctx.config.experiment.trials or DEFAULT_TRIALS[name])


def _compatible_non_increasing(estimates: Sequence[Estimate]) -> bool:
    return all(
        later.value <= earlier.value or later.compatible_with(earlier)
        for earlier, later in zip(estimates, estimates[1:])
    )


def _compatible_non_decreasing(estimates: Sequence[Estimate]) -> bool:
    return all(
        later.value >= earlier.value or later.compatible_with(earlier)
        for earlier, later in zip(estimates, estimates[1:])
    )


def _series(label: str, x: Sequence[float], estimates: Sequence[Estimate]) -> Dict[str, Any]:
    return {
        "label": label,
        "x": [float(v) for v in x],
        "y": [e.value for e in estimates],
        "lower": [e.lower for e in estimates],
        "upper": [e.upper for e in estimates],
    }


def min_spectrum_experiment(
    ctx: ExperimentContext,
    eps: Optional[float] = None,
    n_list: Optional[Sequence[int]] = None,
    trials: Optional[int] = None,
) -> ExperimentReport:
    """
    min_spectrum_experiment compare box ground energies with the cell
    energy at eps_star

    Every trial should satisfy lambda_1 >= Lambda^eps* - delta_grid, and the
    extremal periodic configuration should land within 2 delta_grid of it.
    """
    settings = ctx.config.experiment
    eps = settings.eps if eps is None else eps
    n_list = list(n_list or settings.n_list)
    trials = _trials(ctx, "min_spectrum", trials)
    if trials < MIN_SPECTRUM_TRIALS:
        raise ValueError(f"Need at least {MIN_SPECTRUM_TRIALS} trials, got {trials}")

    ref = ctx.reference(eps)
    lam_star, delta = ref.lambda_star, ctx.delta_grid
    ctx.warm_up(n_list)

    def run(item) -> TrialRecord:
        trial, N = item
        stream = ctx.stream(trial, N)
        lam = ctx.ground(ctx.box(N, eps, ctx.omega(trial, N), ref.trace), seed=stream)
        return TrialRecord(
            trial=trial,
            seed=stream,
            N=N,
            eps=eps,
            lambda_1=lam,
            flags={"above_bound": lam >= lam_star - delta},
        )

    records = ctx.map(run, [(t, N) for N in n_list for t in range(trials)])

    report = ExperimentReport(
        name="min_spectrum",
        parameters={"eps": eps, "n_list": n_list, "trials": trials},
        records=records,
        flag_names=["above_bound"],
        provenance=ctx.provenance(),
    )

    per_n: List[Dict[str, Any]] = []
    estimates: List[Estimate] = []
    for N in n_list:
        lams = np.array([r.lambda_1 for r in records if r.N == N])
        above = sum(r.flags["above_bound"] for r in records if r.N == N)
        estimate = Estimate(above, len(lams))
        estimates.append(estimate)
        report.add_probability("above_bound", estimate, N=N)
        per_n.append(
            {
                "N": N,
                "min": float(lams.min()),
                "max": float(lams.max()),
                "mean": float(lams.mean()),
            }
        )
    report.series.append(_series("P(lambda_1 >= Lambda* - delta_grid)", n_list, estimates))

    extremal: List[Dict[str, Any]] = []
    for N in n_list:
        for value in sorted({1.0, ctx.disorder.a}, reverse=True):
            omega = periodic_configuration([value], 1, N, ctx.disorder.a)
            lam = ctx.ground(ctx.box(N, eps, omega, ref.trace), tag=f"extremal-N{N}")
            extremal.append(
                {
                    "N": N,
                    "omega": value,
                    "lambda_1": lam,
                    "realizes_eps_star": value == ref.omega_star,
                }
            )

    attaining = [e["lambda_1"] for e in extremal if e["realizes_eps_star"]]
    overall = min([r.lambda_1 for r in records] + [e["lambda_1"] for e in extremal])
    report.results = {
        "lambda1": ctx.lambda1 if eps > 0 else None,
        "eps_star": ref.eps_star,
        "lambda_star": lam_star,
        "delta_grid": delta,
        "per_n": per_n,
        "extremal": extremal,
        "min_lambda_1": overall,
        "all_above_bound": all(r.flags["above_bound"] for r in records),
        "min_in_bracket": lam_star - delta <= overall <= lam_star + 2 * delta,
        "attained": bool(attaining) and all(abs(x - lam_star) <= 2 * delta for x in attaining),
    }
    logger.info(
        "min_spectrum: Lambda*=%.12g, min lambda_1=%.12g, delta_grid=%.3g",
        lam_star,
        overall,
        delta,
    )
    return report


def ilse_window(ctx: ExperimentContext, N: int, tau: int, c0: float, prefactor: float):
    """Left and right edge of the admissible disorder window for a box of N cells."""
    scale = abs(ctx.lambda1) * ctx.disorder.abs_mean()
    if scale <= 0:
        raise MainAssumptionViolated(f"Window scale |Lambda1| E|omega| vanishes: {scale}")
    left = prefactor / math.sqrt(scale) / math.sqrt(N)
    right = c0 * N ** (-2.0 / tau)
    if left > right:
        raise WindowEmpty(f"Disorder window [{left:.4g}, {right:.4g}] is empty for N={N}")
    return left, right


def ilse_experiment(
    ctx: ExperimentContext,
    eps: Optional[float] = None,
    n_list: Optional[Sequence[int]] = None,
    trials: Optional[int] = None,
    tau: Optional[int] = None,
    c0: Optional[float] = None,
    j_prefactor: Optional[float] = None,
    delta_multiples: Optional[Sequence[float]] = None,
    strict: bool = False,
) -> ExperimentReport:
    """
    ilse_experiment probability that the box ground energy stays below
    Lambda^eps* + delta(eps), delta(eps) = (eps / c0)^(tau / 4) / 2

    Without an explicit ``eps`` each box size uses the left edge of its
    window. Every multiple of delta is evaluated on the same samples, so the
    events are nested.
    """
    settings = ctx.config.experiment
    n_list = list(n_list or settings.n_list)
    trials = _trials(ctx, "ilse", trials)
    tau = settings.tau if tau is None else tau
    c0 = settings.c0 if c0 is None else c0
    prefactor = settings.j_prefactor if j_prefactor is None else j_prefactor
    multiples = sorted(settings.delta_multiples if delta_multiples is None else delta_multiples)
    if tau < 5:
        raise ValueError(f"tau must be at least 5, got {tau}")

    plan: Dict[int, Dict[str, Any]] = {}
    for N in n_list:
        left, right = ilse_window(ctx, N, tau, c0, prefactor)
        eps_n = left if eps is None else eps
        if not left <= eps_n <= right:
            raise ValueError(f"eps={eps_n} outside the window [{left}, {right}] for N={N}")
        ref = ctx.reference(eps_n)
        plan[N] = {
            "window": [left, right],
            "eps": eps_n,
            "delta": 0.5 * (eps_n / c0) ** (tau / 4.0),
            "reference": ref,
        }
    ctx.warm_up(n_list)

    names = [f"delta_x{m:g}" for m in multiples]

    def event(lam: float, threshold: float) -> bool:
        return lam < threshold if strict else lam <= threshold

    def run(item) -> TrialRecord:
        trial, N = item
        entry = plan[N]
        ref: CellReference = entry["reference"]
        stream = ctx.stream(trial, N)
        spec = ctx.box(N, entry["eps"], ctx.omega(trial, N), ref.trace)
        lam = ctx.ground(spec, seed=stream)
        return TrialRecord(
            trial=trial,
            seed=stream,
            N=N,
            eps=entry["eps"],
            lambda_1=lam,
            flags={
                name: event(lam, ref.lambda_star + m * entry["delta"])
                for name, m in zip(names, multiples)
            },
        )

    records = ctx.map(run, [(t, N) for N in n_list for t in range(trials)])

    report = ExperimentReport(
        name="ilse",
        parameters={
            "eps": eps,
            "n_list": n_list,
            "trials": trials,
            "tau": tau,
            "c0": c0,
            "j_prefactor": prefactor,
            "delta_multiples": multiples,
            "strict": strict,
        },
        records=records,
        flag_names=names,
        provenance=ctx.provenance(),
    )

    main = names[multiples.index(1.0)] if 1.0 in multiples else names[0]
    by_name: Dict[str, List[Estimate]] = {name: [] for name in names}
    for N in n_list:
        subset = [r for r in records if r.N == N]
        for name, m in zip(names, multiples):
            estimate = Estimate(sum(r.flags[name] for r in subset), len(subset))
            by_name[name].append(estimate)
            report.add_probability(name, estimate, N=N, delta=m * plan[N]["delta"])

    for name in names:
        report.series.append(_series(f"P(lambda_1 <= Lambda* + {name})", n_list, by_name[name]))

    if len(n_list) >= 2:
        report.fits.append(
            linear_fit("probability_vs_log_n", np.log(n_list), [e.value for e in by_name[main]])
        )

    nested = all(
        not r.flags[smaller] or r.flags[larger]
        for r in records
        for smaller, larger in zip(names, names[1:])
    )
    report.results = {
        "lambda1": ctx.lambda1,
        "abs_mean": ctx.disorder.abs_mean(),
        "per_n": [
            {
                "N": N,
                "window": plan[N]["window"],
                "eps": plan[N]["eps"],
                "eps_star": plan[N]["reference"].eps_star,
                "lambda_star": plan[N]["reference"].lambda_star,
                "delta": plan[N]["delta"],
            }
            for N in n_list
        ],
        "event": main,
        "non_increasing": _compatible_non_increasing(by_name[main]),
        "nested": nested,
    }
    return report


def wegner_experiment(
    ctx: ExperimentContext,
    energy: Optional[float] = None,
    kappa_list: Optional[Sequence[float]] = None,
    n_list: Optional[Sequence[int]] = None,
    trials: Optional[int] = None,
    eps: Optional[float] = None,
    c2: Optional[float] = None,
    require_events: Optional[bool] = None,
) -> ExperimentReport:
    """
    wegner_experiment probability that a box has an eigenvalue within kappa
    of a fixed energy, for every kappa on shared samples

    Parameters
    ----------
    energy : Optional[float]
        energy E <= Lambda0 - c2 eps^2, by default halfway between
        Lambda^eps* and that ceiling
    kappa_list : Optional[Sequence[float]]
        window half-widths, each at most |Lambda0 - E| / 4
    require_events : Optional[bool]
        raise InsufficientEvents when fewer than 10 events are seen at the
        smallest positive kappa
    """
    settings = ctx.config.experiment
    eps = settings.eps if eps is None else eps
    c2 = settings.c2 if c2 is None else c2
    kappas = sorted(settings.kappa_list if kappa_list is None else kappa_list)
    n_list = list(n_list or settings.n_list)
    trials = _trials(ctx, "wegner", trials)
    require_events = settings.require_events if require_events is None else require_events

    ref = ctx.reference(eps)
    top = ctx.lambda0 - c2 * eps ** 2
    if energy is None:
        energy = settings.energy if settings.energy is not None else 0.5 * (ref.lambda_star + top)
    if energy > top:
        raise ValueError(f"Energy {energy} above Lambda0 - c2 eps^2 = {top}")
    gap = abs(ctx.lambda0 - energy)
    if not kappas or kappas[-1] > 0.25 * gap:
        raise ValueError(f"Window half-widths {kappas} must not exceed |Lambda0 - E| / 4 = {gap / 4}")
    ctx.warm_up(n_list)

    names = [f"kappa_{k:g}" for k in kappas]

    def run(item) -> TrialRecord:
        trial, N = item
        stream = ctx.stream(trial, N)
        spec = ctx.box(N, eps, ctx.omega(trial, N), ref.trace)
        window = count_eigenvalues_near(
            spec,
            ctx.geom,
            ctx.model.manifold,
            ctx.model.coupling,
            energy,
            kappas[-1],
            ceiling=ctx.ceiling,
            tol=ctx.tol,
            seed=stream,
            op=ctx.operator(spec),
        )
        return TrialRecord(
            trial=trial,
            seed=stream,
            N=N,
            eps=eps,
            lambda_1=window.lowest,
            flags={
                name: count_in_window(window.eigenvalues, energy, k) > 0
                for name, k in zip(names, kappas)
            },
        )

    records = ctx.map(run, [(t, N) for N in n_list for t in range(trials)])

    w11 = ctx.disorder.w11_norm
    report = ExperimentReport(
        name="wegner",
        parameters={
            "eps": eps,
            "energy": energy,
            "kappa_list": kappas,
            "n_list": n_list,
            "trials": trials,
            "c2": c2,
        },
        records=records,
        flag_names=names,
        provenance=ctx.provenance(),
    )

    table: Dict[int, List[Estimate]] = {}
    for N in n_list:
        subset = [r for r in records if r.N == N]
        table[N] = [Estimate(sum(r.flags[name] for r in subset), len(subset)) for name in names]
        for k, estimate in zip(kappas, table[N]):
            report.add_probability("hit", estimate, N=N, kappa=k)
        report.series.append(_series(f"N={N}", kappas, table[N]))

    positive = [i for i, k in enumerate(kappas) if k > 0]
    if positive:
        first = positive[0]
        events = sum(table[N][first].successes for N in n_list)
        if events < MIN_EVENTS:
            message = (
                f"Only {events} events at kappa={kappas[first]} "
                f"(at least {MIN_EVENTS} are needed)"
            )
            if require_events:
                raise InsufficientEvents(message)
            logger.warning(message)

    for N in n_list:
        usable = [i for i in positive if table[N][i].successes > 0]
        if len(usable) < 2:
            continue
        estimates = [table[N][i] for i in usable]
        report.fits.append(
            linear_fit(
                f"log_p_vs_log_kappa_N{N}",
                np.log([kappas[i] for i in usable]),
                np.log([e.value for e in estimates]),
                weights=[e.value / max(e.upper - e.lower, 1e-12) for e in estimates],
            )
        )

    if len(n_list) >= 2:
        report.fits.append(
            linear_fit(
                "probability_vs_volume",
                [N ** 2 for N in n_list],
                [table[N][-1].value for N in n_list],
            )
        )

    shape = [
        (table[N][i].value, w11 / gap * kappas[i] * ctx.geom.d * N ** 2)
        for N in n_list
        for i in positive
    ]
    denominator = sum(b * b for _, b in shape)
    bound_constant = sum(p * b for p, b in shape) / denominator if denominator > 0 else 0.0

    report.results = {
        "lambda0": ctx.lambda0,
        "lambda_star": ref.lambda_star,
        "energy": energy,
        "w11_norm": w11,
        "bound_constant": bound_constant,
        "max_ratio": max((p / b for p, b in shape if b > 0), default=0.0),
        "monotone_in_kappa": all(
            all(x.successes <= y.successes for x, y in zip(table[N], table[N][1:]))
            for N in n_list
        ),
        "non_decreasing_in_n": all(
            _compatible_non_decreasing([table[N][i] for N in n_list]) for i in range(len(kappas))
        ),
    }
    return report


def ct_experiment(
    ctx: ExperimentContext,
    eps: Optional[float] = None,
    block_cells: Optional[int] = None,
    distances: Optional[Sequence[int]] = None,
    lambda_offsets: Optional[Sequence[float]] = None,
    probes: Optional[int] = None,
    trial: int = 0,
) -> ExperimentReport:
    """
    ct_experiment decay of resolvent blocks with the distance between them,
    at energies Lambda^eps* - offset
    """
    settings = ctx.config.experiment
    eps = settings.eps if eps is None else eps
    m = settings.block_cells if block_cells is None else block_cells
    distances = sorted(settings.distances if distances is None else distances)
    offsets = sorted(settings.lambda_offsets if lambda_offsets is None else lambda_offsets)
    probes = settings.probes if probes is None else probes
    if len(distances) < 2:
        raise ValueError("Need at least two block distances for a decay fit")

    N = 2 * m + distances[-1]
    ref = ctx.reference(eps)
    stream = ctx.stream(trial, N)
    spec = ctx.box(N, eps, ctx.omega(trial, N), ref.trace)
    op = ctx.operator(spec, tag="ct")
    ground = lowest_eigenpairs(op, 1, tol=ctx.tol, seed=stream).lowest

    def norm(lam: float, b1: BlockSelector, b2: BlockSelector) -> float:
        return resolvent_block_norm(
            spec,
            ctx.geom,
            ctx.model.manifold,
            ctx.model.coupling,
            lam,
            b1,
            b2,
            probes=probes,
            tol=ctx.tol,
            seed=stream,
            op=op,
            ground=ground,
        )

    report = ExperimentReport(
        name="ct",
        parameters={
            "eps": eps,
            "N": N,
            "block_cells": m,
            "distances": distances,
            "lambda_offsets": offsets,
            "probes": probes,
            "trial": trial,
        },
        provenance=ctx.provenance(),
    )

    curves: List[Dict[str, Any]] = []
    first = BlockSelector(0, m)
    for offset in offsets:
        lam = ref.lambda_star - offset
        whole = norm(lam, BlockSelector.whole(spec), BlockSelector.whole(spec))
        norms = [norm(lam, first, BlockSelector(m + d, m)) for d in distances]
        adjacent = norm(lam, first, BlockSelector(m, m))
        fit = linear_fit(
            f"log_norm_vs_distance_offset{offset:g}",
            [d * ctx.geom.cell_length for d in distances],
            np.log(norms),
        )
        report.fits.append(fit)
        report.series.append(
            {"label": f"lambda = Lambda* - {offset:g}", "x": list(map(float, distances)), "y": norms}
        )
        curves.append(
            {
                "offset": offset,
                "lambda": lam,
                "whole_box": whole,
                "inverse_distance": 1.0 / (ground - lam),
                "adjacent": adjacent,
                "norms": norms,
                "rate": -fit.slope,
                "r_squared": fit.r_squared,
            }
        )

    rates = [c["rate"] for c in curves]
    report.records = [
        TrialRecord(
            trial=trial,
            seed=stream,
            N=N,
            eps=eps,
            lambda_1=ground,
            flags={"decays": all(f.slope < 0 for f in report.fits)},
        )
    ]
    report.flag_names = ["decays"]
    report.results = {
        "lambda_star": ref.lambda_star,
        "ground": ground,
        "curves": curves,
        "rates": rates,
        "rate_increases": all(b > a for a, b in zip(rates, rates[1:])),
        "adjacent_below_whole": all(c["adjacent"] <= c["whole_box"] * (1 + 1e-8) for c in curves),
    }
    return report


def sigma_band_probe(
    ctx: ExperimentContext,
    eps: Optional[float] = None,
    N: Optional[int] = None,
    trials: Optional[int] = None,
    band_c: Optional[float] = None,
) -> ExperimentReport:
    """
    sigma_band_probe collect box ground energies and locate them in
    [Lambda^eps*, Lambda^eps* + C eps]

    The reported constant is the smallest C covering every trial.
    """
    settings = ctx.config.experiment
    eps = settings.eps if eps is None else eps
    N = settings.n_list[0] if N is None else N
    trials = _trials(ctx, "sigma_band", trials)
    band_c = settings.band_c if band_c is None else band_c

    ref = ctx.reference(eps)
    lam_star, delta = ref.lambda_star, ctx.delta_grid
    top = lam_star + band_c * eps
    ctx.warm_up([N])

    def run(trial: int) -> TrialRecord:
        stream = ctx.stream(trial, N)
        lam = ctx.ground(ctx.box(N, eps, ctx.omega(trial, N), ref.trace), seed=stream)
        return TrialRecord(
            trial=trial,
            seed=stream,
            N=N,
            eps=eps,
            lambda_1=lam,
            flags={"in_band": lam_star - delta <= lam <= top + delta},
        )

    records = ctx.map(run, range(trials))
    lams = np.array([r.lambda_1 for r in records])

    omega = periodic_configuration([ref.omega_star], 1, N, ctx.disorder.a)
    extremal = ctx.ground(ctx.box(N, eps, omega, ref.trace), tag=f"band-N{N}")

    report = ExperimentReport(
        name="sigma_band",
        parameters={"eps": eps, "N": N, "trials": trials, "band_c": band_c},
        records=records,
        flag_names=["in_band"],
        provenance=ctx.provenance(),
    )
    estimate = Estimate(sum(r.flags["in_band"] for r in records), trials)
    report.add_probability("in_band", estimate, N=N, band_c=band_c)
    report.series.append(_series("P(lambda_1 in band)", [band_c], [estimate]))

    spread = float(lams.max() - lams.min())
    report.results = {
        "lambda_star": lam_star,
        "eps_star": ref.eps_star,
        "delta_grid": delta,
        "band": [lam_star, top],
        "fitted_c": float((lams.max() - lam_star) / eps) if eps > 0 else 0.0,
        "median_c": float((np.median(lams) - lam_star) / eps) if eps > 0 else 0.0,
        "fraction_in_band": estimate.value,
        "nonempty": estimate.successes > 0,
        "extremal_lambda_1": extremal,
        "extremal_at_bottom": abs(extremal - lam_star) <= 2 * delta,
        "spread": spread,
    }
    return report


EXPERIMENTS: Dict[str, Callable[..., ExperimentReport]] = {
    "min_spectrum": min_spectrum_experiment,
    "ilse": ilse_experiment,
    "wegner": wegner_experiment,
    "ct": ct_experiment,
    "sigma_band": sigma_band_probe,
}


def _utc_now_compact() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%SUTC")


def run_directory(out: str, name: str) -> str:
    """Fresh directory ``<out>/<name>-<timestamp>``."""
    base = os.path.join(out, f"{name}-{_utc_now_compact()}")
    path, suffix = base, 1
    while os.path.exists(path):
        path = f"{base}-{suffix}"
        suffix += 1
    os.makedirs(path)
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _write_json_atomic(path: str, payload: Dict[str, Any]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as file:
        file.write(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    os.replace(tmp, path)


def _write_csv(path: str, rows: List[Dict[str, str]], fieldnames: List[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(file, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})


def write_plot(report: ExperimentReport, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "deltaloc"

    fig, ax = plt.subplots(figsize=(6, 4))
    for curve in report.series:
        x, y = np.asarray(curve["x"]), np.asarray(curve["y"])
        if "lower" in curve:
            bars = np.vstack([y - np.asarray(curve["lower"]), np.asarray(curve["upper"]) - y])
            ax.errorbar(x, y, yerr=bars, marker="o", capsize=3, label=curve["label"])
        else:
            ax.plot(x, y, marker="o", label=curve["label"])

    if report.name == "ct":
        ax.set_yscale("log")
        ax.set_xlabel("block distance (cells)")
        ax.set_ylabel("resolvent block norm")
    else:
        ax.set_ylabel("probability")
        ax.set_xlabel({"wegner": "kappa", "sigma_band": "C"}.get(report.name, "N"))
        if report.name == "wegner":
            ax.set_xscale("log")
    ax.set_title(report.name)
    if report.series:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_report(
    report: ExperimentReport,
    directory: str,
    config: Optional[RunConfig] = None,
    plot: bool = False,
) -> Dict[str, str]:
    """
    write_report store report.json, raw.csv and optionally plot.svg

    Returns
    -------
    Dict[str, str]
        written paths by file kind
    """
    os.makedirs(directory, exist_ok=True)
    paths = {
        "report": os.path.join(directory, "report.json"),
        "raw": os.path.join(directory, "raw.csv"),
    }
    _write_json_atomic(paths["report"], report.to_dict(config))

    fieldnames = ["trial", "seed", "N", "eps", "lambda_1"] + list(report.flag_names)
    _write_csv(paths["raw"], [r.to_row(report.flag_names) for r in report.records], fieldnames)

    if plot:
        paths["plot"] = os.path.join(directory, "plot.svg")
        write_plot(report, paths["plot"])

    logger.info("Wrote %s results to %s", report.name, directory)
    return paths
