#!/usr/bin/env python3
# -*- coding:utf-8 -*-

from __future__ import annotations

import inspect
import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence, TypeVar, Union, overload

import numpy as np

from deltaloc.assembly import dump_matrices
from deltaloc.cell import (
    eta_sweep,
    perturbation_slope,
    robin_trace,
    separable_line_oracle,
    solve_cell,
)
from deltaloc.commands import Command
from deltaloc.config import RunConfig
from deltaloc.eigensolve import EigenResult, lowest_eigenpairs
from deltaloc.experiments import (
    ExperimentContext,
    ExperimentReport,
    ct_experiment,
    ilse_experiment,
    min_spectrum_experiment,
    sigma_band_probe,
    wegner_experiment,
)
from deltaloc.model import CouplingFunction, Manifold

logger = logging.getLogger(__name__)


R = TypeVar("R")


class ExperimentService:
    """
    Dispatches named commands to the cell, box, oracle and experiment
    operations of one run configuration.
    """

    def __init__(self, config: RunConfig, dump_directory: Optional[str] = None):
        self.config = config
        self.dump_directory = dump_directory
        self._context: Optional[ExperimentContext] = None

    @property
    def context(self) -> ExperimentContext:
        if self._context is None:
            self._context = ExperimentContext(self.config)
            self._context.dump_directory = self.dump_directory
        return self._context

    def _eta_grid(self, eps: float) -> np.ndarray:
        a = self.config.disorder.a
        points = self.config.experiment.eta_points
        if eps == 0:
            return np.zeros(1)
        return np.linspace(eps * a, eps, points)

    # expose service methods
    def exposed_cell(
        self, etas: Optional[Sequence[float]] = None, trace: bool = False
    ) -> List[Dict[str, float]]:
        """
        exposed_cell cell ground energies over a range of couplings

        Parameters
        ----------
        etas : Optional[Sequence[float]]
            couplings, by default ``eta_points`` values spanning [eps a, eps]
        trace : bool
            add the sup norm of the lateral Robin trace

        Returns
        -------
        List[Dict[str, float]]
            one row per coupling with keys eta, lambda_eta, residual and
            optionally rho_sup
        """
        ctx = self.context
        etas = self._eta_grid(self.config.experiment.eps) if etas is None else etas
        solutions = eta_sweep(
            ctx.geom,
            ctx.model.manifold,
            ctx.model.coupling,
            ctx.grid(1),
            list(etas),
            threads=ctx.threads,
            tol=ctx.tol,
            seed=self.config.seed,
            quad_per_crossing=ctx.quad_per_crossing,
        )

        rows: List[Dict[str, float]] = []
        for solution in solutions:
            row = {
                "eta": float(solution.eta),
                "lambda_eta": solution.lambda_eta,
                "residual": solution.residual,
            }
            if trace:
                row["rho_sup"] = robin_trace(solution).sup_norm
            rows.append(row)
        return rows

    def exposed_slope(self, etas: Optional[Sequence[float]] = None) -> Dict[str, float]:
        ctx = self.context
        if etas is None:
            step = 1e-3 * ctx.model.coupling.t0
            etas = [-2 * step, -step, step, 2 * step]
        slope = perturbation_slope(
            ctx.geom,
            ctx.model.manifold,
            ctx.model.coupling,
            ctx.grid(1),
            etas,
            threads=ctx.threads,
            tol=ctx.tol,
            quad_per_crossing=ctx.quad_per_crossing,
        )
        return {"slope": slope, "lambda1": ctx.lambda1}

    def exposed_box(
        self,
        cells: int,
        eps: Optional[float] = None,
        omega: Optional[Sequence[float]] = None,
        trial: int = 0,
        eigenvalues: int = 1,
    ) -> EigenResult:
        """
        exposed_box lowest eigenpairs of one box

        Without ``omega`` the couplings are drawn from the stream of ``trial``.
        """
        ctx = self.context
        eps = self.config.experiment.eps if eps is None else eps
        if omega is None:
            omega = ctx.omega(trial, cells)
        elif len(omega) != cells:
            raise ValueError(f"Expected {cells} couplings, got {len(omega)}")

        ref = ctx.reference(eps)
        spec = ctx.box(cells, eps, np.asarray(omega, dtype=float), ref.trace)
        op = ctx.operator(spec)
        if self.dump_directory:
            dump_matrices(op, self.dump_directory)
        return lowest_eigenpairs(
            op, eigenvalues, tol=ctx.tol, seed=ctx.stream(trial, cells)
        )

    def exposed_min_spectrum(self, **kwargs: Any) -> ExperimentReport:
        return min_spectrum_experiment(self.context, **kwargs)

    def exposed_ilse(self, **kwargs: Any) -> ExperimentReport:
        return ilse_experiment(self.context, **kwargs)

    def exposed_wegner(self, **kwargs: Any) -> ExperimentReport:
        return wegner_experiment(self.context, **kwargs)

    def exposed_ct(self, **kwargs: Any) -> ExperimentReport:
        return ct_experiment(self.context, **kwargs)

    def exposed_sigma_band(self, **kwargs: Any) -> ExperimentReport:
        return sigma_band_probe(self.context, **kwargs)

    def exposed_oracle(
        self, sigmas: Optional[Sequence[float]] = None, fem: bool = False
    ) -> List[Dict[str, float]]:
        """
        exposed_oracle line-interaction ground energies from the matching
        condition, optionally next to the finite element value
        """
        model = self.config.build_model()
        geom = model.geom
        sigmas = list(self.config.oracle.sigma_list if sigmas is None else sigmas)
        height = self.config.oracle.height_fraction * geom.d

        line = Manifold.separable_line(height, geom.cell_length)
        f = CouplingFunction.constant(1.0, max([1.0] + [abs(s) for s in sigmas]))
        numerics = self.config.numerics

        rows: List[Dict[str, float]] = []
        for sigma in sigmas:
            row = {"sigma": float(sigma), "lambda": separable_line_oracle(geom, height, sigma)}
            if fem:
                solution = solve_cell(
                    geom,
                    line,
                    f,
                    sigma,
                    nodes_per_cell=numerics.nodes_per_cell,
                    tol=numerics.tol,
                    seed=self.config.seed,
                    quad_per_crossing=numerics.quad_per_crossing,
                )
                row["lambda_fem"] = solution.lambda_eta
                row["relative_error"] = abs(solution.lambda_eta - row["lambda"]) / max(
                    1.0, abs(row["lambda"])
                )
            logger.info("Oracle sigma=%g: %s", sigma, row)
            rows.append(row)
        return rows

    def _invoke(self, attr: Any, *args: Any, **kwargs: Any) -> Any:
        try:
            if inspect.isfunction(attr):
                return attr(self, *args, **kwargs)
            return attr(*args, **kwargs)
        except Exception:
            logger.exception(
                "Error _invoke(attr=%s, *args=%s, **kwargs=%s)", attr, args, kwargs
            )
            raise

    def _find_attribute(self, name: str):
        exposed = f"exposed_{name.replace('-', '_')}"

        attr = inspect.getattr_static(self, exposed, None)
        if attr is not None:
            return attr

        return getattr(self, exposed, None)

    def _execute_batch(self, commands: Iterable[Command[R]]) -> List[R]:
        commands = list(commands)

        # resolve every command before running anything
        invalid_commands: List[str] = []
        resolved: List[Any] = []
        for command in commands:
            attr = self._find_attribute(command.name)

            if attr is None:
                invalid_commands.append(command.name)
            else:
                resolved.append(attr)

        if invalid_commands:
            raise ValueError(f"Found invalid commands: {invalid_commands}")

        logger.debug("Batch commands received:")
        for command, function in zip(commands, resolved):
            logger.debug(
                "  %s %r (args=%s, kwargs=%s)",
                command.name,
                function,
                command.args,
                command.kwargs,
            )

        return [
            self._invoke(function, *command.args, **command.kwargs)
            for command, function in zip(commands, resolved)
        ]

    @overload
    def exposed_batch_commands(self, commands: Command[R]) -> R:
        ...

    @overload
    def exposed_batch_commands(self, commands: Iterable[Command[R]]) -> List[R]:
        ...

    def exposed_batch_commands(
        self, commands: Union[Command[R], Iterable[Command[R]]]
    ) -> Union[R, List[R]]:
        if isinstance(commands, Command):
            return self._execute_batch([commands])[0]

        return self._execute_batch(commands)
