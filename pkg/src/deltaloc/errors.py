#!/usr/bin/env python3
# -*- coding:utf-8 -*-

from __future__ import annotations

from typing import Iterable, List, Optional, Sequence


class DeltaLocError(Exception):
    pass


class InvalidModel(DeltaLocError, ValueError):
    pass


class ManifoldOutsideCell(InvalidModel):
    pass


class ValueOutOfSupport(DeltaLocError, ValueError):
    pass


class CouplingOutOfRange(DeltaLocError, ValueError):
    pass


class MainAssumptionViolated(DeltaLocError, ValueError):
    pass


class GridTooCoarse(DeltaLocError, ValueError):
    pass


class MissingRobinData(DeltaLocError, ValueError):
    pass


RobinMissing = MissingRobinData


class ProblemTooLarge(DeltaLocError, ValueError):
    pass


class WindowTooHigh(DeltaLocError, ValueError):
    pass


class WindowEmpty(DeltaLocError, ValueError):
    pass


class ParseError(DeltaLocError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DeltaLocError, ValueError):
    def __init__(self, violations: Iterable[str]):
        self.violations: List[str] = list(violations)
        super().__init__(
            "Invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations)
        )


class QuadratureNotConverged(DeltaLocError, RuntimeError):
    pass


class NoConvergence(DeltaLocError, RuntimeError):
    def __init__(self, max_iters: int, residuals: Sequence[float]):
        self.max_iters = max_iters
        self.residuals = list(residuals)
        super().__init__(
            f"No convergence after {max_iters} iterations, residuals {self.residuals}"
        )


class SingularMass(DeltaLocError, RuntimeError):
    pass


class ShiftTooCloseToSpectrum(DeltaLocError, RuntimeError):
    pass


class GroundStateSignChange(DeltaLocError, RuntimeError):
    pass


class GroundStateVanishesOnBoundary(DeltaLocError, RuntimeError):
    pass


class InsufficientEvents(DeltaLocError, RuntimeError):
    pass
