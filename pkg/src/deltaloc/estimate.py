#!/usr/bin/env python3
# -*- coding:utf-8 -*-

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

CONFIDENCE = 0.95


def wilson_interval(
    successes: int, trials: int, confidence: float = CONFIDENCE
) -> Tuple[float, float]:
    """
    wilson_interval score interval of a binomial proportion

    Parameters
    ----------
    successes : int
        number of events
    trials : int
        number of trials, positive
    confidence : float
        two-sided coverage

    Returns
    -------
    Tuple[float, float]
        lower and upper end, both in [0, 1]
    """
    if trials <= 0:
        raise ValueError(f"Need at least one trial, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"Invalid event count {successes} of {trials}")

    z = float(stats.norm.ppf(0.5 + 0.5 * confidence))
    p = successes / trials
    z2n = z * z / trials
    denominator = 1.0 + z2n
    center = (p + 0.5 * z2n) / denominator
    half = z * math.sqrt(p * (1.0 - p) / trials + 0.25 * z2n / trials) / denominator

    lower = min(max(0.0, center - half), p)
    upper = max(min(1.0, center + half), p)
    return lower, upper


class Estimate:
    def __init__(self, successes: int, trials: int, confidence: float = CONFIDENCE):
        self.successes = int(successes)
        self.trials = int(trials)
        self.confidence = confidence
        self.lower, self.upper = wilson_interval(self.successes, self.trials, confidence)

    @property
    def value(self) -> float:
        return self.successes / self.trials

    def compatible_with(self, other: "Estimate") -> bool:
        """Intervals overlap."""
        return self.lower <= other.upper and other.lower <= self.upper

    def to_dict(self) -> Dict[str, Any]:
        return {
            "successes": self.successes,
            "trials": self.trials,
            "probability": self.value,
            "lower": self.lower,
            "upper": self.upper,
        }

    def __str__(self) -> str:
        return f"{self.value:.4g} [{self.lower:.4g}, {self.upper:.4g}]"

    def __repr__(self) -> str:
        return f"Estimate({self.successes}, {self.trials})"


@dataclass(frozen=True)
class FitRecord:
    name: str
    slope: float
    intercept: float
    r_squared: float
    stderr: float
    points: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def linear_fit(
    name: str,
    x: Sequence[float],
    y: Sequence[float],
    weights: Optional[Sequence[float]] = None,
) -> FitRecord:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(x) != len(y):
        raise ValueError(f"Fit {name!r} needs at least two matching points")

    if weights is None:
        result = stats.linregress(x, y)
        r_squared = float(result.rvalue) ** 2
        return FitRecord(
            name=name,
            slope=float(result.slope),
            intercept=float(result.intercept),
            r_squared=r_squared if math.isfinite(r_squared) else 0.0,
            stderr=float(result.stderr),
            points=len(x),
        )

    w = np.asarray(weights, dtype=float)
    slope, intercept = np.polyfit(x, y, 1, w=w)
    predicted = slope * x + intercept
    mean = np.average(y, weights=w * w)
    total = float(np.sum(w * w * (y - mean) ** 2))
    residual = float(np.sum(w * w * (y - predicted) ** 2))
    return FitRecord(
        name=name,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=1.0 - residual / total if total > 0 else 1.0,
        stderr=math.nan,
        points=len(x),
    )
