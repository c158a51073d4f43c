#!/usr/bin/env python3
# -*- coding:utf-8 -*-
"""
Continuous model data: the layer, the manifold carrying the delta interaction,
the coupling function, the disorder and the closed-form transverse quantities.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from deltaloc.commands import BoundaryCondition, CouplingKind, ManifoldKind
from deltaloc.errors import (
    CouplingOutOfRange,
    InvalidModel,
    MainAssumptionViolated,
    ManifoldOutsideCell,
    QuadratureNotConverged,
    ValueOutOfSupport,
)

logger = logging.getLogger(__name__)

DENSITY_TABLE_NODES = 2 ** 12
MAIN_ASSUMPTION_THRESHOLD = 1e-8
QUADRATURE_RTOL = 1e-8

CurveMap = Callable[[np.ndarray], np.ndarray]
CouplingMap = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LayerGeometry:
    """Strip (0, d) in the transverse direction, one lattice vector along x1."""

    d: float
    cell_length: float = 1.0
    bc_bottom: BoundaryCondition = BoundaryCondition.Dirichlet
    bc_top: BoundaryCondition = BoundaryCondition.Dirichlet

    # only the 2D strip is implemented
    dimension: int = field(default=1, init=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.d) and self.d > 0):
            raise InvalidModel(f"Strip width must be positive, got d={self.d}")
        if not (math.isfinite(self.cell_length) and self.cell_length > 0):
            raise InvalidModel(
                f"Lattice cell length must be positive, got {self.cell_length}"
            )

    @property
    def lattice_basis(self) -> float:
        return self.cell_length

    @property
    def cell_volume_prime(self) -> float:
        return self.cell_length


@dataclass(frozen=True)
class Manifold:
    """
    Closed curve in the reference cell, given by a parametrization over
    [0, param_length) together with its unit normal and arclength weight.

    The translates M_k are obtained by shifting x1 by k times the cell length.
    """

    kind: ManifoldKind
    parametrization: CurveMap = field(compare=False, repr=False)
    normal: CurveMap = field(compare=False, repr=False)
    arclength_weight: CurveMap = field(compare=False, repr=False)
    param_length: float
    center: Optional[Tuple[float, float]] = None
    radius: Optional[float] = None
    height: Optional[float] = None

    @classmethod
    def circle(cls, center: Tuple[float, float], radius: float) -> "Manifold":
        if not radius > 0:
            raise InvalidModel(f"Circle radius must be positive, got {radius}")

        cx, cy = float(center[0]), float(center[1])
        r = float(radius)

        def parametrization(y: np.ndarray) -> np.ndarray:
            y = np.asarray(y, dtype=float)
            return np.stack([cx + r * np.cos(y), cy + r * np.sin(y)], axis=-1)

        def normal(y: np.ndarray) -> np.ndarray:
            y = np.asarray(y, dtype=float)
            return np.stack([np.cos(y), np.sin(y)], axis=-1)

        def arclength_weight(y: np.ndarray) -> np.ndarray:
            return np.full(np.shape(y), r)

        return cls(
            kind=ManifoldKind.Circle,
            parametrization=parametrization,
            normal=normal,
            arclength_weight=arclength_weight,
            param_length=2.0 * math.pi,
            center=(cx, cy),
            radius=r,
        )

    @classmethod
    def separable_line(cls, height: float, cell_length: float) -> "Manifold":
        """
        separable_line horizontal line x2 = height across the whole cell

        The line touches the lateral cell boundary, so it is only usable for
        the oracle comparison, never in the Monte Carlo experiments.
        """
        h = float(height)

        def parametrization(y: np.ndarray) -> np.ndarray:
            y = np.asarray(y, dtype=float)
            return np.stack([y, np.full(y.shape, h)], axis=-1)

        def normal(y: np.ndarray) -> np.ndarray:
            y = np.asarray(y, dtype=float)
            return np.stack([np.zeros(y.shape), np.ones(y.shape)], axis=-1)

        def arclength_weight(y: np.ndarray) -> np.ndarray:
            return np.ones(np.shape(y))

        return cls(
            kind=ManifoldKind.SeparableLine,
            parametrization=parametrization,
            normal=normal,
            arclength_weight=arclength_weight,
            param_length=float(cell_length),
            height=h,
        )

    @property
    def oracle_only(self) -> bool:
        return self.kind is ManifoldKind.SeparableLine

    def quadrature(self, count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        quadrature composite midpoint rule in the curve parameter

        Parameters
        ----------
        count : int
            number of nodes

        Returns
        -------
        Tuple[np.ndarray, np.ndarray, np.ndarray]
            parameter values, points of shape (count, 2) and arclength weights
        """
        step = self.param_length / count
        y = (np.arange(count) + 0.5) * step
        return y, self.parametrization(y), self.arclength_weight(y) * step

    def length(self, count: int = 256) -> float:
        _, _, weights = self.quadrature(count)
        return float(np.sum(weights))

    def distance_to_cell_boundary(self, geom: LayerGeometry) -> float:
        if self.kind is ManifoldKind.Circle:
            cx, cy = self.center  # type: ignore # set for circles
            r = self.radius  # type: ignore
            return min(cx - r, geom.cell_length - cx - r, cy - r, geom.d - cy - r)

        # a line always touches the lateral faces
        return 0.0

    def validate_in_cell(self, geom: LayerGeometry) -> None:
        if self.kind is ManifoldKind.SeparableLine:
            if not 0.0 < self.height < geom.d:  # type: ignore # set for lines
                raise ManifoldOutsideCell(
                    f"Line height {self.height} outside (0, {geom.d})"
                )
            if not math.isclose(self.param_length, geom.cell_length):
                raise ManifoldOutsideCell("Line must span exactly one lattice cell")
            return

        distance = self.distance_to_cell_boundary(geom)
        if distance <= 0.0:
            raise ManifoldOutsideCell(
                f"Circle center={self.center} radius={self.radius} is not separated "
                f"from the cell boundary (distance {distance})"
            )

        nodes = self.normal(np.linspace(0.0, self.param_length, 64, endpoint=False))
        if not np.allclose(np.linalg.norm(nodes, axis=-1), 1.0, rtol=0, atol=1e-12):
            raise InvalidModel("Manifold normal is not a unit vector")


@dataclass(frozen=True)
class CouplingFunction:
    kind: CouplingKind
    t0: float
    function: CouplingMap = field(compare=False, repr=False)
    constant_value: Optional[float] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t0) and self.t0 > 0):
            raise InvalidModel(f"Coupling range t0 must be positive, got {self.t0}")

    @classmethod
    def constant(cls, value: float, t0: float) -> "CouplingFunction":
        c = float(value)
        return cls(
            kind=CouplingKind.Constant,
            t0=t0,
            function=lambda y, t: np.full(np.broadcast(y, t).shape, c),
            constant_value=c,
        )

    @classmethod
    def profile(
        cls, g: Callable[[np.ndarray], np.ndarray], t0: float
    ) -> "CouplingFunction":
        return cls(
            kind=CouplingKind.Profile,
            t0=t0,
            function=lambda y, t: np.broadcast_to(
                g(np.asarray(y, dtype=float)), np.broadcast(y, t).shape
            ),
        )

    @classmethod
    def polynomial(
        cls, coefficients: Sequence[Callable[[np.ndarray], np.ndarray]], t0: float
    ) -> "CouplingFunction":
        """f(y, t) = sum_j coefficients[j](y) * t**j"""
        coefficients = list(coefficients)

        def function(y: np.ndarray, t: np.ndarray) -> np.ndarray:
            y, t = np.broadcast_arrays(
                np.asarray(y, dtype=float), np.asarray(t, dtype=float)
            )
            value = np.zeros(y.shape)
            for power, coefficient in enumerate(coefficients):
                value = value + coefficient(y) * t ** power
            return value

        return cls(kind=CouplingKind.PolynomialInT, t0=t0, function=function)

    @property
    def t_independent(self) -> bool:
        return self.kind is not CouplingKind.PolynomialInT

    def eval(self, y: np.ndarray, t: np.ndarray) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        if np.any(np.abs(t_arr) > self.t0 * (1 + 1e-12)):
            raise CouplingOutOfRange(
                f"Coupling {np.max(np.abs(t_arr))} exceeds t0={self.t0}"
            )
        return np.asarray(self.function(y, t_arr), dtype=float)

    __call__ = eval


@dataclass(frozen=True, eq=False)
class Disorder:
    """
    Single-site distribution as a piecewise-linear density table on [a, 1].

    The cumulative table is exact for the piecewise-linear density, sampling
    inverts it segment by segment.
    """

    nodes: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    cdf: np.ndarray = field(repr=False)
    a: float
    seed: int
    name: str = "custom"

    @classmethod
    def from_density(
        cls,
        function: Callable[[np.ndarray], np.ndarray],
        a: float,
        seed: int,
        name: str = "custom",
        count: int = DENSITY_TABLE_NODES,
    ) -> "Disorder":
        if not -1.0 <= a < 1.0:
            raise ValueOutOfSupport(f"Support edge must satisfy -1 <= a < 1, got {a}")
        if not 0 <= int(seed) < 2 ** 64:
            raise InvalidModel(f"Seed must be an unsigned 64-bit integer, got {seed}")

        nodes = np.linspace(a, 1.0, count)
        density = np.asarray(function(nodes), dtype=float)
        if density.shape != nodes.shape or not np.all(np.isfinite(density)):
            raise InvalidModel("Density must be finite on the table nodes")
        if np.any(density < 0):
            raise InvalidModel("Density must be non-negative")

        total = trapezoid(density, nodes)
        if not total > 0:
            raise InvalidModel("Density integrates to zero")
        density = density / total

        steps = np.diff(nodes)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * steps * (density[:-1] + density[1:]))])

        for array in (nodes, density, cdf):
            array.setflags(write=False)

        return cls(nodes=nodes, density=density, cdf=cdf, a=float(a), seed=int(seed), name=name)

    @classmethod
    def named(
        cls, name: str, a: float, seed: int, ramp: Optional[float] = None
    ) -> "Disorder":
        """
        named build one of the shipped densities

        smoothed_uniform: flat density with cosine ramps of width ``ramp``
        (default 1% of the support) at both edges;
        parabolic: proportional to (t - a)(1 - t)
        """
        width = 1.0 - a
        if name == "smoothed_uniform":
            w = 0.01 * width if ramp is None else float(ramp)
            if not 0 < w <= 0.5 * width:
                raise InvalidModel(f"Ramp width {w} outside (0, {0.5 * width}]")

            def function(t: np.ndarray) -> np.ndarray:
                edge = np.minimum(t - a, 1.0 - t)
                ramped = 0.5 * (1.0 - np.cos(np.pi * np.clip(edge, 0.0, w) / w))
                return np.where(edge >= w, 1.0, ramped)

        elif name == "parabolic":

            def function(t: np.ndarray) -> np.ndarray:
                return np.clip((t - a) * (1.0 - t), 0.0, None)

        else:
            raise InvalidModel(f"Unknown density {name!r}")

        return cls.from_density(function, a=a, seed=seed, name=name)

    @property
    def total_mass(self) -> float:
        return float(self.cdf[-1])

    @property
    def w11_norm(self) -> float:
        # the table density is non-negative with unit mass, its derivative is
        # piecewise constant
        return float(self.total_mass + np.sum(np.abs(np.diff(self.density))))

    def pdf(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.nodes, self.density, left=0.0, right=0.0)

    def cdf_at(self, t: np.ndarray) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), self.a, 1.0)
        index = np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, len(self.nodes) - 2)
        s = t - self.nodes[index]
        left = self.density[index]
        slope = (self.density[index + 1] - left) / (self.nodes[index + 1] - self.nodes[index])
        return self.cdf[index] + left * s + 0.5 * slope * s * s

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float) * self.total_mass
        # ties go to the left node
        index = np.clip(np.searchsorted(self.cdf, u, side="right") - 1, 0, len(self.nodes) - 2)
        step = self.nodes[index + 1] - self.nodes[index]
        left = self.density[index]
        slope = (self.density[index + 1] - left) / step
        remainder = np.clip(u - self.cdf[index], 0.0, None)

        root = np.sqrt(np.clip(left * left + 2.0 * slope * remainder, 0.0, None))
        denominator = left + root
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denominator > 0, 2.0 * remainder / denominator, 0.0)

        return np.clip(self.nodes[index] + np.clip(s, 0.0, step), self.a, 1.0)

    def mean(self) -> float:
        t, h = self.nodes, self.density
        steps = np.diff(t)
        return float(
            np.sum(
                steps
                / 6.0
                * (t[:-1] * (2 * h[:-1] + h[1:]) + t[1:] * (h[:-1] + 2 * h[1:]))
            )
        )

    def abs_mean(self) -> float:
        return float(trapezoid(np.abs(self.nodes) * self.density, self.nodes))


@dataclass(frozen=True)
class TransverseMode:
    """
    Lowest eigenpair of -d^2/dx^2 on (0, d), normalized so that the L2 norm
    on (0, d) equals 1/sqrt(|cell'|).
    """

    lambda0: float
    amplitude: float
    wavenumber: float
    shape: str
    d: float

    def psi0(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.shape == "sin":
            return self.amplitude * np.sin(self.wavenumber * x)
        if self.shape == "cos":
            return self.amplitude * np.cos(self.wavenumber * x)
        return np.full(x.shape, self.amplitude)

    def psi0_dd(self, x: np.ndarray) -> np.ndarray:
        return -self.wavenumber ** 2 * self.psi0(x)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return -self.psi0_dd(x) - self.lambda0 * self.psi0(x)


def transverse_mode(geom: LayerGeometry) -> TransverseMode:
    bottom, top = geom.bc_bottom, geom.bc_top
    d = geom.d
    amplitude = math.sqrt(2.0 / (d * geom.cell_volume_prime))

    if bottom is BoundaryCondition.Neumann and top is BoundaryCondition.Neumann:
        return TransverseMode(
            lambda0=0.0,
            amplitude=1.0 / math.sqrt(d * geom.cell_volume_prime),
            wavenumber=0.0,
            shape="const",
            d=d,
        )

    if bottom is BoundaryCondition.Dirichlet and top is BoundaryCondition.Dirichlet:
        k = math.pi / d
        shape = "sin"
    else:
        k = math.pi / (2.0 * d)
        # the sine vanishes at the Dirichlet end x = 0, the cosine at x = d
        shape = "sin" if bottom is BoundaryCondition.Dirichlet else "cos"

    return TransverseMode(lambda0=k * k, amplitude=amplitude, wavenumber=k, shape=shape, d=d)


def lambda1(
    manifold: Manifold,
    f: CouplingFunction,
    mode: TransverseMode,
    quadrature_order: int = 64,
    rtol: float = QUADRATURE_RTOL,
) -> float:
    """
    lambda1 first-order coefficient: integral of f(y, 0) Psi0^2 over the manifold

    Parameters
    ----------
    manifold : Manifold
        reference manifold M0
    f : CouplingFunction
        coupling function, evaluated at t = 0
    mode : TransverseMode
        unperturbed transverse mode
    quadrature_order : int
        midpoint nodes along the curve, at least 8
    rtol : float
        allowed relative change when the order is doubled, measured against
        the integral of |f Psi0^2|; looser than relative to |Lambda1| when f
        changes sign

    Returns
    -------
    float
        quadrature value at ``quadrature_order``
    """
    if quadrature_order < 8:
        raise ValueError(f"Quadrature order must be at least 8, got {quadrature_order}")

    def integrate(count: int) -> Tuple[float, float]:
        y, points, weights = manifold.quadrature(count)
        values = f.eval(y, np.zeros_like(y)) * mode.psi0(points[:, 1]) ** 2
        return float(np.sum(weights * values)), float(np.sum(weights * np.abs(values)))

    value, scale = integrate(quadrature_order)
    refined, _ = integrate(2 * quadrature_order)

    if abs(refined - value) > rtol * scale:
        raise QuadratureNotConverged(
            f"Lambda1 changed from {value} to {refined} when doubling the order "
            f"{quadrature_order}"
        )

    return value


def epsilon_star(
    lambda1_value: float,
    eps: float,
    a: float,
    threshold: float = MAIN_ASSUMPTION_THRESHOLD,
) -> float:
    """
    epsilon_star coupling in [eps * a, eps] minimizing the cell ground energy

    The energy form subtracts the surface term, so the cell ground energy
    behaves as Lambda0 - eta * Lambda1 for small eta: the upper end eps wins
    for Lambda1 > 0, the lower end eps * a for Lambda1 < 0.
    With a = -1 and Lambda1 = -0.3 the result is -eps.
    """
    if not eps > 0:
        raise ValueError(f"Disorder strength must be positive, got {eps}")
    if not -1.0 <= a < 1.0:
        raise ValueOutOfSupport(f"Support edge must satisfy -1 <= a < 1, got {a}")
    if abs(lambda1_value) < threshold:
        raise MainAssumptionViolated(
            f"|Lambda1| = {abs(lambda1_value)} is below the threshold {threshold}"
        )

    return eps if lambda1_value > 0 else eps * a


def sample_omega(dis: Disorder, count: int, stream_id: int) -> np.ndarray:
    if count < 1:
        raise ValueError(f"Sample count must be positive, got {count}")
    if stream_id < 0:
        raise ValueError(f"Stream id must be non-negative, got {stream_id}")

    rng = np.random.default_rng(np.random.SeedSequence([dis.seed, int(stream_id)]))
    return dis.inverse_cdf(rng.random(count))


def periodic_configuration(
    value_pattern: Sequence[float], period: int, box_cells: int, a: float = -1.0
) -> np.ndarray:
    pattern = np.asarray(value_pattern, dtype=float)
    if len(pattern) != period or period < 1:
        raise ValueError(f"Period {period} does not match pattern length {len(pattern)}")
    if box_cells < 1:
        raise ValueError(f"Box must have at least one cell, got {box_cells}")

    outside = pattern[(pattern < a) | (pattern > 1.0)]
    if outside.size:
        raise ValueOutOfSupport(f"Values {outside.tolist()} outside [{a}, 1]")

    # cyclic truncation when the period does not divide the box
    return np.resize(pattern, box_cells)
