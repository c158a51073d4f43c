#!/usr/bin/env python3
# -*- coding:utf-8 -*-
"""
Run configuration: INI-style sections read with configparser, or the
``config`` object of a previous report.json.

Every violation is collected before anything is computed.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from deltaloc.commands import BoundaryCondition
from deltaloc.common import DELTALOC_OUTDIR, DELTALOC_THREADS
from deltaloc.errors import DeltaLocError, ParseError, ValidationError
from deltaloc.model import (
    CouplingFunction,
    Disorder,
    LayerGeometry,
    Manifold,
    TransverseMode,
    transverse_mode,
)

logger = logging.getLogger(__name__)

Converter = Callable[[Any], Any]


def _float(value: Any) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text == "pi":
            return math.pi
        return float(text)
    if isinstance(value, bool):
        raise ValueError(f"expected a number, got {value!r}")
    return float(value)


def _int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError(f"expected an integer, got {value!r}")
    if isinstance(value, str):
        return int(value.strip())
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


def _str(value: Any) -> str:
    if not isinstance(value, str):
        raise ValueError(f"expected text, got {value!r}")
    return value.strip().lower()


def _path(value: Any) -> str:
    if not isinstance(value, str):
        raise ValueError(f"expected a path, got {value!r}")
    return value.strip()


def _bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _list_of(convert: Converter) -> Converter:
    def parse(value: Any) -> List[Any]:
        if isinstance(value, str):
            items = [item for item in value.replace(",", " ").split() if item]
        elif isinstance(value, (list, tuple)):
            items = list(value)
        else:
            items = [value]
        return [convert(item) for item in items]

    return parse


def _optional(convert: Converter) -> Converter:
    def parse(value: Any) -> Any:
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none")):
            return None
        return convert(value)

    return parse


@dataclass
class GeometryConfig:
    d: float = math.pi
    cell_length: float = 1.0
    bc_bottom: str = "dirichlet"
    bc_top: str = "dirichlet"


@dataclass
class ManifoldConfig:
    kind: str = "circle"
    # None places the circle at the cell center
    center_x: Optional[float] = None
    center_y: Optional[float] = None
    radius: float = 0.25
    # separable line, defaults to d / 3
    height: Optional[float] = None


@dataclass
class CouplingConfig:
    # constant: f = f_const; cosine: f = f_const cos(y); linear_t: f = f_const + f_slope t
    f_kind: str = "constant"
    f_const: float = 1.0
    t0: float = 0.5
    f_slope: float = 0.0


@dataclass
class DisorderConfig:
    density: str = "smoothed_uniform"
    a: float = -1.0
    seed: int = 0
    ramp: Optional[float] = None


@dataclass
class NumericsConfig:
    nodes_per_cell: int = 24
    tol: float = 1e-10
    quadrature_order: int = 64
    quad_per_crossing: int = 8
    threads: int = DELTALOC_THREADS
    # highest resolvable energy is Lambda0 + ceiling_margin
    ceiling_margin: float = 0.5
    main_assumption_threshold: float = 1e-8


@dataclass
class ExperimentConfig:
    eps: float = 0.01
    n_list: List[int] = field(default_factory=lambda: [4, 8, 16])
    # None picks the per-experiment default
    trials: Optional[int] = None
    kappa_list: List[float] = field(default_factory=lambda: [1e-5, 3e-5, 1e-4])
    energy: Optional[float] = None
    tau: int = 5
    c0: float = 1.0
    c2: float = 1.0
    j_prefactor: float = 8.0
    delta_multiples: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    eta_points: int = 20
    block_cells: int = 1
    distances: List[int] = field(default_factory=lambda: [1, 2, 3, 4])
    lambda_offsets: List[float] = field(default_factory=lambda: [0.2, 0.4])
    band_c: float = 5.0
    probes: int = 30
    require_events: bool = True


@dataclass
class OracleConfig:
    height_fraction: float = 1.0 / 3.0
    sigma_list: List[float] = field(default_factory=lambda: [-1.0, 0.5, 2.0])


@dataclass
class OutputConfig:
    out: str = DELTALOC_OUTDIR
    plot: bool = False
    dump_matrices: bool = False


SCHEMA: Dict[str, Tuple[type, Dict[str, Converter]]] = {
    "geometry": (
        GeometryConfig,
        {"d": _float, "cell_length": _float, "bc_bottom": _str, "bc_top": _str},
    ),
    "manifold": (
        ManifoldConfig,
        {
            "kind": _str,
            "center_x": _optional(_float),
            "center_y": _optional(_float),
            "radius": _float,
            "height": _optional(_float),
        },
    ),
    "coupling": (
        CouplingConfig,
        {"f_kind": _str, "f_const": _float, "t0": _float, "f_slope": _float},
    ),
    "disorder": (
        DisorderConfig,
        {"density": _str, "a": _float, "seed": _int, "ramp": _optional(_float)},
    ),
    "numerics": (
        NumericsConfig,
        {
            "nodes_per_cell": _int,
            "tol": _float,
            "quadrature_order": _int,
            "quad_per_crossing": _int,
            "threads": _int,
            "ceiling_margin": _float,
            "main_assumption_threshold": _float,
        },
    ),
    "experiment": (
        ExperimentConfig,
        {
            "eps": _float,
            "n_list": _list_of(_int),
            "trials": _optional(_int),
            "kappa_list": _list_of(_float),
            "energy": _optional(_float),
            "tau": _int,
            "c0": _float,
            "c2": _float,
            "j_prefactor": _float,
            "delta_multiples": _list_of(_float),
            "eta_points": _int,
            "block_cells": _int,
            "distances": _list_of(_int),
            "lambda_offsets": _list_of(_float),
            "band_c": _float,
            "probes": _int,
            "require_events": _bool,
        },
    ),
    "oracle": (
        OracleConfig,
        {"height_fraction": _float, "sigma_list": _list_of(_float)},
    ),
    "output": (
        OutputConfig,
        {"out": _path, "plot": _bool, "dump_matrices": _bool},
    ),
}


@dataclass(frozen=True, eq=False)
class ModelSetup:
    geom: LayerGeometry
    manifold: Manifold
    coupling: CouplingFunction
    disorder: Disorder
    mode: TransverseMode


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    disorder: DisorderConfig = field(default_factory=DisorderConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def seed(self) -> int:
        return self.disorder.seed

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping[str, Any]]) -> "RunConfig":
        config, violations = _from_sections(data)
        violations.extend(validate(config))
        if violations:
            raise ValidationError(violations)
        return config

    def with_overrides(
        self,
        seed: Optional[int] = None,
        out: Optional[str] = None,
        plot: Optional[bool] = None,
        dump_matrices: Optional[bool] = None,
        threads: Optional[int] = None,
    ) -> "RunConfig":
        config = dataclasses.replace(
            self,
            disorder=dataclasses.replace(
                self.disorder, seed=self.disorder.seed if seed is None else seed
            ),
            numerics=dataclasses.replace(
                self.numerics, threads=self.numerics.threads if threads is None else threads
            ),
            output=dataclasses.replace(
                self.output,
                out=self.output.out if out is None else out,
                plot=self.output.plot if plot is None else plot,
                dump_matrices=(
                    self.output.dump_matrices if dump_matrices is None else dump_matrices
                ),
            ),
        )
        violations = validate(config)
        if violations:
            raise ValidationError(violations)
        return config

    def build_model(self) -> ModelSetup:
        geometry = self.geometry
        geom = LayerGeometry(
            d=geometry.d,
            cell_length=geometry.cell_length,
            bc_bottom=BoundaryCondition.parse(geometry.bc_bottom),
            bc_top=BoundaryCondition.parse(geometry.bc_top),
        )

        settings = self.manifold
        if settings.kind == "circle":
            center = (
                geom.cell_length / 2 if settings.center_x is None else settings.center_x,
                geom.d / 2 if settings.center_y is None else settings.center_y,
            )
            manifold = Manifold.circle(center, settings.radius)
        elif settings.kind == "line":
            height = geom.d / 3 if settings.height is None else settings.height
            manifold = Manifold.separable_line(height, geom.cell_length)
        else:
            raise ValueError(f"Unknown manifold kind {settings.kind!r}")
        manifold.validate_in_cell(geom)

        c = self.coupling
        if c.f_kind == "constant":
            coupling = CouplingFunction.constant(c.f_const, c.t0)
        elif c.f_kind == "cosine":
            coupling = CouplingFunction.profile(lambda y: c.f_const * np.cos(y), c.t0)
        elif c.f_kind == "linear_t":
            coupling = CouplingFunction.polynomial(
                [
                    lambda y: np.full(np.shape(y), c.f_const),
                    lambda y: np.full(np.shape(y), c.f_slope),
                ],
                c.t0,
            )
        else:
            raise ValueError(f"Unknown coupling kind {c.f_kind!r}")

        disorder = Disorder.named(
            self.disorder.density, self.disorder.a, self.disorder.seed, self.disorder.ramp
        )
        return ModelSetup(
            geom=geom,
            manifold=manifold,
            coupling=coupling,
            disorder=disorder,
            mode=transverse_mode(geom),
        )


def _from_sections(
    data: Mapping[str, Mapping[str, Any]]
) -> Tuple[RunConfig, List[str]]:
    violations: List[str] = []
    sections: Dict[str, Any] = {}

    for name in data:
        if name not in SCHEMA:
            violations.append(f"unknown section [{name}]")

    for name, (section_type, converters) in SCHEMA.items():
        values: Dict[str, Any] = {}
        for key, raw in dict(data.get(name, {})).items():
            convert = converters.get(key)
            if convert is None:
                violations.append(f"[{name}] unknown key {key!r}")
                continue
            try:
                values[key] = convert(raw)
            except (TypeError, ValueError) as e:
                violations.append(f"[{name}] {key} = {raw!r}: {e}")
        sections[name] = section_type(**values)

    return RunConfig(**sections), violations


def _check(violations: List[str], condition: bool, message: str) -> None:
    if not condition:
        violations.append(message)


def validate(config: RunConfig) -> List[str]:
    """
    validate cross-field constraints of a run configuration

    Returns
    -------
    List[str]
        every violation found, empty for a valid configuration
    """
    v: List[str] = []
    g, m, c, dis = config.geometry, config.manifold, config.coupling, config.disorder
    num, exp, ora = config.numerics, config.experiment, config.oracle

    _check(v, g.d > 0, f"geometry.d = {g.d} must be positive")
    _check(v, g.cell_length > 0, f"geometry.cell_length = {g.cell_length} must be positive")
    for key in ("bc_bottom", "bc_top"):
        _check(
            v,
            getattr(g, key) in ("dirichlet", "neumann"),
            f"geometry.{key} = {getattr(g, key)!r} must be dirichlet or neumann",
        )

    _check(v, m.kind in ("circle", "line"), f"manifold.kind = {m.kind!r} must be circle or line")
    _check(v, m.radius > 0, f"manifold.radius = {m.radius} must be positive")

    _check(
        v,
        c.f_kind in ("constant", "cosine", "linear_t"),
        f"coupling.f_kind = {c.f_kind!r} must be constant, cosine or linear_t",
    )
    _check(v, c.t0 > 0, f"coupling.t0 = {c.t0} must be positive")

    _check(
        v,
        -1.0 <= dis.a < 1.0,
        f"disorder.a = {dis.a} violates -1 <= a < 1 (support [a, 1] of the "
        "single-site distribution needs a < 1)",
    )
    _check(
        v,
        dis.density in ("smoothed_uniform", "parabolic"),
        f"disorder.density = {dis.density!r} must be smoothed_uniform or parabolic",
    )
    _check(v, 0 <= dis.seed < 2 ** 64, f"disorder.seed = {dis.seed} must be an unsigned 64-bit integer")

    _check(v, num.nodes_per_cell >= 8, f"numerics.nodes_per_cell = {num.nodes_per_cell} must be at least 8")
    _check(v, 1e-12 <= num.tol <= 1e-4, f"numerics.tol = {num.tol} must lie in [1e-12, 1e-4]")
    _check(v, num.quadrature_order >= 8, f"numerics.quadrature_order = {num.quadrature_order} must be at least 8")
    _check(v, num.quad_per_crossing >= 1, "numerics.quad_per_crossing must be positive")
    _check(v, num.threads >= 1, f"numerics.threads = {num.threads} must be positive")
    _check(v, num.ceiling_margin > 0, "numerics.ceiling_margin must be positive")

    _check(v, exp.eps >= 0, f"experiment.eps = {exp.eps} must be non-negative")
    _check(
        v,
        exp.eps * max(1.0, abs(dis.a)) <= c.t0,
        f"experiment.eps = {exp.eps} exceeds the coupling range t0 = {c.t0} "
        "(|eps * omega| <= t0 is required)",
    )
    _check(v, bool(exp.n_list) and min(exp.n_list) >= 1, "experiment.n_list needs positive box sizes")
    _check(v, exp.trials is None or exp.trials >= 1, "experiment.trials must be positive")
    _check(v, all(k >= 0 for k in exp.kappa_list), "experiment.kappa_list must be non-negative")
    _check(v, exp.tau >= 5, f"experiment.tau = {exp.tau} must be at least 5")
    _check(v, exp.c0 > 0 and exp.c2 > 0, "experiment.c0 and experiment.c2 must be positive")
    _check(v, exp.j_prefactor > 0, "experiment.j_prefactor must be positive")
    _check(v, all(x >= 0 for x in exp.delta_multiples), "experiment.delta_multiples must be non-negative")
    _check(v, exp.eta_points >= 2, "experiment.eta_points must be at least 2")
    _check(v, exp.block_cells >= 1, "experiment.block_cells must be positive")
    _check(v, bool(exp.distances) and min(exp.distances) >= 0, "experiment.distances must be non-negative")
    _check(v, all(x > 0 for x in exp.lambda_offsets), "experiment.lambda_offsets must be positive")
    _check(v, exp.band_c > 0, "experiment.band_c must be positive")
    _check(v, exp.probes >= 1, "experiment.probes must be positive")

    _check(v, 0 < ora.height_fraction < 1, "oracle.height_fraction must lie in (0, 1)")
    _check(v, bool(ora.sigma_list), "oracle.sigma_list must not be empty")

    if v:
        return v

    try:
        model = config.build_model()
    except (DeltaLocError, ValueError) as e:
        return [str(e)]

    if exp.energy is not None:
        gap = abs(model.mode.lambda0 - exp.energy)
        for kappa in exp.kappa_list:
            _check(
                v,
                kappa <= 0.25 * gap,
                f"experiment.kappa_list value {kappa} exceeds |Lambda0 - E| / 4 = {0.25 * gap}",
            )
        _check(
            v,
            exp.energy <= model.mode.lambda0 - exp.c2 * exp.eps ** 2,
            f"experiment.energy = {exp.energy} must lie below Lambda0 - c2 eps^2 = "
            f"{model.mode.lambda0 - exp.c2 * exp.eps ** 2}",
        )

    return v


def _line_of(error: configparser.Error) -> Optional[int]:
    line = getattr(error, "lineno", None)
    if line is None and isinstance(error, configparser.ParsingError) and error.errors:
        line = error.errors[0][0]
    return line


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), default_section="__default__"
    )
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ParseError(e.message.splitlines()[0], _line_of(e)) from e  # type: ignore

    sections = {name: dict(parser.items(name, raw=True)) for name in parser.sections()}
    return RunConfig.from_dict(sections)


def load_config(path: str) -> RunConfig:
    """Configuration stored in a report.json, or a bare config object."""
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = json.load(file)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno) from e

    if not isinstance(data, dict):
        raise ParseError("JSON configuration must be an object")
    data = data.get("config", data)
    if not isinstance(data, dict) or not all(isinstance(s, dict) for s in data.values()):
        raise ParseError("JSON configuration must map section names to objects")
    return RunConfig.from_dict(data)


def parse_config(path: Optional[str]) -> RunConfig:
    """
    parse_config read and validate a run configuration

    Parameters
    ----------
    path : Optional[str]
        INI-style file or report.json, defaults only when None

    Raises
    ------
    ParseError
        malformed file, with the offending line when known
    ValidationError
        all violated constraints
    """
    if path is None:
        return RunConfig.from_dict({})
    if not os.path.isfile(path):
        raise ParseError(f"Configuration file {path!r} does not exist")

    if path.lower().endswith(".json"):
        config = load_config(path)
    else:
        with open(path, "r", encoding="utf-8") as file:
            config = parse_config_text(file.read())

    logger.debug("Loaded configuration from %s", path)
    return config
