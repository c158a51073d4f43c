# -*- coding: utf-8 -*-

import json
import math

import pytest

from deltaloc.commands import BoundaryCondition, ManifoldKind
from deltaloc.config import RunConfig, load_config, parse_config, parse_config_text, validate
from deltaloc.errors import ParseError, ValidationError


def test_defaults():
    config = parse_config(None)
    assert config.geometry.d == math.pi
    assert config.disorder.a == -1.0
    assert config.experiment.n_list == [4, 8, 16]
    assert config.seed == 0
    assert validate(config) == []

    model = config.build_model()
    assert model.geom.bc_bottom is BoundaryCondition.Dirichlet
    assert model.manifold.kind is ManifoldKind.Circle
    assert model.mode.lambda0 == pytest.approx(1.0)


def test_parse_ini_text():
    config = parse_config_text(
        """
        [geometry]
        d = pi
        bc_top = Neumann

        [experiment]
        eps = 0.02   # inline comment
        n_list = 2, 4 8
        trials = none
        require_events = no
        """.replace("        ", "")
    )
    assert config.geometry.d == math.pi
    assert config.geometry.bc_top == "neumann"
    assert config.experiment.eps == 0.02
    assert config.experiment.n_list == [2, 4, 8]
    assert config.experiment.trials is None
    assert config.experiment.require_events is False
    assert config.build_model().mode.lambda0 == pytest.approx(0.25)


def test_support_violation():
    with pytest.raises(ValidationError) as info:
        RunConfig.from_dict({"disorder": {"a": 1.2}})
    assert len(info.value.violations) == 1
    assert "support [a, 1]" in info.value.violations[0]


def test_coupling_range_violation():
    with pytest.raises(ValidationError) as info:
        RunConfig.from_dict({"coupling": {"t0": 0.1}, "experiment": {"eps": 0.2}})
    assert any("exceeds the coupling range" in v for v in info.value.violations)


def test_all_violations_are_reported():
    with pytest.raises(ValidationError) as info:
        RunConfig.from_dict(
            {
                "geometry": {"d": -1, "colour": "red"},
                "numerics": {"nodes_per_cell": "many"},
                "extra": {},
            }
        )
    messages = "\n".join(info.value.violations)
    assert "unknown section [extra]" in messages
    assert "unknown key 'colour'" in messages
    assert "nodes_per_cell" in messages
    assert "geometry.d" in messages


def test_energy_window_checks():
    with pytest.raises(ValidationError) as info:
        RunConfig.from_dict({"experiment": {"energy": 0.999, "eps": 0.1}})
    messages = "\n".join(info.value.violations)
    assert "kappa_list" not in messages
    assert "below Lambda0 - c2 eps^2" in messages

    config = RunConfig.from_dict({"experiment": {"energy": 0.9, "eps": 0.1}})
    assert config.experiment.energy == 0.9


def test_manifold_outside_cell_is_a_violation():
    with pytest.raises(ValidationError):
        RunConfig.from_dict({"manifold": {"center_x": 0.1, "radius": 0.3}})


@pytest.mark.parametrize(
    "text, line",
    [
        ("d = 1\n", 1),
        ("[geometry]\nd = 1\nd = 2\n", 3),
    ],
)
def test_parse_error_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_config_text(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}: ")


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        parse_config(str(tmp_path / "absent.ini"))


def test_ini_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[disorder]\nseed = 42\ndensity = parabolic\n")
    config = parse_config(str(path))
    assert config.seed == 42
    assert config.build_model().disorder.name == "parabolic"


def test_report_round_trip(tmp_path):
    original = RunConfig.from_dict(
        {"experiment": {"eps": 0.03, "n_list": [3, 5]}, "disorder": {"seed": 7}}
    )
    path = tmp_path / "report.json"
    path.write_text(json.dumps({"name": "ilse", "config": original.to_dict()}))

    loaded = load_config(str(path))
    assert loaded.to_dict() == original.to_dict()
    assert parse_config(str(path)).to_dict() == original.to_dict()


def test_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "geometry": \n')
    with pytest.raises(ParseError):
        load_config(str(path))

    path.write_text("[1, 2]")
    with pytest.raises(ParseError):
        load_config(str(path))


def test_with_overrides(config):
    changed = config.with_overrides(seed=9, out="elsewhere", plot=True, threads=2)
    assert changed.seed == 9
    assert changed.output.out == "elsewhere"
    assert changed.output.plot is True
    assert changed.numerics.threads == 2
    assert changed.experiment == config.experiment
    assert config.seed == 0

    with pytest.raises(ValidationError):
        config.with_overrides(threads=0)
