# -*- coding: utf-8 -*-

import csv
import json
import os

import pytest

from deltaloc.config import RunConfig
from deltaloc.errors import (
    CouplingOutOfRange,
    InsufficientEvents,
    InvalidModel,
    WindowEmpty,
)
from deltaloc.experiments import (
    EXPERIMENTS,
    ExperimentContext,
    ct_experiment,
    ilse_experiment,
    ilse_window,
    min_spectrum_experiment,
    run_directory,
    sigma_band_probe,
    wegner_experiment,
    write_report,
)

# small enough for the 2-cell window to be non-empty on the coarse grid
J_PREFACTOR = 0.08


def test_context_basics(context):
    assert context.lambda0 == pytest.approx(1.0)
    assert context.ceiling == pytest.approx(1.5)
    assert context.lambda1 > 0
    assert context.epsilon_star(0.05) == pytest.approx(0.05)
    assert context.epsilon_star(0.0) == 0.0
    assert context.grid(2) is context.grid(2)
    assert 0 < context.delta_grid < 1e-2

    assert context.stream(3, 2) == 3 + (2 << 32)
    assert (context.omega(3, 2) == context.omega(3, 2)).all()

    ref = context.reference(0.05)
    assert context.reference(0.05) is ref
    assert ref.omega_star == 1.0
    assert ref.lambda_star < context.solve_cell(0.0).lambda_eta
    assert context.reference(0.0).omega_star == 1.0

    with pytest.raises(CouplingOutOfRange):
        context.reference(0.6)


@pytest.fixture
def repulsive_context():
    # f = -1 makes Lambda1 negative, so eps* = eps a
    config = RunConfig.from_dict(
        {
            "numerics": {"nodes_per_cell": 8},
            "coupling": {"f_const": -1.0},
            "disorder": {"a": -0.9},
            "experiment": {"eps": 0.01, "n_list": [2]},
        }
    )
    return ExperimentContext(config)


def test_repulsive_reference(repulsive_context):
    assert repulsive_context.lambda1 < 0
    ref = repulsive_context.reference(0.01)
    assert ref.omega_star == -0.9
    assert ref.eps_star == pytest.approx(-0.009)
    assert repulsive_context.reference(0.0).omega_star == 1.0


def test_repulsive_min_spectrum(repulsive_context):
    results = min_spectrum_experiment(repulsive_context, trials=100).results
    assert results["all_above_bound"]
    assert results["attained"]
    assert [(e["omega"], e["realizes_eps_star"]) for e in results["extremal"]] == [
        (1.0, False),
        (-0.9, True),
    ]


def test_repulsive_sigma_band(repulsive_context):
    results = sigma_band_probe(repulsive_context, N=2, trials=5).results
    assert results["extremal_at_bottom"]
    assert results["fraction_in_band"] == 1.0


def test_context_rejects_oracle_only_manifold():
    config = RunConfig.from_dict({"manifold": {"kind": "line"}})
    with pytest.raises(InvalidModel):
        ExperimentContext(config)


def test_min_spectrum(context):
    report = min_spectrum_experiment(context, n_list=[2], trials=100)
    results = report.results

    assert len(report.records) == 100
    assert results["all_above_bound"]
    assert results["min_in_bracket"]
    assert results["attained"]
    assert [e["omega"] for e in results["extremal"]] == [1.0, -1.0]
    assert report.probability("above_bound", N=2)["probability"] == 1.0
    assert results["per_n"][0]["min"] >= results["lambda_star"] - results["delta_grid"]


def test_min_spectrum_needs_enough_trials(context):
    with pytest.raises(ValueError):
        min_spectrum_experiment(context, trials=20)


def test_ilse_window(context):
    left, right = ilse_window(context, 2, 5, 1.0, J_PREFACTOR)
    assert 0 < left < right
    assert right == pytest.approx(2 ** -0.4)

    with pytest.raises(WindowEmpty):
        ilse_window(context, 2, 5, 1.0, 8.0)


def test_ilse(context):
    report = ilse_experiment(context, n_list=[2, 3], trials=20, j_prefactor=J_PREFACTOR)
    assert report.flag_names == ["delta_x0.5", "delta_x1", "delta_x2"]
    assert len(report.records) == 40
    assert report.results["nested"]
    assert report.results["event"] == "delta_x1"
    assert report.fit("probability_vs_log_n").points == 2

    per_n = report.results["per_n"]
    assert per_n[0]["eps"] > per_n[1]["eps"]
    for entry in per_n:
        left, right = entry["window"]
        assert left == entry["eps"] <= right

    entry = report.probability("delta_x1", N=2)
    assert entry["trials"] == 20


def test_ilse_explicit_eps_outside_window(context):
    with pytest.raises(ValueError):
        ilse_experiment(context, eps=0.9, n_list=[2], trials=5, j_prefactor=J_PREFACTOR)


def test_wegner(context):
    kappas = [5e-4, 1e-3, 3e-3]
    report = wegner_experiment(
        context, kappa_list=kappas, n_list=[2, 3], trials=30, require_events=False
    )
    results = report.results

    assert report.flag_names == ["kappa_0.0005", "kappa_0.001", "kappa_0.003"]
    assert len(report.records) == 60
    assert results["monotone_in_kappa"]
    assert results["energy"] < results["lambda0"]
    assert results["bound_constant"] >= 0
    assert report.fit("probability_vs_volume").points == 2

    for N in (2, 3):
        counts = [report.probability("hit", N=N, kappa=k)["successes"] for k in kappas]
        assert counts == sorted(counts)


def test_wegner_rejects_wide_windows(context):
    with pytest.raises(ValueError):
        wegner_experiment(context, kappa_list=[0.5], n_list=[2], trials=5)
    with pytest.raises(ValueError):
        wegner_experiment(context, energy=1.2, n_list=[2], trials=5)


def test_wegner_needs_events(context):
    with pytest.raises(InsufficientEvents):
        wegner_experiment(
            context, kappa_list=[1e-12], n_list=[2], trials=5, require_events=True
        )


def test_ct(context):
    report = ct_experiment(context, distances=[1, 2, 3], lambda_offsets=[0.2, 0.4], probes=20)
    results = report.results

    assert report.parameters["N"] == 5
    assert len(results["curves"]) == 2
    for curve in results["curves"]:
        norms = curve["norms"]
        assert norms == sorted(norms, reverse=True)
        assert curve["whole_box"] == pytest.approx(curve["inverse_distance"], rel=0.02)
        assert curve["rate"] > 0
    assert results["adjacent_below_whole"]
    assert results["rate_increases"]
    assert report.records[0].flags == {"decays": True}
    assert report.fit("log_norm_vs_distance_offset0.2").slope < 0


def test_ct_needs_two_distances(context):
    with pytest.raises(ValueError):
        ct_experiment(context, distances=[2])


def test_sigma_band(context):
    report = sigma_band_probe(context, N=2, trials=20)
    results = report.results

    assert results["nonempty"]
    assert results["fraction_in_band"] == 1.0
    assert results["extremal_at_bottom"]
    assert 0 <= results["median_c"] <= results["fitted_c"] <= 5.0
    assert results["band"][1] - results["band"][0] == pytest.approx(5.0 * 0.05)


def test_results_do_not_depend_on_threads(make_config):
    serial = sigma_band_probe(ExperimentContext(make_config()), N=2, trials=8)
    config = make_config().with_overrides(threads=3)
    threaded = sigma_band_probe(ExperimentContext(config), N=2, trials=8)

    assert [(r.trial, r.seed, r.flags) for r in serial.records] == [
        (r.trial, r.seed, r.flags) for r in threaded.records
    ]
    assert [r.lambda_1 for r in serial.records] == pytest.approx(
        [r.lambda_1 for r in threaded.records], rel=1e-12
    )


def test_write_report(tmp_path, config, context):
    report = sigma_band_probe(context, N=2, trials=4)
    directory = run_directory(str(tmp_path), "sigma_band")
    assert os.path.basename(directory).startswith("sigma_band-")

    paths = write_report(report, directory, config=config, plot=True)
    assert sorted(paths) == ["plot", "raw", "report"]

    with open(paths["report"]) as file:
        data = json.load(file)
    assert set(data) == {
        "name",
        "parameters",
        "empirical_probabilities",
        "fits",
        "results",
        "provenance",
        "config",
    }
    assert data["provenance"]["stream_rule"] == "trial + (N << 32)"
    assert RunConfig.from_dict(data["config"]).to_dict() == config.to_dict()

    with open(paths["raw"], newline="") as file:
        rows = list(csv.reader(file))
    assert rows[0] == ["trial", "seed", "N", "eps", "lambda_1", "in_band"]
    assert len(rows) == 5
    assert rows[1][5] in ("0", "1")
    assert float(rows[1][4]) == report.records[0].lambda_1

    assert open(paths["plot"]).read().lstrip().startswith("<?xml")


def test_run_directory_is_fresh(tmp_path):
    first = run_directory(str(tmp_path), "ct")
    second = run_directory(str(tmp_path), "ct")
    assert first != second
    assert os.path.isdir(first) and os.path.isdir(second)


def test_registry():
    assert sorted(EXPERIMENTS) == ["ct", "ilse", "min_spectrum", "sigma_band", "wegner"]
