import copy
import hashlib
import json

import numpy as np
import pytest

from ppcdom.cli import main
from ppcdom.errors import ScenarioError
from ppcdom.harness import (PRESETS, RunLog, babble, compare, load_scenario, prepare, read_babble,
                            read_csv, record_target, run, scenario_from_dict, write_babble,
                            write_csv)
from ppcdom.harness.output import csv_header
from ppcdom.harness.runner import demo_path


# -- scenario parsing -------------------------------------------------------------

@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    sc = load_scenario(name)
    assert sc.name == name
    assert len(sc.seeds) >= 10
    assert len(sc.stages) == (1 if name == "task_a" else 2)
    plant = sc.build_plant()
    assert sc.keypoint_set(plant).n == 6


def test_fingerprint_tracks_content(small_dict):
    a = scenario_from_dict(small_dict)
    b = scenario_from_dict(copy.deepcopy(small_dict))
    small_dict["dt"] = 0.04
    c = scenario_from_dict(small_dict)
    assert a.fingerprint() == b.fingerprint() != c.fingerprint()


def _expect(data, path):
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(data)
    assert info.value.path == path
    return info.value


def test_validation_names_field(small_dict):
    d = copy.deepcopy(small_dict)
    d["stages"][0]["envelope"] = {a: {"mu0": 0.1, "mu_inf": 0.01, "alpha": 0.2} for a in "xyz"}
    d["stages"][0]["envelope"]["x"]["mu_inf"] = -1
    err = _expect(d, "stages[0].envelope.x.mu_inf")
    assert "stages[0].envelope.x.mu_inf" in str(err)

    d = copy.deepcopy(small_dict)
    d["stages"][1]["envelope"] = "task_z"
    _expect(d, "stages[1].envelope")

    d = copy.deepcopy(small_dict)
    del d["stages"][0]["duration"]
    _expect(d, "stages[0].duration")

    d = copy.deepcopy(small_dict)
    d["stages"][0]["target"] = [0.0, 0.0, 0.0]
    _expect(d, "stages[0]")

    d = copy.deepcopy(small_dict)
    d["stages"][0]["demo"][0]["twist"] = [0.0] * 11
    _expect(d, "stages[0].demo[0].twist")

    d = copy.deepcopy(small_dict)
    d["mesh"]["shape"] = "torus"
    _expect(d, "mesh")

    d = copy.deepcopy(small_dict)
    d["gains"]["damping"] = "lots"
    _expect(d, "gains.damping")

    d = copy.deepcopy(small_dict)
    d["estimator"]["babble_samples"] = 4
    _expect(d, "estimator.babble_samples")

    d = copy.deepcopy(small_dict)
    del d["grippers"]["right"]
    _expect(d, "grippers.right")

    d = copy.deepcopy(small_dict)
    d["stages"] = []
    _expect(d, "stages")


def test_load_scenario_file_errors(tmp_path):
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(bad)


def test_success_threshold(small_scenario):
    assert small_scenario.success_threshold() == pytest.approx(0.015)


# -- babbling and targets ----------------------------------------------------------

def test_record_target_restores_plant(small_scenario):
    plant = small_scenario.build_plant()
    ks = small_scenario.keypoint_set(plant)
    before = plant.state()
    targets = record_target(plant, ks, [s.demo for s in small_scenario.stages], small_scenario.dt)
    assert len(targets) == 2
    assert np.array_equal(plant.positions, before[0])
    # stage 1 pulls the grippers apart by 1 cm in total
    p0 = plant.features(ks.indices)
    assert 0.002 < np.max(np.abs(targets[0] - p0)) < 0.011
    # stage 2 lifts both grippers by 1 cm on top of stage 1
    assert np.allclose((targets[1] - targets[0]).reshape(-1, 3)[:, 2], 0.01, atol=2e-3)


def test_babble_shapes_and_restore(small_scenario):
    plant = small_scenario.build_plant()
    ks = small_scenario.keypoint_set(plant)
    before = plant.state()
    anchors = demo_path(plant, [small_scenario.stages[0].demo], small_scenario.dt)
    plant.restore(before)
    log = babble(plant, ks, 10, np.random.default_rng(0), 0.05, 0.03, anchors=anchors)
    assert log.inputs.shape == (10, 12 + 9)
    assert log.controls.shape == (10, 12) and log.velocities.shape == (10, 9)
    assert np.all(np.abs(log.controls) <= 0.03)
    assert np.array_equal(plant.positions, before[0])


def test_babble_round_trip(tmp_path, small_scenario):
    prep = prepare(small_scenario, 0)
    path = write_babble(prep.babble, tmp_path / "b.csv")
    back = read_babble(path)
    for name in ("inputs", "controls", "velocities"):
        assert np.array_equal(getattr(back, name), getattr(prep.babble, name))
    r1 = run(small_scenario, "ppc-rbf", 0, babble_log=back)
    r2 = run(small_scenario, "ppc-rbf", 0)
    assert r1.steady_state_error == r2.steady_state_error


# -- runs --------------------------------------------------------------------------

def test_run_log_contents(small_scenario):
    res = run(small_scenario, "ppc-rbf", 0)
    assert res.success and res.violation_count == 0
    t = res.log.array("t")
    # 2 s control, 0.5 s pause, 2 s control at 0.05 s
    assert len(t) == 40 + 10 + 40
    assert np.array_equal(t, 0.05 * np.arange(len(t)))
    assert res.log.phase.count("pause") == 10
    assert np.all(res.log.array("u")[40:50] == 0)
    assert res.log.t0[0] == 0.0 and res.log.t0[50] == pytest.approx(2.5)
    assert np.all(res.log.array("xi") < 1)
    control = [r for r, ph in zip(res.log.records, res.log.phase) if ph == "control"]
    assert all(r.appendix_ok and r.min_ze >= 0 for r in control)


def test_run_rejects_unknown_method(small_scenario):
    with pytest.raises(ValueError):
        run(small_scenario, "pid", 0)


def test_run_is_deterministic(tmp_path, small_scenario):
    digests = []
    for k in range(2):
        res = run(small_scenario, "ppc-broyden", 1)
        path = write_csv(res.log, tmp_path / f"r{k}.csv")
        digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_csv_round_trip(tmp_path, small_scenario):
    res = run(small_scenario, "baseline-rbf", 0, n_stages=1)
    path = write_csv(res.log, tmp_path / "run.csv")
    cols = read_csv(path)
    assert list(cols) == csv_header(9)
    assert np.allclose(cols["t"], res.log.array("t"), rtol=0, atol=1e-12)
    assert np.allclose(cols["e_4"], res.log.array("e")[:, 3], rtol=0, atol=1e-12)
    assert np.allclose(cols["u_12"], res.log.array("u")[:, 11], rtol=0, atol=1e-12)
    assert np.allclose(cols["norm_e"], res.log.norm_e, rtol=0, atol=1e-12)
    assert np.all(cols["violations"] == 0)


def test_empty_log_writes_header_only(tmp_path):
    path = write_csv(RunLog(6), tmp_path / "empty.csv")
    assert path.read_text().strip() == ",".join(csv_header(6))
    cols = read_csv(path)
    assert all(len(v) == 0 for v in cols.values())


def test_compare_summary(small_scenario):
    summary = compare(small_scenario, ["ppc-rbf", "baseline-rbf"], seeds=[1, 0], n_stages=1)
    d = summary.to_dict()
    assert d["seeds"] == [0, 1]
    assert set(d["methods"]) == {"ppc-rbf", "baseline-rbf"}
    stats = d["methods"]["ppc-rbf"]["steady_state_error"]
    assert stats["q25"] <= stats["median"] <= stats["q75"]
    assert d["methods"]["ppc-rbf"]["n_runs"] == 2
    assert "mu_inf" in d["success_definition"]
    json.dumps(d)


# -- CLI ---------------------------------------------------------------------------

@pytest.fixture
def scenario_file(tmp_path, small_dict):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(small_dict))
    return path


def test_cli_run_babble_and_determinism(tmp_path, scenario_file, capsys):
    out = tmp_path / "a.csv"
    assert main(["run", "--scenario", str(scenario_file), "--method", "ppc-rbf", "--seed", "0",
                 "--out", str(out), "--stages", "1"]) == 0
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["success"] and summary["steps"] == 40
    assert main(["babble", "--scenario", str(scenario_file), "--seed", "0", "--stages", "1",
                 "--out", str(tmp_path / "b.csv")]) == 0
    out2 = tmp_path / "c.csv"
    assert main(["run", "--scenario", str(scenario_file), "--seed", "0", "--stages", "1",
                 "--babble", str(tmp_path / "b.csv"), "--out", str(out2)]) == 0
    assert out.read_bytes() == out2.read_bytes()
    assert "success" in capsys.readouterr().out


def test_cli_compare_envelope_target(tmp_path, scenario_file):
    out = tmp_path / "cmp.json"
    assert main(["compare", "--scenario", str(scenario_file), "--method", "ppc-rbf",
                 "--method", "baseline-rbf", "--seeds", "0-1", "--stages", "1",
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["seeds"] == [0, 1] and len(data["runs"]["ppc-rbf"]) == 2

    env = tmp_path / "env.csv"
    assert main(["envelope", "--scenario", "task_b", "--out", str(env)]) == 0
    cols = read_csv(env)
    assert np.array_equal(cols["phi_a_x"], -cols["phi_b_x"])
    assert cols["mu_x"][0] == 0.1 and cols["mu_y"][0] == 0.15
    # second stage starts after 15 s of control and the 5 s pause
    assert cols["t"][np.argmax(cols["stage"] == 1)] == pytest.approx(20.0)

    tgt = tmp_path / "tgt.json"
    assert main(["demo-target", "--scenario", str(scenario_file), "--out", str(tgt)]) == 0
    data = json.loads(tgt.read_text())
    assert len(data["targets"]) == 2 and len(data["targets"][0]) == 9


def test_cli_errors_exit_2(tmp_path, scenario_file, small_dict, capsys):
    assert main(["run", "--scenario", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "x.csv")]) == 2
    small_dict["stages"][0]["envelope"] = {a: {"mu0": 0.1, "mu_inf": 0.2, "alpha": 0.2}
                                           for a in "xyz"}
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(small_dict))
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    assert "stages[0].envelope.x.mu_inf" in capsys.readouterr().err
    assert main(["run", "--scenario", str(scenario_file), "--stages", "3",
                 "--out", str(tmp_path / "x.csv")]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--scenario", str(scenario_file), "--method", "pid", "--out", "x.csv"])
