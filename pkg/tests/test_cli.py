from pathlib import Path

import pytest
import yaml

from jamsim.cli import (EXIT_BUDGET, EXIT_CAP, EXIT_CONFIG, EXIT_IO, EXIT_OK, ConfigError, load_spec, main)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SIM_SPEC = {
    "name": "small",
    "plant": "benchmark",
    "channel": "benchmark",
    "norm": "benchmark",
    "attack": {"kind": "constant", "vstar": 0.3},
    "disturbance": {"kind": "gaussian", "std": 0.1},
    "run": {"horizon": 40, "n_runs": 50, "seed": 3, "bound": "thm2", "trajectories": [1]},
}


def write(tmp_path, doc, name="spec.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc) if isinstance(doc, dict) else doc)
    return str(path)


def run(tmp_path, mode, doc, *extra, out="out"):
    return main([mode, "--spec", write(tmp_path, doc), "--out", str(tmp_path / out), *extra])


def test_analyze_report(tmp_path, capsys):
    doc = {"plant": "benchmark", "channel": "benchmark", "norm": "benchmark", "analysis": {"v": 1.0, "kappa": 10.0}}
    assert run(tmp_path, "analyze", doc) == EXIT_OK
    text = (tmp_path / "out" / "report.txt").read_text()
    assert "first_moment: 1.292" in text and "almost_sure: 3.516" in text and "second_moment: 0.345" in text
    assert "T_star=" in text and "d_hat=" in text
    assert capsys.readouterr().out == text


def test_missing_field_is_named(tmp_path, capsys):
    doc = {"plant": "benchmark", "channel": {"c": 1, "xi": 3}, "norm": "benchmark"}
    assert run(tmp_path, "analyze", doc) == EXIT_CONFIG
    assert "channel.sigma" in capsys.readouterr().err


def test_unresolved_reference(tmp_path, capsys):
    doc = dict(SIM_SPEC, plant="other")
    assert run(tmp_path, "simulate", doc) == EXIT_CONFIG
    assert "unresolved reference" in capsys.readouterr().err


@pytest.mark.parametrize("patch,field", [
    ({"attack": {"kind": "laser"}}, "attack.kind"),
    ({"run": {"n_runs": 5}}, "run.horizon"),
    ({"run": {"horizon": 5, "n_runs": 5, "bound": "best"}}, "run.bound"),
    ({"disturbance": {"kind": "uniform"}}, "disturbance.half_width"),
    ({"mode": "analyze"}, "mode"),
])
def test_config_errors(tmp_path, capsys, patch, field):
    assert run(tmp_path, "simulate", dict(SIM_SPEC, **patch)) == EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_parse_failure(tmp_path, capsys):
    assert run(tmp_path, "analyze", "plant: [1,\n") == EXIT_CONFIG
    assert "parse failure" in capsys.readouterr().err


def test_compute_cap(tmp_path, capsys):
    doc = dict(SIM_SPEC, run=dict(SIM_SPEC["run"], compute_cap=1000))
    assert run(tmp_path, "simulate", doc) == EXIT_CAP
    assert "compute cap" in capsys.readouterr().err
    assert run(tmp_path, "simulate", SIM_SPEC, "--runs", str(10**7)) == EXIT_CAP


def test_io_errors(tmp_path, capsys):
    assert main(["analyze", "--spec", str(tmp_path / "nope.yaml")]) == EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("")
    doc = {"plant": "benchmark", "channel": "benchmark", "norm": "benchmark"}
    assert run(tmp_path, "analyze", doc, out="file/sub") == EXIT_IO


def test_missing_block_is_named(tmp_path, capsys):
    assert run(tmp_path, "analyze", {"plant": "benchmark", "channel": "benchmark"}) == EXIT_CONFIG
    assert "config error: norm:" in capsys.readouterr().err


def test_spec_required(capsys):
    assert main(["simulate"]) == EXIT_CONFIG


def test_simulate_outputs_are_reproducible(tmp_path):
    assert run(tmp_path, "simulate", SIM_SPEC, out="a") == EXIT_OK
    assert run(tmp_path, "simulate", SIM_SPEC, out="b") == EXIT_OK
    for name in ("moments.csv", "trajectory_1.csv", "seeds.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "moments.csv").read_text().splitlines()[0]
    assert header == "t,mean_norm,std_err,bound"
    assert run(tmp_path, "simulate", SIM_SPEC, "--seed", "4", out="c") == EXIT_OK
    assert (tmp_path / "a" / "moments.csv").read_bytes() != (tmp_path / "c" / "moments.csv").read_bytes()


def test_simulate_refuses_bound_for_over_budget_attack(tmp_path, capsys):
    doc = dict(SIM_SPEC, attack={"kind": "explicit", "tau1": 2, "tau2": 20, "vstar": 32.0,
                                 "budget": {"kind": "assumption2", "kappa": 10.0, "vbar": 0.3}},
               run=dict(SIM_SPEC["run"], bound="thm2"))
    assert run(tmp_path, "simulate", doc) == EXIT_BUDGET
    assert "budget" in capsys.readouterr().err


def test_verify_budget(tmp_path):
    doc = {"attack": {"kind": "explicit", "tau1": 1440, "tau2": 60, "vstar": 32},
           "verify": [{"kind": "assumption1", "kappa": 0.0, "vbar": 1.28},
                      {"kind": "assumption2", "kappa": 1228.8, "vbar": 1.28}],
           "run": {"horizon": 1600}}
    assert run(tmp_path, "verify-budget", doc) == EXIT_BUDGET
    text = (tmp_path / "out" / "budget.txt").read_text()
    assert "assumption1 kappa=0 vbar=1.28: PASS" in text
    assert "FAIL violating_window=1440,1500" in text
    doc["attack"]["tau2"] = 40
    assert run(tmp_path, "verify-budget", doc, out="ok") == EXIT_OK


def test_sleep_jam_attack_takes_gain_from_scalar_plant(tmp_path):
    doc = {"plant": {"A": [[2.0]], "B": [[1.0]], "K": [[-1.5]], "x0": [1.0]}, "channel": "benchmark",
           "norm": {"P": [[1.0]]}, "attack": {"kind": "sleep_jam", "vbar": 1.28, "rho": 0.8, "z": 10.0, "wstar": 0.5}}
    spec = load_spec(write(tmp_path, doc), "analyze")
    assert spec.strategy.params["tau2"] == 5


def test_explicit_envelope_must_be_valid(tmp_path):
    doc = {"plant": "benchmark", "channel": "benchmark", "norm": "benchmark", "envelope": {"kind": "shifted", "psi": 0.0}}
    with pytest.raises(ConfigError, match="envelope"):
        load_spec(write(tmp_path, doc), "analyze")


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_parse(name):
    doc = yaml.safe_load((CONFIGS / name).read_text())
    load_spec(str(CONFIGS / name), doc["mode"])


def test_reproduce_thresholds_and_determinism(tmp_path):
    assert main(["reproduce-paper", "--out", str(tmp_path / "a"), "--runs", "40"]) == EXIT_OK
    assert main(["reproduce-paper", "--out", str(tmp_path / "b"), "--runs", "40"]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["burst_long.csv", "burst_short.csv", "countermeasure.csv", "seeds.json", "summary.txt"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = (tmp_path / "a" / "summary.txt").read_text()
    assert summary.count(" ok") == 3 and "MISMATCH" not in summary
    assert "max consecutive steps at v*=32: 40" in summary
    assert "max power for a 60-step burst: 21.76" in summary
