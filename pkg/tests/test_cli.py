import csv
import json
import math

import pytest

from mirror_collapse import cli

CSL_BLOCK = '{"gamma": 1e-30, "alpha": 1e10, "D0": 6e24, "S": 1e-3, "length_unit": "cm"}'


def read_csv(path):
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def test_analytic_visibility_values(tmp_path):
    code, out = run(tmp_path, "analytic")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 201
    assert list(rows[0]) == ["t", "t_over_T", "f_re", "f_im", "nu", "source"]
    by_t = {round(float(r["t"]), 9): r for r in rows}
    assert float(by_t[round(math.pi, 9)]["nu"]) == pytest.approx(math.exp(-2), abs=1e-14)
    last = by_t[round(2 * math.pi, 9)]
    assert float(last["nu"]) == pytest.approx(1.0, abs=1e-14)
    assert float(last["t_over_T"]) == pytest.approx(1.0)
    assert {r["source"] for r in rows} == {"closed_form"}


def test_master_deviation_column(tmp_path):
    code, out = run(tmp_path, "master")
    assert code == 0
    rows = read_csv(out)
    assert "deviation" in rows[0]
    assert max(float(r["deviation"]) for r in rows) <= 1e-6
    assert {r["source"] for r in rows} == {"master_equation"}


def test_trajectories_reproducible(tmp_path):
    args = ["trajectories", "--set", "eta=0.05", "--set", "ensemble.n_traj=200",
            "--set", "grid.t_end_periods=0.25", "--set", "ensemble.n_points=3", "--seed", "17"]
    code_a, a = run(tmp_path, *args, name="a.csv")
    code_b, b = run(tmp_path, *args, "--threads", "2", name="b.csv")
    assert code_a == code_b == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a)
    assert {"std_error", "n_traj", "scheme"} <= set(rows[0])
    assert rows[-1]["n_traj"] == "200" and rows[-1]["scheme"] == "linear"
    code_c, c = run(tmp_path, *args[:-1], "18", name="c.csv")
    assert c.read_bytes() != a.read_bytes()


def test_json_output(tmp_path):
    code, out = run(tmp_path, "analytic", "--format", "json", "--set", "grid.n_points=3",
                    name="out.json")
    assert code == 0
    body = json.loads(out.read_text())
    assert body["schema_version"] == cli.SCHEMA_VERSION
    assert [r["t_over_T"] for r in body["rows"]] == [0.0, 1.0, 2.0]


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps({"schema_version": 1, "experiment": {"kappa": 0.5},
                               "eta": 0.1, "grid": {"t_end": 1.0, "n_points": 2}}))
    code, out = run(tmp_path, "analytic", "--config", str(cfg), "--set", "experiment.omega_m=2")
    assert code == 0
    rows = read_csv(out)
    assert float(rows[-1]["t"]) == 1.0
    assert float(rows[-1]["t_over_T"]) == pytest.approx(1 / math.pi)


def test_csl_subcommand(tmp_path):
    code, out = run(tmp_path, "csl", "--set", f"csl={CSL_BLOCK}",
                    "--set", "experiment.length_unit=cm", "--set", "csl_scan.n_points=5")
    assert code == 0
    text = out.read_text()
    meta = dict(line[2:].strip().split("=", 1) for line in text.splitlines() if line.startswith("#"))
    assert meta["eta_method"] == "asymptotic"
    assert float(meta["crossover"]) == pytest.approx(2 * math.sqrt(math.pi / 1e10))
    assert len(read_csv(out)) == 5


def test_csl_as_eta_source(tmp_path):
    code, _ = run(tmp_path, "analytic", "--set", f"csl={CSL_BLOCK}",
                  "--set", "experiment.length_unit=cm", "--set", "grid.n_points=3")
    assert code == 0


@pytest.mark.parametrize("override", [
    "experiment.omega_m=-1",
    "schema_version=2",
    "ensemble.scheme=milstein",
    "grid.n_points=1",
    "master.integrator=euler",
    "experiment.mass=3",
    "nonsense",
])
def test_config_errors(tmp_path, override, capsys):
    code, _ = run(tmp_path, "analytic", "--set", override)
    assert code == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_eta_and_csl_are_exclusive(tmp_path):
    code, _ = run(tmp_path, "analytic", "--set", f"csl={CSL_BLOCK}", "--set", "eta=0.1")
    assert code == cli.EXIT_CONFIG


def test_unit_mismatch_is_config_error(tmp_path):
    code, _ = run(tmp_path, "csl", "--set", f"csl={CSL_BLOCK}")
    assert code == cli.EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "master", "--set", "eta=2", "--set", "master.dt=5",
                  "--set", "grid.n_points=3")
    assert code == cli.EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_verify_failure_exit_code(tmp_path):
    code, out = run(tmp_path, "verify", "--set", "verify.bh_levels=6",
                    "--set", "verify.n_paths=2000", "--set", "grid.n_points=11", name="r.json")
    assert code == cli.EXIT_VERIFY
    body = json.loads(out.read_text())
    assert body["passed"] is False
    failed = [c["name"] for c in body["checks"] if not c["passed"]]
    assert failed == ["baker_hausdorff"]


def test_verify_default_config_passes(tmp_path):
    code, out = run(tmp_path, "verify", name="report.json")
    body = json.loads(out.read_text())
    assert code == 0, [c for c in body["checks"] if not c["passed"]]
    assert body["passed"] is True
