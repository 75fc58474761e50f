import json
import subprocess
import sys

import pytest

from causal_kit import cli
from causal_kit.data import read_csv

from .test_dag import BACKDOOR_FIGURE


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


@pytest.fixture
def figure(tmp_path):
    path = tmp_path / "figure.dag"
    path.write_text(BACKDOOR_FIGURE)
    return path


# --- dag ---------------------------------------------------------------------------------


def test_dsep_example(tmp_path, capsys):
    g = tmp_path / "a.dag"
    g.write_text("Z -> X\nU -> X\nU -> Y\nZ -> Y\n")
    code, out, _ = run(["dag", "dsep", g, "--x", "X", "--y", "Y", "--given", "Z,U"], capsys)
    assert code == 0
    assert out["schema"] == "causal-kit/1" and out["command"] == "dag dsep"
    assert out["result"]["d_separated"] is True


def test_minsets_and_backdoor(figure, capsys):
    code, out, _ = run(["dag", "minsets", figure, "--d", "D", "--y", "Y"], capsys)
    assert code == 0
    assert out["result"]["minimal_sets"] == [["X1", "X2"], ["X2", "X3"], ["X2", "Z1"], ["X2", "Z2"]]
    code, out, _ = run(["dag", "backdoor", figure, "--d", "D", "--y", "Y", "--given", "X2"], capsys)
    assert code == 0
    assert out["result"]["valid"] is False
    assert out["result"]["reason"] == "open_backdoor_path"


def test_swig_command(figure, capsys):
    code, out, _ = run(["dag", "swig", figure, "--node", "D", "--label", "d"], capsys)
    assert code == 0
    assert ["d", "M(d)"] in out["result"]["edges"]


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.dag"
    bad.write_text("A -> B\nB ->\n")
    code, out, err = run(["dag", "dsep", bad, "--x", "A", "--y", "B"], capsys)
    assert code == 2 and out is None
    assert err["error"]["code"] == "PARSE"
    cyclic = tmp_path / "cyc.dag"
    cyclic.write_text("A -> B\nB -> A\n")
    assert run(["dag", "dsep", cyclic, "--x", "A", "--y", "B"], capsys)[0] == 2


def test_query_error_exit_code(figure, capsys):
    code, _, err = run(["dag", "dsep", figure, "--x", "D", "--y", "Nope"], capsys)
    assert code == 3 and err["error"]["code"] == "UNKNOWN_NODE"


def test_usage_errors(capsys):
    assert run(["dag"], capsys)[0] == 4
    assert run(["estimate", "bogus", "x.csv", "--y", "Y", "--d", "D"], capsys)[0] == 4


# --- simulate and estimate --------------------------------------------------------------------


def simulate(tmp_path, capsys, scenario, n, seed, *params, name="draw.csv"):
    out = tmp_path / name
    code, res, err = run(["simulate", scenario, *params, "--n", n, "--seed", seed, "--out", out], capsys)
    assert code == 0, err
    return out, json.loads((tmp_path / (name + ".json")).read_text())


def test_simulate_sidecar(tmp_path, capsys):
    path, side = simulate(tmp_path, capsys, "smoking_bias", 20_000, 1)
    r = side["result"]
    assert abs(r["oracle_ate"]) < 1e-12 and r["seed"] == 1 and r["n"] == 20_000
    assert {"oracle_att", "oracle_atc", "params", "roles"} <= set(r)
    assert read_csv(path).n == 20_000


def test_simulate_heart_has_crude_companion(tmp_path, capsys):
    _, side = simulate(tmp_path, capsys, "heart_transplant", 50_000, 3)
    r = side["result"]
    assert r["oracle_ate"] == 0
    assert r["crude_contrast"]["estimate"] > 0.05


def test_simulate_rejects_empty_draw(tmp_path, capsys):
    code, _, err = run(["simulate", "smoking_bias", "--n", 0, "--out", tmp_path / "x.csv"], capsys)
    assert code == 4 and err["error"]["code"] == "USAGE"
    code, _, _ = run(["simulate", "nope", "--n", 5, "--out", tmp_path / "x.csv"], capsys)
    assert code == 4


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CAUSAL_KIT_SEED", "42")
    out = tmp_path / "e.csv"
    assert run(["simulate", "smoking_bias", "--n", 10, "--out", out], capsys)[0] == 0
    assert json.loads((tmp_path / "e.csv.json").read_text())["result"]["seed"] == 42
    monkeypatch.setenv("CAUSAL_KIT_SEED", "abc")
    assert run(["simulate", "smoking_bias", "--n", 10, "--out", out], capsys)[0] == 4


def test_estimate_output_is_byte_identical(tmp_path, capsys):
    path, _ = simulate(tmp_path, capsys, "heart_transplant", 3000, 5)
    argv = ["estimate", "ipw", path, "--y", "Y", "--d", "A", "--scores", "fit", "--bootstrap", "200",
            "--seed", "9"]
    cli.main([str(a) for a in argv])
    first = capsys.readouterr().out
    cli.main([str(a) for a in argv + ["--jobs", "2"]])
    second = capsys.readouterr().out
    assert json.loads(first)["result"] == json.loads(second)["result"]
    cli.main([str(a) for a in argv])
    assert capsys.readouterr().out == first


def test_ate_cli_covers_oracle(tmp_path, capsys):
    hits = 0
    for seed in range(100):
        path, side = simulate(tmp_path, capsys, "smoking_bias", 400, seed, "randomized=true", "eta1=0.3")
        _, out, _ = run(["estimate", "ate", path, "--y", "Y", "--d", "D"], capsys)
        lo, hi = out["result"]["ci"]
        hits += lo <= side["result"]["oracle_ate"] <= hi
    assert 0.88 <= hits / 100 <= 1.0


def test_standardize_on_heart_draw(tmp_path, capsys):
    path, _ = simulate(tmp_path, capsys, "heart_transplant", 100_000, 2)
    code, out, _ = run(["estimate", "standardize", path, "--y", "Y", "--d", "A", "--stratum", "L"], capsys)
    assert code == 0
    r = out["result"]
    assert abs(r["std_rr"] - 1) < 0.05
    assert r["crude_rr"] > 1.1
    assert "exact" in r


def test_dml_output(tmp_path, capsys):
    path, _ = simulate(tmp_path, capsys, "growth_highdim", 90, 0)
    code, out, _ = run(["estimate", "dml-po", path, "--y", "Y", "--d", "D"], capsys)
    assert code == 0
    r = out["result"]
    assert set(r["selected_controls"]) == {"y", "d"}
    assert r["ci"][0] < r["estimate"] < r["ci"][1]
    assert r["kkt_max_violation"] <= 1e-8
    code, out, _ = run(["estimate", "ortho-check", path, "--y", "Y", "--d", "D"], capsys)
    assert code == 0
    assert {"partialling_out", "single_selection"} <= set(out["result"])


def test_estimation_error_codes(tmp_path, capsys):
    csv = tmp_path / "arm.csv"
    csv.write_text("Y,D\n1,0\n2,0\n3,0\n")
    code, _, err = run(["estimate", "ate", csv, "--y", "Y", "--d", "D"], capsys)
    assert code == 3 and err["error"]["code"] == "EMPTY_ARM"
    csv.write_text("Y,D,p\n1,0,0.5\n2,1,1.0\n3,0,0.5\n")
    code, _, err = run(["estimate", "ipw", csv, "--y", "Y", "--d", "D", "--scores", "p",
                        "--bootstrap", "0"], capsys)
    assert code == 3 and err["error"]["code"] == "POSITIVITY"


def test_missing_column_and_bad_csv(tmp_path, capsys):
    csv = tmp_path / "d.csv"
    csv.write_text("Y,D\n1,0\n2,1\n")
    assert run(["estimate", "ate", csv, "--y", "Y", "--d", "T"], capsys)[0] == 4
    csv.write_text("Y,D\n1,0\n2\n")
    assert run(["estimate", "ate", csv, "--y", "Y", "--d", "D"], capsys)[0] == 2


def test_output_file_option(tmp_path, figure, capsys):
    target = tmp_path / "res.json"
    code, out, _ = run(["dag", "minsets", figure, "--d", "D", "--y", "Y", "--out", target], capsys)
    assert code == 0 and out is None
    assert json.loads(target.read_text())["result"]["minimal_sets"][0] == ["X1", "X2"]


def test_module_entry_point(figure):
    proc = subprocess.run([sys.executable, "-m", "causal_kit", "dag", "dsep", str(figure),
                           "--x", "Z1", "--y", "Z2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["d_separated"] is True
