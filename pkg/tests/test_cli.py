import csv
import io
import json

import pytest
from click.testing import CliRunner

from sharpnorm import __version__
from sharpnorm.cli import main
from sharpnorm.kernels import SHARP_CONSTANT


def invoke(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def as_json(*args):
    res = invoke("--format", "json", *args)
    return res, json.loads(res.output)


def strip_time(payload):
    return {k: v for k, v in payload.items() if k != "timestamp"}


def test_version():
    res = invoke("--version")
    assert res.exit_code == 0 and __version__ in res.output


def test_constants_human():
    res = invoke("constants")
    assert res.exit_code == 0
    lines = [ln for ln in res.output.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) == 14 and all(ln.startswith("PASS") for ln in lines)


def test_constants_json_schema():
    res, payload = as_json("constants")
    assert res.exit_code == 0
    assert payload["schema"] == 1 and payload["command"] == "constants" and payload["passed"]
    assert set(payload) == {"schema", "command", "version", "config", "passed", "checks", "data", "table", "timestamp"}
    assert payload["data"]["critical_charge"] == pytest.approx(124.16, abs=0.01)
    assert payload["data"]["sharp_constant"] == SHARP_CONSTANT
    assert payload["table"]["columns"] == ["quantity", "computed", "closed_form", "rel_delta"]


def test_json_is_deterministic():
    _, a = as_json("constants")
    _, b = as_json("constants")
    assert strip_time(a) == strip_time(b)


def test_impossible_tolerance_fails_with_exit_one():
    res, payload = as_json("--rel-tol", "1e-30", "--abs-tol", "1e-300", "constants")
    assert res.exit_code == 1
    assert not payload["passed"]
    assert any("NonConvergence" in c["detail"] for c in payload["checks"])
    # the failed rows carry null values with a reason
    row = next(r for r in payload["table"]["rows"] if r[1] is None)
    assert row[3] is None


def test_bad_option_is_a_usage_error():
    assert CliRunner().invoke(main, ["--alpha", "2", "constants"]).exit_code == 2
    assert CliRunner().invoke(main, ["schur", "--grid-points", "10"]).exit_code == 2


def test_schur_csv_columns():
    res = invoke("--format", "csv", "schur")
    assert res.exit_code == 0
    rows = list(csv.reader(io.StringIO(res.output)))
    assert rows[0] == ["x", "F_closed", "F_quadrature", "delta"]
    assert len(rows) == 401
    assert all(float(r[1]) < SHARP_CONSTANT for r in rows[1:])


def test_schur_unweighted():
    res, payload = as_json("schur", "--weights", "unweighted")
    assert res.exit_code == 0
    assert payload["data"]["sup_value"] == pytest.approx(3.7302773, abs=1e-6)


def test_schur_table_weights(tmp_path):
    import numpy as np

    x = np.geomspace(1e-7, 1e7, 400)
    path = tmp_path / "w.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "h0", "h1"])
        for xi in x:
            w.writerow(["%.17g" % v for v in (xi, xi / (xi * xi + 1), 1 / xi)])
    res, payload = as_json("schur", "--weights", "table", "--table", str(path))
    assert res.exit_code == 0
    assert payload["data"]["sup_value"] == pytest.approx(SHARP_CONSTANT, rel=1e-3)
    assert CliRunner().invoke(main, ["schur", "--weights", "table"]).exit_code == 2


def test_rayleigh():
    res, payload = as_json("rayleigh")
    assert res.exit_code == 0
    assert abs(payload["data"]["fit_limit"] - SHARP_CONSTANT) < 0.02
    assert [r[0] for r in payload["table"]["rows"]] == [1e2, 1e3, 1e4, 1e5, 1e6]


def test_nystrom_with_export(tmp_path):
    path = tmp_path / "m.csv"
    res, payload = as_json("nystrom", "--k-max", "2", "--per-decade", "16", "--export", str(path))
    assert res.exit_code == 0
    assert len(payload["table"]["rows"]) == 2
    # the escape trend needs three domains
    assert not any("escapes" in c["name"] for c in payload["checks"])
    assert path.read_text().startswith("i,j,x_i,x_j,w_i,w_j,entry")


def test_nystrom_default():
    res, payload = as_json("nystrom")
    assert res.exit_code == 0
    lams = [r[3] for r in payload["table"]["rows"]]
    assert lams == sorted(lams) and lams[-1] > 3.2


def test_dominance():
    res, payload = as_json("dominance")
    assert res.exit_code == 0 and payload["data"]["violations"] == 0


def test_stability_small_run_and_seed():
    res, a = as_json("--seed", "4", "stability", "--trials", "2", "--z-frac", "0.5,1")
    assert res.exit_code == 0
    assert len(a["table"]["rows"]) == 4
    _, b = as_json("--seed", "4", "stability", "--trials", "2", "--z-frac", "0.5,1")
    assert a["table"] == b["table"]
    _, c = as_json("--seed", "5", "stability", "--trials", "2", "--z-frac", "0.5,1")
    assert c["table"] != a["table"]
    assert CliRunner().invoke(main, ["stability", "--z-frac", "1.5"]).exit_code == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nformat = json\ntrials = 1\nz-frac = 0.5\nseed = 3\n")
    res = invoke("--config", str(cfg), "stability")
    payload = json.loads(res.output)
    assert payload["config"]["trials"] == 1 and payload["config"]["seed"] == 3
    assert len(payload["table"]["rows"]) == 1
    # the command line still wins
    res = invoke("--config", str(cfg), "stability", "--trials", "2")
    assert len(json.loads(res.output)["table"]["rows"]) == 2


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert CliRunner().invoke(main, ["--config", str(cfg), "constants"]).exit_code == 2


def test_output_file(tmp_path):
    out = tmp_path / "out.json"
    res = invoke("--format", "json", "--output", str(out), "dominance", "--grid", "5")
    assert res.exit_code == 0
    assert json.loads(out.read_text())["command"] == "dominance"
    assert "PASS" in res.output
