import json

import pytest
from click.testing import CliRunner

from lelab.cli import CSV_COLUMNS, main


@pytest.fixture()
def runner():
    return CliRunner()


def _write_config(path, **over):
    cfg = {
        "domain": {"kind": "disk", "radius": 1.0},
        "mesh": {"h": 0.1},
        "sweep": {"p": 3},
    }
    cfg.update(over)
    path.write_text(json.dumps(cfg))
    return str(path)


def test_solve_report(runner, tmp_path):
    out = tmp_path / "report.json"
    cfg = _write_config(tmp_path / "cfg.json",
                        output={"json": str(out)})
    res = runner.invoke(main, ["solve", "--config", cfg])
    assert res.exit_code == 0, res.output
    report = json.loads(out.read_text())
    assert set(report) == {"config_echo", "record", "diagnostics",
                           "versions"}
    assert report["record"]["status"] == "ok"
    # M within 2% of the radial oracle value at p = 3
    assert abs(report["record"]["M"] - 3.573900981929551) <= 0.02 * 3.57
    assert report["diagnostics"]["bubble_dist"] is None  # p < 10
    assert "lelab" in report["versions"]


def test_solve_without_output_prints_json(runner, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json")
    res = runner.invoke(main, ["solve", "--config", cfg])
    assert res.exit_code == 0
    assert json.loads(res.output)["record"]["status"] == "ok"


def test_malformed_json_reports_position(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"domain": {"kind": "disk",}\n}')
    res = runner.invoke(main, ["solve", "--config", str(bad)])
    assert res.exit_code == 1
    assert "line 1" in res.output and "column" in res.output


def test_unknown_key_rejected(runner, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", bogus=1)
    res = runner.invoke(main, ["solve", "--config", cfg])
    assert res.exit_code == 1
    assert "bogus" in res.output


def test_unknown_tolerance_rejected(runner, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json",
                        tolerances={"pohozaev_rell": 0.1})
    res = runner.invoke(main, ["verify", "--config", cfg])
    assert res.exit_code == 1


def test_small_exponent_rejected(runner, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", sweep={"p": 0.5})
    res = runner.invoke(main, ["solve", "--config", cfg])
    assert res.exit_code == 1
    assert "exponent must exceed 1" in res.output


def test_sweep_csv_and_determinism(runner, tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    cfg1 = _write_config(tmp_path / "c1.json",
                         sweep={"p_values": [2, 3, 4]},
                         output={"csv": str(out1)})
    cfg2 = _write_config(tmp_path / "c2.json",
                         sweep={"p_values": [2, 3, 4]},
                         output={"csv": str(out2)})
    assert runner.invoke(main, ["sweep", "--config", cfg1]).exit_code == 0
    assert runner.invoke(main, ["sweep", "--config", cfg2]).exit_code == 0
    data = out1.read_bytes()
    assert data == out2.read_bytes()
    lines = data.decode().strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4
    for line in lines[1:]:
        row = line.split(",")
        assert len(row) == len(CSV_COLUMNS)
        assert row[0] == "ok"
        assert row[CSV_COLUMNS.index("bubble_dist")] == ""   # p < 10


def test_sweep_requires_two_exponents(runner, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json",
                        output={"csv": str(tmp_path / "o.csv")})
    res = runner.invoke(main, ["sweep", "--config", cfg])
    assert res.exit_code == 1


def test_verify_pass_and_table(runner, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", mesh={"h": 0.05},
                        sweep={"p": 5})
    res = runner.invoke(main, ["verify", "--config", cfg])
    assert res.exit_code == 0, res.output
    assert "PASS" in res.output and "FAIL" not in res.output
    for name in ("pohozaev_rel", "eigen_rel", "green_rel", "flux_rel",
                 "energy_gap_rel"):
        assert name in res.output


def test_verify_impossible_tolerance_fails(runner, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", mesh={"h": 0.05},
                        sweep={"p": 5},
                        tolerances={"pohozaev_rel": 1e-12})
    res = runner.invoke(main, ["verify", "--config", cfg])
    assert res.exit_code == 3
    assert "FAIL" in res.output


def test_oracle_table(runner):
    res = runner.invoke(main, ["oracle", "--p", "3", "--points", "5"])
    assert res.exit_code == 0
    vals = {}
    lines = res.output.strip().split("\n")
    for line in lines:
        if " = " in line:
            k, v = line.split(" = ")
            vals[k] = float(v)
    lhs, rhs = vals["pohozaev_lhs"], vals["pohozaev_rhs"]
    assert abs(lhs - rhs) / lhs <= 1e-8
    assert abs(vals["M"] - 3.573900981929551) <= 1e-6
    assert lines.index("r,u") == len(lines) - 6   # 5 profile rows


def test_oracle_scalars_only(runner):
    res = runner.invoke(main, ["oracle", "--p", "3"])
    assert res.exit_code == 0
    assert "r,u" not in res.output


def test_oracle_invalid_exponent(runner):
    res = runner.invoke(main, ["oracle", "--p", "0.5"])
    assert res.exit_code == 1
