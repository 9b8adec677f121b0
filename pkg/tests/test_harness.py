import csv
import json
import math

import numpy as np
import pytest

from lmgdpt.errors import ConfigError
from lmgdpt.harness import cli
from lmgdpt.harness.config import evaluate_expression, load_config, parse_config
from lmgdpt.harness.experiments import COLUMNS
from lmgdpt.harness.regress import format_table, regression_suite
from lmgdpt.harness.runner import run_experiment, schema_tag, write_result


def _read_csv(path):
    lines = path.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    rows = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    return comments, rows


def test_expressions():
    assert evaluate_expression("pi/2") == pytest.approx(math.pi / 2)
    assert evaluate_expression("-2**3 + 1e-4") == pytest.approx(-8 + 1e-4)
    for bad in ("__import__('os')", "a+1", "1 if 1 else 2", "[1]"):
        with pytest.raises(ConfigError):
            evaluate_expression(bad)


def test_grids_lists_and_words():
    cfg = parse_config("""
        kind = qfi-sweep   # comment
        N = 10, 20
        Omega = 0.4:0.6:5
        theta = pi
        axis = z
        method = secular
    """)
    assert cfg.grids["N"] == [10, 20]
    assert cfg.grids["Omega"] == pytest.approx(np.linspace(0.4, 0.6, 5).tolist())
    assert cfg.grids["axis"] == ["z"]
    assert cfg.options["method"] == "secular"
    assert cfg.n_points() == 2 * 5 * 1 * 1 * 1 * 1 * 1


@pytest.mark.parametrize("text", [
    "kind = nonsense",
    "kind = qfi-sweep\nfoo = 1",
    "kind = qfi-sweep\nN = 1\nN = 2",
    "kind = qfi-sweep\nN = 0",
    "kind = qfi-sweep\nN = 2.5",
    "kind = qfi-sweep\naxis = y",
    "kind = qfi-sweep\nOmega = 0:1:0",
    "kind = qfi-sweep\nt = -1",
    "kind = open-sweep\ngamma = -0.1",
    "kind = qfi-sweep\nchi = -1",
    "kind = qfi-sweep\nno equals sign",
    "kind = echo\nOmega = 1:2",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_kind_mismatch(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("kind = echo\n")
    with pytest.raises(ConfigError):
        load_config(path, {"kind": "spectrum"})


def _small_qfi_config(out, workers=1):
    return parse_config(f"""
        kind = qfi-sweep
        N = 20, 30
        Omega = 0.3:0.7:3
        t = 5
        out = {out}
        workers = {workers}
    """)


def test_qfi_sweep_rows_and_schema(tmp_path):
    res = run_experiment(_small_qfi_config(tmp_path))
    paths = write_result(res, tmp_path)
    comments, rows = _read_csv(paths["csv"])
    assert comments[0] == f"# schema: {schema_tag('qfi-sweep')}"
    assert json.loads(comments[1].split(": ", 1)[1])["kind"] == "qfi-sweep"
    assert list(rows[0]) == COLUMNS["qfi-sweep"]
    assert len(rows) == 2 * 3 * 2
    assert all(r["error_flag"] == "" for r in rows)
    for r in rows:
        assert float(r["F_Q_normalized"]) == pytest.approx(float(r["F_Q"]) / (int(r["N"]) * 25.0))
    meta = json.loads(paths["json"].read_text())
    assert meta["schema"] == schema_tag("qfi-sweep")
    assert meta["wall_clock_seconds"] >= 0


def test_repeat_runs_are_byte_identical(tmp_path):
    a = write_result(run_experiment(_small_qfi_config(tmp_path)), tmp_path)["csv"].read_bytes()
    b = write_result(run_experiment(_small_qfi_config(tmp_path)), tmp_path)["csv"].read_bytes()
    assert a == b


def test_worker_count_does_not_change_rows(tmp_path):
    serial = run_experiment(_small_qfi_config(tmp_path))
    pooled = run_experiment(_small_qfi_config(tmp_path, workers=2))
    assert serial.rows == pooled.rows


def test_phase_diagram_labels(tmp_path):
    res = run_experiment(parse_config("kind = phase-diagram\nOmega = 0.2, 0.8\nomega = 0\nT = 50"))
    phases = [r["phase"] for r in res.rows]
    assert phases == ["ordered", "disordered"]
    assert [r["barrier_phase"] for r in res.rows] == phases


def test_spectrum_and_scaling_summary(tmp_path):
    res = run_experiment(parse_config("kind = scaling\nN = 40, 60\nOmega = 0.3:0.7:9\nt = 50\naxis = z\nrefine = 3"))
    assert len(res.rows) == 2
    assert res.summary["fits"][0]["N"] == [40, 60]
    spec = run_experiment(parse_config("kind = spectrum\nN = 500\naxis = x"))
    assert 0.3 < spec.rows[0]["gamma"] < 0.7


def test_echo_trace_marks_one_time_maximum(tmp_path):
    cfg = parse_config(f"kind = echo\nN = 30\nt = 1:15:15\nwigner_t = 5\nwigner_delta = 0.002\n"
                       f"wigner_n_theta = 5\nwigner_n_phi = 4\nout = {tmp_path}")
    res = run_experiment(cfg)
    assert sum(r["is_time_max"] for r in res.rows) == 1
    paths = write_result(res, tmp_path)
    for name in ("initial", "intermediate", "final"):
        comments, rows = _read_csv(paths[f"wigner_{name}"])
        assert list(rows[0]) == ["r", "phi", "W"]
        assert len(rows) == 20


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text(f"kind = qfi-sweep\nN = 10\nOmega = 0.5\nt = 2\nout = {tmp_path / 'g'}\n")
    assert cli.main(["qfi-sweep", "--config", str(good)]) == 0
    assert (tmp_path / "g" / "qfi_sweep.csv").exists()

    empty = tmp_path / "empty.cfg"
    empty.write_text(f"kind = qfi-sweep\nOmega = 0:1:0\nout = {tmp_path / 'e'}\n")
    assert cli.main(["qfi-sweep", "--config", str(empty)]) == 2
    assert not (tmp_path / "e").exists()
    assert "config error" in capsys.readouterr().err

    failing = tmp_path / "fail.cfg"
    failing.write_text(f"kind = spectrum\nN = 10\nwindow = 0.01\nout = {tmp_path / 'f'}\n")
    assert cli.main(["spectrum", "--config", str(failing)]) == 3
    _, rows = _read_csv(tmp_path / "f" / "spectrum.csv")
    assert rows[0]["error_flag"].startswith("InsufficientPoints")
    assert rows[0]["gamma"] == "nan"


def test_cli_out_flag_overrides_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"kind = spectrum\nN = 500\naxis = x\nout = {tmp_path / 'ignored'}\n")
    assert cli.main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "used")]) == 0
    assert (tmp_path / "used" / "spectrum.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_regression_negative_control():
    honest = regression_suite([3])
    tampered = regression_suite([3], {"gamma_offset": 0.2})
    assert honest[0].passed
    assert not tampered[0].passed
    table = format_table(honest + tampered)
    assert "1/2 criteria passed" in table
    assert honest[0].seconds > 0


def test_regress_cli(tmp_path, capsys):
    assert cli.main(["regress", "--only", "5", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    assert (tmp_path / "regress.csv").exists()


def test_qfi_time_trace_reports_first_transient_maximum():
    res = run_experiment(parse_config("kind = qfi-sweep\nN = 60\nOmega = 0.5\naxis = z\nt = 0.5:30:60"))
    (entry,) = res.summary["first_transient_maximum"]
    assert entry["t_star"] is not None and 0.5 < entry["t_star"] < 30
    trace = max(r["F_Q_normalized"] for r in res.rows if r["t"] <= entry["t_star"] + 0.5)
    assert entry["value"] >= trace - 1e-9


def test_numpy_scalars_are_written_as_plain_numbers():
    from lmgdpt.harness.runner import format_value

    assert format_value(np.float64(0.1)) == "0.1"
    assert format_value(np.int64(3)) == "3"
    assert format_value(float("nan")) == "nan"
    assert format_value(True) == "1"
