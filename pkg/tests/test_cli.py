import csv
import io
import json
import math
from pathlib import Path

import pytest
from click.testing import CliRunner

from spdcphase.cli import cli

GOLDEN = Path(__file__).parent / "golden"

# name -> (args, expected exit code)
GOLDEN_RUNS = {
    "solve_ncpm": (["solve", "--pump", "405.75", "-T", "60"], 0),
    "tune_ncpm": (["tune", "--process", "ncpm-ktp", "--pump", "405.75", "--from", "25", "--to", "100"], 0),
    "tune_qpm0": (["tune", "--process", "qpm0-ktp", "--pump", "405.75", "--from", "25", "--to", "100"], 0),
    "tune_qpm2": (["tune", "--process", "qpm2-ktp", "--pump", "405.75", "--from", "25", "--to", "100"], 0),
    "triplets_all": (["triplets", "--all"], 3),
    "linewidth_ncpm": (["linewidth", "--process", "ncpm-ktp"], 0),
    "linewidth_qpm0": (["linewidth", "--process", "qpm0-ktp"], 0),
    "linewidth_qpm2": (["linewidth", "--process", "qpm2-ktp"], 0),
    "poling_qpm0": (["poling", "--process", "qpm0-ktp"], 0),
    "poling_qpm2": (["poling", "--process", "qpm2-ktp"], 0),
    "sweep_ideal": (["sweep", "--ideal"], 0),
    "sweep_source": (["sweep"], 0),
    "sweep_seeded_points": (["sweep", "--seed", "7", "--points"], 0),
    "link": (["link", "--dark-i", "60"], 0),
}


def run(args, code=0):
    res = CliRunner().invoke(cli, args)
    assert res.exit_code == code, res.output
    return res.output


def rows(text):
    return list(csv.DictReader(ln for ln in text.splitlines() if not ln.startswith("#")))


@pytest.mark.parametrize("name", sorted(GOLDEN_RUNS))
def test_golden_outputs(name):
    args, code = GOLDEN_RUNS[name]
    out = run(args, code)
    assert out == (GOLDEN / f"{name}.csv").read_text(), f"regenerate with: python tests/regen_golden.py {name}"


@pytest.mark.parametrize("name", sorted(GOLDEN_RUNS))
def test_repeat_runs_byte_identical(name, tmp_path):
    args, code = GOLDEN_RUNS[name]
    a, b = tmp_path / "a.out", tmp_path / "b.out"
    run(args + ["--output", str(a)], code)
    run(args + ["--output", str(b)], code)
    assert a.read_bytes() == b.read_bytes()


def test_provenance_header():
    out = run(["solve", "--pump", "405.75", "-T", "60"])
    head = [ln for ln in out.splitlines() if ln.startswith("#")]
    assert head[0].startswith("# spdcphase ")
    assert any(ln.startswith("# crystal KTP sha256=") for ln in head)
    cfg = json.loads(next(ln for ln in head if ln.startswith("# config "))[len("# config "):])
    assert cfg["pump_nm"] == 405.75 and cfg["step_nm"] == 0.05


def test_json_matches_csv_fields():
    c = rows(run(["linewidth", "--process", "qpm0-ktp"]))
    j = json.loads(run(["linewidth", "--process", "qpm0-ktp", "--format", "json"]))
    assert list(j["rows"][0]) == list(c[0])
    assert j["rows"][0]["fwhm_s_nm"] == float(c[0]["fwhm_s_nm"])
    assert j["provenance"]["command"] == "linewidth"


def test_tune_span():
    r = rows(run(["tune", "--process", "ncpm-ktp", "--pump", "405.75", "--from", "25", "--to", "100"]))
    span = float(r[-1]["lambda_i_nm"]) - float(r[0]["lambda_i_nm"])
    assert span == pytest.approx(9.8, abs=1.5)


def test_sweep_ideal():
    r = rows(run(["sweep", "--ideal"]))
    avg = r[-1]
    assert avg["setting"] == "average"
    assert float(avg["visibility"]) == pytest.approx(1.0, abs=1e-12)
    assert float(avg["chsh_s"]) == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_sweep_points_refit_round_trip(tmp_path):
    pts = tmp_path / "pts.csv"
    run(["sweep", "--v-hv", "0.97", "--v-da", "0.95", "--points", "--output", str(pts)])
    direct = rows(run(["sweep", "--v-hv", "0.97", "--v-da", "0.95"]))
    fitted = rows(run(["sweep", "--input", str(pts)]))
    for a, b in zip(direct, fitted):
        assert float(a["visibility"]) == pytest.approx(float(b["visibility"]), abs=1e-12)


def test_hwp_angles_are_halved(tmp_path):
    pts = tmp_path / "pts.csv"
    run(["sweep", "--hwp", "--points", "--output", str(pts)])
    r = rows(pts.read_text())
    # Polarization angles 0..180 in 5-degree steps appear as 0..360 on the waveplate dial.
    assert float(r[-1]["beta_deg"]) == 360.0
    summary = rows(run(["sweep", "--hwp", "--input", str(pts)]))
    plain = rows(run(["sweep"]))
    assert float(summary[0]["visibility"]) == pytest.approx(float(plain[0]["visibility"]), abs=1e-12)


def test_triplets_config_file(tmp_path):
    cfg = tmp_path / "t.csv"
    cfg.write_text("crystal,pump_axis,signal_axis,idler_axis,lambda_p_nm,temperature_c,d_label\n"
                   "ktp,y,z,y,405.75,60,d32\n")
    r = rows(run(["triplets", "--config", str(cfg)]))
    assert float(r[0]["lambda_s_nm"]) == pytest.approx(562.0, abs=0.5)


def test_triplets_needs_exactly_one_source():
    run(["triplets"], 2)


def test_domain_error_exit_and_line():
    res = CliRunner().invoke(cli, ["solve", "--pump", "300", "-T", "60"])
    assert res.exit_code == 3
    line = [ln for ln in res.output.splitlines() if ln.startswith("error ")][-1]
    err = json.loads(line[len("error "):])
    assert err["type"] == "OutOfRangeError"


def test_unknown_flag_is_usage_error():
    assert CliRunner().invoke(cli, ["solve", "--nope"]).exit_code == 2
    assert CliRunner().invoke(cli, ["linewidth", "--process", "nothing"]).exit_code == 2


def test_link_tof():
    r = rows(run(["link", "--link", "link93", "--tof", "225.78278743293356"]))
    assert float(r[0]["tof_linewidth_nm"]) == pytest.approx(0.2, rel=1e-9)
