import csv
import json
from pathlib import Path

import pytest

from swarmsense import cli
from swarmsense.channel import local_comm_radius

SCENARIOS = Path(cli.__file__).parent / "data" / "scenarios"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_requires_subcommand():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_link_budget_single_prefix(capsys):
    code, out, _ = run(capsys, "link-budget", "sonar")
    rows = [line for line in out.splitlines()[1:] if line.strip()]
    assert code == 0 and len(rows) == 1
    assert rows[0].split()[-1] == "300"


def test_link_budget_unknown_and_ambiguous(capsys):
    code, _, err = run(capsys, "link-budget", "xray")
    assert code == 2 and "xray" in err
    code, _, err = run(capsys, "link-budget", "radio")
    assert code == 2 and "ambiguous" in err


def test_link_budget_csv_columns(tmp_path, capsys):
    p = tmp_path / "t.csv"
    assert run(capsys, "link-budget", "--all", "--csv", str(p))[0] == 0
    with open(p) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == cli.load_schema()["link_budget_csv"]
    assert len(rows) == 9


def test_link_budget_unwritable_csv_is_io_error(tmp_path, capsys):
    code, _, _ = run(capsys, "link-budget", "--all", "--csv", str(tmp_path / "missing" / "t.csv"))
    assert code == 3


@pytest.mark.parametrize("volume, count, text", [("5", "20", "0.391"), ("4.18879", "1", "1.000"), ("2", "50", "0.212")])
def test_locality(capsys, volume, count, text):
    code, out, _ = run(capsys, "locality", "--volume", volume, "--count", count)
    assert code == 0 and f"R_c = {text} m" in out


@pytest.mark.parametrize("argv", [("--volume", "0", "--count", "3"), ("--volume", "1", "--count", "0")])
def test_locality_invalid(capsys, argv):
    assert run(capsys, "locality", *argv)[0] == 2


def test_efield_calib_noiseless(tmp_path, capsys):
    p = tmp_path / "c.csv"
    code, out, _ = run(capsys, "efield-calib", "--noise", "0", "--trials", "1000", "--adc-bits", "0", "--out", str(p))
    assert code == 0
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1000
    assert max(float(r["err_alpha_deg"]) for r in rows) < 1e-5
    assert "median error" in out and "max error" in out


def test_efield_calib_zero_trials(tmp_path, capsys):
    p = tmp_path / "c.csv"
    code, out, _ = run(capsys, "efield-calib", "--trials", "0", "--out", str(p))
    assert code == 0 and "no data" in out
    assert p.read_text().strip() == ",".join(cli.load_schema()["efield_calib_csv"])


def test_efield_calib_auto_noise(capsys):
    code, out, _ = run(capsys, "efield-calib", "--noise", "auto", "--trials", "300")
    med = float(next(line for line in out.splitlines() if line.startswith("median")).split()[2])
    assert code == 0 and abs(med - 5.0) <= 0.05


@pytest.mark.parametrize("argv", [("--noise", "loud"), ("--noise", "-1"), ("--trials", "-1"), ("--r-range", "0.01", "1")])
def test_efield_calib_invalid(capsys, argv):
    assert run(capsys, "efield-calib", "--trials", "10", *argv)[0] == 2


def test_efield_calib_seed_determines_output(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        run(capsys, "efield-calib", "--noise", "1e-6", "--trials", "50", "--seed", "3", "--out", str(p))
    assert a.read_bytes() == b.read_bytes()


def test_run_missing_file(capsys):
    code, _, err = run(capsys, "run", "/no/such/scenario.toml")
    assert code == 2 and "no such scenario" in err


def test_run_invalid_config(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[robots]\ncount = -1\ncolour = 2\n")
    code, _, err = run(capsys, "run", str(p))
    assert code == 2
    assert "robots.colour: unknown key" in err


def test_run_echo_uses_env_output_dir(out_dir, capsys):
    code, out, _ = run(capsys, "run", str(SCENARIOS / "echo.toml"))
    assert code == 0
    doc = json.loads((out_dir / "echo-7" / "metrics.json").read_text())
    assert doc["packets"]["echoes"] > 0
    with open(out_dir / "echo-7" / "timeseries.csv") as fh:
        assert next(csv.reader(fh)) == cli.load_schema()["timeseries_csv"]


def test_run_output_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run(capsys, "run", str(SCENARIOS / "echo.toml"), "--out", str(blocker / "sub"))
    assert code == 3


def test_sweep_counts_and_order(tmp_path, capsys):
    p = tmp_path / "s.csv"
    code, _, _ = run(
        capsys, "sweep", str(SCENARIOS / "echo.toml"), "--param", "world.wall_reflectivity",
        "--values", "0.9", "0.1", "0.5", "--seeds", "1:3", "--jobs", "2", "--out", str(p),
    )
    assert code == 0
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert [(r["value"], r["seed"]) for r in rows] == [(v, s) for v in ("0.9", "0.1", "0.5") for s in ("1", "2")]


def test_sweep_noise_five_by_ten(tmp_path, capsys):
    p = tmp_path / "s.csv"
    cfg = tmp_path / "tiny.toml"
    cfg.write_text(
        "[robots]\ncount = 2\npositions = [[0.5, 1.0, 0.5], [0.9, 1.0, 0.5]]\nenergies = [0.9, 0.9]\n"
        "[channels]\nefield_localization = true\n[run]\nhorizon = 1.0\n"
    )
    values = ["0.0", "1e-7", "1e-6", "1e-5", "1e-4"]
    code, _, _ = run(capsys, "sweep", str(cfg), "--param", "channels.efield_noise_sigma", "--values", *values, "--seeds", "0:10", "--out", str(p))
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert code == 0 and len(rows) == 50
    assert all(r["median_localization_error_deg"] != "" for r in rows)


def test_sweep_robot_count_comm_radius(tmp_path, capsys):
    p = tmp_path / "s.csv"
    cfg = tmp_path / "tiny.toml"
    cfg.write_text("[run]\nhorizon = 0.5\n")
    code, _, _ = run(capsys, "sweep", str(cfg), "--param", "robots.count", "--values", "5", "10", "20", "--out", str(p))
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert code == 0 and len(rows) == 3
    for r in rows:
        assert float(r["comm_radius"]) == pytest.approx(local_comm_radius(float(r["volume"]), int(r["robots"])), rel=1e-12)


def test_sweep_empty_values(tmp_path, capsys):
    p = tmp_path / "s.csv"
    code, _, _ = run(capsys, "sweep", str(SCENARIOS / "echo.toml"), "--param", "robots.count", "--values", "--out", str(p))
    assert code == 0
    assert p.read_text().strip() == ",".join(cli.load_schema()["sweep_csv"])


def test_sweep_unknown_param(capsys):
    code, _, err = run(capsys, "sweep", str(SCENARIOS / "echo.toml"), "--param", "robots.colour", "--values", "1")
    assert code == 2 and "robots.colour" in err
