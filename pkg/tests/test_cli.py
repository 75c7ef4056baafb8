import json

import pytest

from lqrpi.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_no_command_is_a_usage_error(capsys):
    code, _, err = run_cli(capsys)
    assert code == 1
    assert "usage" in err


def test_unknown_command_is_a_usage_error(capsys):
    code, _, _ = run_cli(capsys, "frobnicate")
    assert code == 1


def test_are_preset(capsys):
    code, out, _ = run_cli(capsys, "are", "--preset", "paper-sec5")
    assert code == 0
    assert "Pstar =" in out and "Kstar =" in out
    residual = float(out.strip().rsplit("residual = ", 1)[1])
    assert residual < 1e-10


def test_are_needs_a_system(capsys):
    code, _, err = run_cli(capsys, "are")
    assert code == 1
    assert "preset" in err.lower() or "config" in err.lower()
    code, _, _ = run_cli(capsys, "are", "--preset", "nope")
    assert code == 1


def test_numeric_failures_exit_2(capsys, tmp_path):
    cfg = tmp_path / "unstable.json"
    cfg.write_text(
        json.dumps(
            {
                "schema": 1,
                "system": {"A": [[1.5]], "B": [[0.0]], "C": [[1.0]]},
                "cost": {"S": [[1.0]], "R": [[1.0]]},
            }
        )
    )
    code, _, err = run_cli(capsys, "are", "--config", str(cfg))
    assert code == 2
    assert "spectral radius" in err


def test_pi_trace(capsys):
    code, out, _ = run_cli(capsys, "pi", "--preset", "paper-sec5")
    assert code == 0
    assert "converged = True" in out
    assert out.count("\n") >= 5


def test_inexact_pi(capsys):
    code, out, _ = run_cli(
        capsys,
        "inexact-pi",
        "--preset",
        "paper-sec5",
        "--kind",
        "decaying",
        "--magnitude",
        "1e-2",
        "--decay-rate",
        "0.5",
        "--n-iter",
        "10",
        "--seed",
        "3",
    )
    assert code == 0
    assert "completed 10 iterations" in out


def test_olspi_deterministic_stdout(capsys):
    argv = (
        "olspi",
        "--preset",
        "paper-sec5",
        "--rollout-m",
        "2000",
        "--n-outer",
        "3",
        "--inner-t",
        "5",
        "--burn-in",
        "100",
        "--seed",
        "1",
    )
    code, out1, _ = run_cli(capsys, *argv)
    assert code == 0
    assert "K_N =" in out1 and "relative_error = " in out1
    code, out2, _ = run_cli(capsys, *argv)
    assert code == 0
    assert out1 == out2


def test_probe_contraction(capsys):
    code, out, _ = run_cli(
        capsys,
        "probe",
        "contraction",
        "--preset",
        "paper-sec5",
        "--radius",
        "1e-2",
        "--samples",
        "50",
        "--seed",
        "5",
    )
    assert code == 0
    sigma = float(out.splitlines()[0].split("=")[1])
    assert 0.0 < sigma < 1.0


def test_probe_iss(capsys):
    code, out, _ = run_cli(
        capsys,
        "probe",
        "iss",
        "--preset",
        "paper-sec5",
        "--magnitudes",
        "1e-4,1e-3",
        "--n-iter",
        "20",
        "--trials",
        "3",
        "--seed",
        "7",
    )
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 4  # header plus the zero row plus two magnitudes


def test_bench_cli(capsys, tmp_path):
    cfg = tmp_path / "bench.json"
    cfg.write_text(
        json.dumps(
            {
                "schema": 1,
                "preset": "paper-sec5",
                "sweep": {"axis": "disturbance_mag", "values": [1e-4]},
                "fixed": {"N": 10},
                "trials": 3,
                "seed": 5,
            }
        )
    )
    out_csv = tmp_path / "run.csv"
    argv = ("bench", "--config", str(cfg), "--out", str(out_csv))
    code, out1, err1 = run_cli(capsys, *argv)
    assert code == 0
    assert "csv written to %s" % out_csv in out1
    assert "wall_time_s" in err1  # timing is stderr chatter, not output
    lines = out_csv.read_text().splitlines()
    assert len(lines) == 2 and lines[1].endswith(",5")
    first = out_csv.read_bytes()
    code, out2, _ = run_cli(capsys, *argv)
    assert code == 0 and out1 == out2
    assert out_csv.read_bytes() == first


def test_bench_cli_seed_override_and_missing_config(capsys, tmp_path):
    code, _, err = run_cli(capsys, "bench")
    assert code == 1 and "--config" in err
    cfg = tmp_path / "bench.json"
    cfg.write_text(
        json.dumps(
            {
                "schema": 1,
                "preset": "paper-sec5",
                "sweep": {"axis": "disturbance_mag", "values": [1e-4]},
                "fixed": {"N": 10},
                "trials": 2,
                "seed": 5,
            }
        )
    )
    out_csv = tmp_path / "seeded.csv"
    code, _, _ = run_cli(
        capsys, "bench", "--config", str(cfg), "--out", str(out_csv), "--seed", "77"
    )
    assert code == 0
    assert out_csv.read_text().splitlines()[1].endswith(",77")
