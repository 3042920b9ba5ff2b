"""Tests for the command-line interface (in-process where possible)."""

import subprocess
import sys

import numpy as np
import pytest

from tcnsoc.cli import main
from tcnsoc.data import DriveCycle, NormalizationParams, load_csv, save_csv
from tcnsoc.model import TcnConfig, build_model
from tcnsoc.modelio import deserialize, serialize


def run_cli(*argv):
    return main(list(argv))


def make_labeled_csv(path, n=240, soc_value=None, seed=0):
    rng = np.random.default_rng(seed)  # test fixture data, not product code
    t = np.arange(n) * 0.5
    soc = (np.full(n, soc_value) if soc_value is not None
           else np.linspace(0.9, 0.5, n))
    cycle = DriveCycle(
        time_s=t,
        voltage_v=3.5 + 0.2 * np.sin(t / 7) + 0.01 * rng.standard_normal(n),
        current_a=2.0 + np.cos(t / 5),
        temperature_c=25.0 + t / 100,
        soc=soc,
        name="fixture",
    )
    save_csv(cycle, path)
    return cycle


# ---------------------------------------------------------------- simulate


def test_simulate_row_count_and_schema(tmp_path, capsys):
    out = tmp_path / "u.csv"
    assert run_cli("simulate", "--kind", "urban", "--duration", "600",
                   "--seed", "7", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "time_s,voltage_v,current_a,temperature_c,soc"
    assert len(lines) == 1 + 6000
    cycle = load_csv(out)
    assert len(cycle) == 6000
    assert cycle.soc is not None
    err = capsys.readouterr().err
    assert "wrote 6000 samples" in err


def test_simulate_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli("simulate", "--kind", "mixed", "--duration", "120", "--seed", "3",
            "--out", str(a))
    run_cli("simulate", "--kind", "mixed", "--duration", "120", "--seed", "3",
            "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    run_cli("simulate", "--kind", "mixed", "--duration", "120", "--seed", "4",
            "--out", str(c))
    assert a.read_bytes() != c.read_bytes()


def test_simulate_rejects_unknown_kind(tmp_path):
    with pytest.raises(SystemExit):
        run_cli("simulate", "--kind", "lunar", "--out", str(tmp_path / "x.csv"))


def test_simulate_bad_duration_is_error_exit(tmp_path, capsys):
    code = run_cli("simulate", "--kind", "urban", "--duration", "-5",
                   "--out", str(tmp_path / "x.csv"))
    assert code == 1
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------- train


def test_train_writes_model_and_history(tmp_path, capsys):
    data = tmp_path / "d.csv"
    make_labeled_csv(data)
    model_path = tmp_path / "m.bin"
    hist_path = tmp_path / "h.csv"
    code = run_cli(
        "train", "--data", str(data), "--out", str(model_path),
        "--history", str(hist_path), "--window", "20", "--stacks", "1",
        "--kernel", "3", "--filters", "3", "--epochs", "2", "--stride", "10",
    )
    assert code == 0
    model = deserialize(model_path)
    assert model.config.input_window == 20
    assert model.config.stacks == 1
    assert model.norm is not None
    lines = hist_path.read_text().splitlines()
    assert lines[0] == "epoch,train_mse,val_mse"
    assert len(lines) == 3
    err = capsys.readouterr().err
    assert "parameters" in err and "epoch" in err


def test_train_zero_epochs_warns_but_writes(tmp_path, capsys):
    data = tmp_path / "d.csv"
    make_labeled_csv(data)
    model_path = tmp_path / "m.bin"
    code = run_cli(
        "train", "--data", str(data), "--out", str(model_path),
        "--window", "20", "--stacks", "1", "--kernel", "3", "--filters", "3",
        "--epochs", "0", "--stride", "10", "--seed", "4",
    )
    assert code == 0
    err = capsys.readouterr().err
    assert "warning" in err and "epochs is 0" in err
    stored = deserialize(model_path)
    # the stored weights are the float32 image of the untouched initialization
    fresh = build_model(stored.config, seed=4)
    for a, b in zip(stored.parameters(), fresh.parameters()):
        assert np.array_equal(a, b.astype(np.float32).astype(np.float64))


def test_train_accepts_unlabeled_csv_via_coulomb_count(tmp_path, capsys):
    data = tmp_path / "d.csv"
    cycle = make_labeled_csv(data)
    save_csv(
        DriveCycle(cycle.time_s, cycle.voltage_v, cycle.current_a,
                   cycle.temperature_c, None, "unlabeled"),
        data,
    )
    code = run_cli(
        "train", "--data", str(data), "--out", str(tmp_path / "m.bin"),
        "--window", "20", "--stacks", "1", "--kernel", "3", "--filters", "3",
        "--epochs", "1", "--stride", "10", "--initial-soc", "0.8",
        "--capacity-ah", "2.9",
    )
    assert code == 0
    assert "coulomb counting" in capsys.readouterr().err


def test_train_missing_file_fails_cleanly(tmp_path, capsys):
    code = run_cli("train", "--data", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "m.bin"))
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_train_warns_when_receptive_field_short(tmp_path, capsys):
    data = tmp_path / "d.csv"
    make_labeled_csv(data, n=300)
    code = run_cli(
        "train", "--data", str(data), "--out", str(tmp_path / "m.bin"),
        "--window", "250", "--stacks", "1", "--kernel", "2", "--filters", "2",
        "--epochs", "0", "--stride", "50",
    )
    assert code == 0  # receptive field 31 < window 250: warn, not fail
    assert "receptive field" in capsys.readouterr().err


# ---------------------------------------------------------------- eval


def perfect_model_files(tmp_path):
    """A zeroed model with head bias 0.5 plus a cycle whose SOC is 0.5."""
    cfg = TcnConfig(stacks=1, input_window=20, kernel_size=3, filters=3)
    model = build_model(cfg, seed=0, norm=NormalizationParams.identity())
    for p in model.parameters():
        p[...] = 0.0
    model.head_bias[0] = 0.5
    model_path = tmp_path / "perfect.bin"
    serialize(model, model_path)
    data_path = tmp_path / "flat.csv"
    make_labeled_csv(data_path, soc_value=0.5)
    return model_path, data_path


def test_eval_prints_metrics(tmp_path, capsys):
    model_path, data_path = perfect_model_files(tmp_path)
    trace_path = tmp_path / "trace.csv"
    code = run_cli("eval", "--model", str(model_path), "--data", str(data_path),
                   "--trace", str(trace_path))
    assert code == 0
    out = capsys.readouterr().out
    lines = dict(line.split("=", 1) for line in out.strip().splitlines())
    assert lines["mode"] == "teacher"
    assert lines["accuracy_pct"] == "100.00"
    assert float(lines["mse"]) == 0.0
    assert float(lines["mae"]) == 0.0
    assert int(lines["n"]) == 240 - 20 + 1
    trace_lines = trace_path.read_text().splitlines()
    assert trace_lines[0] == "time_s,soc_true,soc_pred"
    assert len(trace_lines) == 1 + 221
    first = trace_lines[1].split(",")
    assert float(first[1]) == 0.5 and float(first[2]) == 0.5


def test_eval_closed_loop_mode(tmp_path, capsys):
    model_path, data_path = perfect_model_files(tmp_path)
    code = run_cli("eval", "--model", str(model_path), "--data", str(data_path),
                   "--mode", "closed-loop")
    assert code == 0
    out = capsys.readouterr().out
    assert "mode=closed-loop" in out
    assert "accuracy_pct=100.00" in out


def test_eval_corrupt_model_fails(tmp_path, capsys):
    model_path, data_path = perfect_model_files(tmp_path)
    blob = bytearray(model_path.read_bytes())
    blob[-2] ^= 0xFF
    model_path.write_bytes(bytes(blob))
    code = run_cli("eval", "--model", str(model_path), "--data", str(data_path))
    assert code == 1
    assert "checksum" in capsys.readouterr().err


# ---------------------------------------------------------------- bench


def test_bench_reports_figures(tmp_path, capsys):
    model_path, _ = perfect_model_files(tmp_path)
    code = run_cli("bench", "--model", str(model_path),
                   "--warmup", "2", "--iterations", "20")
    assert code == 0
    out = dict(line.split("=", 1)
               for line in capsys.readouterr().out.strip().splitlines())
    assert int(out["file_size_bytes"]) == model_path.stat().st_size
    assert float(out["latency_ms_mean"]) > 0
    assert float(out["latency_ms_std"]) >= 0
    # block 0: 39+30+15, blocks 1-3: 30+30 each, head: 4
    assert int(out["parameters"]) == 84 + 3 * 60 + 4


# ---------------------------------------------------------------- sweep


def test_sweep_cli_end_to_end(tmp_path, capsys):
    d1, d2 = tmp_path / "a.csv", tmp_path / "b.csv"
    make_labeled_csv(d1, seed=1)
    make_labeled_csv(d2, seed=2)
    csv_out = tmp_path / "report.csv"
    code = run_cli(
        "sweep", "--data", str(d1), str(d2), "--stacks", "1", "--windows", "20",
        "--kernel", "3", "--filters", "3", "--epochs", "1", "--stride", "10",
        "--out-dir", str(tmp_path / "models"), "--csv", str(csv_out),
    )
    assert code == 0
    captured = capsys.readouterr()
    assert "held-out" in captured.out
    lines = csv_out.read_text().splitlines()
    assert lines[0].startswith("stacks,window,parameters")
    assert len(lines) == 2
    assert (tmp_path / "models" / "tcn_s1_w20.bin").exists()


def test_sweep_cli_reports_cell_failure(tmp_path, capsys):
    d1, d2 = tmp_path / "a.csv", tmp_path / "b.csv"
    make_labeled_csv(d1, seed=1)
    make_labeled_csv(d2, seed=2)
    code = run_cli(
        "sweep", "--data", str(d1), str(d2), "--stacks", "1",
        "--windows", "100000", "--kernel", "2", "--filters", "2",
        "--epochs", "1", "--out-dir", str(tmp_path / "models"),
    )
    assert code == 1
    captured = capsys.readouterr()
    assert "FAILED" in captured.out
    assert "failed" in captured.err


# ---------------------------------------------------------------- module


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "tcnsoc", "--help"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
    assert "sweep" in proc.stdout


def test_console_script_matches_module(tmp_path):
    a = subprocess.run(
        [sys.executable, "-m", "tcnsoc", "simulate", "--kind", "urban",
         "--duration", "30", "--seed", "1", "--out", str(tmp_path / "m.csv")],
        capture_output=True, text=True, timeout=120,
    )
    assert a.returncode == 0
    assert (tmp_path / "m.csv").exists()
