import json
import os
import subprocess
import sys

import numpy as np
import pytest

from rpcontrol.cli import EXIT_CONFIG, execute, main
from rpcontrol.config import PRESET_DIR, load_preset, full_scale, parse_config
from rpcontrol.errors import ConfigError
from rpcontrol.experiments import field_problem, plan_tasks, resolve_threads
from rpcontrol.io import MANIFEST, fmt, load_schedule, read_csv, read_manifest

PRESETS = sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def tiny_field(**over):
    cfg = {
        "experiment": "field-sweep",
        "model": {"name": "fadh_z"},
        "field_sweep": [{"B0": 0.05, "theta": 0.3}, {"B0": 0.5}],
        "control": {"kind": "coherent-x", "omega1": 31.4},
        "schedule": {"n_steps": 4, "dt": 0.05},
        "horizon": {"t1": 0.5},
        "objective": "minimize-yield",
        "optimizer": {"max_iterations": 2, "rng_seed": 7},
        "replications": 2,
    }
    cfg.update(over)
    return cfg


def tiny_anisotropy(**over):
    cfg = {
        "experiment": "anisotropy-sweep",
        "model": {"name": "fadh_z"},
        "j_ex_sweep_mhz": [0.0, 2.0],
        "control": {"kind": "UPC"},
        "schedule": {"n_steps": 4, "dt": 0.05},
        "horizon": {"t1": 0.5},
        "objective": "maximize-contrast",
        "optimizer": {"max_iterations": 1, "rng_seed": 3},
    }
    cfg.update(over)
    return cfg


@pytest.mark.parametrize("name", PRESETS)
def test_presets_validate(name):
    cfg = load_preset(name)
    assert plan_tasks(cfg)


def test_unknown_preset_lists_names():
    with pytest.raises(ConfigError, match="available"):
        load_preset("nope")


@pytest.mark.parametrize("bad", [
    {"unknown_key": 1},
    {"control": {"kind": "coherent-x"}},
    {"control": {"kind": "UPC", "omega1": 3.0}},
    {"field_sweep": []},
    {"objective": "maximize-contrast"},
    {"schedule": {"n_steps": 0, "dt": 0.1}},
    {"horizon": {"t1": 0.1}},
    {"replications": 0},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        parse_config(tiny_field(**bad))


def test_anisotropy_config_rules():
    parse_config(tiny_anisotropy())
    for bad in ({"control": {"kind": "coherent-x", "omega1": 1.0}}, {"j_ex_sweep_mhz": []},
                {"objective": "minimize-yield"}, {"model": {"name": "masuzawa7"}}):
        with pytest.raises(ConfigError):
            parse_config(tiny_anisotropy(**bad))


def test_full_scale_only_touches_masuzawa():
    cfg = load_preset("masuzawa_urf")
    big = full_scale(cfg)
    assert (big.schedule.n_steps, big.schedule.dt, big.t1) == (1000, 0.001, 10.0)
    small = parse_config(tiny_field())
    assert full_scale(small) is small


def test_thread_precedence(monkeypatch):
    cfg = parse_config(tiny_field())
    monkeypatch.setenv("RPCONTROL_THREADS", "3")
    assert resolve_threads(None, cfg) == 3
    assert resolve_threads(2, cfg) == 2
    assert resolve_threads(None, parse_config(tiny_field(threads=5))) == 5
    assert resolve_threads(1, parse_config(tiny_field(threads=5))) == 1
    monkeypatch.delenv("RPCONTROL_THREADS")
    assert resolve_threads(None, cfg) == (os.cpu_count() or 1)


def test_task_seeds_are_distinct_and_stable():
    cfg = parse_config(tiny_field(replications=4))
    a, b = plan_tasks(cfg), plan_tasks(cfg)
    assert a == b
    seeds = [t.seed for t in a if t.replication >= 0]
    assert len(set(seeds)) == len(seeds)
    assert plan_tasks(cfg, seed=8) != a


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, -2.5e-300, 12345678.9):
        assert float(fmt(x)) == x
    assert fmt(float("nan")) == "nan" and fmt(3) == "3"


def listing(root):
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file() and p.name != MANIFEST)


def csv_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_run_outputs_manifest_and_determinism(tmp_path):
    cfg = parse_config(tiny_field())
    a, b = tmp_path / "a", tmp_path / "b"
    man = execute(cfg, a, seed=7, threads=1)
    execute(cfg, b, seed=7, threads=1)
    assert man["files"] == listing(a)
    assert read_manifest(a)["files"] == man["files"]
    assert csv_bytes(a) == csv_bytes(b)
    header, rows = read_csv(a / "sweep.csv")
    assert header[:5] == ["B0_mT", "theta", "phi", "uncontrolled_yield", "best_controlled_yield"]
    assert len(rows) == 2
    for row in rows:
        assert float(row[4]) <= float(row[3])


def test_resume_reproduces_a_full_run(tmp_path):
    cfg = parse_config(tiny_field())
    full = tmp_path / "full"
    execute(cfg, full, seed=7, threads=1)
    part = tmp_path / "part"
    execute(cfg, part, seed=7, threads=1)
    # drop half the finished tasks, as if the run had been interrupted
    for p in sorted((part / "tasks").glob("*r001.json")):
        p.unlink()
    for p in (part / "schedules").glob("*"):
        p.unlink()
    assert main(["resume", "--out", str(part)]) == 0
    assert csv_bytes(part) == csv_bytes(full)


def test_zero_iterations_gives_uncontrolled_yield(tmp_path):
    cfg = parse_config(tiny_field(optimizer={"max_iterations": 0}))
    execute(cfg, tmp_path, seed=1, threads=1)
    _, rows = read_csv(tmp_path / "sweep.csv")
    for row in rows:
        assert row[3] == row[4]


def test_degenerate_custom_model_infinite_tail(tmp_path):
    # no hyperfines, no exchange, zero field: singlet and triplet never mix
    cfg = parse_config({
        "experiment": "field-sweep", "model": {"name": "custom"},
        "field_sweep": [{"B0": 0.0}], "control": {"kind": "UPC", "gamma_max": 0.0},
        "schedule": {"n_steps": 2, "dt": 0.1}, "horizon": {"tail": "infinite"},
        "objective": "minimize-yield", "optimizer": {"max_iterations": 0}})
    execute(cfg, tmp_path, seed=1, threads=1)
    _, rows = read_csv(tmp_path / "sweep.csv")
    assert float(rows[0][3]) == pytest.approx(0.5, abs=1e-12)


def test_anisotropy_sweep_outputs(tmp_path):
    cfg = parse_config(tiny_anisotropy(orientations={"B0": 0.0}, optimizer={"max_iterations": 0}))
    execute(cfg, tmp_path, seed=1, threads=1)
    header, rows = read_csv(tmp_path / "anisotropy.csv")
    assert header == ["j_ex_mhz", "delta_s_uncontrolled", "delta_s_shared", "delta_s_swapped", "n_failed"]
    for row in rows:
        # no field, no orientation dependence
        assert abs(float(row[1])) < 1e-12


def test_swapped_contrast_flips_sign(tmp_path):
    cfg = parse_config(tiny_anisotropy(optimizer={"max_iterations": 0}))
    execute(cfg, tmp_path, seed=1, threads=1)
    header, rows = read_csv(tmp_path / "anisotropy.csv")
    for row in rows:
        assert float(row[2]) == pytest.approx(float(row[1]), abs=1e-15)
        assert float(row[3]) == pytest.approx(-float(row[1]), abs=1e-15)


def test_schedule_file_reproduces_objective(tmp_path):
    cfg = parse_config(tiny_field())
    execute(cfg, tmp_path, seed=7, threads=1)
    _, reps = read_csv(tmp_path / "replications.csv")
    task, point, objective = reps[1][0], int(reps[1][1]), float(reps[1][6])
    sched = load_schedule(tmp_path / "schedules" / f"{task}.csv")
    prob = field_problem(cfg, point)
    assert prob.raw_value(prob.evaluate(sched).value) == pytest.approx(objective, abs=1e-12)
    assert np.array_equal(sched.amplitudes, np.load(tmp_path / "tasks" / f"{task}.npy"))


def test_cli_validate_schema_and_errors(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(tiny_field()))
    assert main(["validate", "--config", str(path)]) == 0
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert "properties" in schema
    path.write_text(json.dumps(tiny_field(bogus=True)))
    assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
    assert main(["validate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["resume", "--out", str(tmp_path / "nothing")]) == EXIT_CONFIG


def test_cli_unwritable_output(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(tiny_field(optimizer={"max_iterations": 0})))
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", str(path), "--out", str(blocker / "sub")]) == 1


def test_cli_oracle_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rpcontrol.cli", "oracle", "--no-gradient"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    report = json.loads(proc.stdout)
    assert report["max_abs_yield_error"] < 1e-10
