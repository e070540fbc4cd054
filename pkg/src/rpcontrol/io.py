"""CSV and manifest output.

Floats are written with ``%.17g`` so every value round-trips exactly; files are
UTF-8 with a header row and no locale dependence.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, ExperimentConfig
from .propagation import ControlSchedule

MANIFEST = "manifest.json"
RUN_FILE = "run.json"
TASK_DIR = "tasks"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return "%.17g" % x
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_schedule(path, schedule: ControlSchedule, labels: list[str]) -> Path:
    header = ["step", "t_start_us"] + [f"u_{lab}" for lab in labels]
    rows = ([k, k * schedule.dt, *schedule.amplitudes[k]] for k in range(schedule.n_steps))
    return write_csv(Path(path), header, rows)


def load_schedule(path, dt: float | None = None) -> ControlSchedule:
    """Read a schedule CSV; ``dt`` is inferred from the start times unless given."""
    header, rows = read_csv(path)
    if header[:2] != ["step", "t_start_us"]:
        raise ValueError(f"{path} is not a schedule file")
    if not rows:
        raise ValueError(f"{path} has no control steps")
    if dt is None:
        if len(rows) < 2:
            raise ValueError("a single-step schedule file does not determine dt; pass it explicitly")
        dt = float(rows[1][1]) - float(rows[0][1])
    u = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), len(header) - 2)
    return ControlSchedule(u, dt)


def write_history(path, history: list[float], halvings: list[int]) -> Path:
    rows = ([i, v, halvings[i - 1] if 0 < i <= len(halvings) else 0] for i, v in enumerate(history))
    return write_csv(Path(path), ["iteration", "objective", "halvings"], rows)


def save_task(out: Path, result) -> Path:
    """Per-task record used by ``resume``; amplitudes are kept in a ``.npy`` side file."""
    t = result.task
    rec = {"task": {"point": t.point, "variant": t.variant, "replication": t.replication, "seed": t.seed},
           "status": result.status, "objective": fmt(result.objective), "yields": [fmt(y) for y in result.yields],
           "termination": result.termination, "iterations": result.iterations,
           "history": [fmt(v) for v in result.history], "halvings": result.halvings,
           "dt": fmt(result.dt), "error": result.error, "wall_time": result.wall_time}
    path = out / TASK_DIR / f"{t.task_id}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(rec, indent=1), encoding="utf-8")
    os.replace(tmp, path)
    if result.amplitudes is not None:
        np.save(out / TASK_DIR / f"{t.task_id}.npy", result.amplitudes)
    return path


def load_task(out: Path, task):
    from .experiments import TaskResult
    path = out / TASK_DIR / f"{task.task_id}.json"
    if not path.exists():
        return None
    rec = json.loads(path.read_text(encoding="utf-8"))
    if rec["task"]["seed"] != task.seed:
        return None
    amp_path = out / TASK_DIR / f"{task.task_id}.npy"
    amps = np.load(amp_path) if amp_path.exists() else None
    return TaskResult(task, rec["status"], float(rec["objective"]), tuple(float(y) for y in rec["yields"]),
                      rec["termination"], rec["iterations"], [float(v) for v in rec["history"]],
                      rec["halvings"], amps, float(rec["dt"]), rec["error"], rec["wall_time"])


def emit_outputs(out, cfg: ExperimentConfig, results, rows: list[dict], channel_labels: list[str], *,
                 seed: int, threads: int, wall_time: float) -> dict:
    """Write the summary, per-replication files, plot table and manifest; return the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    summary = "sweep.csv" if cfg.experiment == "field-sweep" else "anisotropy.csv"
    header = list(rows[0].keys()) if rows else []
    files.append(write_csv(out / summary, header, ([r[k] for k in header] for r in rows)))

    rep_rows = []
    for r in results:
        t = r.task
        rep_rows.append([t.task_id, t.point, t.variant, t.replication, t.seed, r.status, r.objective,
                         r.termination, r.iterations, r.error])
        if t.replication < 0 or r.status != "ok":
            continue
        files.append(write_schedule(out / "schedules" / f"{t.task_id}.csv",
                                    ControlSchedule(r.amplitudes, r.dt), channel_labels))
        files.append(write_history(out / "histories" / f"{t.task_id}.csv", r.history, r.halvings))
    files.append(write_csv(out / "replications.csv",
                           ["task", "point", "variant", "replication", "seed", "status", "objective",
                            "termination", "iterations", "error"], rep_rows))
    files.append(write_csv(out / "plot_table.csv", ["series", "x", "y"], _plot_rows(cfg, rows)))
    for r in results:
        for suffix in (".json", ".npy"):
            p = out / TASK_DIR / f"{r.task.task_id}{suffix}"
            if p.exists():
                files.append(p)
    if (out / RUN_FILE).exists():
        files.append(out / RUN_FILE)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": json.loads(cfg.model_dump_json()),
        "seed": seed,
        "threads": threads,
        "seeds": {r.task.task_id: r.task.seed for r in results if r.task.replication >= 0},
        "objectives": {r.task.task_id: fmt(r.objective) for r in results},
        "failures": {r.task.task_id: r.error for r in results if r.status != "ok"},
        "wall_time_s": wall_time,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "files": sorted(str(p.relative_to(out)) for p in files),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest


def _plot_rows(cfg: ExperimentConfig, rows: list[dict]):
    x_key = "B0_mT" if cfg.experiment == "field-sweep" else "j_ex_mhz"
    for row in rows:
        for k, v in row.items():
            if k in (x_key, "theta", "phi", "n_ok", "n_failed"):
                continue
            yield [k, row[x_key], v]


def read_manifest(out) -> dict:
    path = Path(out) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no manifest in {out}")
    return json.loads(path.read_text(encoding="utf-8"))
