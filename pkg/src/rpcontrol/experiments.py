"""Field sweeps and orientation-contrast sweeps with seeded replications.

Every (sweep point, variant, replication) is an independent task with its own
seed derived from the base seed, so results do not depend on the worker count
or on the order in which tasks finish.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .config import ExperimentConfig, parse_config
from .errors import RPControlError
from .model import FieldSpec, HyperfineCoupling, SpinSystem, fadh_z, masuzawa7, mhz, mt
from .optimizer import OptimizationResult, init_schedule, optimize
from .problem import ControlProblem, contrast_problem, yield_problem
from .superop import ChannelSpec, NoiseSpec

log = logging.getLogger(__name__)

THREADS_ENV = "RPCONTROL_THREADS"


def resolve_threads(cli: int | None, cfg: ExperimentConfig) -> int:
    """CLI flag, then config, then environment, then the logical core count."""
    if cli is not None:
        return max(1, int(cli))
    if cfg.threads is not None:
        return cfg.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return os.cpu_count() or 1


def task_seed(base: int, *key: int) -> int:
    return int(np.random.SeedSequence(base, spawn_key=key).generate_state(1, np.uint32)[0])


def build_system(cfg: ExperimentConfig, j_ex_mhz: float | None = None) -> SpinSystem:
    m = cfg.model
    j = m.j_ex_mhz if j_ex_mhz is None else j_ex_mhz
    if m.name == "fadh_z":
        return fadh_z(mhz(j or 0.0))
    if m.name == "masuzawa7":
        base = masuzawa7()
        return base if j is None else SpinSystem(base.hyperfines, j_ex=mhz(j))
    hfs = []
    for h in m.hyperfines:
        if h.a_iso_mt is not None:
            hfs.append(HyperfineCoupling.isotropic(h.electron, mt(h.a_iso_mt), h.multiplicity))
        else:
            hfs.append(HyperfineCoupling(h.electron, mt(np.array(h.tensor_mt)), h.multiplicity))
    return SpinSystem(tuple(hfs), j_ex=mhz(j or 0.0))


def _numerics(cfg: ExperimentConfig) -> dict:
    n = cfg.numerics
    return dict(tail=cfg.horizon.tail, expm_tol=n.expm_tol, rk_rtol=n.rk_rtol, rk_atol=n.rk_atol,
                gradient_rule=n.gradient_rule, checkpoint_every=n.checkpoint_every)


def _common(cfg: ExperimentConfig) -> dict:
    return dict(k_b=cfg.k_b, k_f=cfg.k_f, noise=NoiseSpec(cfg.noise.model, cfg.noise.rate),
                n_steps=cfg.schedule.n_steps, dt=cfg.schedule.dt, t1=cfg.t1, **_numerics(cfg))


def field_problem(cfg: ExperimentConfig, point: int) -> ControlProblem:
    p = cfg.field_sweep[point]
    spec = ChannelSpec(cfg.control.kind, cfg.control.amplitude)
    return yield_problem(build_system(cfg), FieldSpec(p.B0, p.theta, p.phi), spec,
                         minimize=cfg.objective == "minimize-yield", **_common(cfg))


def orientation_fields(cfg: ExperimentConfig) -> tuple[FieldSpec, FieldSpec]:
    o = cfg.orientations
    return FieldSpec(o.B0, o.z.theta, o.z.phi), FieldSpec(o.B0, o.x.theta, o.x.phi)


def anisotropy_problem(cfg: ExperimentConfig, point: int, swapped: bool) -> ControlProblem:
    fz, fx = orientation_fields(cfg)
    spec = ChannelSpec(cfg.control.kind, cfg.control.amplitude)
    return contrast_problem(build_system(cfg, cfg.j_ex_sweep_mhz[point]), fz, fx, spec, swapped=swapped,
                            **_common(cfg))


@lru_cache(maxsize=8)
def _cached_problem(cfg_json: str, point: int, variant: str) -> ControlProblem:
    cfg = parse_config_json(cfg_json)
    if variant == "yield":
        return field_problem(cfg, point)
    return anisotropy_problem(cfg, point, variant == "swapped")


def parse_config_json(text: str) -> ExperimentConfig:
    return parse_config(json.loads(text))


@dataclass(frozen=True)
class Task:
    point: int
    variant: str            # "yield", "shared" or "swapped"
    replication: int        # -1 for the uncontrolled baseline
    seed: int

    @property
    def task_id(self) -> str:
        if self.replication < 0:
            return f"p{self.point:03d}-{self.variant}-uncontrolled"
        return f"p{self.point:03d}-{self.variant}-r{self.replication:03d}"


@dataclass
class TaskResult:
    task: Task
    status: str                     # "ok" or "failed"
    objective: float = float("nan")  # natural units: yield or contrast
    yields: tuple = ()
    termination: str = ""
    iterations: int = 0
    history: list[float] = field(default_factory=list)
    halvings: list[int] = field(default_factory=list)
    amplitudes: np.ndarray | None = None
    dt: float = 0.0
    error: str = ""
    wall_time: float = 0.0


def plan_tasks(cfg: ExperimentConfig, seed: int | None = None) -> list[Task]:
    base = cfg.optimizer.rng_seed if seed is None else seed
    if cfg.experiment == "field-sweep":
        points, variants = range(len(cfg.field_sweep)), ["yield"]
    else:
        points, variants = range(len(cfg.j_ex_sweep_mhz)), list(cfg.variants)
    tasks = []
    for p in points:
        tasks.append(Task(p, variants[0] if cfg.experiment == "field-sweep" else "shared", -1, 0))
        for v in variants:
            code = ("yield", "shared", "swapped").index(v)
            for r in range(cfg.replications):
                tasks.append(Task(p, v, r, task_seed(base, p, code, r)))
    return tasks


def run_task(cfg_json: str, task: Task) -> TaskResult:
    t0 = time.perf_counter()
    cfg = parse_config_json(cfg_json)
    try:
        prob = _cached_problem(cfg_json, task.point, task.variant)
        if task.replication < 0:
            sched = prob.zero_schedule()
            ev = prob.evaluate(sched)
            res = TaskResult(task, "ok", prob.raw_value(ev.value), tuple(ev.yields.tolist()),
                             amplitudes=sched.amplitudes, dt=sched.dt)
        else:
            opt = cfg.optimizer.build(task.seed)
            # with no iterations allowed the replication applies no control at all
            start = (prob.zero_schedule() if opt.max_iterations == 0 else
                     init_schedule(prob.n_steps, prob.n_channels, prob.lower, prob.upper, opt, prob.dt))
            r: OptimizationResult = optimize(prob, opt, start)
            ev = r.final_evaluation
            res = TaskResult(task, "ok", prob.raw_value(ev.value), tuple(ev.yields.tolist()), r.termination,
                             r.iterations_used, [prob.raw_value(v) for v in r.objective_history],
                             list(r.line_search_halvings), r.schedule.amplitudes, r.schedule.dt)
    except (RPControlError, ArithmeticError, ValueError) as exc:
        log.error("task %s failed: %s", task.task_id, exc)
        res = TaskResult(task, "failed", error=f"{type(exc).__name__}: {exc}")
    res.wall_time = time.perf_counter() - t0
    return res


def run_tasks(cfg: ExperimentConfig, tasks: list[Task], threads: int = 1, on_result=None) -> list[TaskResult]:
    """Run ``tasks``; ``on_result`` is called in submission order from the calling process."""
    cfg_json = cfg.model_dump_json()
    results = []
    if threads <= 1 or len(tasks) <= 1:
        for t in tasks:
            r = run_task(cfg_json, t)
            if on_result:
                on_result(r)
            results.append(r)
        return results
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        for r in pool.map(run_task, [cfg_json] * len(tasks), tasks):
            if on_result:
                on_result(r)
            results.append(r)
    return results


def _ok(results, point, variant):
    return [r for r in results if r.task.point == point and r.task.variant == variant
            and r.task.replication >= 0 and r.status == "ok"]


def _baseline(results, point):
    for r in results:
        if r.task.point == point and r.task.replication < 0:
            return r
    return None


def sweep_rows(cfg: ExperimentConfig, results: list[TaskResult]) -> list[dict]:
    """Summary table, one row per sweep point."""
    rows = []
    nan = float("nan")
    if cfg.experiment == "field-sweep":
        minimize = cfg.objective == "minimize-yield"
        for p, fp in enumerate(cfg.field_sweep):
            base = _baseline(results, p)
            vals = np.array([r.objective for r in _ok(results, p, "yield")])
            best = (vals.min() if minimize else vals.max()) if vals.size else nan
            p80 = float(np.percentile(vals, 80)) if vals.size else nan
            rows.append({"B0_mT": fp.B0, "theta": fp.theta, "phi": fp.phi,
                         "uncontrolled_yield": base.objective if base and base.status == "ok" else nan,
                         "best_controlled_yield": float(best), "p80_controlled_yield": p80,
                         "n_ok": int(vals.size),
                         "n_failed": sum(1 for r in results if r.task.point == p and r.status != "ok")})
        return rows
    for p, j in enumerate(cfg.j_ex_sweep_mhz):
        base = _baseline(results, p)
        row = {"j_ex_mhz": j,
               "delta_s_uncontrolled": base.objective if base and base.status == "ok" else nan}
        for v in ("shared", "swapped"):
            vals = [r.objective for r in _ok(results, p, v)]
            row[f"delta_s_{v}"] = max(vals) if vals else nan
        row["n_failed"] = sum(1 for r in results if r.task.point == p and r.status != "ok")
        rows.append(row)
    return rows
