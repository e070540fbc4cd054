"""Command-line front end: ``rpcontrol {validate,schema,run,resume,oracle,presets}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import PRESET_DIR, ExperimentConfig, json_schema, load_config, load_preset, full_scale, parse_config
from .errors import ConfigError, RPControlError
from .experiments import (anisotropy_problem, build_system, field_problem, plan_tasks, resolve_threads,
                          run_tasks, sweep_rows)
from .io import RUN_FILE, emit_outputs, load_task, save_task
from .optimizer import OptimizerConfig, init_schedule
from .superop import ChannelSpec, control_channels

log = logging.getLogger("rpcontrol")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def channel_labels(cfg: ExperimentConfig) -> list[str]:
    reg = build_system(cfg).register
    return [ch.label for ch in control_channels(ChannelSpec(cfg.control.kind, cfg.control.amplitude), reg)]


def execute(cfg: ExperimentConfig, out: Path, *, seed: int, threads: int, resume: bool = False) -> dict:
    """Run every planned task (skipping finished ones when resuming) and write all outputs."""
    t0 = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    if not resume:
        run = {"config": json.loads(cfg.model_dump_json()), "seed": seed, "threads": threads}
        (out / RUN_FILE).write_text(json.dumps(run, indent=2), encoding="utf-8")
    tasks = plan_tasks(cfg, seed)
    done = {}
    if resume:
        for t in tasks:
            r = load_task(out, t)
            if r is not None and r.status == "ok":
                done[t] = r
        log.info("resuming: %d of %d tasks already complete", len(done), len(tasks))
    todo = [t for t in tasks if t not in done]
    fresh = run_tasks(cfg, todo, threads, on_result=lambda r: save_task(out, r))
    done.update({r.task: r for r in fresh})
    results = [done[t] for t in tasks]
    rows = sweep_rows(cfg, results)
    return emit_outputs(out, cfg, results, rows, channel_labels(cfg), seed=seed, threads=threads,
                        wall_time=time.perf_counter() - t0)


def _load(args) -> ExperimentConfig:
    if getattr(args, "preset", None):
        cfg = load_preset(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("give --config FILE or --preset NAME")
    if getattr(args, "full_scale", False):
        cfg = full_scale(cfg)
    return cfg


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"ok: {cfg.experiment} on {cfg.model.name}, {len(plan_tasks(cfg))} tasks")
    return 0


def cmd_schema(args) -> int:
    print(json.dumps(json_schema(), indent=2))
    return 0


def cmd_presets(args) -> int:
    for p in sorted(PRESET_DIR.glob("*.json")):
        print(p.stem)
    return 0


def _report(manifest: dict, out: Path) -> int:
    print(f"wrote {len(manifest['files'])} files to {out}")
    if manifest["failures"]:
        print(f"warning: {len(manifest['failures'])} task(s) failed; see replications.csv", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.output_dir or "")
    if not str(out) or str(out) == ".":
        raise ConfigError("no output directory: pass --out or set output_dir")
    seed = cfg.optimizer.rng_seed if args.seed is None else args.seed
    threads = resolve_threads(args.threads, cfg)
    return _report(execute(cfg, out, seed=seed, threads=threads), out)


def cmd_resume(args) -> int:
    out = Path(args.out)
    path = out / RUN_FILE
    if not path.exists():
        raise ConfigError(f"{out} holds no run to resume")
    run = json.loads(path.read_text(encoding="utf-8"))
    cfg = parse_config(run["config"])
    threads = resolve_threads(args.threads, cfg) if args.threads else run["threads"]
    return _report(execute(cfg, out, seed=run["seed"], threads=threads, resume=True), out)


def cmd_oracle(args) -> int:
    from .oracle import compare
    if args.config or args.preset:
        cfg = _load(args)
    else:
        cfg = load_preset("oracle_fadh")
    prob = field_problem(cfg, 0) if cfg.experiment == "field-sweep" else anisotropy_problem(cfg, 0, False)
    sched = init_schedule(prob.n_steps, prob.n_channels, prob.lower, prob.upper,
                          OptimizerConfig(rng_seed=args.seed, init_std=0.3), prob.dt)
    report = compare(prob, sched, with_gradient=not args.no_gradient)
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpcontrol", description="Optimal control of radical-pair spin dynamics.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def source(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--config", type=Path, help="experiment JSON file")
        g.add_argument("--preset", help="name of a bundled preset (see `rpcontrol presets`)")
        p.add_argument("--full-scale", action="store_true",
                       help="masuzawa7 only: 1000 x 1 ns controls and t1 = 10 us")

    p = sub.add_parser("validate", help="check a config against the schema")
    source(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("schema", help="print the config JSON schema")
    p.set_defaults(func=cmd_schema)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("run", help="run an experiment")
    source(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="finish an interrupted run in place")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("oracle", help="compare the sparse pipeline with dense propagation")
    source(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-gradient", action="store_true")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RPControlError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
