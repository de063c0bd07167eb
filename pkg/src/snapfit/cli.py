"""Command-line interface: ``snapfit <command>`` with shared global flags."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import skills as S
from . import world as W
from .compare import compare_models, force_trace
from .rl.checkpoint import CheckpointVersionError, load_checkpoint
from .rl.train import (core_success, evaluate_grid, success_at, train, write_curve, write_grid_csv,
                       write_pgm)
from .scenario import SKILL_UNITS, Scenario, ScenarioError, load_scenario

log = logging.getLogger("snapfit")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_VERSION = 0, 1, 2, 3


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Record of one command run, written as ``manifest.json`` next to its outputs."""

    def __init__(self, command: str, scenario: Scenario, seeds, args: argparse.Namespace):
        self.data = {
            "command": command,
            "snapfit_version": __version__,
            "scenario_path": scenario.path,
            "scenario_sha256": scenario.sha256,
            "seeds": list(seeds),
            "deterministic": bool(args.deterministic),
            "workers": _workers(args),
            "argv": sys.argv[1:],
            "started": _now(),
            "finished": None,
            "outputs": [],
        }

    def add(self, path) -> Path:
        self.data["outputs"].append(str(path))
        return Path(path)

    def write(self, out_dir: Path, **extra) -> Path:
        self.data.update(extra)
        self.data["finished"] = _now()
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2) + "\n")
        return path


def _workers(args) -> int:
    return 1 if args.deterministic else max(1, args.workers)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list, list]:
    """Parse a CSV written by this tool back into its header and typed rows."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = []
        for raw in r:
            row = []
            for v in raw:
                try:
                    row.append(int(v))
                except ValueError:
                    try:
                        row.append(float(v))
                    except ValueError:
                        row.append(v)
            rows.append(row)
    return header, rows


FORCE_HEADER = ("step", "t_s", "progress_mm", "f_mm", "F_Q_N", "F_J_N", "skill", "latched")


def cmd_forces(args, sc: Scenario, out: Path, man: RunManifest) -> int:
    tr = force_trace(sc.world, args.model)
    rows = zip(tr.steps, tr.time, tr.progress / W.MM, tr.deflection / W.MM, tr.F_Q, tr.F_J, tr.skill,
               tr.latched.astype(int))
    path = man.add(out / f"forces_{tr.model}.csv")
    _write_csv(path, FORCE_HEADER, rows)
    print(f"{tr.model}: peak F_Q {tr.F_Q.max():.3f} N at step {tr.peak_step}, "
          f"snap-in step {tr.snap_in_step}, success {tr.success}")
    return EXIT_OK


def cmd_model_compare(args, sc: Scenario, out: Path, man: RunManifest) -> int:
    traces = compare_models(args.variants, sc.world)
    n = max(len(t.steps) for t in traces.values())
    header = ["step"] + [f"{c}_{v}" for v in traces for c in ("F_Q_N", "F_J_N")] + [f"snap_in_{v}" for v in traces]
    rows = []
    for i in range(n):
        row = [i]
        for t in traces.values():
            row += [t.F_Q[i], t.F_J[i]] if i < len(t.steps) else ["", ""]
        row += [int(t.snap_in_step == i) for t in traces.values()]
        rows.append(row)
    _write_csv(man.add(out / "model_compare.csv"), header, rows)
    summary = [(v, t.F_Q.max(), t.F_J.max(), t.peak_step, t.snap_in_step if t.snap_in_step is not None else "")
               for v, t in traces.items()]
    _write_csv(man.add(out / "model_compare_summary.csv"),
               ("variant", "peak_F_Q_N", "peak_F_J_N", "peak_step", "snap_in_step"), summary)
    for row in summary:
        print("{:<10} peak F_Q {:8.3f} N  peak F_J {:8.3f} N  snap-in step {}".format(row[0], row[1], row[2], row[4]))
    return EXIT_OK


def _parse_action(entry, idx: int):
    if isinstance(entry, list):
        return S.Action.from_array(entry)
    if entry == "nominal":
        return S.nominal_action()
    if not isinstance(entry, dict) or entry.get("choice") not in ("terminal", "pivot"):
        raise ValueError(f"action {idx}: expected 'nominal', a list of 14 numbers or a table with choice")
    base = S.decode_action(S.nominal_action())[1]
    skills = ("lin", "approach", "slide", "pivot") if entry["choice"] == "terminal" else ("pivot",)
    params = {}
    for name in skills:
        given = entry.get(name, {})
        unknown = set(given) - set(SKILL_UNITS[name])
        if unknown:
            raise ValueError(f"action {idx}: unknown {name} parameter(s) {sorted(unknown)}")
        vals = dict(base[name].values)
        vals.update({k: float(v) * SKILL_UNITS[name][k] for k, v in given.items()})
        params[name] = S.SkillParams(name, vals)
    return S.encode_action(entry["choice"], params)


def cmd_simulate(args, sc: Scenario, out: Path, man: RunManifest) -> int:
    script = ["nominal"] if args.actions is None else json.loads(Path(args.actions).read_text())
    if not isinstance(script, list) or not script:
        raise ValueError("action script must be a non-empty JSON list")
    actions = [_parse_action(e, i) for i, e in enumerate(script)]
    rail = W.RailConfig(args.dx * W.MM, args.gamma * W.DEG, sc.randomization.y_rail)
    st = W.make_state(sc.world, rail, budget=len(actions))
    st.log_rows = []
    rng = np.random.default_rng(args.seed)
    queue = iter(actions)
    res = S.run_sequence(st, lambda obs: next(queue), N=len(actions), rng=rng, noise=sc.randomization.force_noise)
    _write_csv(man.add(out / "episode.csv"), W.LOG_COLUMNS, st.log_rows)
    skills = [(i, lg.name, lg.stop_reason, lg.t_start, lg.t_end, lg.steps)
              for i, step in enumerate(res.steps) for lg in step.logs]
    _write_csv(man.add(out / "skills.csv"), ("action", "skill", "stop_reason", "t_start_s", "t_end_s", "steps"),
               skills)
    print(f"success {res.success}, {res.n_skills} action(s), {res.n_sub_skills} sub-skill(s), "
          f"return {sum(res.rewards):.4f}, tunnelled {res.tunnelled}")
    return EXIT_OK if res.success else EXIT_FAILURE


def cmd_train(args, sc: Scenario, out: Path, man: RunManifest) -> int:
    cfg = sc.train
    overrides = {k: v for k, v in (("total_skills", args.steps), ("algorithm", args.algorithm),
                                   ("eval_period", args.eval_period), ("eval_rollouts", args.eval_rollouts))
                 if v is not None}
    if overrides:
        if overrides.get("total_skills", cfg.total_skills) and "eval_period" not in overrides:
            overrides["eval_period"] = min(cfg.eval_period, overrides.get("total_skills", cfg.total_skills))
        cfg = replace(cfg, **overrides)
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    man.data["seeds"] = seeds
    for seed in seeds:
        res = train(cfg, sc.world, sc.randomization, seed=seed, out_dir=out, workers=_workers(args))
        for p in res.checkpoints:
            man.add(p)
            man.add(str(p) + ".json")
        if cfg.total_skills:
            write_curve(man.add(out / f"curve_{cfg.algorithm.lower()}_seed{seed}.csv"), res.curve)
        last = res.curve[-1] if res.curve else None
        print(f"seed {seed}: {cfg.total_skills} skills in {res.wall_time:.1f}s"
              + (f", final success {last['success_rate']:.2f}, mean skills {last['mean_skills']:.2f}" if last else ""))
    return EXIT_OK


def cmd_evaluate(args, sc: Scenario, out: Path, man: RunManifest) -> int:
    agent, meta = load_checkpoint(args.checkpoint)
    grid = sc.grid
    if args.rollouts is not None:
        grid = replace(grid, rollouts=args.rollouts)
    table = evaluate_grid(agent, grid, sc.world, sc.n_skills, workers=_workers(args))
    write_grid_csv(man.add(out / "grid.csv"), table, grid)
    write_pgm(man.add(out / "grid.pgm"), table)
    print(f"core success {core_success(table, grid):.3f}, |yaw|=8 deg success {success_at(table, grid, 8.0):.3f}")
    man.data["checkpoint"] = {"path": str(args.checkpoint), **{k: meta[k] for k in ("algorithm", "seed", "step")
                                                                if k in meta}}
    return EXIT_OK


COMMANDS = {"forces": cmd_forces, "model-compare": cmd_model_compare, "simulate": cmd_simulate,
            "train": cmd_train, "evaluate": cmd_evaluate}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--scenario", default=d(None), help="scenario TOML file (mm, deg, N, s)")
    p.add_argument("--seed", type=int, default=d(None), help="random seed (u64)")
    p.add_argument("--out", default=d("snapfit_out"), help="output directory")
    p.add_argument("--workers", type=int, default=d(1), help="rollout worker processes")
    p.add_argument("--deterministic", action="store_true", default=d(False),
                   help="single-threaded, bit-reproducible mode")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snapfit", description="Planar snap-fit DIN-rail assembly simulator")
    p.add_argument("--version", action="version", version=f"snapfit {__version__}")
    _add_globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("forces", help="force curves along the scripted nominal assembly")
    c.add_argument("--model", choices=W.JOINING_MODELS, default=None,
                   help="joining model (default: scenario lumped.variant)")
    c = sub.add_parser("model-compare", help="compare joining models on one trajectory")
    c.add_argument("--variants", nargs="*", choices=W.JOINING_MODELS, default=["slide", "one_hinge", "two_hinge"])
    c = sub.add_parser("simulate", help="replay an action script")
    c.add_argument("--actions", default=None, help="JSON action list (default: the nominal terminal action)")
    c.add_argument("--dx", type=float, default=0.0, help="rail offset, mm")
    c.add_argument("--gamma", type=float, default=0.0, help="rail yaw, deg")
    c = sub.add_parser("train", help="train a policy")
    c.add_argument("--steps", type=int, default=None, help="skill executions per seed")
    c.add_argument("--algorithm", choices=("SAC", "TD3"), default=None)
    c.add_argument("--eval-period", type=int, default=None)
    c.add_argument("--eval-rollouts", type=int, default=None)
    c = sub.add_parser("evaluate", help="evaluate a checkpoint on the yaw/position grid")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--rollouts", type=int, default=None, help="rollouts per grid cell")
    for c in sub.choices.values():
        _add_globals(c, suppress=True)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SNAPFIT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "model-compare" and not args.variants:
        parser.error("model-compare needs at least one variant")
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"snapfit: bad scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.seed is None and args.command != "train":
        args.seed = 0
    man = RunManifest(args.command, sc, [] if args.seed is None else [args.seed], args)
    previous = sc.apply_skill_ranges()
    try:
        code = COMMANDS[args.command](args, sc, out, man)
    except CheckpointVersionError as exc:
        print(f"snapfit: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"snapfit: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        S.restore_ranges(previous)
    man.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
