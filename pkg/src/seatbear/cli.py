"""Command line entry point: ``seatbear <subcommand>``.

A config file (YAML or JSON) may hold the sections ``pipeline``,
``trial``, ``dataset`` and ``bench``; command line flags override them.
Every command writes JSON, to ``--out`` or to standard output. The exit
status is 0 for a completed run, whatever the trial outcome, and 2 for
configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .assistance import AssistScene, HumanPolicy, assistance_loop, attempt_plan
from .chairs import VARIANTS, ChairGenParams, DegenerateParams, generate_chair
from .geometry import EmptyMesh, RigidTransform, compute_obb, load_mesh, save_mesh
from .imagination import NoSittingFound, imagine
from .pipeline import (DEFAULT_POLICY, PROTOCOLS, ConfigError, PipelineConfig, TrialConfig, bench_suite, format_table,
                       load_config, run_bench, run_trial)

log = logging.getLogger("seatbear")

SECTIONS = ("pipeline", "trial", "dataset", "bench")


def _read_config(path) -> dict:
    if path is None:
        return {}
    data = load_config(path)
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return data


def _emit(obj, out) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _pipeline(cfg: dict, args) -> PipelineConfig:
    pc = PipelineConfig.from_dict(cfg.get("pipeline"))
    if getattr(args, "parallel", None):
        pc = PipelineConfig.from_dict({**pc.to_dict(), "workers": args.parallel})
    return pc


def _placed_mesh(args, trial: dict):
    x, y, yaw = trial.get("placement", (1.0, 0.0, 0.0))
    return load_mesh(args.mesh).transformed(RigidTransform.from_yaw(yaw, (x, y, 0.0)))


def cmd_gen_dataset(args, cfg: dict) -> int:
    ds = cfg.get("dataset", {})
    count = args.count if args.count is not None else int(ds.get("count", 15))
    variants = args.variant or ds.get("variants") or ["standard"]
    base = args.seed if args.seed is not None else int(ds.get("seed", 0))
    out = Path(args.out or "dataset")
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for k in range(count):
        variant = variants[k % len(variants)]
        params = ChairGenParams(variant=variant, seed=base + k)
        chair = generate_chair(params)
        stem = f"chair_{k:03d}_{variant}"
        save_mesh(chair.mesh, out / f"{stem}.obj", out / f"{stem}.attributes.json")
        (out / f"{stem}.seat.json").write_text(json.dumps(chair.seat.to_dict(), indent=2))
        index.append({"mesh": f"{stem}.obj", "variant": variant, "seed": base + k,
                      "watertight": chair.mesh.is_watertight()})
    _emit({"chairs": index}, out / "index.json")
    log.info("wrote %d chairs to %s", count, out)
    return 0


def cmd_imagine(args, cfg: dict) -> int:
    pc = _pipeline(cfg, args)
    mesh = load_mesh(args.mesh)
    agent = pc.agent()
    try:
        pose, report = imagine(mesh, agent, pc.sam_config(agent), pc.sim, workers=pc.workers)
        out = {"status": "ok", "pose": pose.to_dict(), "report": report.to_dict()}
    except NoSittingFound as exc:
        out = {"status": "NoSittingFound", "pose": None, "report": exc.args[1].to_dict()}
    _emit(out, args.out)
    return 0


def cmd_plan(args, cfg: dict) -> int:
    pc = _pipeline(cfg, args)
    trial = dict(cfg.get("trial", {}))
    seed = args.seed if args.seed is not None else int(trial.get("seed", 0))
    mesh = _placed_mesh(args, trial)
    agent = pc.agent()
    try:
        pose, _ = imagine(mesh, agent, pc.sam_config(agent), pc.sim, workers=pc.workers)
    except NoSittingFound:
        _emit({"status": "NoSittingFound"}, args.out)
        return 0
    scene = AssistScene(mesh, compute_obb(mesh), pose, pc.arena_obj(), pc.start(), pc.footprint)
    attempt = attempt_plan(scene, seed, pc.nav)
    out = {"status": attempt.status, "pose": pose.to_dict(), "attempt": attempt.to_dict(), "assistance": None}
    if not attempt.ok and args.protocol is not None:
        policy = HumanPolicy(trial.get("policy") or DEFAULT_POLICY[args.protocol])
        outcome = assistance_loop(scene, policy, pc.max_rounds, seed, pc.nav)
        out["assistance"] = outcome.to_dict()
        out["status"] = outcome.status
        for r in outcome.rounds:
            print(r.instruction.text, file=sys.stderr)
    _emit(out, args.out)
    return 0


def _trial_config(args, cfg: dict) -> TrialConfig:
    trial = dict(cfg.get("trial", {}))
    trial["pipeline"] = _pipeline(cfg, args).to_dict()
    if args.mesh:
        trial["mesh_path"] = args.mesh
        trial.pop("chair", None)
    elif "chair" not in trial and "mesh_path" not in trial:
        trial["chair"] = {"variant": "standard", "seed": args.seed or 0}
    if args.protocol:
        trial["protocol"] = args.protocol
    if args.seed is not None:
        trial["seed"] = args.seed
    return TrialConfig.from_dict(trial)


def cmd_trial(args, cfg: dict) -> int:
    tc = _trial_config(args, cfg)
    result = run_trial(tc)
    if result.assistance:
        for r in result.assistance["rounds"]:
            print(r["instruction"], file=sys.stderr)
    text = result.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return 0


def cmd_bench(args, cfg: dict) -> int:
    pc = _pipeline(cfg, args)
    bcfg = cfg.get("bench", {})
    seed = args.seed if args.seed is not None else int(bcfg.get("seed", 0))
    suite = bench_suite(seed, pc, int(bcfg.get("n_chairs", 12)), bcfg.get("counts"))

    def progress(i, n, r):
        log.info("trial %d/%d %s %s", i, n, r.config["protocol"], r.status)

    summary, results = run_bench(suite, parallel=args.parallel or 1, progress=progress)
    print(format_table(summary))
    _emit({"summary": summary, "trials": [r.to_dict() for r in results]}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seatbear", description="Chair sitting imagination, navigation and bear seating.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mesh=False, protocol=False, parallel=False):
        sp.add_argument("--config", help="YAML or JSON config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="output path (default: stdout)")
        if mesh:
            sp.add_argument("--mesh", help="chair mesh (OBJ or STL)")
        if protocol:
            sp.add_argument("--protocol", choices=PROTOCOLS)
        if parallel:
            sp.add_argument("--parallel", type=int, default=None, help="worker processes")
        return sp

    g = common(sub.add_parser("gen-dataset", help="write procedural chairs as OBJ files"))
    g.add_argument("--count", type=int, default=None)
    g.add_argument("--variant", action="append", choices=VARIANTS)
    g.set_defaults(func=cmd_gen_dataset)
    im = common(sub.add_parser("imagine", help="imagine the sitting pose on a mesh"), mesh=True, parallel=True)
    im.set_defaults(func=cmd_imagine)
    pl = common(sub.add_parser("plan", help="imagine, then plan the walk to the goal pose"), mesh=True,
                protocol=True, parallel=True)
    pl.set_defaults(func=cmd_plan)
    tr = common(sub.add_parser("trial", help="run one end-to-end trial"), mesh=True, protocol=True, parallel=True)
    tr.set_defaults(func=cmd_trial)
    be = common(sub.add_parser("bench", help="run the benchmark suite"), parallel=True)
    be.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command in ("imagine", "plan") and not args.mesh:
        parser.error(f"{args.command} needs --mesh")
    try:
        cfg = _read_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, DegenerateParams, EmptyMesh, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
