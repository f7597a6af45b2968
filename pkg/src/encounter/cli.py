"""Command line entry point: render, serve, experiment, anova."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import EncounterError
from .expstats import ExperimentConfig, read_anova_input, rm_anova, run_experiment
from .robot import RobotModel
from .runtime import SessionConfig, load_params, replay


def _config(args, **extra) -> SessionConfig:
    kw = {}
    if getattr(args, "params", None):
        kw["planner"], kw["texture"] = load_params(args.params)
    return SessionConfig(rate=args.rate, scene=args.scene, robot=args.robot, **kw, **extra)


def cmd_render(args) -> int:
    cfg = _config(args, trajectory=args.hand)
    outputs = replay(cfg, args.out)
    ct = np.array([o.compute_time for o in outputs]) * 1e3
    summary = {"ticks": len(outputs), "out": args.out}
    if len(ct):
        summary.update(mean_ms=round(float(ct.mean()), 4), p99_ms=round(float(np.percentile(ct, 99)), 4))
    print(json.dumps(summary))
    return 0


def cmd_serve(args) -> int:
    from .server import make_server

    cfg = _config(args, port=args.port)
    scene, robot = cfg.load_scene(), cfg.load_robot()
    server = make_server(lambda: cfg.session(scene, robot), args.host, args.port)
    host, port = server.server_address[:2]
    print(f"listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_experiment(args) -> int:
    robot = RobotModel.load(args.robot) if args.robot else RobotModel()
    cfg = ExperimentConfig(args.out, tuple(args.shapes), args.trials, args.seed, args.subject, args.rate, robot)
    res = run_experiment(cfg)
    print(json.dumps({"traces": len(res.traces), "responses": str(res.responses_csv),
                      "pin_distance": res.diagnostics.get("pin_distance")}))
    return 0


def cmd_anova(args) -> int:
    subjects, conditions, Y = read_anova_input(args.input)
    res = rm_anova(Y)
    if args.json:
        print(json.dumps({"conditions": conditions, "n": len(subjects), **res.to_dict()}))
    else:
        print(res)
        for c, m in zip(conditions, res.means):
            print(f"  {c}: {m:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="encounter", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def session_args(sp):
        sp.add_argument("--scene", required=True, help="scene JSON")
        sp.add_argument("--robot", help="robot config JSON (default: built-in UR3)")
        sp.add_argument("--rate", type=float, default=125.0, help="loop rate in Hz")
        sp.add_argument("--params", help="planner/texture overrides JSON")

    r = sub.add_parser("render", help="replay a palm trajectory into a trace")
    session_args(r)
    r.add_argument("--hand", required=True, help="palm trajectory JSONL")
    r.add_argument("--out", required=True, help="trace JSONL to write")
    r.set_defaults(func=cmd_render)

    s = sub.add_parser("serve", help="stream ticks over TCP")
    session_args(s)
    s.add_argument("--port", type=int, required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.set_defaults(func=cmd_serve)

    e = sub.add_parser("experiment", help="replay the shape-recognition protocol")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--shapes", nargs="+", default=["sphere", "cube", "pyramid", "edge"])
    e.add_argument("--trials", type=int, default=5, help="trials per shape")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--subject", default="S1")
    e.add_argument("--robot")
    e.add_argument("--rate", type=float, default=125.0)
    e.set_defaults(func=cmd_experiment)

    a = sub.add_parser("anova", help="repeated-measures ANOVA on recognition rates")
    a.add_argument("--input", required=True, help="wide CSV or responses CSV")
    a.add_argument("--json", action="store_true")
    a.set_defaults(func=cmd_anova)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EncounterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
