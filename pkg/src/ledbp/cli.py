"""Command line entry point: ``ledbp {scene gen,solve,convergence,overhead}``."""

import argparse
import json
import os
import sys

import numpy as np

from .barrier import BarrierConfig, solve
from .errors import ConfigError, InfeasibleScene, LedbpError
from .gbp import GbpBackend, GbpConfig
from .harness import (
    CONVERGENCE,
    OVERHEAD,
    StudyConfig,
    run_convergence_study,
    run_overhead_study,
    summarize,
    write_outputs,
)
from .lsforms import GRAPH_METHODS
from .oracle import DenseBackend
from .scene import SceneConfig, export_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_FAILURES = 4


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _scene_config(args):
    data = _load_json(args.config) if args.config else {}
    # A solve config may nest the scene next to solver settings.
    data = data.get("scene", data) if isinstance(data, dict) else data
    cfg = SceneConfig.from_dict(data)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, default):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def cmd_scene_gen(args):
    cfg = _scene_config(args)
    scene, problem = cfg.build()
    out = _out_dir(args, ".")
    path = os.path.join(out, "scene.json")
    export_scene(scene, problem, path)
    print(f"wrote {path} (n={problem.n_leds}, m={problem.m_uds}, seed={cfg.seed})")
    return EXIT_OK


def cmd_solve(args):
    data = _load_json(args.config) if args.config else {}
    cfg = _scene_config(args)
    _, problem = cfg.build()
    barrier = BarrierConfig.from_dict(data.get("barrier", {}))
    if args.method in (None, "dense"):
        backend = DenseBackend()
    elif args.method in GRAPH_METHODS:
        try:
            gbp = GbpConfig(**data.get("gbp", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        backend = GbpBackend(args.method, gbp)
    else:
        raise ConfigError(f"unknown method {args.method!r}")
    y, report = solve(problem, barrier, backend)
    out = _out_dir(args, ".")
    report.to_json(os.path.join(out, "solve.json"))
    print(f"objective {report.objective:.10g}  newton steps {len(report.records)}  "
          f"leds on {int(np.sum(y > 0.5))}/{len(y)}")
    return EXIT_OK


def _study(args, kind):
    data = _load_json(args.config) if args.config else {}
    data = {**data, "kind": kind}
    if args.paper_scale:
        data["paper_scale"] = True
    if args.seed is not None:
        data["seed"] = args.seed
    if args.method is not None:
        data["methods"] = [args.method]
    config = StudyConfig.from_dict(data)
    run = run_convergence_study if kind == CONVERGENCE else run_overhead_study
    result = run(config, threads=args.threads)
    out = _out_dir(args, config.out or kind)
    for path in write_outputs(result, out):
        print(f"wrote {path}")
    summary = summarize(result)
    if kind == CONVERGENCE:
        for method, p in summary["convergence_probability"].items():
            print(f"P(rho_max < 1) {method}: {p:.3f}")
    else:
        for entry in summary["per_size"]:
            print(f"n={entry['n']} m={entry['m']} median tau {entry.get('median_tau')}")
    if result.failures:
        print(f"{len(result.failures)} configuration(s) failed; see summary.json", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="64-bit seed overriding the config")
    common.add_argument("--method", help="dense or an LS method name")
    common.add_argument("--paper-scale", action="store_true", help="full-size study protocol (hours)")
    common.add_argument("--threads", type=int, default=1, help="worker processes")

    parser = argparse.ArgumentParser(prog="ledbp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    scene = sub.add_parser("scene", help="scene utilities")
    scene_sub = scene.add_subparsers(dest="scene_command", required=True)
    scene_sub.add_parser("gen", parents=[common], help="generate a scene and export it").set_defaults(
        func=cmd_scene_gen)
    sub.add_parser("solve", parents=[common], help="solve one scene").set_defaults(func=cmd_solve)
    sub.add_parser(CONVERGENCE, parents=[common], help="rho_max CDF study").set_defaults(
        func=lambda a: _study(a, CONVERGENCE))
    sub.add_parser(OVERHEAD, parents=[common], help="inner-iteration study").set_defaults(
        func=lambda a: _study(a, OVERHEAD))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleScene as exc:
        print(f"infeasible scene: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except LedbpError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
