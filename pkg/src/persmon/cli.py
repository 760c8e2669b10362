"""Command-line entry point: simulate, optimize, grad-check and sweep."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import optimizer, sensing, simulator, validation
from .kinematics import DegenerateGeometryError, params_from_document, params_to_document
from .scenario import BUILTINS, ScenarioError, load_scenario, validate

log = logging.getLogger("persmon")

EXIT_OK, EXIT_INPUT, EXIT_KINEMATICS, EXIT_ALL_FAILED, EXIT_CHECK_FAILED = 0, 2, 3, 4, 5
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class InputError(Exception):
    """Bad flags or unreadable / invalid input files."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# loading and writing

def load_scenario_source(source: str, dt: float | None = None):
    try:
        if source in BUILTINS:
            sc = BUILTINS[source]()
        else:
            sc = load_scenario(Path(source).read_text(encoding="utf-8"))
        if dt is not None:
            sc = validate(sc.replace(dt=dt))
    except (OSError, ScenarioError, TypeError) as exc:
        raise InputError(f"cannot load scenario {source!r}: {exc}") from exc
    return sc


def load_params_file(path: str, scenario=None) -> list:
    try:
        params = params_from_document(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot load params {path!r}: {exc}") from exc
    if scenario is not None and len(params) != scenario.N:
        raise InputError(f"params file has {len(params)} agents, scenario has {scenario.N}")
    return params


def load_init_file(path: str, scenario) -> list:
    """Explicit initializations: one params document or a list of them."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        docs = doc if isinstance(doc, list) else [doc]
        inits = [params_from_document(d) for d in docs]
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot load initializations {path!r}: {exc}") from exc
    if not inits or any(len(p) != scenario.N for p in inits):
        raise InputError(f"every initialization needs {scenario.N} agents")
    return inits


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_run(result, out: Path, decimate: int = 1) -> None:
    simulator.export_traces(result, out, decimate=decimate)
    _write_json(out / "summary.json", simulator.summary(result))


# ---------------------------------------------------------------------------
# commands

def _kinematics_guard(fn):
    try:
        return fn()
    except (simulator.SimulationError, DegenerateGeometryError) as exc:
        raise _KinematicsFailure(str(exc)) from exc


class _KinematicsFailure(Exception):
    pass


def cmd_simulate(args, out: Path, manifest: dict) -> int:
    sc = load_scenario_source(args.scenario, args.dt)
    params = load_params_file(args.params, sc)
    manifest["family"] = params[0].family
    result = _kinematics_guard(lambda: simulator.simulate(sc, params, args.grad_mode, sensing_model=args.sensing))
    if not result.diagnostics["gradient_excited"]:
        log.warning("all gradient components are zero (no target ever sensed)")
    write_run(result, out, args.decimate)
    return EXIT_OK


def _opt_options(args, sensing_model=None) -> optimizer.OptOptions:
    try:
        return optimizer.OptOptions(epsilon=args.epsilon, max_iters=args.max_iters, step_rule=args.step_rule,
                                    alpha=args.alpha, starts=args.starts, seed=args.seed,
                                    grad_mode=args.grad_mode, sensing_model=sensing_model or args.sensing)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _optimize_into(sc, family, args, out: Path, sensing_model: str):
    options = _opt_options(args, sensing_model)
    if args.init:
        inits = load_init_file(args.init, sc)
    else:
        inits = optimizer.random_initializations(sc, family, options.starts, options.seed)
    out.mkdir(parents=True, exist_ok=True)
    result = optimizer.optimize(sc, inits, options)
    optimizer.write_convergence(result, out / "convergence.csv")
    _write_json(out / "best_params.json", params_to_document(result.best_params))
    write_run(result.final, out, args.decimate)
    return result


def cmd_optimize(args, out: Path, manifest: dict) -> int:
    sc = load_scenario_source(args.scenario, args.dt)
    manifest["family"] = args.family
    result = _optimize_into(sc, args.family, args, out, args.sensing)
    manifest["best_J"] = result.best_J
    manifest["start_index"] = result.start_index
    return EXIT_OK


def cmd_grad_check(args, out: Path, manifest: dict) -> int:
    sc = load_scenario_source(args.scenario, args.dt)
    params = load_params_file(args.params, sc)
    manifest["family"] = params[0].family
    if not args.h > 0:
        raise InputError("--h must be positive")
    report = _kinematics_guard(lambda: validation.check(sc, params, args.tolerance, args.mode, h=args.h,
                                                        sensing_model=args.sensing))
    (out / "gradcheck.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_json())
    manifest["pass"] = report.passed
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_sweep(args, out: Path, manifest: dict) -> int:
    families = args.family
    models = args.sensing
    if not families or not models:
        raise InputError("sweep axes must not be empty")
    bad = [m for m in models if m not in sensing.SENSING_MODELS] + [f for f in families
                                                                   if f not in ("ellipse", "fourier")]
    if bad:
        raise InputError(f"unknown sweep values {bad}")
    sc = load_scenario_source(args.scenario, args.dt)
    manifest["family"] = list(families)
    rows = []
    for family in families:
        for model in models:
            name = f"{family}-{model}"
            try:
                res = _optimize_into(sc, family, args, out / name, model)
            except optimizer.AllStartsFailedError as exc:
                log.error("%s: %s", name, exc)
                rows.append([name, "nan", "nan", "nan"])
                continue
            rows.append([name, f"{res.best_J:.9g}", f"{res.final.J2:.9g}", f"{res.final.J3:.9g}"])
    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["configuration", "J", "J2", "J3"])
        w.writerows(rows)
    if all(r[1] == "nan" for r in rows):
        raise optimizer.AllStartsFailedError("every configuration failed")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "grad-check": cmd_grad_check, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="persmon", description="Persistent monitoring trajectory simulation and optimization.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON path or a built-in name (case-a, case-b)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--dt", type=float, default=None, help="override the scenario time step")
        p.add_argument("--decimate", type=int, default=1, help="write every n-th trace sample")

    def opt_flags(p, single_family=True):
        if single_family:
            p.add_argument("--family", choices=("ellipse", "fourier"), required=True)
        p.add_argument("--starts", type=int, default=8)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epsilon", type=float, default=0.01)
        p.add_argument("--max-iters", type=int, default=200)
        p.add_argument("--grad-mode", choices=("paper", "total"), default="paper")
        p.add_argument("--step-rule", choices=optimizer.STEP_RULES, default="armijo")
        p.add_argument("--alpha", type=float, default=1e-4, help="fixed step, or initial armijo step")
        p.add_argument("--init", default=None, help="JSON file with explicit initializations")

    p = sub.add_parser("simulate", help="run one simulation")
    common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--grad-mode", choices=simulator.GRAD_MODES, default="paper")
    p.add_argument("--sensing", choices=sensing.SENSING_MODELS, default=sensing.VELOCITY)

    p = sub.add_parser("optimize", help="gradient descent from one or more starts")
    common(p)
    opt_flags(p)
    p.add_argument("--sensing", choices=sensing.SENSING_MODELS, default=sensing.VELOCITY)

    p = sub.add_parser("grad-check", help="compare IPA gradients with finite differences")
    common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--mode", choices=("paper", "total"), default="paper")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--sensing", choices=sensing.SENSING_MODELS, default=sensing.VELOCITY)

    p = sub.add_parser("sweep", help="optimize over a grid of families and sensing models")
    common(p)
    opt_flags(p, single_family=False)
    p.add_argument("--family", nargs="*", default=["ellipse"])
    p.add_argument("--sensing", nargs="*", default=[sensing.VELOCITY])
    return parser


def _configure_logging() -> None:
    level = os.environ.get("PM_LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if level not in LOG_LEVELS:
        log.warning("unknown PM_LOG_LEVEL %r, using warn", level)


def _out_from_argv(argv) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--out" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--out="):
            return tok.split("=", 1)[1]
    return None


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "command"}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _configure_logging()
    manifest = {"command": None, "scenario": None, "family": None, "options": {}, "output_dir": None,
                "exit_status": None}
    out = None
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise InputError("a command is required: " + ", ".join(COMMANDS))
        manifest.update(command=args.command, scenario=args.scenario, options=_echo(args),
                        output_dir=args.out)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        status = COMMANDS[args.command](args, out, manifest)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_INPUT
        manifest["error"] = str(exc)
    except _KinematicsFailure as exc:
        print(f"kinematics error: {exc}", file=sys.stderr)
        status = EXIT_KINEMATICS
        manifest["error"] = str(exc)
    except optimizer.AllStartsFailedError as exc:
        print(f"optimization failed: {exc}", file=sys.stderr)
        status = EXIT_ALL_FAILED
        manifest["error"] = str(exc)
    manifest["exit_status"] = status
    if out is None:
        target = _out_from_argv(argv)
        out = Path(target) if target else None
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / "manifest.json", manifest)
        except OSError as exc:
            print(f"cannot write manifest: {exc}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
