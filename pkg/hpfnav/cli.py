import argparse
import asyncio
import logging
import os
from pathlib import Path
from typing import List, Optional, Sequence

from .cache import FieldCache
from .controller import ControlLaw, damping_condition
from .env import BvpKind
from .errors import HpfNavError, ScenarioError, ScenarioValidationError
from .plotting import plot_field, plot_overlay
from .scenario import Scenario, apply_overrides, read_document, scenario_from_dict
from .simulator import reference_path, run
from .solver import GuidanceField, PotentialField, check_max_principle
from .storage import Storage
from .sweep import SweepCollector, parse_axis
from .utils import setup_logging

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_CHECK = 3


def _load(path: str, overrides: Optional[Sequence[str]]) -> Scenario:
    doc = read_document(Path(path).read_text(encoding="utf-8"))
    return scenario_from_dict(apply_overrides(doc, overrides or []))


def _field(sc: Scenario) -> GuidanceField:
    return FieldCache().get_or_solve(sc.workspace, sc.bvp, sc.solver)


def cmd_solve(scenario: str, out: str, overrides: Optional[Sequence[str]] = None) -> int:
    sc = _load(scenario, overrides)
    field = _field(sc)
    storage = Storage(out)
    storage.write_field(field)
    plot_field(field, storage.path("field.svg"), title=sc.name or None)
    return EXIT_OK


def cmd_refpath(scenario: str, out: str, overrides: Optional[Sequence[str]] = None) -> int:
    sc = _load(scenario, overrides)
    field = _field(sc)
    ref = reference_path(field, sc.initial_state.position, sc.sim)
    storage = Storage(out)
    storage.write_refpath(ref)
    plot_overlay(field, storage.path("refpath.svg"), reference=ref.points, title=sc.name or None)
    logging.info(f"Reference path: {len(ref.points)} vertices, length {ref.length:.4g} m, C_m {ref.c_m:.4g}")
    return EXIT_OK


def cmd_simulate(scenario: str, out: str, overrides: Optional[Sequence[str]] = None) -> int:
    """Divergence is a result, not an error: it is reported in metrics.json with exit 0."""
    sc = _load(scenario, overrides)
    field = _field(sc)
    traj, metrics = run(sc, field)
    ref = traj.reference.points if traj.reference is not None else None
    storage = Storage(out)
    storage.write_trajectory(traj)
    storage.write_metrics(metrics)
    plot_overlay(field, storage.path("trajectory.svg"), reference=ref, robot=traj.positions,
                 title=sc.name or None)
    return EXIT_OK


def cmd_sweep(scenario: str, out: str, axes: List[str], overrides: Optional[Sequence[str]] = None,
              jobs: Optional[int] = None) -> int:
    if not axes:
        raise ScenarioValidationError("a sweep needs at least one axis", "--axis")
    parsed = [parse_axis(a) for a in axes]
    doc = apply_overrides(read_document(Path(scenario).read_text(encoding="utf-8")), overrides or [])
    collector = SweepCollector(Storage(out), jobs or os.cpu_count() or 1)
    asyncio.run(collector.collect(doc, parsed))
    return EXIT_OK


def cmd_check(scenario: str, overrides: Optional[Sequence[str]] = None) -> int:
    sc = _load(scenario, overrides)
    field = _field(sc)
    checks = []
    if isinstance(field, PotentialField):
        checks.append(("residual", field.residual <= sc.solver.tolerance,
                       f"{field.residual:.3e} (tolerance {sc.solver.tolerance:.1e})"))
        extrema = check_max_principle(field)
        checks.append(("max principle", not extrema,
                       "no interior extrema" if not extrema else f"{len(extrema)} interior extrema, first {extrema[0]}"))
        if field.kind is BvpKind.DIRECTIONAL:
            checks.append(("picard", field.picard_converged, f"{field.picard_iterations} passes"))
    checks.append(("C_m", field.max_gradient_magnitude > 0, f"{field.max_gradient_magnitude:.6g}"))
    if sc.robot.kind.is_dynamic and sc.gains.law is ControlLaw.SYNCHRONIZING:
        g = sc.gains
        checks.append(("damping gains KD1 > K1, KD2 > 0", damping_condition(g),
                       f"K1={g.K1}, KD1={g.KD1}, KD2={g.KD2}"))

    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if failed:
        logging.error(f"Failed checks: {', '.join(failed)}")
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpfnav", description="Harmonic potential field navigation toolkit")
    parser.add_argument("--log-level", default=None, help="Logging level (default HPFNAV_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_out=True):
        p.add_argument("scenario", help="Path to the scenario JSON file")
        if with_out:
            p.add_argument("--out", default="out", help="Output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="Override a scenario field by dotted path")

    common(sub.add_parser("solve", help="Solve the guidance field"))
    common(sub.add_parser("refpath", help="Trace the reference path of the field"))
    common(sub.add_parser("simulate", help="Run the closed-loop simulation"))
    sweep = sub.add_parser("sweep", help="Run a parameter sweep")
    common(sweep)
    sweep.add_argument("--axis", required=True, help="key=v1,v2,...")
    sweep.add_argument("--axis2", default=None, help="Second axis, key=v1,v2,...")
    sweep.add_argument("--jobs", type=int, default=None, help="Concurrent runs (default: CPU count)")
    common(sub.add_parser("check", help="Validate a scenario and its field"), with_out=False)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.command == "solve":
            return cmd_solve(args.scenario, args.out, args.overrides)
        if args.command == "refpath":
            return cmd_refpath(args.scenario, args.out, args.overrides)
        if args.command == "simulate":
            return cmd_simulate(args.scenario, args.out, args.overrides)
        if args.command == "sweep":
            axes = [args.axis] + ([args.axis2] if args.axis2 else [])
            return cmd_sweep(args.scenario, args.out, axes, args.overrides, args.jobs)
        return cmd_check(args.scenario, args.overrides)
    except (ScenarioError, OSError) as e:
        logging.error(str(e))
        return EXIT_INPUT
    except HpfNavError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return EXIT_SOLVER
    except ValueError as e:
        logging.error(str(e))
        return EXIT_INPUT
