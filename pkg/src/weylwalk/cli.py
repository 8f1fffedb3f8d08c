import sys
import argparse
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from . import zoo
from .canonical import canonicalize, lorentz_trace_test, pauli_decompose, weyl_residual
from .evolve import (
    BoundReport,
    StudyConfig,
    WavePacket,
    appendix_a_bound,
    continuum_data,
    dispersion,
    evolve_packet,
    mass_split_report,
    positive_energy_state,
    scaling_fit,
    series_bound,
)
from .exceptions import BoundRangeError, BoundViolationError, FitUndefinedError, WeylWalkError
from .settings import get_settings
from .spec_io import default_study, load_study_config, read_walk, write_csv, write_study_summary, write_walk
from .utils import parse_vector
from .walk import LatticeScale, WalkSpec, mass_decompose, validate_unitarity

logger = logging.getLogger("weylwalk")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

WEYL_RESIDUAL_TOL = 1e-8
CANONICAL_SAMPLES = 100


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _fmt_vector(values) -> str:
    return "(" + ", ".join(_fmt(float(v)) for v in values) + ")"


def _scale(args, base: Optional[LatticeScale] = None) -> Optional[LatticeScale]:
    if args.a is None and args.dt is None and args.ratio is None:
        return base
    base = base or LatticeScale()
    a = args.a if args.a is not None else base.a
    if args.dt is not None:
        dt = args.dt
    elif args.ratio is not None:
        dt = a / args.ratio
    else:
        dt = base.dt
    return LatticeScale(a=a, dt=dt)


def load_walk(args) -> WalkSpec:
    """
    Resolves the walk from a file path or a zoo ``--name``, applying scale flags.
    """
    if args.name:
        return zoo.build(args.name, args.m, _scale(args))
    if not args.walk:
        raise WeylWalkError("Give a walk file or --name ZOO_NAME.")
    spec = read_walk(args.walk)
    scale = _scale(args, spec.scale)
    if scale is not None and scale != spec.scale:
        logger.info("Rescaling %s to a=%s dt=%s", args.walk, scale.a, scale.dt)
        spec = spec.with_scale(scale)
    return spec


def _write_out(table, out: Optional[str]) -> None:
    if out:
        write_csv(table, out)
        print(f"Wrote {out}")


def cmd_validate(args) -> int:
    spec = load_walk(args)
    report = validate_unitarity(spec, args.tol)
    print(f"walk: {spec.name or args.walk}  d={spec.d} k={spec.k} coins={len(spec.coins)}")
    print(f"completeness residual: {_fmt(report.completeness_residual)}")
    for shift, residual in report.displacement_residuals.items():
        print(f"  d'={list(shift)}: {_fmt(residual)}")
    print(f"max residual: {_fmt(report.max_residual)} (tol {_fmt(args.tol)})")
    print("unitary: PASS" if report.passed else "unitary: FAIL")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_decompose(args) -> int:
    spec = load_walk(args)
    decomp = mass_decompose(spec, args.tol)
    bm = continuum_data(spec, args.tol)
    print(f"massless: {decomp.massless}")
    with np.printoptions(precision=10, suppress=True):
        print(f"W =\n{decomp.W}")
        if decomp.M is not None:
            print(f"M =\n{decomp.M}")
        print(f"a/dt = {_fmt(spec.scale.speed)}")
        for i, b in enumerate(bm.b):
            print(f"B_{i + 1} =\n{b}")
    print(f"B hermiticity residual: {_fmt(bm.hermiticity_residual)}")
    return EXIT_OK


def cmd_canonicalize(args) -> int:
    spec = load_walk(args)
    bm = continuum_data(spec, args.tol)
    cf = canonicalize(pauli_decompose(bm), args.tol)
    samples = np.random.default_rng(0).uniform(-1.0, 1.0, size=(CANONICAL_SAMPLES, spec.d))
    residual = weyl_residual(cf, bm, samples)
    speed = spec.scale.speed
    print(f"gamma = {_fmt_vector(cf.gamma / speed)} * (a/dt), a/dt = {_fmt(speed)}")
    print(f"handedness: {cf.handedness.value}")
    print(f"effective dimension: {cf.effective_dim}")
    print(f"beta = {_fmt_vector(cf.beta)}")
    print(f"spatial rotation =\n{cf.spatial_rotation}")
    print(f"spin rotation =\n{cf.spin_rotation}")
    print(f"weyl residual: {_fmt(residual)}")
    return EXIT_OK if residual <= WEYL_RESIDUAL_TOL else EXIT_CHECK_FAILED


def cmd_trace_test(args) -> int:
    spec = load_walk(args)
    bm = continuum_data(spec, args.tol)
    value = lorentz_trace_test(bm, parse_vector(args.p, spec.d))
    print(f"tr(H^2) - k|p|^2 = {value:.10f}")
    return EXIT_OK


def cmd_dispersion(args) -> int:
    spec = load_walk(args)
    bm = continuum_data(spec, args.tol)
    start = parse_vector(args.p_start, spec.d) if args.p_start else np.zeros(spec.d)
    table = dispersion(spec, bm, start, parse_vector(args.p, spec.d), args.samples)
    deviation = float(np.max(np.abs(table.phases - table.energies))) if len(table.params) else 0.0
    print(f"{len(table.params)} samples, max |theta/dt - E| = {_fmt(deviation)}")
    _write_out(table, args.out)
    return EXIT_OK


def cmd_bound_check(args) -> int:
    spec = load_walk(args)
    bm = continuum_data(spec, args.tol)
    if not bm.massless:
        split = mass_split_report(spec, bm, args.lam, args.grid, args.tol)
        print(f"one-step norm: {_fmt(split.measured)}")
        print(f"mass mixing term: {_fmt(split.mixing)}, massless term: {_fmt(split.massless)}")
        print("triangle split: PASS" if split.satisfied else "triangle split: FAIL")
        _write_out(split, args.out)
        return EXIT_OK if split.satisfied else EXIT_CHECK_FAILED

    try:
        report = appendix_a_bound(spec, args.lam, args.grid, args.tol)
    except BoundRangeError as e:
        print(f"quadratic bound not valid here ({e}); using the series form")
        report = series_bound(spec, args.lam, args.grid, args.tol)
    _print_bound(report)
    _write_out(report, args.out)
    return EXIT_OK if report.satisfied else EXIT_CHECK_FAILED


def _print_bound(report: BoundReport) -> None:
    print(f"K = {report.K}, qmax = {_fmt(report.qmax)}, lambda*a = {_fmt(report.lam * report.a)}")
    print(f"measured: {_fmt(report.measured)}")
    print(f"analytic ({report.kind}): {_fmt(report.analytic)}")
    print("bound: PASS" if report.satisfied else "bound: VIOLATED")


def _study_config(args) -> Optional[StudyConfig]:
    if args.study and args.config:
        raise WeylWalkError("Give either --study or --config, not both.")
    if args.study:
        return default_study(args.study)
    if args.config:
        return load_study_config(args.config)
    return None


def cmd_scaling_study(args) -> int:
    config = _study_config(args)
    name = args.name or (config.walk if config and not args.walk else None)
    mass = args.m if args.m else (config.mass if config else 0.0)
    lam = args.lam if args.lam is not None else (config.lam if config else None)
    schedule = parse_vector(args.a_schedule).tolist() if args.a_schedule else (config.a_schedule if config else None)
    ratio = args.ratio if args.ratio is not None else (config.ratio if config else 1.0)
    grid = args.grid if args.grid_given or not config else config.grid_per_dim
    t = args.t if args.t is not None else (config.t if config else None)
    if lam is None or schedule is None:
        raise WeylWalkError("scaling-study needs --lambda and --a-schedule, or --config/--study.")
    if not name and not args.walk:
        raise WeylWalkError("Give a walk file, --name ZOO_NAME, or a config with a walk.")
    study = StudyConfig(walk=name, mass=mass, lam=lam, grid_per_dim=grid, t=t, ratio=ratio, a_schedule=schedule)

    walk = zoo.zoo_builder(name, mass) if name else read_walk(args.walk)
    try:
        fit = scaling_fit(walk, study.lam, study.a_schedule, ratio=study.ratio, grid=study.grid_per_dim,
                          tol=args.tol, t=study.t)
    except FitUndefinedError:
        print("walk is exact: the one-step norm vanishes, no fit")
        return EXIT_OK

    for a, norm in zip(fit.a_values, fit.norms):
        print(f"a = {_fmt(a)}: one-step norm {_fmt(norm)}")
    if fit.n_step_norms is not None:
        for a, norm in zip(fit.a_values, fit.n_step_norms):
            print(f"a = {_fmt(a)}: n-step norm at t = {_fmt(fit.t)} {_fmt(norm)}")
    print(f"exponent = {_fmt(fit.exponent)}, r2 = {_fmt(fit.r2)}")
    if args.out:
        _write_out(fit, args.out)
        summary_path = Path(args.out).with_suffix(".toml")
        result = {"exponent": fit.exponent, "r2": fit.r2}
        if fit.n_step_norms is not None:
            result["n_step_norms"] = fit.n_step_norms
        write_study_summary(summary_path, {
            "study": study.model_dump(by_alias=True, exclude_none=True),
            "result": result,
        })
        print(f"Wrote {summary_path}")
    return EXIT_OK


def cmd_evolve(args) -> int:
    if args.grid_given:
        raise WeylWalkError("evolve derives its momentum grid from the packet width; --grid does not apply.")
    spec = load_walk(args)
    bm = continuum_data(spec, args.tol)
    p0 = parse_vector(args.p, spec.d) if args.p else np.zeros(spec.d)
    x0 = parse_vector(args.x0, spec.d) if args.x0 else np.zeros(spec.d)
    sigma = args.sigma if args.sigma is not None else 20 * spec.scale.a
    packet = WavePacket(x0=x0.tolist(), p0=p0.tolist(), sigma=sigma, spin=positive_energy_state(bm, p0))
    trace = evolve_packet(spec, bm, packet, args.steps * spec.scale.dt, lam=args.lam)
    velocity = trace.velocity("discrete")
    print(f"steps: {args.steps}, group velocity (discrete): {_fmt_vector(np.atleast_1d(velocity))}")
    print(f"final spread: discrete {_fmt(trace.steps[-1].spread_discrete)}, "
          f"continuum {_fmt(trace.steps[-1].spread_continuum)}")
    print(f"final distance: {_fmt(trace.final_distance)} <= bound {_fmt(trace.bound)}: {trace.satisfied}")
    _write_out(trace, args.out)
    norms_ok = all(abs(s.norm_discrete - 1) <= 1e-10 and abs(s.norm_continuum - 1) <= 1e-10 for s in trace.steps)
    return EXIT_OK if trace.satisfied and norms_ok else EXIT_CHECK_FAILED


def cmd_zoo(args) -> int:
    if args.zoo_command == "list":
        for entry in zoo.ZOO.values():
            print(f"{entry.name:<14} {'(m) ' if entry.massive else ''}{entry.description}")
        return EXIT_OK
    spec = zoo.build(args.name, args.m, _scale(args))
    write_walk(spec, args.out)
    print(f"Wrote {args.name} to {args.out}")
    return EXIT_OK


class _GridAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.grid_given = True


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("walk", nargs="?", default=None, help="Walk file (weylwalk/1 JSON).")
    common.add_argument("--name", "-n", type=str, default=None, help="Use a zoo walk instead of a file.")
    common.add_argument("--m", type=float, default=0.0, help="Mass for massive zoo walks.")
    common.add_argument("--a", type=float, default=None, help="Lattice spacing.")
    common.add_argument("--dt", type=float, default=None, help="Timestep.")
    common.add_argument("--ratio", type=float, default=None, help="Lattice speed a/dt.")
    common.add_argument("--tol", type=float, default=settings.tol, help="Structural tolerance.")
    common.add_argument("--grid", type=int, default=settings.grid, action=_GridAction, help="Momentum samples per dimension.")
    common.add_argument("--out", type=str, default=None, help="CSV output path.")
    common.set_defaults(grid_given=False)

    parser = argparse.ArgumentParser(prog="weylwalk", description="Continuum limits of causal quantum walks.")
    parser.add_argument("--verbose", "-v", action="count", default=0, help="More logging (-v info, -vv debug).")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Available commands.")

    subparsers.add_parser("validate", parents=[common], help="Check unitarity residuals.")
    subparsers.add_parser("decompose", parents=[common], help="Mass decomposition and B matrices.")
    subparsers.add_parser("canonicalize", parents=[common], help="Canonical Weyl form of a two-level walk.")

    parser_trace = subparsers.add_parser("trace-test", parents=[common], help="tr(H^2) - k|p|^2.")
    parser_trace.add_argument("--p", type=str, required=True, help="Momentum, comma separated.")

    parser_dispersion = subparsers.add_parser("dispersion", parents=[common], help="Eigenphase curves.")
    parser_dispersion.add_argument("--p", type=str, required=True, help="End of the momentum segment.")
    parser_dispersion.add_argument("--p-start", type=str, default=None, help="Start of the segment (default 0).")
    parser_dispersion.add_argument("--samples", type=int, default=101, help="Points along the segment.")

    parser_bound = subparsers.add_parser("bound-check", parents=[common], help="One-step norm against its bound.")
    parser_bound.add_argument("--lambda", dest="lam", type=float, required=True, help="Momentum cutoff.")

    parser_scaling = subparsers.add_parser("scaling-study", parents=[common], help="Fit the one-step norm exponent.")
    parser_scaling.add_argument("--lambda", dest="lam", type=float, default=None, help="Momentum cutoff.")
    parser_scaling.add_argument("--a-schedule", type=str, default=None, help="Descending spacings, comma separated.")
    parser_scaling.add_argument("--config", type=str, default=None, help="Study TOML file.")
    parser_scaling.add_argument("--study", type=str, default=None, help="Shipped study, e.g. bb_weyl_scaling.")
    parser_scaling.add_argument("--t", type=float, default=None, help="Also report n-step norms at this time.")

    parser_evolve = subparsers.add_parser("evolve", parents=[common], help="Wave packet evolution.")
    parser_evolve.add_argument("--steps", type=int, required=True, help="Number of walk steps.")
    parser_evolve.add_argument("--p", type=str, default=None, help="Mean momentum (default 0).")
    parser_evolve.add_argument("--x0", type=str, default=None, help="Initial center (default 0).")
    parser_evolve.add_argument("--sigma", type=float, default=None, help="Packet width (default 20a).")
    parser_evolve.add_argument("--lambda", dest="lam", type=float, default=None, help="Cutoff for the bound.")

    parser_zoo = subparsers.add_parser("zoo", help="List or export zoo walks.")
    zoo_commands = parser_zoo.add_subparsers(dest="zoo_command", required=True)
    zoo_commands.add_parser("list", help="List zoo walks.")
    parser_export = zoo_commands.add_parser("export", help="Write a zoo walk to a file.")
    parser_export.add_argument("--name", "-n", type=str, required=True, choices=sorted(zoo.ZOO))
    parser_export.add_argument("--out", type=str, required=True)
    parser_export.add_argument("--m", type=float, default=0.0)
    parser_export.add_argument("--a", type=float, default=None)
    parser_export.add_argument("--dt", type=float, default=None)
    parser_export.add_argument("--ratio", type=float, default=None)

    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """
    Runs one subcommand.

    Returns:
        int: 0 on success, 1 when a physical check fails, 2 on usage or input errors.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    level = [get_settings().log_level, "INFO", "DEBUG"][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "validate":
            return cmd_validate(args)
        elif args.command == "decompose":
            return cmd_decompose(args)
        elif args.command == "canonicalize":
            return cmd_canonicalize(args)
        elif args.command == "trace-test":
            return cmd_trace_test(args)
        elif args.command == "dispersion":
            return cmd_dispersion(args)
        elif args.command == "bound-check":
            return cmd_bound_check(args)
        elif args.command == "scaling-study":
            return cmd_scaling_study(args)
        elif args.command == "evolve":
            return cmd_evolve(args)
        elif args.command == "zoo":
            return cmd_zoo(args)
        parser.print_help()
        return EXIT_USAGE
    except BoundViolationError as e:
        print(f"Check failed: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (WeylWalkError, ValidationError, ValueError, KeyError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    """
    The main entry point for the command-line interface.
    """
    sys.exit(run())


if __name__ == "__main__":
    main()
