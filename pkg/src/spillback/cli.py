"""Command-line front end: ``spillback {analyze,simulate,margin,check} SPEC``.

Exit codes: 0 success (a NotTransferring outcome is a result, not a failure),
1 analysis-level failure, 2 input error, 3 internal consistency error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dynamics import SimOptions, solve_equilibrium
from .errors import (
    BoundViolation,
    NoEquilibrium,
    NonConvergence,
    NotAdmissible,
    RoutingError,
    ScaleOutOfRange,
    SpecParseError,
    SpillbackError,
    TopologyError,
)
from .network import is_tree_like
from .perturbation import (
    DEFAULT_GRID,
    SweepSpec,
    empirical_margin_sweep,
    make_clipped_perturbation,
    make_scaling_perturbation,
    profile_ray,
    simulate_perturbed,
)
from .resilience import EquilibriumFlow, attack_profile, bounds_report
from .routing import check_axioms
from .specfile import load_density_file, load_spec, parse_assignments

EXIT_OK, EXIT_ANALYSIS, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_MAX_SAMPLES = 200

g = "{:.12g}".format


def _options(args) -> SimOptions:
    kw = {}
    if args.horizon is not None:
        kw["horizon"] = args.horizon
    if args.tol is not None:
        kw["rel_tol"] = args.tol
    return SimOptions(**kw)


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _equilibrium_flow(spec):
    """Equilibrium link flows: the calibration target if given, else solved."""
    if spec.target_flow is not None:
        return EquilibriumFlow.from_flows(spec.topology, spec.target_flow, spec.lambda0)
    rho = solve_equilibrium(spec.topology, spec.policy, spec.lambda0)
    f = np.array([fl.smooth(r) for fl, r in zip(spec.topology.flows, rho)])
    return EquilibriumFlow(f, spec.lambda0)


def _report(spec):
    return bounds_report(spec.topology, _equilibrium_flow(spec), partial_ok=True)


def cmd_analyze(args) -> int:
    spec = load_spec(args.spec)
    report = _report(spec)
    print(report.to_table())
    out = _out_dir(args)
    if out is not None:
        (out / "report.json").write_text(report.to_json() + "\n")
    return EXIT_OK


def _perturbation(args, spec):
    top = spec.topology
    scales = parse_assignments(args.scale, "scale")
    if args.perturbation:
        try:
            data = json.loads(Path(args.perturbation).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecParseError(f"{args.perturbation}: {exc}") from None
        if "clip" in data:
            return make_clipped_perturbation(top, dict(data["clip"]))
        scales = {**dict(data.get("scales", {})), **scales}
    for key in scales:
        if key not in top.link_ids:
            raise SpecParseError(f"--scale: unknown link {key!r}")
    return make_scaling_perturbation(top, scales)


def cmd_simulate(args) -> int:
    spec = load_spec(args.spec)
    top = spec.topology
    if args.init == "equilibrium":
        rho0 = solve_equilibrium(top, spec.policy, spec.lambda0)
    else:
        rho0 = load_density_file(args.init, top)
    pert = _perturbation(args, spec)
    opts = _options(args)
    traj, cls = simulate_perturbed(top, pert, spec.policy, rho0, spec.lambda0, opts)
    end = traj.t[-1]
    avg = traj.window_average(end - opts.window * traj.horizon, end)
    print(f"perturbation magnitude: {g(pert.magnitude)}")
    for ev in traj.events:
        print(f"event t={g(ev.t)} link={ev.link} saturated")
    print(f"classification: {cls.value}")
    print(f"final time-average lambda_n: {g(avg)}")
    print(f"mass-balance residual: {g(float(np.max(traj.mass_balance_residual())))}")
    target = args.out
    if target is not None:
        path = Path(target)
        if path.suffix != ".csv":
            path.mkdir(parents=True, exist_ok=True)
            path = path / "trajectory.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        traj.to_csv(path)
        print(f"trajectory written to {path}")
    return EXIT_OK


def _parse_grid(text):
    try:
        grid = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise SpecParseError(f"--grid {text!r}: expected comma-separated numbers") from None
    if not grid or any(not 0 < x <= 1 for x in grid):
        raise SpecParseError("--grid values must lie in (0, 1]")
    return grid


def cmd_margin(args) -> int:
    spec = load_spec(args.spec)
    top = spec.topology
    rho0 = solve_equilibrium(top, spec.policy, spec.lambda0)
    report = _report(spec)
    rays = [parse_assignments([r], "ray") for r in args.ray or ()]
    if args.profile_ray and report.tree_like:
        rays.append(profile_ray(top, attack_profile(top, report.d_v, report.x_star)))
    links = tuple(args.links.split(",")) if args.links else None
    for key in [*(links or ()), *(k for r in rays for k in r)]:
        if key not in top.link_ids:
            raise SpecParseError(f"unknown link {key!r}")
    sweep = SweepSpec(
        scale_grid=_parse_grid(args.grid) if args.grid else DEFAULT_GRID,
        links=links,
        max_samples=None if args.max_samples == 0 else args.max_samples,
        seed=args.seed,
        rays=tuple(rays),
        bisection_tol=args.bisection_tol,
        options=_options(args),
        workers=args.workers,
    )
    result = empirical_margin_sweep(top, spec.policy, rho0, spec.lambda0, sweep, report)
    lo, hi = result.bracket
    print(f"grid: {result.grid_description}")
    print(f"empirical bracket: [{'none' if lo is None else g(lo)}, {'none' if hi is None else g(hi)}]")
    for ray in result.rays:
        ends = ",".join(f"{k}={g(v)}" for k, v in ray.end_scales.items())
        thr = "none" if ray.threshold is None else g(ray.threshold)
        print(f"ray {ends}: threshold {thr} (transferring up to {g(ray.lower)})")
    print(result.reference_line())
    out = _out_dir(args)
    if out is not None:
        result.to_csv(out / "sweep.csv")
        (out / "sweep.json").write_text(result.to_json() + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    spec = load_spec(args.spec)
    top = spec.topology
    print(f"topology: {top.n + 1} nodes, {len(top.links)} links, {len(top.layers)} layers, "
          f"tree-like: {'yes' if is_tree_like(top) else 'no'}")
    ok = True
    lines = []
    for v in range(top.n):
        rep = check_axioms(spec.policy, v, args.samples, seed=args.seed)
        lines.append(rep.summary())
        ok &= rep.passed
    print("\n".join(lines))
    out = _out_dir(args)
    if out is not None:
        (out / "check.txt").write_text("\n".join(lines) + "\n")
    print("axioms: pass" if ok else "axioms: FAIL")
    return EXIT_OK if ok else EXIT_ANALYSIS


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for sampling (default 0)")
    common.add_argument("--out", help="output directory (simulate also accepts a .csv path)")
    common.add_argument("--horizon", type=float, help="simulation horizon")
    common.add_argument("--tol", type=float, help="relative tolerance of the transferring test")

    parser = argparse.ArgumentParser(prog="spillback", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="residual capacity, min cut and budget bound")
    p.add_argument("spec", help="network spec (path or bundled name)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", parents=[common], help="integrate the dynamics and classify")
    p.add_argument("spec")
    p.add_argument("--init", default="equilibrium", help="'equilibrium' or a JSON file {\"rho\": {...}}")
    p.add_argument("--scale", nargs="+", metavar="LINK=S", help="scale link flow functions")
    p.add_argument("--perturbation", help="JSON file with {\"scales\": {...}} or {\"clip\": {...}}")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("margin", parents=[common], help="sweep scaling perturbations")
    p.add_argument("spec")
    p.add_argument("--grid", help="comma-separated scale levels (default 1.0,0.9,...,0.1)")
    p.add_argument("--links", help="comma-separated link ids to perturb (default all)")
    p.add_argument("--max-samples", type=int, default=DEFAULT_MAX_SAMPLES,
                   help=f"seeded subsample size of the grid, 0 for no cap (default {DEFAULT_MAX_SAMPLES})")
    p.add_argument("--ray", action="append", metavar="LINK=S,...",
                   help="bisect along the ray from no perturbation to these end scales")
    p.add_argument("--profile-ray", action=argparse.BooleanOptionalAction, default=True,
                   help="also bisect along the budget-recursion attack profile")
    p.add_argument("--bisection-tol", type=float, default=0.005)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_margin)

    p = sub.add_parser("check", parents=[common], help="validate topology and routing axioms")
    p.add_argument("spec")
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecParseError, TopologyError, RoutingError, ScaleOutOfRange, NotAdmissible) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BoundViolation as exc:
        print(f"error: BoundViolation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (NoEquilibrium, NonConvergence, SpillbackError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
