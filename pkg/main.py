import argparse
import json
import os
import sys
import warnings

from src.algebra import InterpolationError
from src.interpolator import GROUP_WAYPOINT_MODES, EULER_LAGRANGE_FORMS, solution_report, solve
from src.validation import constraint_defect_audit, first_variation_check, identity_suite
from utils.problem_utils import ProblemFileError, load_problem
from utils.trajectory_utils import (TrajectoryFileError, plot_table, read_trajectory_csv, render_plot,
                                    table_to_trajectory, write_plot_data, write_trajectory_csv)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_CHECK_FAILED = 3


def _status(message: str, stream=None):
    print(message, file=stream or sys.stdout)


def cmd_solve(args) -> int:
    overrides = {
        'nodes_per_segment': args.nodes,
        'newton_tol': args.tol,
        'max_newton_iters': args.max_iters,
        'group_waypoints': args.group_waypoints,
        'soft_weight': args.soft_weight,
        'euler_lagrange': args.euler_lagrange,
        'verbose': True if args.verbose else None,
    }
    try:
        problem, config = load_problem(args.problem, overrides)
    except ProblemFileError as exc:
        _status(f"❌ {args.problem}: {exc}", sys.stderr)
        return EXIT_INPUT

    _status(f"🔧 {problem.name or os.path.basename(args.problem)}: {problem.bundle.describe()}, "
            f"{problem.n_segments} segment(s), {config.nodes_per_segment} nodes each")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        try:
            trajectory = solve(problem, config)
        except Exception as exc:
            _status(f"❌ Solver failed before a first iterate: {exc}", sys.stderr)
            return EXIT_NOT_CONVERGED
    for w in caught:
        _status(f"⚠️  {w.message}", sys.stderr)

    write_trajectory_csv(trajectory, problem, args.output)
    report_path = f"{os.path.splitext(args.output)[0]}_report.json"
    with open(report_path, 'w') as f:
        json.dump(solution_report(trajectory, problem), f, indent=2)

    if trajectory.converged:
        _status(f"✅ Converged in {trajectory.iterations} iteration(s): J = {trajectory.cost:.10g}, "
                f"|r|_inf = {trajectory.residual_norm:.3e}")
        _status(f"💾 Saved {args.output} and {report_path}")
        return EXIT_OK
    _status(f"❌ {trajectory.message}; partial trajectory saved to {args.output}, "
            f"diagnostics in {report_path}", sys.stderr)
    return EXIT_NOT_CONVERGED


def cmd_verify(args) -> int:
    try:
        problem, _ = load_problem(args.problem)
    except ProblemFileError as exc:
        _status(f"❌ {args.problem}: {exc}", sys.stderr)
        return EXIT_INPUT

    report = {'problem': args.problem, 'checks': {}}
    identities = identity_suite(problem.bundle, seed=args.seed, tol=args.tol_identities)
    report['checks']['identities'] = identities.to_dict()
    failures = [f"identity {r['name']} on {r['algebra']}: error {r['max_error']:.3e} > {r['tolerance']:.1e}"
                for r in identities.failures()]

    if not args.identities:
        if args.trajectory is None:
            _status("❌ verify needs a trajectory file unless --identities is given", sys.stderr)
            return EXIT_INPUT
        try:
            trajectory = table_to_trajectory(read_trajectory_csv(args.trajectory), problem)
        except TrajectoryFileError as exc:
            _status(f"❌ {args.trajectory}: {exc}", sys.stderr)
            return EXIT_INPUT
        report['trajectory'] = args.trajectory

        defect = constraint_defect_audit(trajectory, problem.connection)
        report['checks']['constraint_defect'] = {'max_defect': defect, 'tolerance': args.tol_constraint,
                                                 'passed': bool(defect <= args.tol_constraint)}
        if defect > args.tol_constraint:
            failures.append(f"constraint defect {defect:.3e} > {args.tol_constraint:.1e}")
        _status(f"🔍 Constraint defect {defect:.3e}", sys.stderr)

        try:
            variation = first_variation_check(trajectory, problem, n_variations=args.variations,
                                              epsilon=args.epsilon, seed=args.seed,
                                              tolerance=args.tol_variation)
        except InterpolationError as exc:
            _status(f"❌ {exc}", sys.stderr)
            return EXIT_INPUT
        report['checks']['first_variation'] = variation.to_dict()
        if not variation.passed:
            failures.append(f"first variation {variation.max_abs:.3e} > {variation.tolerance:.3e}")
        _status(f"🔍 First variation max |dJ/ds| = {variation.max_abs:.3e} "
                f"(limit {variation.tolerance:.3e})", sys.stderr)

    report['failures'] = failures
    report['passed'] = not failures
    print(json.dumps(report, indent=2))
    if failures:
        for item in failures:
            _status(f"❌ {item}", sys.stderr)
        return EXIT_CHECK_FAILED
    _status("✅ All checks passed", sys.stderr)
    return EXIT_OK


def cmd_plotdata(args) -> int:
    try:
        table = plot_table(read_trajectory_csv(args.input))
    except TrajectoryFileError as exc:
        _status(f"❌ {exc}", sys.stderr)
        return EXIT_INPUT
    write_plot_data(table, args.output)
    _status(f"💾 Saved plot data to {args.output} ({len(table.columns)} columns, {len(table.times)} rows)")
    if args.png:
        png = f"{os.path.splitext(args.output)[0]}.png"
        render_plot(table, png)
        _status(f"🖼️  Saved {png}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Minimum covariant acceleration interpolation on trivial principal bundles")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('solve', help="Solve a problem file and write the trajectory CSV")
    p.add_argument('problem', help="JSON problem file")
    p.add_argument('output', help="Trajectory CSV to write")
    p.add_argument('--nodes', type=int, help="Nodes per segment")
    p.add_argument('--tol', type=float, help="Newton tolerance")
    p.add_argument('--max-iters', type=int, help="Maximum Newton iterations")
    p.add_argument('--group-waypoints', choices=GROUP_WAYPOINT_MODES)
    p.add_argument('--soft-weight', type=float, help="Weight of soft group waypoint rows")
    p.add_argument('--euler-lagrange', choices=EULER_LAGRANGE_FORMS)
    p.add_argument('--verbose', action='store_true')
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser('verify', help="Check a trajectory against its problem file")
    p.add_argument('trajectory', nargs='?', help="Trajectory CSV (omit with --identities)")
    p.add_argument('problem', help="JSON problem file")
    p.add_argument('--identities', action='store_true', help="Run the algebra identity suite only")
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--tol-constraint', type=float, default=1e-8)
    p.add_argument('--tol-variation', type=float, default=1e-4)
    p.add_argument('--tol-identities', type=float, default=1e-10)
    p.add_argument('--variations', type=int, default=100)
    p.add_argument('--epsilon', type=float, default=1e-3)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser('plotdata', help="Export plot-ready tables from a trajectory CSV")
    p.add_argument('input', help="Trajectory CSV")
    p.add_argument('output', help="Plot data CSV to write")
    p.add_argument('--png', action='store_true', help="Also render a PNG next to the output")
    p.set_defaults(handler=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
