#!/usr/bin/env python3
"""
Generalized Purcell Swimmer Demo
Solves the built-in swimmer gait, checks it and exports plot-ready tables
"""

import os
import time
import warnings

from src.interpolator import solution_report, solve
from src.swimmer import coefficient_report, purcell_problem
from src.validation import constraint_defect_audit, first_variation_check
from utils.trajectory_utils import plot_table, read_trajectory_csv, render_plot, write_plot_data, write_trajectory_csv

OUTPUT_DIR = 'output/demo'


def demo_coefficients():
    """Compare the published swimmer coefficients with the generic expansion."""
    print("🧮 Swimmer Coefficient Check")
    print("=" * 50)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        report = coefficient_report(n_samples=1000, seed=0)
    for w in caught:
        print(f"⚠️  {w.message}")

    print(f"{'Monomial':<22} {'Printed':>8} {'Fitted':>10} {'Generic':>8}")
    print("-" * 52)
    for row, entries in report['rows'].items():
        print(f"[{row}]")
        for name, entry in entries.items():
            print(f"{name:<22} {entry['printed']:>8g} {entry['fitted']:>10.6f} {entry['generic']:>8g}")
    for key, value in report['max_abs_difference'].items():
        print(f"  max |{key} - elastic_group| = {value:.3e}")


def demo_gait(nodes: int = 17):
    """Solve the swimmer interpolation problem and save the trajectory."""
    print("\n🏊 Swimmer Gait Interpolation")
    print("=" * 50)

    problem, config = purcell_problem(config_overrides={'nodes_per_segment': nodes, 'verbose': True})
    start_time = time.time()
    trajectory = solve(problem, config)
    solve_time = time.time() - start_time

    output_file = os.path.join(OUTPUT_DIR, 'purcell_swimmer.csv')
    write_trajectory_csv(trajectory, problem, output_file)
    report = solution_report(trajectory, problem)

    print(f"✓ Solved in {solve_time:.2f}s")
    print(f"  Converged: {report['converged']}")
    print(f"  Iterations: {report['iterations']}")
    print(f"  Cost J: {report['J']:.8g}")
    print(f"  Constraint defect: {report['constraint_defect']:.3e}")
    print(f"  Saved to: {output_file}")
    return problem, trajectory, output_file


def demo_verification(problem, trajectory):
    """Run the constraint audit and the first-variation check on the gait."""
    print("\n🔍 Verification")
    print("=" * 50)

    defect = constraint_defect_audit(trajectory, problem.connection)
    print(f"  Constraint defect: {defect:.3e}")
    variation = first_variation_check(trajectory, problem, n_variations=20, seed=0, verbose=True)
    status = "✅" if variation.passed else "❌"
    print(f"{status} First variation max |dJ/ds| = {variation.max_abs:.3e} (limit {variation.tolerance:.3e})")


def demo_plot_data(trajectory_file: str):
    """Export pose paths and render the overview figure."""
    print("\n📊 Plot Data Export")
    print("=" * 50)

    table = plot_table(read_trajectory_csv(trajectory_file))
    plot_file = os.path.join(OUTPUT_DIR, 'purcell_swimmer_plot.csv')
    write_plot_data(table, plot_file)
    png_file = render_plot(table, os.path.join(OUTPUT_DIR, 'purcell_swimmer_plot.png'))
    print(f"✓ Plot data saved to: {plot_file}")
    print(f"✓ Figure saved to: {png_file}")


def main():
    """Run all demos."""
    print("🎮 Minimum Covariant Acceleration Demo")
    print("=" * 60)
    print("All generated files will be saved to the 'output/demo' directory.")

    os.makedirs(OUTPUT_DIR, exist_ok=True)

    demo_coefficients()
    problem, trajectory, trajectory_file = demo_gait()
    demo_verification(problem, trajectory)
    demo_plot_data(trajectory_file)

    print("\n🎉 Demo complete!")


if __name__ == "__main__":
    main()
