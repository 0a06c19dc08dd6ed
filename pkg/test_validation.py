#!/usr/bin/env python3
"""
Tests for the validation harness: spline oracle, first-variation check and identity suite
"""

import dataclasses
import numpy as np
from numpy.testing import assert_allclose

from src.algebra import InvalidInputError, LieAlgebra, MetricSpec, so3_exp
from src.connection import LocalConnection
from src.geometry import BundleSpec
from src.interpolator import InterpolationProblem, SolverConfig, Waypoint, solve
from src.validation import (VariationField, clamped_spline_oracle, constraint_defect_audit, curvature_oracle_error,
                            first_variation_check, identity_suite, perturbed_cost)

A_SE3 = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.5]])


def _raises(exc_type, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc_type as exc:
        return exc
    raise AssertionError(f"{fn.__name__} did not raise {exc_type.__name__}")


def _plane(connection: str = 'zero'):
    if connection == 'zero':
        spec = BundleSpec.euclidean(2, 'so3')
        conn = LocalConnection.zero(spec)
    else:
        spec = BundleSpec.euclidean(2, 'se3')
        conn = LocalConnection.constant(spec, A_SE3)
    points = [(0.0, [0.0, 0.0]), (1.0, [1.0, 0.5]), (2.0, [1.5, -0.5]), (3.0, [3.0, 0.0])]
    waypoints = [Waypoint(t, np.array(x)) for t, x in points]
    return InterpolationProblem(spec, conn, waypoints, np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def test_spline_oracle_hermite():
    spline = clamped_spline_oracle([(0.0, [0.0]), (1.0, [1.0])], [0.0], [0.0])
    t = np.linspace(0.0, 1.0, 11)
    assert_allclose(spline(t)[:, 0], 3 * t**2 - 2 * t**3, atol=1e-14)
    assert_allclose(spline(t, 2)[:, 0], 6 - 12 * t, atol=1e-12)
    _raises(InvalidInputError, spline, t, 4)


def test_spline_oracle_line_and_continuity():
    line = clamped_spline_oracle([(0.0, [0.0]), (1.0, [1.0]), (2.0, [2.0])], [1.0], [1.0])
    t = np.linspace(0.0, 2.0, 9)
    assert_allclose(line(t)[:, 0], t, atol=1e-14)

    problem = _plane()
    spline = clamped_spline_oracle([(wp.t, wp.x) for wp in problem.waypoints], problem.v0, problem.vN)
    for T in (1.0, 2.0):
        for k in range(3):
            assert_allclose(spline(T - 1e-12, k), spline(T + 1e-12, k), atol=1e-9)
    assert_allclose(spline(0.0, 1)[0], problem.v0, atol=1e-14)
    assert_allclose(spline(3.0, 1)[0], problem.vN, atol=1e-12)


def test_spline_oracle_errors():
    _raises(InvalidInputError, clamped_spline_oracle, [(0.0, [0.0])], [0.0], [0.0])
    _raises(InvalidInputError, clamped_spline_oracle, [(0.0, [0.0]), (1.0, [1.0]), (1.0, [2.0])], [0.0], [0.0])


def test_first_variation_passes_on_solution():
    problem = _plane()
    trajectory = solve(problem, SolverConfig(nodes_per_segment=17))
    report = first_variation_check(trajectory, problem, n_variations=30, seed=1, tolerance=1e-6)
    assert report.passed, f"max |dJ/ds| {report.max_abs:.3e}"
    assert len(report.extrapolated) == 30
    assert abs(report.cost - trajectory.cost) < 1e-6 * (1.0 + trajectory.cost)
    assert report.to_dict()['epsilon'] == 1e-3


def test_first_variation_detects_displaced_node():
    problem = _plane()
    trajectory = solve(problem, SolverConfig(nodes_per_segment=17))
    values = trajectory.segment_values.copy()
    values[1, 8] += 0.05
    broken = dataclasses.replace(trajectory, segment_values=values)
    report = first_variation_check(broken, problem, n_variations=30, seed=1)
    assert not report.passed
    assert report.max_abs >= 10.0 * report.tolerance


def test_first_variation_on_rotation_base():
    spec = BundleSpec.compact(1, 'so3')
    rotvecs = [[0.0, 0.0, 0.0], [0.4, 0.1, -0.2], [0.5, 0.6, 0.1]]
    waypoints = [Waypoint(float(t), so3_exp(np.array(r))[None]) for t, r in enumerate(rotvecs)]
    problem = InterpolationProblem(spec, LocalConnection.zero(spec), waypoints,
                                   np.array([0.3, 0.0, 0.0]), np.array([0.0, 0.2, 0.1]))
    trajectory = solve(problem, SolverConfig(nodes_per_segment=17))
    assert trajectory.converged, trajectory.message
    report = first_variation_check(trajectory, problem, n_variations=30, seed=2)
    assert report.cost > 1e-3
    assert report.passed, f"max |dJ/ds| {report.max_abs:.3e} > {report.tolerance:.3e}"


def test_zero_variation_is_exact():
    problem = _plane()
    trajectory = solve(problem, SolverConfig(nodes_per_segment=9))
    zeros = np.zeros_like(trajectory.segment_values)
    still = VariationField(zeros, zeros, zeros)
    base = perturbed_cost(problem, trajectory, still, 0.0)
    assert perturbed_cost(problem, trajectory, still, 1e-3) == base
    assert perturbed_cost(problem, trajectory, still, -1e-3) == base


def test_first_variation_epsilon_range():
    problem = _plane()
    trajectory = solve(problem, SolverConfig(nodes_per_segment=9))
    _raises(InvalidInputError, first_variation_check, trajectory, problem, epsilon=1e-1)
    _raises(InvalidInputError, first_variation_check, trajectory, problem, epsilon=1e-8)


def test_constraint_defect_audit():
    problem = _plane('constant')
    trajectory = solve(problem, SolverConfig(nodes_per_segment=9, euler_lagrange='reduced'))
    assert constraint_defect_audit(trajectory, problem.connection) <= 1e-8
    xi = trajectory.xi.copy()
    xi[5, 3] += 0.25
    assert abs(constraint_defect_audit(dataclasses.replace(trajectory, xi=xi), problem.connection) - 0.25) < 1e-8


def test_identity_suite_passes():
    bundles = [BundleSpec.euclidean(1, 'so3'), BundleSpec.euclidean(1, 'se3'), BundleSpec.compact(2, 'so3'),
               BundleSpec.euclidean(2, 'se3', group_metric=MetricSpec(np.diag([1.0, 2.0, 3.0, 1.0, 1.0, 1.0])))]
    for bundle in bundles:
        report = identity_suite(bundle, seed=7)
        assert report.passed, [r['name'] for r in report.failures()]
    names = {r['name'] for r in identity_suite(BundleSpec.compact(2, 'so3')).results}
    assert {'jacobi', 'first_bianchi', 'compact_shortcut', 'finite_difference_connection'} <= names
    algebras = {r['algebra'] for r in identity_suite(BundleSpec.compact(2, 'so3')).results}
    assert algebras == {'so3', 'so3xso3'}


def test_identity_suite_negative_control():
    algebra = LieAlgebra(['so3'])

    # torsion-carrying perturbation of the Levi-Civita connection
    def corrupted(X, Y):
        return 0.5 * algebra.bracket(X, Y) + 0.2 * X[..., :1] * Y

    report = identity_suite(BundleSpec.euclidean(1, 'so3'), seed=0, cov_der=corrupted)
    assert not report.passed
    failed = {r['name'] for r in report.failures()}
    assert {'first_bianchi', 'torsion_free'} <= failed
    assert 'jacobi' not in failed
    assert report.to_dict()['passed'] is False


def test_curvature_oracle():
    assert curvature_oracle_error(LieAlgebra(['so3'])) < 1e-5
    assert curvature_oracle_error(LieAlgebra(['se3']), n_samples=1) < 1e-5


def main():
    print("Testing Validation Harness")
    print("=" * 60)
    tests = [fn for name, fn in sorted(globals().items()) if name.startswith('test_') and callable(fn)]
    failed = 0
    for fn in tests:
        try:
            fn()
            print(f"✓ {fn.__name__}")
        except Exception as e:
            failed += 1
            print(f"✗ {fn.__name__}: {e}")
    print("=" * 60)
    print(f"{len(tests) - failed}/{len(tests)} tests passed")
    return failed


if __name__ == "__main__":
    raise SystemExit(main())
