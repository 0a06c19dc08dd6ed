#!/usr/bin/env python3
"""
Tests for the generalized Purcell swimmer closed forms and built-in problem
"""

import warnings
import numpy as np
from numpy.testing import assert_allclose

from src.algebra import AlgebraVector, GroupElement, InvalidInputError, LieAlgebra, so3_exp
from src.connection import LocalConnection, connection_jet, metric_adjoint
from src.geometry import ChartJet, CurveJet, body_velocity_jet, elastic_base, elastic_group
from src.interpolator import solve
from src.swimmer import (GENERIC_COEFFICIENTS, SwimmerState, coefficient_report, purcell_problem,
                         swimmer_base_elastic, swimmer_bundle, swimmer_group_elastic, swimmer_residual)
from src.validation import constraint_defect_audit, first_variation_check

SE3 = LieAlgebra(['se3'])


def _raises(exc_type, fn, *args):
    try:
        fn(*args)
    except exc_type as exc:
        return exc
    raise AssertionError(f"{fn.__name__} did not raise {exc_type.__name__}")


def _random_chart(rng):
    center = so3_exp(0.5 * rng.normal(size=(2, 3)))
    return ChartJet(center, [np.zeros(6)] + [0.5 * rng.normal(size=6) for _ in range(4)])


def test_group_elastic_trivial_jets():
    xi = CurveJet(np.r_[0, 0, 0, 1.0, -2.0, 0.5], np.zeros(6), np.zeros(6), np.zeros(6))
    for key in ('printed', 'generic'):
        assert_allclose(swimmer_group_elastic(xi, key), 0.0)

    rng = np.random.default_rng(0)
    t = rng.normal(size=(4, 3))
    jet = CurveJet(*(np.r_[np.zeros(3), t[k]] for k in range(4)))
    assert_allclose(swimmer_group_elastic(jet), np.r_[np.zeros(3), t[3]])
    _raises(InvalidInputError, swimmer_group_elastic, jet, 'fitted')
    _raises(InvalidInputError, swimmer_group_elastic, CurveJet(*np.zeros((4, 3))))


def test_generic_coefficients_match_elastic_group():
    rng = np.random.default_rng(1)
    jet = CurveJet(*rng.normal(size=(4, 1000, 6)), algebra=SE3)
    reference = elastic_group(None, jet)
    assert_allclose(swimmer_group_elastic(jet, 'generic'), reference, atol=1e-10)
    # the published set differs from the generic expansion
    assert np.abs(swimmer_group_elastic(jet, 'printed') - reference).max() > 1e-3


def test_coefficient_report():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        report = coefficient_report(n_samples=500, seed=3)
    assert any('printed swimmer coefficients' in str(w.message) for w in caught)
    for row in report['rows'].values():
        for entry in row.values():
            assert abs(entry['fitted'] - entry['generic']) < 1e-8
    rot = report['rows']['rotational']
    assert rot['r x r2']['printed'] == 1.5 and rot['r x (r x r1)']['printed'] == 1.0
    assert report['rows']['translational']['r x (r x t1)']['generic'] == GENERIC_COEFFICIENTS['translational'][
        'r x (r x t1)']
    assert report['max_abs_difference']['generic'] < 1e-10
    assert len(report['discrepancies']) == 6


def test_base_elastic():
    z = np.zeros(3)
    assert_allclose(swimmer_base_elastic(CurveJet(z, z, z, z), CurveJet(z, z, z, z)), 0.0)
    w = np.array([0.3, -1.0, 0.2])
    assert_allclose(swimmer_base_elastic(CurveJet(w, z, z, z), CurveJet(z, z, z, z)), 0.0)

    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(2, 4, 3))
    got = swimmer_base_elastic(CurveJet(*a), CurveJet(*b))
    expected = elastic_base(swimmer_bundle(), CurveJet(*(np.r_[a[k], b[k]] for k in range(4))))
    assert_allclose(got, expected, atol=1e-12)
    _raises(InvalidInputError, swimmer_base_elastic, CurveJet(*np.zeros((4, 6))), CurveJet(z, z, z, z))


def test_residual_zero_connection():
    rng = np.random.default_rng(4)
    chart = _random_chart(rng)
    conn = LocalConnection.zero(swimmer_bundle())
    omega = body_velocity_jet(chart, 1e-3)
    expected = swimmer_base_elastic(CurveJet(*(e[:3] for e in (omega.value, omega.d1, omega.d2, omega.d3))),
                                    CurveJet(*(e[3:] for e in (omega.value, omega.d1, omega.d2, omega.d3))))
    assert_allclose(swimmer_residual(conn, chart), expected, atol=1e-12)
    zero_chart = ChartJet(np.stack([np.eye(3), np.eye(3)]), [np.zeros(6), np.zeros(6)])
    assert_allclose(swimmer_residual(LocalConnection.purcell_test(), zero_chart), 0.0, atol=1e-12)


def test_residual_matches_generic_pipeline():
    rng = np.random.default_rng(5)
    conn = LocalConnection.purcell_test()
    bundle = conn.bundle
    printed_gap = 0.0
    for _ in range(3):
        chart = _random_chart(rng)
        omega = body_velocity_jet(chart, 1e-3)
        xi = connection_jet(conn, chart, h_fd=1e-3)
        adj = metric_adjoint(conn.eval(chart.center), bundle.base_metric, bundle.group_metric)
        generic = elastic_base(bundle, omega) - adj @ elastic_group(bundle.group_metric, xi, SE3)
        assert_allclose(swimmer_residual(conn, chart), generic, atol=1e-9)
        printed_gap = max(printed_gap, np.abs(swimmer_residual(conn, chart, coefficients='printed') - generic).max())
    assert printed_gap > 1e-6
    # separate per-factor charts give the same residual
    split = [ChartJet(chart.center[f], [p[3 * f:3 * f + 3] for p in chart.phi]) for f in range(2)]
    assert_allclose(swimmer_residual(conn, split), swimmer_residual(conn, chart), atol=1e-12)


def test_swimmer_state():
    conn = LocalConnection.purcell_test()
    R1, R2 = GroupElement(so3_exp(np.array([0.1, 0.2, 0.0])), 'so3'), GroupElement(np.eye(3), 'so3')
    omega1, omega2 = np.array([0.3, 0.0, -0.1]), np.array([0.0, 0.2, 0.4])
    shape = np.stack([R1.mat, R2.mat])
    xi = -conn.eval(shape) @ np.r_[omega1, omega2]
    state = SwimmerState(R1, R2, GroupElement.identity('se3'), AlgebraVector(omega1, 'so3'),
                         AlgebraVector(omega2, 'so3'), AlgebraVector(xi, 'se3'))
    assert state.check_constraint(conn)
    assert_allclose(state.xi_rotational, xi[:3])
    bad = SwimmerState(R1, R2, GroupElement.identity('se3'), AlgebraVector(omega1, 'so3'),
                       AlgebraVector(omega2, 'so3'), AlgebraVector(xi + 1e-3, 'se3'))
    assert not bad.check_constraint(conn)
    _raises(InvalidInputError, SwimmerState, R1, R2, R1, AlgebraVector(omega1, 'so3'),
            AlgebraVector(omega2, 'so3'), AlgebraVector(xi, 'se3'))


def test_purcell_problem():
    problem, config = purcell_problem()
    assert config.euler_lagrange == 'reduced'
    assert problem.n_segments == 2
    assert problem.bundle.describe() == "SO(3) x SO(3) x SE3"
    assert_allclose(problem.g0.mat, np.eye(4))
    _, config = purcell_problem(config_overrides={'nodes_per_segment': 9})
    assert config.nodes_per_segment == 9 and config.euler_lagrange == 'reduced'


def test_purcell_solution_is_extremal():
    problem, config = purcell_problem(config_overrides={'nodes_per_segment': 17})
    trajectory = solve(problem, config)
    assert trajectory.converged, trajectory.message
    assert constraint_defect_audit(trajectory, problem.connection) <= 1e-8
    report = first_variation_check(trajectory, problem, n_variations=20, seed=0)
    assert report.passed, f"max |dJ/ds| {report.max_abs:.3e} > {report.tolerance:.3e}"


def main():
    print("Testing Generalized Purcell Swimmer")
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
