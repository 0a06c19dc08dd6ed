#!/usr/bin/env python3
"""
Tests for local connections, their metric adjoint and body-velocity jets
"""

import numpy as np
from numpy.polynomial import Polynomial as P
from numpy.testing import assert_allclose

from src.algebra import InvalidInputError, MetricSpec, so3_exp
from src.connection import (LocalConnection, adjoint_apply, connection_grid_jet, connection_jet,
                            constrained_velocity, metric_adjoint)
from src.geometry import BundleSpec, ChartJet, CurveJet
from utils.grid_utils import SegmentGrid

A_CONST = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])


def _raises(exc_type, fn, *args):
    try:
        fn(*args)
    except exc_type as exc:
        return exc
    raise AssertionError(f"{fn.__name__} did not raise {exc_type.__name__}")


def _plane():
    return BundleSpec.euclidean(2, 'so3')


def test_constrained_velocity():
    spec = _plane()
    zero = LocalConnection.zero(spec)
    assert_allclose(constrained_velocity(zero, np.array([0.3, 1.0]), np.array([2.0, -1.0])).coords, 0.0)
    const = LocalConnection.constant(spec, A_CONST)
    xi = constrained_velocity(const, np.zeros(2), np.array([2.0, -1.0]))
    assert_allclose(xi.coords, [-2.0, 1.0, 0.0])
    assert xi.algebra_tag == 'so3'
    assert_allclose(constrained_velocity(const, np.zeros(2), np.zeros(2)).coords, 0.0)
    _raises(InvalidInputError, constrained_velocity, const, np.zeros(2), np.zeros(3))


def test_adjoint():
    spec = _plane()
    I2, I3 = MetricSpec.identity(2), MetricSpec.identity(3)
    const = LocalConnection.constant(spec, A_CONST)
    assert_allclose(adjoint_apply(const, I2, I3, np.zeros(2), np.array([1.0, 2.0, 3.0])), [1.0, 2.0])
    assert_allclose(adjoint_apply(LocalConnection.zero(spec), I2, I3, np.zeros(2), np.ones(3)), 0.0)
    _raises(InvalidInputError, adjoint_apply, const, I3, I3, np.zeros(2), np.ones(3))

    # <A w, mu>_g = <w, A^# mu>_M for non-identity metrics
    rng = np.random.default_rng(0)
    Gm = MetricSpec(np.diag([2.0, 0.5]))
    Gg = MetricSpec(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 1.5]]))
    A = rng.normal(size=(3, 2))
    w, mu = rng.normal(size=2), rng.normal(size=3)
    lhs = Gg.inner(A @ w, mu)
    rhs = Gm.inner(w, metric_adjoint(A, Gm, Gg) @ mu)
    assert abs(lhs - rhs) < 1e-12


def test_constant_connection_validation():
    spec = _plane()
    _raises(InvalidInputError, LocalConnection.constant, spec, np.ones((2, 2)))
    _raises(InvalidInputError, LocalConnection.constant, spec, np.full((3, 2), np.nan))
    _raises(InvalidInputError, LocalConnection, spec, 'quadratic')
    _raises(InvalidInputError, LocalConnection.purcell_test, spec)


def test_batched_eval():
    spec = _plane()
    const = LocalConnection.constant(spec, A_CONST)
    assert const.eval(np.zeros((4, 5, 2))).shape == (4, 5, 3, 2)
    _raises(InvalidInputError, const.eval, np.zeros(3))


def test_connection_jet_constant():
    spec = _plane()
    const = LocalConnection.constant(spec, A_CONST)
    # x(t) = (1 + t - t^2 + 0.5 t^3 + 0.2 t^4, 2 t^4 - t) at t = 0.3
    t = 0.3
    x = np.array([1 + t - t**2 + 0.5 * t**3 + 0.2 * t**4, 2 * t**4 - t])
    x1 = np.array([1 - 2 * t + 1.5 * t**2 + 0.8 * t**3, 8 * t**3 - 1])
    x2 = np.array([-2 + 3 * t + 2.4 * t**2, 24 * t**2])
    x3 = np.array([3 + 4.8 * t, 48 * t])
    x4 = np.array([4.8, 48.0])
    jet = connection_jet(const, CurveJet(x, x1, x2, x3, x4))
    for got, deriv in zip((jet.value, jet.d1, jet.d2, jet.d3), (x1, x2, x3, x4)):
        assert_allclose(got, -A_CONST @ deriv, atol=5e-6)

    still = connection_jet(const, CurveJet(x, np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2)))
    for d in (still.value, still.d1, still.d2, still.d3):
        assert_allclose(d, 0.0, atol=1e-12)
    _raises(InvalidInputError, connection_jet, const, CurveJet(x, x1, x2, x3))


def test_connection_jet_zero():
    conn = LocalConnection.zero(BundleSpec.compact(2, 'se3'))
    chart = ChartJet(np.stack([np.eye(3), so3_exp(np.array([0.1, 0.2, 0.3]))]),
                     [np.zeros(6), np.ones(6), np.ones(6)])
    jet = connection_jet(conn, chart)
    for d in (jet.value, jet.d1, jet.d2, jet.d3):
        assert_allclose(d, 0.0)
    _raises(InvalidInputError, connection_jet, conn, CurveJet(np.zeros(6), np.zeros(6)))


def test_purcell_connection():
    conn = LocalConnection.purcell_test()
    assert conn.bundle.base_dim == 6 and conn.bundle.group.tag == 'se3'
    rng = np.random.default_rng(1)
    x = so3_exp(0.5 * rng.normal(size=(10, 2, 3)))
    A = conn.eval(x)
    assert A.shape == (10, 6, 6)
    assert np.abs(A).max() <= 0.5
    # fixed seed: two instances agree
    assert_allclose(LocalConnection.purcell_test().eval(x), A)


def test_purcell_derivative_matches_finite_difference():
    conn = LocalConnection.purcell_test()
    fd = LocalConnection.from_callable(conn.bundle, conn.eval, fd_step=1e-6)
    assert fd.derivative_mode == 'finite-difference'
    assert conn.derivative_mode == 'analytic'
    rng = np.random.default_rng(2)
    x = so3_exp(0.6 * rng.normal(size=(3, 2, 3)))
    for k in range(6):
        assert_allclose(conn.directional_derivative(x, k), fd.directional_derivative(x, k), atol=1e-7)
    assert conn.derivative_tensor(x).shape == (3, 6, 6, 6)
    _raises(InvalidInputError, conn.directional_derivative, x, 6)


def test_purcell_jet_value():
    conn = LocalConnection.purcell_test()
    center = so3_exp(np.array([[0.2, -0.1, 0.4], [0.0, 0.3, -0.2]]))
    omega = np.array([0.5, -0.2, 0.1, 0.3, 0.0, -0.4])
    chart = ChartJet(center, [np.zeros(6), omega, 0.1 * np.ones(6)])
    jet = connection_jet(conn, chart)
    assert_allclose(jet.value, -conn.eval(center) @ omega, atol=1e-14)
    assert jet.algebra.tag == 'se3'


def test_grid_jet_matches_pointwise():
    spec = _plane()
    const = LocalConnection.constant(spec, A_CONST)
    grid = SegmentGrid(0.0, 1.0, 9)
    t = grid.times[:, None]
    points = np.hstack([t**2, -t])
    velocities = np.hstack([2 * t, -np.ones_like(t)])
    jet = connection_grid_jet(const, grid, points, velocities)
    assert_allclose(jet.value, -velocities @ A_CONST.T, atol=1e-14)
    assert_allclose(jet.d1, -np.tile([2.0, 0.0, 0.0], (9, 1)), atol=1e-10)


def test_connection_jet_fourth_order():
    spec = _plane()
    A0 = np.array([[1.0, 0.5], [0.0, 1.0], [-0.5, 0.2]])
    A2 = np.array([[0.3, 0.0], [0.0, -0.2], [0.1, 0.4]])
    quadratic = LocalConnection.from_callable(spec, lambda x: A0 + x[1]**2 * A2)

    # x(t) = (t, t^4 / 4) makes xi a degree-11 polynomial
    x = [P([0.0, 1.0]), P([0.0, 0.0, 0.0, 0.0, 0.25])]
    v = [p.deriv() for p in x]
    xi = [-sum((A0[i, j] + x[1]**2 * A2[i, j]) * v[j] for j in range(2)) for i in range(3)]
    t = 0.5
    jet = CurveJet(*(np.array([p.deriv(k)(t) if k else p(t) for p in x]) for k in range(5)))
    exact = [np.array([p.deriv(k)(t) if k else p(t) for p in xi]) for k in range(4)]

    errors = []
    for h in (0.04, 0.02):
        got = connection_jet(quadratic, jet, h_fd=h)
        assert_allclose(got.value, exact[0], atol=1e-14)
        errors.append([np.abs(d - e).max() for d, e in zip((got.d1, got.d2, got.d3), exact[1:])])
    order = np.log2(errors[0][2] / errors[1][2])
    assert 3.5 <= order <= 4.5, f"observed order {order:.2f}"
    # first and second derivatives use sixth-order stencils
    assert max(errors[1][:2]) <= errors[1][2]


def test_adjoint_of_constrained_velocity_is_negative_semidefinite():
    spec = _plane()
    rng = np.random.default_rng(3)
    Gm = MetricSpec(np.diag([2.0, 0.5]))
    Gg = MetricSpec(np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 1.5]]))
    conn = LocalConnection.constant(spec, rng.normal(size=(3, 2)))
    x = np.zeros(2)

    def K(v):
        return adjoint_apply(conn, Gm, Gg, x, constrained_velocity(conn, x, v))

    for _ in range(20):
        v, w = rng.normal(size=(2, 2))
        a, b = rng.normal(size=2)
        assert_allclose(K(a * v + b * w), a * K(v) + b * K(w), atol=1e-12)
        assert Gm.inner(v, K(v)) <= 1e-14
        xi = conn.eval(x) @ v
        assert abs(Gm.inner(v, K(v)) + Gg.inner(xi, xi)) < 1e-12


def main():
    print("Testing Local Connections")
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
