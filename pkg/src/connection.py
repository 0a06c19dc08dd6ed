import numpy as np
from math import factorial
from typing import Callable, Optional

from .algebra import (AlgebraVector, InvalidInputError, MetricSpec, so3_exp, so3_log,
                      so3_right_jacobian_inverse)
from .geometry import BundleSpec, ChartJet, CurveJet
from utils.grid_utils import SegmentGrid, central_weights

CONNECTION_KINDS = ('zero', 'constant', 'callable', 'purcell_test')

# Fixed coefficients of the synthetic swimmer connection
PURCELL_TEST_SEED = 1729


class LocalConnection:
    """
    Local connection form A(x): T_xM -> g of a trivial principal bundle.

    `eval` accepts a single base point or a stack of them (leading axes) and
    returns matrices of shape (..., dim g, dim M). Base points are vectors for
    a euclidean base and (k, 3, 3) rotation stacks for a compact base.
    """

    def __init__(self, bundle: BundleSpec, kind: str = 'zero', matrix: Optional[np.ndarray] = None,
                 field: Optional[Callable] = None, derivative: Optional[Callable] = None,
                 jet: Optional[Callable] = None, fd_step: float = 1e-6):
        if kind not in CONNECTION_KINDS:
            raise InvalidInputError(f"unknown connection kind '{kind}' (expected one of {CONNECTION_KINDS})")
        self.bundle = bundle
        self.kind = kind
        self.shape = (bundle.group.dim, bundle.base_dim)
        self.fd_step = float(fd_step)
        self._field = field
        self._derivative = derivative
        self._jet = jet
        self._matrix = np.zeros(self.shape)

        if kind == 'constant':
            matrix = np.asarray(matrix, dtype=float)
            if matrix.size != self.shape[0] * self.shape[1]:
                raise InvalidInputError(f"constant connection needs {self.shape[0]}x{self.shape[1]} "
                                        f"entries, got {matrix.size}")
            self._matrix = matrix.reshape(self.shape)
            if not np.all(np.isfinite(self._matrix)):
                raise InvalidInputError("connection matrix entries must be finite")
        elif kind == 'callable' and field is None:
            raise InvalidInputError("a callable connection needs a field function")
        elif kind == 'purcell_test':
            if not bundle.is_compact_base or bundle.base_factors != 2 or bundle.group.tag != 'se3':
                raise InvalidInputError("purcell_test lives on SO(3) x SO(3) -> se(3)")
            rng = np.random.default_rng(PURCELL_TEST_SEED)
            self._a = rng.uniform(-0.3, 0.3, self.shape)
            self._b = rng.uniform(-0.2, 0.2, self.shape)
            self._c = rng.uniform(-1.0, 1.0, self.shape + (6,))
            self._d = rng.uniform(0.0, 2.0 * np.pi, self.shape)

    # Constructors

    @classmethod
    def zero(cls, bundle: BundleSpec) -> 'LocalConnection':
        return cls(bundle, 'zero')

    @classmethod
    def constant(cls, bundle: BundleSpec, matrix: np.ndarray) -> 'LocalConnection':
        return cls(bundle, 'constant', matrix=matrix)

    @classmethod
    def from_callable(cls, bundle: BundleSpec, field: Callable, derivative: Optional[Callable] = None,
                      jet: Optional[Callable] = None, fd_step: float = 1e-6) -> 'LocalConnection':
        """
        Args:
            field: x -> A(x) for a single base point
            derivative: optional (x, k) -> dA along base direction k
            jet: optional analytic replacement for connection_jet, x-jet -> CurveJet
        """
        return cls(bundle, 'callable', field=field, derivative=derivative, jet=jet, fd_step=fd_step)

    @classmethod
    def purcell_test(cls, bundle: Optional[BundleSpec] = None) -> 'LocalConnection':
        return cls(bundle or BundleSpec.compact(2, 'se3'), 'purcell_test')

    @property
    def derivative_mode(self) -> str:
        return 'finite-difference' if self.kind == 'callable' and self._derivative is None else 'analytic'

    @property
    def has_analytic_jet(self) -> bool:
        return self._jet is not None

    # Evaluation

    def _batch_shape(self, x: np.ndarray):
        point = self.bundle.base_point_shape
        if x.shape[x.ndim - len(point):] != point:
            raise InvalidInputError(f"base point has shape {x.shape}, expected trailing {point}")
        return x.shape[:x.ndim - len(point)]

    def eval(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        batch = self._batch_shape(x)
        if self.kind in ('zero', 'constant'):
            return np.broadcast_to(self._matrix, batch + self.shape).copy()
        if self.kind == 'purcell_test':
            theta = self._theta(x)
            phase = np.einsum('ijm,...m->...ij', self._c, theta) + self._d
            return self._a + self._b * np.sin(phase)
        points = x.reshape((-1,) + self.bundle.base_point_shape)
        values = np.stack([np.asarray(self._field(p), dtype=float).reshape(self.shape) for p in points])
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("connection field returned non-finite entries")
        return values.reshape(batch + self.shape)

    def _theta(self, x: np.ndarray) -> np.ndarray:
        return so3_log(x).reshape(x.shape[:-3] + (-1,))

    def directional_derivative(self, x: np.ndarray, k: int) -> np.ndarray:
        """
        Derivative of A along base direction k: d/dx_k on a euclidean base,
        the right perturbation x exp(eps e_k) on a compact base.
        """
        x = np.asarray(x, dtype=float)
        batch = self._batch_shape(x)
        if not 0 <= k < self.bundle.base_dim:
            raise InvalidInputError(f"direction {k} outside base dimension {self.bundle.base_dim}")
        if self.kind in ('zero', 'constant'):
            return np.zeros(batch + self.shape)
        if self.kind == 'purcell_test':
            theta = self._theta(x)
            phase = np.einsum('ijm,...m->...ij', self._c, theta) + self._d
            factor, comp = divmod(k, 3)
            # d theta_f = J_r^-1(theta_f) e_comp under a right perturbation of factor f
            dtheta = np.zeros(batch + (6,))
            dtheta[..., 3 * factor:3 * factor + 3] = so3_right_jacobian_inverse(
                theta[..., 3 * factor:3 * factor + 3])[..., :, comp]
            return self._b * np.cos(phase) * np.einsum('ijm,...m->...ij', self._c, dtheta)
        if self._derivative is not None:
            points = x.reshape((-1,) + self.bundle.base_point_shape)
            values = np.stack([np.asarray(self._derivative(p, k), dtype=float).reshape(self.shape)
                               for p in points])
            return values.reshape(batch + self.shape)
        eps = self.fd_step
        return (self.eval(self._perturb(x, k, eps)) - self.eval(self._perturb(x, k, -eps))) / (2 * eps)

    def _perturb(self, x: np.ndarray, k: int, eps: float) -> np.ndarray:
        if not self.bundle.is_compact_base:
            out = x.copy()
            out[..., k] += eps
            return out
        factor, comp = divmod(k, 3)
        step = np.zeros(3)
        step[comp] = eps
        out = x.copy()
        out[..., factor, :, :] = x[..., factor, :, :] @ so3_exp(step)
        return out

    def derivative_tensor(self, x: np.ndarray) -> np.ndarray:
        """All directional derivatives stacked as (..., dim g, dim M, dim M), last axis = direction."""
        return np.stack([self.directional_derivative(x, k) for k in range(self.bundle.base_dim)], axis=-1)

    def analytic_jet(self, x_jet) -> CurveJet:
        return self._jet(x_jet)


def _as_coords(v, dim: int, name: str) -> np.ndarray:
    arr = v.coords if isinstance(v, AlgebraVector) else np.asarray(v, dtype=float)
    if arr.shape[-1:] != (dim,):
        raise InvalidInputError(f"{name} has dimension {arr.shape[-1:]}, expected {dim}")
    return arr


def constrained_velocity(conn: LocalConnection, x: np.ndarray, xdot: np.ndarray) -> AlgebraVector:
    """xi = -A(x) xdot."""
    xdot = _as_coords(xdot, conn.bundle.base_dim, 'base velocity')
    return AlgebraVector(-conn.eval(x) @ xdot, conn.bundle.group)


def metric_adjoint(A: np.ndarray, base_metric: MetricSpec, group_metric: MetricSpec) -> np.ndarray:
    """G_M^-1 A^T G_g, batched over leading axes of A."""
    return base_metric.inverse @ np.swapaxes(A, -1, -2) @ group_metric.inner_matrix


def adjoint_apply(conn: LocalConnection, base_metric: MetricSpec, group_metric: MetricSpec,
                  x: np.ndarray, mu) -> np.ndarray:
    """The v with <A(x) w, mu>_g = <w, v>_M for every w."""
    if base_metric.dim != conn.bundle.base_dim or group_metric.dim != conn.bundle.group.dim:
        raise InvalidInputError("metric dimensions do not match the connection")
    mu = _as_coords(mu, conn.bundle.group.dim, 'algebra vector')
    adj = metric_adjoint(conn.eval(x), base_metric, group_metric)
    return np.einsum('...ij,...j->...i', adj, mu)


def connection_jet(conn: LocalConnection, x_jet, h_fd: Optional[float] = None,
                   segment_length: float = 1.0) -> CurveJet:
    """
    Jet (xi, xi', xi'', xi''') of xi(t) = -A(x(t)) x'(t) at one time.

    The curve is rebuilt from its Taylor data (a CurveJet through d4 for a
    euclidean base, a ChartJet for a compact base) on a 7-point stencil of
    step h_fd, which defaults to 1e-3 * segment_length.
    """
    if conn.has_analytic_jet:
        return conn.analytic_jet(x_jet)
    h = float(h_fd) if h_fd is not None else 1e-3 * float(segment_length)
    taus = h * np.arange(-3, 4)
    if conn.bundle.is_compact_base:
        if not isinstance(x_jet, ChartJet):
            raise InvalidInputError("a compact base needs a ChartJet")
        points = x_jet.points(taus)
        velocities = x_jet.body_velocity(taus)
    else:
        if x_jet.dim != conn.bundle.base_dim:
            raise InvalidInputError(f"x jet has dimension {x_jet.dim}, base has {conn.bundle.base_dim}")
        x_jet.require(4, 'x jet')
        coeffs = [x_jet.value, x_jet.d1, x_jet.d2, x_jet.d3, x_jet.d4]
        points = sum(np.outer(taus**j, c) / factorial(j) for j, c in enumerate(coeffs))
        velocities = sum(np.outer(taus**j, c) / factorial(j) for j, c in enumerate(coeffs[1:]))
    xi = -np.einsum('tij,tj->ti', conn.eval(points), velocities)
    derivs = [xi[3]] + [(central_weights(k) @ xi) / h**k for k in (1, 2, 3)]
    return CurveJet(*derivs, algebra=conn.bundle.group)


def connection_grid_jet(conn: LocalConnection, grid: SegmentGrid, points: np.ndarray,
                        velocities: np.ndarray) -> CurveJet:
    """xi = -A(x) x' at the nodes of one segment, differentiated with the segment stencils."""
    xi = -np.einsum('tij,tj->ti', conn.eval(points), velocities)
    return CurveJet(xi, grid.derivative(xi, 1), grid.derivative(xi, 2), grid.derivative(xi, 3),
                    algebra=conn.bundle.group)
