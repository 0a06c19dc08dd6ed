import numpy as np
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

from .algebra import (AlgebraVector, CompactConnection, InvalidInputError, InvariantConnection,
                      LieAlgebra, MetricSpec, so3_exp, so3_right_jacobian)
from utils.grid_utils import central_weights, integrate_samples, uniform_spacing

BASE_KINDS = ('euclidean', 'compact_group')


@dataclass(frozen=True)
class BundleSpec:
    """
    Trivial principal bundle M x G with its two metrics.

    base_kind is 'euclidean' (M = R^n, base_dim = n) or 'compact_group'
    (M = SO(3)^k, base_dim = 3k, base points are (k, 3, 3) rotation stacks).
    """
    base_kind: str
    base_dim: int
    group: LieAlgebra
    base_metric: MetricSpec
    group_metric: MetricSpec

    def __post_init__(self):
        if self.base_kind not in BASE_KINDS:
            raise InvalidInputError(f"unknown base kind '{self.base_kind}' (expected one of {BASE_KINDS})")
        if self.base_dim < 1:
            raise InvalidInputError("base dimension must be positive")
        if self.base_kind == 'compact_group' and self.base_dim % 3:
            raise InvalidInputError("a compact base is a product of SO(3) factors (dimension 3k)")
        group = self.group if isinstance(self.group, LieAlgebra) else LieAlgebra.from_tag(self.group)
        object.__setattr__(self, 'group', group)
        if self.base_metric.dim != self.base_dim:
            raise InvalidInputError(f"base metric is {self.base_metric.dim}x{self.base_metric.dim}, "
                                    f"base dimension is {self.base_dim}")
        if self.group_metric.dim != group.dim:
            raise InvalidInputError(f"group metric is {self.group_metric.dim}x{self.group_metric.dim}, "
                                    f"{group.tag} has dimension {group.dim}")
        if self.base_kind == 'compact_group':
            self._check_bi_invariant_base()

    def _check_bi_invariant_base(self):
        # The compact-base shortcut needs a bi-invariant metric: c * identity per factor
        G = self.base_metric.inner_matrix
        for f in range(self.base_factors):
            block = G[3 * f:3 * f + 3, 3 * f:3 * f + 3]
            off = np.delete(G[3 * f:3 * f + 3], np.s_[3 * f:3 * f + 3], axis=1)
            if (np.abs(block - block[0, 0] * np.eye(3)).max() > 1e-12 or
                    np.abs(off).max(initial=0.0) > 1e-12):
                raise InvalidInputError(
                    "compact-base metric must be a positive multiple of the identity on each SO(3) factor")

    @classmethod
    def euclidean(cls, n: int, group: Union[str, LieAlgebra] = 'so3',
                  base_metric: Optional[MetricSpec] = None,
                  group_metric: Optional[MetricSpec] = None) -> 'BundleSpec':
        group = group if isinstance(group, LieAlgebra) else LieAlgebra.from_tag(group)
        return cls('euclidean', int(n), group,
                   base_metric or MetricSpec.identity(int(n)),
                   group_metric or MetricSpec.identity(group.dim))

    @classmethod
    def compact(cls, factors: int, group: Union[str, LieAlgebra] = 'se3',
                base_metric: Optional[MetricSpec] = None,
                group_metric: Optional[MetricSpec] = None) -> 'BundleSpec':
        group = group if isinstance(group, LieAlgebra) else LieAlgebra.from_tag(group)
        return cls('compact_group', 3 * int(factors), group,
                   base_metric or MetricSpec.identity(3 * int(factors)),
                   group_metric or MetricSpec.identity(group.dim))

    @property
    def is_compact_base(self) -> bool:
        return self.base_kind == 'compact_group'

    @property
    def base_factors(self) -> int:
        return self.base_dim // 3 if self.is_compact_base else 0

    @property
    def base_algebra(self) -> Optional[LieAlgebra]:
        return LieAlgebra(['so3'] * self.base_factors) if self.is_compact_base else None

    @property
    def base_point_shape(self) -> Tuple[int, ...]:
        return (self.base_factors, 3, 3) if self.is_compact_base else (self.base_dim,)

    @property
    def group_connection(self) -> InvariantConnection:
        return InvariantConnection(self.group, self.group_metric)

    @property
    def base_connection(self) -> Optional[CompactConnection]:
        return CompactConnection(self.base_algebra) if self.is_compact_base else None

    def describe(self) -> str:
        base = (f"R^{self.base_dim}" if not self.is_compact_base
                else ' x '.join(['SO(3)'] * self.base_factors))
        return f"{base} x {self.group.tag.upper()}"


def _coords(v) -> np.ndarray:
    if isinstance(v, AlgebraVector):
        return v.coords
    return np.asarray(v, dtype=float)


@dataclass
class CurveJet:
    """Value and time derivatives of a curve; every entry has shape (..., dim)."""
    value: np.ndarray
    d1: np.ndarray
    d2: Optional[np.ndarray] = None
    d3: Optional[np.ndarray] = None
    d4: Optional[np.ndarray] = None
    algebra: Optional[LieAlgebra] = None

    def __post_init__(self):
        if isinstance(self.value, AlgebraVector) and self.algebra is None:
            self.algebra = self.value.algebra
        dim = None
        for name in ('value', 'd1', 'd2', 'd3', 'd4'):
            entry = getattr(self, name)
            if entry is None:
                continue
            arr = _coords(entry)
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"jet entry '{name}' is not finite")
            if dim is None:
                dim = arr.shape[-1:]
            elif arr.shape[-1:] != dim:
                raise InvalidInputError(f"jet entry '{name}' has dimension {arr.shape[-1:]}, expected {dim}")
            setattr(self, name, arr)
        if self.algebra is not None and dim != (self.algebra.dim,):
            raise InvalidInputError(f"jet dimension {dim} does not match {self.algebra.tag}")

    @property
    def dim(self) -> int:
        return self.value.shape[-1]

    def require(self, order: int, what: str = 'jet') -> None:
        names = ['value', 'd1', 'd2', 'd3', 'd4'][:order + 1]
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise InvalidInputError(f"{what} needs derivatives through order {order}; missing {missing}")

    @classmethod
    def zeros(cls, dim: int, order: int = 3, algebra: Optional[LieAlgebra] = None) -> 'CurveJet':
        entries = [np.zeros(dim) for _ in range(order + 1)] + [None] * (4 - order)
        return cls(*entries, algebra=algebra)


class ChartJet:
    """
    Jet of a curve on SO(3)^k in exponential coordinates around a chart centre:
    R_f(tau) = C_f exp(phi_f(tau)), with phi given by its Taylor data at tau = 0.
    """

    def __init__(self, center: np.ndarray, phi: Sequence[np.ndarray]):
        center = np.asarray(center, dtype=float)
        if center.ndim == 2:
            center = center[None]
        if center.shape[1:] != (3, 3):
            raise InvalidInputError(f"chart centre must be a (k, 3, 3) stack, got {center.shape}")
        self.center = center
        self.factors = center.shape[0]
        self.phi = [np.asarray(p, dtype=float).reshape(3 * self.factors) for p in phi]
        if len(self.phi) < 2:
            raise InvalidInputError("a chart jet needs at least phi and its first derivative")

    def coordinates(self, tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Taylor-evaluated chart coordinates and their tau-derivative, shape (len(tau), 3k)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        phi = np.zeros((len(tau), 3 * self.factors))
        dphi = np.zeros_like(phi)
        fact = 1.0
        for j, coeff in enumerate(self.phi):
            if j > 0:
                fact *= j
            phi += np.outer(tau**j, coeff) / fact
        fact = 1.0
        for j, coeff in enumerate(self.phi[1:]):
            if j > 0:
                fact *= j
            dphi += np.outer(tau**j, coeff) / fact
        return phi, dphi

    def points(self, tau: np.ndarray) -> np.ndarray:
        """Rotation stacks (len(tau), k, 3, 3)."""
        phi, _ = self.coordinates(tau)
        local = so3_exp(phi.reshape(-1, self.factors, 3))
        return self.center[None] @ local

    def body_velocity(self, tau: np.ndarray) -> np.ndarray:
        """omega_f = J_r(phi_f) phi_f' at each tau, shape (len(tau), 3k)."""
        phi, dphi = self.coordinates(tau)
        jr = so3_right_jacobian(phi.reshape(-1, self.factors, 3))
        omega = np.einsum('tfij,tfj->tfi', jr, dphi.reshape(-1, self.factors, 3))
        return omega.reshape(-1, 3 * self.factors)


def body_velocity_jet(chart: ChartJet, h: float = 1e-3) -> CurveJet:
    """omega jet (value through d3) at tau = 0 from a 7-point central stencil."""
    taus = h * np.arange(-3, 4)
    samples = chart.body_velocity(taus)
    derivs = [samples[3]] + [(central_weights(k) @ samples) / h**k for k in (1, 2, 3)]
    return CurveJet(*derivs)


def product_inner(spec: BundleSpec, v1: Tuple, v2: Tuple) -> float:
    """<x1, x2>_M + <xi1, xi2>_g for tangent pairs (base vector, algebra vector)."""
    b1, a1 = _coords(v1[0]), _coords(v1[1])
    b2, a2 = _coords(v2[0]), _coords(v2[1])
    for name, b in (('first base vector', b1), ('second base vector', b2)):
        if b.shape[-1:] != (spec.base_dim,):
            raise InvalidInputError(f"{name} has dimension {b.shape[-1:]}, base has {spec.base_dim}")
    for name, a in (('first algebra vector', a1), ('second algebra vector', a2)):
        if a.shape[-1:] != (spec.group.dim,):
            raise InvalidInputError(f"{name} has dimension {a.shape[-1:]}, {spec.group.tag} has {spec.group.dim}")
    return spec.base_metric.inner(b1, b2) + spec.group_metric.inner(a1, a2)


def covariant_acceleration(spec: BundleSpec, jet_base: CurveJet,
                           jet_group: CurveJet) -> Tuple[np.ndarray, np.ndarray]:
    """
    Covariant acceleration split into its base and group parts.

    Args:
        spec: Bundle the curve lives on
        jet_base: x jet through d2 (euclidean) or omega jet through d1 (compact base)
        jet_group: body-velocity jet of the group curve through d1

    Returns:
        (base acceleration, algebra coordinates of xi_dot + nabla_xi xi)
    """
    if jet_base.dim != spec.base_dim:
        raise InvalidInputError(f"base jet has dimension {jet_base.dim}, base has {spec.base_dim}")
    if jet_group.dim != spec.group.dim:
        raise InvalidInputError(f"group jet has dimension {jet_group.dim}, {spec.group.tag} has {spec.group.dim}")
    jet_group.require(1, 'group jet')
    if spec.is_compact_base:
        jet_base.require(1, 'compact base jet')
        omega = jet_base.value
        base = jet_base.d1 + spec.base_connection.cov_der(omega, omega)
    else:
        jet_base.require(2, 'euclidean base jet')
        base = jet_base.d2
    xi = jet_group.value
    group = jet_group.d1 + spec.group_connection.cov_der(xi, xi)
    return base, group


def cost_functional(spec: BundleSpec, times: np.ndarray, jet_base: CurveJet,
                    jet_group: CurveJet, rule: str = 'simpson') -> float:
    """
    J = 1/2 int |nabla_q' q'|^2 dt on one uniform grid.

    Jets are sampled at the nodes (leading axis = node). Composite Simpson is
    used for odd node counts and trapezoid otherwise.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 3:
        raise InvalidInputError(f"cost quadrature needs at least 3 nodes, got {times.size}")
    try:
        uniform_spacing(times)
    except ValueError as exc:
        raise InvalidInputError(str(exc))
    base, group = covariant_acceleration(spec, jet_base, jet_group)
    if base.shape[0] != len(times) or group.shape[0] != len(times):
        raise InvalidInputError("jets must be sampled at every grid node")
    integrand = spec.base_metric.inner(base, base) + spec.group_metric.inner(group, group)
    return 0.5 * integrate_samples(integrand, times, rule)


def segment_cost(spec: BundleSpec, segments: Sequence[Tuple[np.ndarray, CurveJet, CurveJet]],
                 rule: str = 'simpson') -> float:
    """Sum of cost_functional over (times, base jet, group jet) segment samples."""
    return float(sum(cost_functional(spec, times, jb, jg, rule) for times, jb, jg in segments))


def elastic_group_terms(connection, jet: CurveJet) -> List[np.ndarray]:
    """The ten summands of the group elastic operator, in their canonical order."""
    jet.require(3, 'group jet')
    t, t1, t2, t3 = jet.value, jet.d1, jet.d2, jet.d3
    nab, R = connection.cov_der, connection.curv
    n_tt = nab(t, t)
    return [
        t3,
        3.0 * nab(t, t2),
        3.0 * nab(t1, t1),
        nab(t2, t),
        3.0 * nab(t, nab(t, t1)),
        2.0 * nab(t, nab(t1, t)),
        nab(t1, n_tt),
        nab(t, nab(t, n_tt)),
        R(t1, t, t),
        R(n_tt, t, t),
    ]


def elastic_group(metric: Optional[MetricSpec], jet: CurveJet, algebra: Optional[LieAlgebra] = None,
                  connection=None) -> np.ndarray:
    """
    Euler-Lagrange operator of the group cost written on body-velocity jets.

    Uses the left-invariant connection of `metric` on `algebra` (taken from
    the jet when not given); pass `connection` to evaluate with another
    connection such as the compact shortcut.
    """
    if connection is None:
        algebra = algebra or jet.algebra
        if algebra is None:
            raise InvalidInputError("elastic_group needs the algebra of the jet")
        connection = InvariantConnection(algebra, metric)
    if jet.dim != connection.algebra.dim:
        raise InvalidInputError(f"jet dimension {jet.dim} does not match {connection.algebra.tag}")
    terms = elastic_group_terms(connection, jet)
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def elastic_base(spec: BundleSpec, jet: CurveJet) -> np.ndarray:
    """x'''' on a euclidean base; the compact elastic operator on omega jets otherwise."""
    if jet.dim != spec.base_dim:
        raise InvalidInputError(f"base jet has dimension {jet.dim}, base has {spec.base_dim}")
    if spec.is_compact_base:
        return elastic_group(None, jet, connection=spec.base_connection)
    jet.require(4, 'euclidean base jet')
    return jet.d4
