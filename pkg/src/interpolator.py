import numpy as np
import warnings
from dataclasses import dataclass, field, fields, replace
from scipy.interpolate import CubicSpline
from scipy.linalg import null_space
from tqdm import tqdm
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .algebra import (AlgebraVector, ConvergenceError, GroupElement, InvalidInputError, LieAlgebra,
                      ORTHONORMAL_TOL, so3_log)
from .connection import LocalConnection, connection_grid_jet, metric_adjoint
from .geometry import BundleSpec, CurveJet, elastic_base, elastic_group, segment_cost
from utils.grid_utils import SegmentGrid, merge_segments

GROUP_WAYPOINT_MODES = ('hard', 'soft', 'free')
EULER_LAGRANGE_FORMS = ('horizontal', 'reduced')

# Gauss nodes and weights of the two-exponential commutator-free scheme
_CF4_NODES = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)
_CF4_ALPHA = (0.25 + np.sqrt(3.0) / 6.0, 0.25 - np.sqrt(3.0) / 6.0)

# Sufficient-decrease parameter of the backtracking line search
_ARMIJO_SIGMA = 0.2

# Merit weight of the rows a constrained step meets exactly
_CONSTRAINT_PENALTY = 1e6


@dataclass
class Waypoint:
    t: float
    x: np.ndarray
    g: Optional[GroupElement] = None


@dataclass
class SolverConfig:
    """Knobs of the collocation solver. All fields can be overridden from a problem file."""
    nodes_per_segment: int = 33
    newton_tol: float = 1e-9
    max_newton_iters: int = 50
    backtrack_factor: float = 0.5
    min_step: float = 1e-4
    jacobian_step: float = 1e-6
    integrator_multiplier: int = 4
    group_waypoints: str = 'soft'
    soft_weight: float = 1e3
    projection_interval: int = 50
    fd_connection_step: float = 1e-3
    euler_lagrange: str = 'horizontal'
    verbose: bool = False

    def validate(self) -> 'SolverConfig':
        if int(self.nodes_per_segment) != self.nodes_per_segment:
            raise InvalidInputError("nodes_per_segment must be an integer")
        if self.nodes_per_segment < 5 or self.nodes_per_segment % 2 == 0:
            raise InvalidInputError(f"nodes_per_segment must be odd and >= 5, got {self.nodes_per_segment}")
        for name in ('newton_tol', 'max_newton_iters', 'min_step', 'jacobian_step',
                     'integrator_multiplier', 'soft_weight', 'projection_interval', 'fd_connection_step'):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise InvalidInputError(f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor}")
        if self.group_waypoints not in GROUP_WAYPOINT_MODES:
            raise InvalidInputError(f"group_waypoints must be one of {GROUP_WAYPOINT_MODES}")
        if self.euler_lagrange not in EULER_LAGRANGE_FORMS:
            raise InvalidInputError(f"euler_lagrange must be one of {EULER_LAGRANGE_FORMS}")
        return self

    @classmethod
    def from_dict(cls, overrides: Optional[Dict], base: Optional['SolverConfig'] = None) -> 'SolverConfig':
        base = base or cls()
        overrides = dict(overrides or {})
        known = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(overrides) - set(known))
        if unknown:
            raise InvalidInputError(f"unknown solver option(s): {', '.join(unknown)}")
        values = {}
        for key, value in overrides.items():
            default = getattr(base, key)
            if isinstance(default, bool):
                values[key] = bool(value)
            elif isinstance(default, int):
                if float(value) != int(value):
                    raise InvalidInputError(f"solver option {key} must be an integer, got {value}")
                values[key] = int(value)
            elif isinstance(default, float):
                values[key] = float(value)
            else:
                values[key] = value
        return replace(base, **values).validate()

    def to_dict(self) -> Dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class InterpolationProblem:
    """Waypoints, boundary data and the bundle/connection they live on."""

    def __init__(self, bundle: BundleSpec, connection: LocalConnection, waypoints: Sequence[Waypoint],
                 v0: np.ndarray, vN: np.ndarray, xi0=None, xiN=None, name: str = ''):
        self.bundle = bundle
        self.connection = connection
        self.waypoints = list(waypoints)
        self.v0 = np.asarray(v0, dtype=float)
        self.vN = np.asarray(vN, dtype=float)
        self.xi0 = xi0
        self.xiN = xiN
        self.name = name
        self.validate()

    def validate(self) -> None:
        bundle = self.bundle
        if self.connection.bundle.base_dim != bundle.base_dim or self.connection.bundle.group != bundle.group:
            raise InvalidInputError("connection and problem live on different bundles")
        if len(self.waypoints) < 2:
            raise InvalidInputError(f"at least 2 waypoints are required, got {len(self.waypoints)}")
        for i, wp in enumerate(self.waypoints):
            wp.t = float(wp.t)
            wp.x = np.asarray(wp.x, dtype=float)
            if not np.isfinite(wp.t):
                raise InvalidInputError(f"waypoint {i} time is not finite")
            if i > 0 and not wp.t > self.waypoints[i - 1].t:
                raise InvalidInputError(f"waypoint {i} time {wp.t} is not after waypoint {i - 1} "
                                        f"time {self.waypoints[i - 1].t}; times must be strictly increasing")
            if wp.x.shape != bundle.base_point_shape:
                raise InvalidInputError(f"waypoint {i} base point has shape {wp.x.shape}, "
                                        f"expected {bundle.base_point_shape}")
            if bundle.is_compact_base:
                defect = LieAlgebra(['so3']).group_defect(wp.x)
                if defect > ORTHONORMAL_TOL:
                    raise InvalidInputError(f"waypoint {i} base point is not a rotation stack (defect {defect:.2e})")
            if wp.g is not None and wp.g.algebra != bundle.group:
                raise InvalidInputError(f"waypoint {i} group element is {wp.g.group_tag}, "
                                        f"bundle group is {bundle.group.tag}")
        for name in ('v0', 'vN'):
            if getattr(self, name).shape != (bundle.base_dim,):
                raise InvalidInputError(f"{name} has shape {getattr(self, name).shape}, "
                                        f"expected ({bundle.base_dim},)")
        for name, v, wp in (('xi0', self.v0, self.waypoints[0]), ('xiN', self.vN, self.waypoints[-1])):
            given = getattr(self, name)
            if given is None:
                continue
            coords = given.coords if isinstance(given, AlgebraVector) else np.asarray(given, dtype=float)
            if coords.shape != (bundle.group.dim,):
                raise InvalidInputError(f"{name} has shape {coords.shape}, expected ({bundle.group.dim},)")
            derived = -self.connection.eval(wp.x) @ v
            if np.abs(coords - derived).max() > 1e-8:
                raise InvalidInputError(f"{name} is incompatible with the constraint: given {coords}, "
                                        f"-A(x) v = {derived}")

    @property
    def times(self) -> np.ndarray:
        return np.array([wp.t for wp in self.waypoints])

    @property
    def n_segments(self) -> int:
        return len(self.waypoints) - 1

    @property
    def g0(self) -> GroupElement:
        g = self.waypoints[0].g
        return g if g is not None else GroupElement.identity(self.bundle.group)

    def endpoint_group_velocities(self) -> Tuple[AlgebraVector, AlgebraVector]:
        A0 = self.connection.eval(self.waypoints[0].x)
        AN = self.connection.eval(self.waypoints[-1].x)
        return (AlgebraVector(-A0 @ self.v0, self.bundle.group),
                AlgebraVector(-AN @ self.vN, self.bundle.group))

    def group_waypoint_indices(self, mode: str) -> List[int]:
        if mode == 'free':
            return []
        return [i for i, wp in enumerate(self.waypoints) if i > 0 and wp.g is not None]


@dataclass
class Trajectory:
    """Solution samples on the global grid (duplicated junction nodes removed)."""
    times: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    xi: np.ndarray
    g: np.ndarray
    cost: float
    residual_norm: float
    iterations: int
    converged: bool
    residual_history: List[float] = field(default_factory=list)
    segment_values: Optional[np.ndarray] = None
    segment_times: Optional[np.ndarray] = None
    group_defects: Dict[int, float] = field(default_factory=dict)
    config: SolverConfig = field(default_factory=SolverConfig)
    message: str = ''

    @property
    def n_segments(self) -> int:
        return self.segment_values.shape[0]

    @property
    def nodes_per_segment(self) -> int:
        return self.segment_values.shape[1]


# Group reconstruction

def _sample_function(xi, times: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    if callable(xi):
        return lambda ts: np.array([np.asarray(xi(t), dtype=float) for t in ts])
    samples = np.asarray(xi, dtype=float)
    if samples.shape[0] != len(times):
        raise InvalidInputError(f"{samples.shape[0]} body-velocity samples for {len(times)} times")
    spline = CubicSpline(times, samples, axis=0)
    return lambda ts: spline(ts)


def integrate_body_velocity(algebra: LieAlgebra, g0: np.ndarray, times: np.ndarray, xi,
                            steps_per_interval: int = 4, projection_interval: int = 50) -> np.ndarray:
    """
    Fourth-order commutator-free integration of g' = g xi^ on matrix groups.

    Args:
        algebra: Algebra of the group
        g0: Initial matrix
        times: Output times (increasing)
        xi: Callable t -> coordinates, or samples at `times` (interpolated by a cubic spline)
        steps_per_interval: Integrator steps between consecutive output times
        projection_interval: Polar re-projection every this many steps

    Returns:
        Matrices at `times`, shape (len(times), m, m)
    """
    times = np.asarray(times, dtype=float)
    fn = _sample_function(xi, times)
    steps = int(steps_per_interval)
    starts = (times[:-1, None] + (np.diff(times)[:, None] / steps) * np.arange(steps)).ravel()
    dts = np.repeat(np.diff(times) / steps, steps)
    X1 = fn(starts + _CF4_NODES[0] * dts)
    X2 = fn(starts + _CF4_NODES[1] * dts)
    a1, a2 = _CF4_ALPHA
    E1 = algebra.exp(dts[:, None] * (a1 * X1 + a2 * X2))
    E2 = algebra.exp(dts[:, None] * (a2 * X1 + a1 * X2))

    out = np.empty((len(times),) + g0.shape)
    out[0] = g0
    g = np.array(g0, dtype=float)
    for k in range(len(dts)):
        g = g @ E1[k] @ E2[k]
        if (k + 1) % projection_interval == 0:
            drift = algebra.group_defect(g)
            if drift > 1e-8:
                warnings.warn(f"group integrator drifted {drift:.2e} off the group before re-projection")
            g = algebra.project(g)
        if (k + 1) % steps == 0:
            out[(k + 1) // steps] = g
    return out


def reconstruct_group(g0: GroupElement, xi, times: np.ndarray, multiplier: int = 4,
                      projection_interval: int = 50) -> List[GroupElement]:
    """Samples of g with g^-1 g' = xi and g(times[0]) = g0."""
    mats = integrate_body_velocity(g0.algebra, g0.mat, times, xi, multiplier, projection_interval)
    mats = g0.algebra.project(mats)
    mats[0] = g0.mat
    return [GroupElement(m, g0.algebra) for m in mats]


# Collocation system

@dataclass
class SegmentState:
    points: np.ndarray
    velocities: np.ndarray
    base_jet: CurveJet
    xi_jet: CurveJet
    euler_lagrange: np.ndarray
    end_point_defect: np.ndarray
    start_values: Tuple[np.ndarray, np.ndarray]
    end_values: Tuple[np.ndarray, np.ndarray]
    first_value: np.ndarray
    last_value: np.ndarray
    group_local: Optional[np.ndarray] = None


class CollocationSolver:
    """
    Damped Newton on the collocated Euler-Lagrange boundary-value problem.

    Unknowns are the nodal base values of every segment: x for a euclidean
    base, body velocities omega for an SO(3)^k base. Residual rows come in
    fixed order: collocation, waypoint, endpoint velocity, C1/C2 junctions,
    group waypoints.
    """

    def __init__(self, problem: InterpolationProblem, config: Optional[SolverConfig] = None):
        self.problem = problem
        self.config = (config or SolverConfig()).validate()
        self.bundle = problem.bundle
        self.connection = problem.connection
        self.compact = self.bundle.is_compact_base
        self.n = int(self.config.nodes_per_segment)
        self.N = problem.n_segments
        self.d = self.bundle.base_dim
        self.dg = self.bundle.group.dim
        self.order = 3 if self.compact else 4
        self.verbose = self.config.verbose

        times = problem.times
        self.grids = [SegmentGrid(times[s], times[s + 1], self.n) for s in range(self.N)]
        lo = self.order // 2
        self.collocation = np.arange(lo, self.n - (self.order - lo))
        self.group_indices = problem.group_waypoint_indices(self.config.group_waypoints)
        self.base_algebra = self.bundle.base_algebra
        self.group_connection = self.bundle.group_connection
        self.last_iterate: Optional[Tuple[np.ndarray, int, List[float]]] = None
        self._build_layout()

    # Layout

    def _build_layout(self):
        N, d, dg = self.N, self.d, self.dg
        ncol = len(self.collocation) * d
        per_waypoint = d if self.compact else 2 * d
        blocks = {}
        offset = 0
        for name, size in (('collocation', N * ncol), ('waypoint', N * per_waypoint), ('velocity', 2 * d),
                           ('junction', (N - 1) * 2 * d), ('group', len(self.group_indices) * dg)):
            blocks[name] = slice(offset, offset + size)
            offset += size
        self.blocks = blocks
        self.n_rows = offset
        self.n_base_rows = blocks['group'].start

        deps = []
        for s in range(N):
            rows = [np.arange(blocks['collocation'].start + s * ncol, blocks['collocation'].start + (s + 1) * ncol),
                    np.arange(blocks['waypoint'].start + s * per_waypoint,
                              blocks['waypoint'].start + (s + 1) * per_waypoint)]
            if s == 0:
                rows.append(np.arange(blocks['velocity'].start, blocks['velocity'].start + d))
            if s == N - 1:
                rows.append(np.arange(blocks['velocity'].start + d, blocks['velocity'].stop))
            for j in (s, s + 1):  # junctions j joins segments j-1 and j
                if 1 <= j <= N - 1:
                    start = blocks['junction'].start + (j - 1) * 2 * d
                    rows.append(np.arange(start, start + 2 * d))
            deps.append(np.concatenate(rows))
        self.dependent_rows = deps

    # Segment evaluation

    def segment_state(self, s: int, values: np.ndarray, with_group: bool = False) -> SegmentState:
        grid = self.grids[s]
        values = np.asarray(values, dtype=float)
        wp_start, wp_end = self.problem.waypoints[s], self.problem.waypoints[s + 1]
        D1 = grid.derivative(values, 1)
        D2 = grid.derivative(values, 2)
        D3 = grid.derivative(values, 3)

        if self.compact:
            k = self.bundle.base_factors
            start = _block_diag(wp_start.x)
            mats = integrate_body_velocity(self.base_algebra, start, grid.times, values,
                                           self.config.integrator_multiplier, self.config.projection_interval)
            points = _block_split(mats, k)
            velocities = values
            base_jet = CurveJet(values, D1, D2, D3)
            end_defect = so3_log(np.swapaxes(points[-1], -1, -2) @ wp_end.x).reshape(-1)
            start_values = (values[0], D1[0])
            end_values = (values[-1], D1[-1])
        else:
            points = values
            velocities = D1
            base_jet = CurveJet(values, D1, D2, D3, grid.derivative(values, 4))
            end_defect = np.concatenate([values[0] - wp_start.x, values[-1] - wp_end.x])
            start_values = (D1[0], D2[0])
            end_values = (D1[-1], D2[-1])

        A = self.connection.eval(points)
        xi_jet = connection_grid_jet(self.connection, grid, points, velocities)
        el = self._euler_lagrange(grid, points, velocities, A, base_jet, xi_jet)

        group_local = None
        if with_group:
            group_local = integrate_body_velocity(self.bundle.group, self.bundle.group.identity(), grid.times,
                                                  xi_jet.value, self.config.integrator_multiplier,
                                                  self.config.projection_interval)
        return SegmentState(points, velocities, base_jet, xi_jet, el[self.collocation], end_defect,
                            start_values, end_values, values[0], values[-1], group_local)

    def _euler_lagrange(self, grid, points, velocities, A, base_jet, xi_jet) -> np.ndarray:
        base_metric, group_metric = self.bundle.base_metric, self.bundle.group_metric
        adj = metric_adjoint(A, base_metric, group_metric)
        e_base = elastic_base(self.bundle, base_jet)
        if self.config.euler_lagrange == 'horizontal':
            e_group = elastic_group(group_metric, xi_jet, self.bundle.group)
            return e_base - np.einsum('nij,nj->ni', adj, e_group)

        # Stationarity of the cost with xi = -A(x) x' substituted before varying
        nab = self.group_connection.cov_der
        xi = xi_jet.value
        V = xi_jet.d1 + nab(xi, xi)
        I, I_inv = group_metric.inner_matrix, group_metric.inverse
        basis = np.eye(self.dg)
        B = np.stack([nab(basis[j], xi) + nab(xi, basis[j]) for j in range(self.dg)], axis=-1)
        W = -grid.derivative(V, 1) + np.einsum('nji,nj->ni', B, V @ I) @ I_inv.T
        q = np.einsum('nij,nj->ni', adj, W)
        dA = self.connection.derivative_tensor(points)
        C = np.einsum('nijk,nj->nik', dA, velocities)
        coupling = np.einsum('nik,ni->nk', C, W @ I) @ base_metric.inverse.T
        el = e_base + grid.derivative(q, 1) - coupling
        if self.compact:
            k = self.bundle.base_factors
            el = el - np.cross(q.reshape(-1, k, 3), velocities.reshape(-1, k, 3)).reshape(el.shape)
        return el

    # Residual assembly

    def assemble(self, states: Sequence[SegmentState], scaled: bool = True) -> np.ndarray:
        N, d = self.N, self.d
        shift = 1 if self.compact else 0
        r = np.empty(self.n_rows)
        b = self.blocks

        colloc = []
        for s, st in enumerate(states):
            scale = self.grids[s].h ** self.order if scaled else 1.0
            colloc.append((scale * st.euler_lagrange).ravel())
        r[b['collocation']] = np.concatenate(colloc)
        r[b['waypoint']] = np.concatenate([st.end_point_defect for st in states])

        h0, hN = self.grids[0].h, self.grids[-1].h
        v_scale0 = h0 ** (1 - shift) if scaled else 1.0
        v_scaleN = hN ** (1 - shift) if scaled else 1.0
        r[b['velocity']] = np.concatenate([v_scale0 * (states[0].start_values[0] - self.problem.v0),
                                           v_scaleN * (states[-1].end_values[0] - self.problem.vN)])

        junction = []
        for j in range(1, N):
            h = 0.5 * (self.grids[j - 1].h + self.grids[j].h)
            left, right = states[j - 1], states[j]
            if self.compact:
                c1 = left.last_value - right.first_value
                c2 = left.end_values[1] - right.start_values[1]
            else:
                c1 = left.end_values[0] - right.start_values[0]
                c2 = left.end_values[1] - right.start_values[1]
            s1 = h ** (1 - shift) if scaled else 1.0
            s2 = h ** (2 - shift) if scaled else 1.0
            junction.append(np.concatenate([s1 * c1, s2 * c2]))
        r[b['junction']] = np.concatenate(junction) if junction else np.empty(0)

        if self.group_indices:
            weight = np.sqrt(self.config.soft_weight) if (scaled and self.config.group_waypoints == 'soft') else 1.0
            r[b['group']] = weight * np.concatenate(list(self.group_defect_vectors(states).values()))
        return r

    def group_transport(self, states: Sequence[SegmentState]) -> List[np.ndarray]:
        """g at each waypoint, chained from g0 through the per-segment reconstructions."""
        g = self.problem.g0.mat
        out = [g]
        for st in states:
            g = g @ st.group_local[-1]
            out.append(g)
        return out

    def group_defect_vectors(self, states: Sequence[SegmentState]) -> Dict[int, np.ndarray]:
        algebra = self.bundle.group
        at_waypoints = self.group_transport(states)
        return {i: algebra.log(algebra.inverse(at_waypoints[i]) @ self.problem.waypoints[i].g.mat)
                for i in self.group_indices}

    def states(self, z: np.ndarray, with_group: Optional[bool] = None) -> List[SegmentState]:
        with_group = bool(self.group_indices) if with_group is None else with_group
        return [self.segment_state(s, z[s], with_group) for s in range(self.N)]

    def residual(self, z: np.ndarray) -> np.ndarray:
        return self.assemble(self.states(z))

    # Newton

    def initial_guess(self) -> np.ndarray:
        times = self.problem.times
        if self.compact:
            k = self.bundle.base_factors
            charts = [np.zeros(self.d)]
            for i in range(self.N):
                R_a, R_b = self.problem.waypoints[i].x, self.problem.waypoints[i + 1].x
                charts.append(charts[-1] + so3_log(np.swapaxes(R_a, -1, -2) @ R_b).reshape(-1))
            spline = CubicSpline(times, np.array(charts), axis=0,
                                 bc_type=((1, self.problem.v0), (1, self.problem.vN)))
            return np.stack([spline(grid.times, 1) for grid in self.grids])
        points = np.array([wp.x for wp in self.problem.waypoints])
        spline = CubicSpline(times, points, axis=0, bc_type=((1, self.problem.v0), (1, self.problem.vN)))
        return np.stack([spline(grid.times) for grid in self.grids])

    def jacobian(self, z: np.ndarray, r: np.ndarray, states: List[SegmentState]) -> np.ndarray:
        local = self.n * self.d
        J = np.zeros((self.n_rows, self.N * local))
        steps = self.config.jacobian_step * np.maximum(1.0, np.abs(z))
        with_group = bool(self.group_indices)

        if not with_group:
            # Segments of equal parity share no residual rows
            colours = [list(range(0, self.N, 2)), list(range(1, self.N, 2))]
            work = [(c, l) for c in colours if c for l in range(local)]
            for colour, l in tqdm(work, desc="Jacobian", disable=not self.verbose, leave=False):
                trial = list(states)
                for s in colour:
                    zs = z[s].copy()
                    zs.flat[l] += steps[s].flat[l]
                    trial[s] = self.segment_state(s, zs)
                dr = self.assemble(trial) - r
                for s in colour:
                    rows = self.dependent_rows[s]
                    J[rows, s * local + l] = dr[rows] / steps[s].flat[l]
            return J

        work = [(s, l) for s in range(self.N) for l in range(local)]
        for s, l in tqdm(work, desc="Jacobian", disable=not self.verbose, leave=False):
            zs = z[s].copy()
            zs.flat[l] += steps[s].flat[l]
            trial = list(states)
            trial[s] = self.segment_state(s, zs, with_group=True)
            J[:, s * local + l] = (self.assemble(trial) - r) / steps[s].flat[l]
        return J

    def _row_levels(self) -> List[np.ndarray]:
        """Row sets in priority order; each is met inside the null space of the ones before it."""
        b = self.blocks
        constraint = np.arange(b['waypoint'].start, self.n_base_rows)
        colloc = np.arange(b['collocation'].start, b['collocation'].stop)
        group = np.arange(b['group'].start, b['group'].stop)
        if self.config.group_waypoints == 'hard':
            return [constraint, group, colloc]
        return [constraint, np.concatenate([colloc, group])]

    def _newton_step(self, J: np.ndarray, r: np.ndarray) -> np.ndarray:
        if not self.group_indices:
            try:
                return np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                return np.linalg.lstsq(J, -r, rcond=None)[0]
        return _prioritized_step(J, r, self._row_levels())

    def _merit(self, r: np.ndarray) -> float:
        if not self.group_indices:
            return 0.5 * (r @ r)
        levels = self._row_levels()
        exact, fitted = np.concatenate(levels[:-1]), levels[-1]
        return 0.5 * (r[fitted] @ r[fitted]) + 0.5 * _CONSTRAINT_PENALTY * (r[exact] @ r[exact])

    def constraint_defect(self, states: Sequence[SegmentState]) -> float:
        """Largest unscaled waypoint, endpoint-velocity or junction defect."""
        r = self.assemble(states, scaled=False)
        rows = r[self.blocks['waypoint'].start:self.n_base_rows]
        return float(np.abs(rows).max()) if rows.size else 0.0

    def run(self) -> Tuple[np.ndarray, bool, int, List[float], str]:
        cfg = self.config
        square = not self.group_indices
        z = self.initial_guess()
        states = self.states(z)
        r = self.assemble(states)
        history = [float(np.abs(r).max())]
        self.last_iterate = (z, 0, list(history))
        if self.verbose:
            print(f"🔧 {self.N} segment(s) x {self.n} nodes, {z.size} unknowns, {self.n_rows} rows")
            print(f"🔁 iter 0: |r|_inf = {history[-1]:.3e}")

        converged, iterations, message = False, 0, ''
        if square and history[-1] <= cfg.newton_tol:
            return z, True, 0, history, 'initial guess satisfies the collocation equations'

        for it in range(1, cfg.max_newton_iters + 1):
            iterations = it
            J = self.jacobian(z, r, states)
            step = self._newton_step(J, r).reshape(z.shape)
            phi = self._merit(r)

            alpha = 1.0
            while True:
                trial_z = z + alpha * step
                trial_states = self.states(trial_z)
                trial_r = self.assemble(trial_states)
                trial_phi = self._merit(trial_r)
                decrease = (1.0 - 2.0 * _ARMIJO_SIGMA * alpha) * phi if square else phi
                if np.isfinite(trial_phi) and trial_phi <= decrease:
                    break
                if alpha * cfg.backtrack_factor < cfg.min_step:
                    break
                alpha *= cfg.backtrack_factor

            z, states, r = trial_z, trial_states, trial_r
            history.append(float(np.abs(r).max()))
            self.last_iterate = (z, it, list(history))
            step_norm = float(np.abs(alpha * step).max())
            full_step = float(np.abs(step).max())
            if self.verbose:
                print(f"🔁 iter {it}: |r|_inf = {history[-1]:.3e}, step {step_norm:.2e}, alpha {alpha:g}")

            if square and history[-1] <= cfg.newton_tol:
                converged = True
                break
            if not square and full_step <= cfg.newton_tol * (1.0 + float(np.abs(z).max())):
                defect = self.constraint_defect(states)
                if defect <= cfg.newton_tol:
                    converged = True
                    message = 'least-squares iteration stationary with the interpolation rows met'
                    break

        if not converged:
            message = f'no convergence after {iterations} Newton iteration(s)'
        return z, converged, iterations, history, message

    # Output

    def trajectory(self, z: np.ndarray, converged: bool, iterations: int, history: List[float],
                   message: str = '') -> Trajectory:
        states = self.states(z, with_group=True)
        at_waypoints = self.group_transport(states)
        g_segments = np.stack([at_waypoints[s] @ st.group_local for s, st in enumerate(states)])
        g_segments[0, 0] = self.problem.g0.mat

        r = self.assemble(states)
        defects = {i: float(np.abs(v).max()) for i, v in self.group_defect_vectors(states).items()}
        cost = segment_cost(self.bundle, [(self.grids[s].times, st.base_jet, st.xi_jet)
                                          for s, st in enumerate(states)])
        return Trajectory(
            times=merge_segments(np.stack([grid.times for grid in self.grids])),
            x=merge_segments(np.stack([st.points for st in states])),
            xdot=merge_segments(np.stack([st.velocities for st in states])),
            xi=merge_segments(np.stack([st.xi_jet.value for st in states])),
            g=merge_segments(g_segments),
            cost=float(cost),
            residual_norm=float(np.abs(r[:self.n_base_rows]).max()),
            iterations=iterations,
            converged=converged,
            residual_history=list(history),
            segment_values=np.array(z),
            segment_times=np.stack([grid.times for grid in self.grids]),
            group_defects=defects,
            config=self.config,
            message=message,
        )


def _prioritized_step(J: np.ndarray, r: np.ndarray, levels: Sequence[np.ndarray]) -> np.ndarray:
    """
    Gauss-Newton step for prioritized row sets.

    Each level is solved in the least-squares sense inside the null space of
    the levels before it, so a later level can never trade away an earlier one.
    """
    step = np.zeros(J.shape[1])
    basis = np.eye(J.shape[1])
    for k, rows in enumerate(levels):
        reduced = J[rows] @ basis
        y = np.linalg.lstsq(reduced, -(r[rows] + J[rows] @ step), rcond=None)[0]
        step = step + basis @ y
        if k == len(levels) - 1:
            break
        Z = null_space(reduced)
        if Z.size == 0:
            break
        basis = basis @ Z
    return step


def _block_diag(stack: np.ndarray) -> np.ndarray:
    k = stack.shape[0]
    out = np.zeros((3 * k, 3 * k))
    for f in range(k):
        out[3 * f:3 * f + 3, 3 * f:3 * f + 3] = stack[f]
    return out


def _block_split(mats: np.ndarray, k: int) -> np.ndarray:
    return np.stack([mats[..., 3 * f:3 * f + 3, 3 * f:3 * f + 3] for f in range(k)], axis=-3)


def assemble_residual(problem: InterpolationProblem, values: np.ndarray,
                      config: Optional[SolverConfig] = None, scaled: bool = True) -> np.ndarray:
    """
    Residual of the collocated boundary-value problem at candidate nodal values.

    Args:
        problem: Interpolation problem
        values: Nodal unknowns, shape (segments, nodes_per_segment, base dim)
        config: Solver configuration (grid size, group waypoint mode, Euler-Lagrange form)
        scaled: Apply the row equilibration used by the Newton iteration

    Returns:
        Residual vector with blocks in the order collocation, waypoint,
        endpoint velocity, junction (C1 then C2 per junction), group
    """
    solver = CollocationSolver(problem, config)
    values = np.asarray(values, dtype=float)
    expected = (solver.N, solver.n, solver.d)
    if values.shape != expected:
        raise InvalidInputError(f"nodal values have shape {values.shape}, expected {expected}")
    return solver.assemble(solver.states(values), scaled=scaled)


def solve(problem: InterpolationProblem, config: Optional[SolverConfig] = None,
          raise_on_failure: bool = False) -> Trajectory:
    """
    Solve the interpolation problem by damped Newton on the collocated equations.

    Returns the final iterate as a Trajectory; when Newton does not converge
    the trajectory carries converged=False unless raise_on_failure is set,
    in which case ConvergenceError is raised with the same trajectory.
    An exception raised mid-iteration also ends the run unconverged, with the
    last accepted iterate as the trajectory.
    """
    solver = CollocationSolver(problem, config)
    if solver.verbose:
        print(f"\n🚀 Solving '{problem.name or 'problem'}' on {problem.bundle.describe()}")
    try:
        z, converged, iterations, history, message = solver.run()
    except Exception as exc:
        if solver.last_iterate is None:
            raise
        z, iterations, history = solver.last_iterate
        converged, message = False, f"stopped after {iterations} Newton iteration(s): {exc}"
    trajectory = solver.trajectory(z, converged, iterations, history, message)

    if solver.group_indices and converged and solver.config.group_waypoints == 'hard':
        worst = max(trajectory.group_defects.values())
        if worst > solver.config.newton_tol:
            warnings.warn(f"group waypoints met in the least-squares sense only (max defect {worst:.2e})")
    if solver.verbose:
        status = "✅ Converged" if converged else "❌ Not converged"
        print(f"{status} after {iterations} iteration(s), J = {trajectory.cost:.6g}, "
              f"|r|_inf = {trajectory.residual_norm:.3e}")
    if not converged and raise_on_failure:
        raise ConvergenceError(message, trajectory=trajectory, residual_history=history)
    return trajectory


def solution_report(trajectory: Trajectory, problem: InterpolationProblem) -> Dict:
    """Diagnostics of a solved trajectory with unscaled per-block residual norms."""
    solver = CollocationSolver(problem, trajectory.config)
    states = solver.states(trajectory.segment_values, with_group=True)
    r = solver.assemble(states, scaled=False)
    blocks = {name: float(np.abs(r[sl]).max()) if sl.stop > sl.start else 0.0
              for name, sl in solver.blocks.items() if name != 'group'}

    d = solver.d
    junctions = r[solver.blocks['junction']].reshape(-1, 2 * d) if solver.N > 1 else np.zeros((0, 2 * d))
    A = problem.connection.eval(trajectory.x)
    constraint = np.abs(trajectory.xi + np.einsum('nij,nj->ni', A, trajectory.xdot)).max()
    return {
        'J': float(trajectory.cost),
        'converged': bool(trajectory.converged),
        'iterations': int(trajectory.iterations),
        'residual_norm': float(trajectory.residual_norm),
        'residual_history': [float(v) for v in trajectory.residual_history],
        'euler_lagrange': trajectory.config.euler_lagrange,
        'group_waypoints': trajectory.config.group_waypoints,
        'blocks': blocks,
        'constraint_defect': float(constraint),
        'group_defects': {str(i): float(np.abs(v).max()) for i, v in solver.group_defect_vectors(states).items()},
        'junction_defects': {
            'c1': [float(np.abs(row[:d]).max()) for row in junctions],
            'c2': [float(np.abs(row[d:]).max()) for row in junctions],
        },
        'message': trajectory.message,
    }
