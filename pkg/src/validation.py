import numpy as np
from dataclasses import asdict, dataclass, field
from scipy.linalg import expm, solve_banded
from tqdm import tqdm
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .algebra import (CompactConnection, InvalidInputError, InvariantConnection, LieAlgebra, MetricSpec,
                      so3_exp, so3_right_jacobian)
from .connection import LocalConnection
from .geometry import BundleSpec, CurveJet, segment_cost
from .interpolator import InterpolationProblem, Trajectory
from utils.grid_utils import SegmentGrid


class ClampedSpline:
    """Piecewise cubic in local time tau = t - T_i with coefficients (N, 4, dim)."""

    def __init__(self, breaks: np.ndarray, coefficients: np.ndarray):
        self.breaks = np.asarray(breaks, dtype=float)
        self.coefficients = np.asarray(coefficients, dtype=float)

    def __call__(self, t, derivative: int = 0) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        seg = np.clip(np.searchsorted(self.breaks, t, side='right') - 1, 0, len(self.breaks) - 2)
        tau = (t - self.breaks[seg])[:, None]
        a, b, c, d = (self.coefficients[seg, k] for k in range(4))
        if derivative == 0:
            return a + tau * (b + tau * (c + tau * d))
        if derivative == 1:
            return b + tau * (2 * c + 3 * tau * d)
        if derivative == 2:
            return 2 * c + 6 * tau * d
        if derivative == 3:
            return 6 * d + 0 * tau
        raise InvalidInputError("cubic pieces have derivatives up to order 3")


def clamped_spline_oracle(waypoints: Sequence[Tuple[float, np.ndarray]], v0, vN) -> ClampedSpline:
    """Classical C2 cubic spline with clamped end slopes (tridiagonal slope system)."""
    if len(waypoints) < 2:
        raise InvalidInputError("the spline oracle needs at least 2 waypoints")
    T = np.array([float(t) for t, _ in waypoints])
    X = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for _, x in waypoints])
    if np.any(np.diff(T) <= 0):
        raise InvalidInputError("spline waypoint times must be strictly increasing (no duplicates)")
    h = np.diff(T)
    delta = np.diff(X, axis=0) / h[:, None]
    N = len(h)

    slopes = np.zeros_like(X)
    slopes[0] = np.atleast_1d(v0)
    slopes[-1] = np.atleast_1d(vN)
    if N > 1:
        ab = np.zeros((3, N - 1))
        ab[0, 1:] = h[:N - 2]                      # super-diagonal: h_{i-1}
        ab[1] = 2.0 * (h[:-1] + h[1:])
        ab[2, :-1] = h[2:]                         # sub-diagonal: h_{i+1}
        rhs = 3.0 * (h[1:, None] * delta[:-1] + h[:-1, None] * delta[1:])
        rhs[0] -= h[1] * slopes[0]
        rhs[-1] -= h[N - 2] * slopes[-1]
        slopes[1:-1] = solve_banded((1, 1), ab, rhs)

    coeffs = np.zeros((N, 4, X.shape[1]))
    coeffs[:, 0] = X[:-1]
    coeffs[:, 1] = slopes[:-1]
    coeffs[:, 2] = (3.0 * delta - 2.0 * slopes[:-1] - slopes[1:]) / h[:, None]
    coeffs[:, 3] = (slopes[:-1] + slopes[1:] - 2.0 * delta) / h[:, None] ** 2
    return ClampedSpline(T, coeffs)


@dataclass
class VariationField:
    """Admissible variation: per-segment bumps vanishing to first order at every waypoint."""
    delta: np.ndarray
    delta_dot: np.ndarray
    induced: np.ndarray


@dataclass
class VariationReport:
    estimates: List[float]
    estimates_half: List[float]
    extrapolated: List[float]
    uncertainty: List[float]
    max_abs: float
    cost: float
    tolerance: float
    epsilon: float
    passed: bool

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class IdentityReport:
    seed: int
    results: List[Dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r['passed'] for r in self.results)

    def failures(self) -> List[Dict]:
        return [r for r in self.results if not r['passed']]

    def to_dict(self) -> Dict:
        return {'seed': self.seed, 'passed': self.passed, 'results': self.results}


# First variation

def random_variation(problem: InterpolationProblem, trajectory: Trajectory,
                     rng: np.random.Generator) -> VariationField:
    """c * tau^2 (1 - tau)^2 on every segment and base coordinate, random amplitudes c."""
    N, n, d = trajectory.segment_values.shape
    lengths = trajectory.segment_times[:, -1] - trajectory.segment_times[:, 0]
    tau = (trajectory.segment_times - trajectory.segment_times[:, :1]) / lengths[:, None]
    amps = rng.uniform(-1.0, 1.0, size=(N, 1, d))
    bump = (tau**2 * (1.0 - tau) ** 2)[..., None]
    bump_dot = ((2 * tau - 6 * tau**2 + 4 * tau**3) / lengths[:, None])[..., None]
    delta = amps * bump
    delta_dot = amps * bump_dot
    points = _segment_points(problem, trajectory)
    A = problem.connection.eval(points)
    induced = -np.einsum('snij,snj->sni', A, delta)
    return VariationField(delta, delta_dot, induced)


def _segment_points(problem: InterpolationProblem, trajectory: Trajectory) -> np.ndarray:
    N, n = trajectory.segment_values.shape[:2]
    idx = np.array([[s * (n - 1) + j for j in range(n)] for s in range(N)])
    return trajectory.x[idx]


def perturbed_cost(problem: InterpolationProblem, trajectory: Trajectory, variation: VariationField,
                   s: float) -> float:
    """Cost of x_s = x + s dx (x exp(s sigma) on a compact base), xi recomputed from the constraint."""
    bundle = problem.bundle
    conn = problem.connection
    values = trajectory.segment_values
    points = _segment_points(problem, trajectory)
    segments = []
    for k in range(values.shape[0]):
        times = trajectory.segment_times[k]
        grid = SegmentGrid(times[0], times[-1], len(times))
        if bundle.is_compact_base:
            f = bundle.base_factors
            sigma = (s * variation.delta[k]).reshape(-1, f, 3)
            sigma_dot = (s * variation.delta_dot[k]).reshape(-1, f, 3)
            E = so3_exp(sigma)
            pts = points[k] @ E
            omega = values[k].reshape(-1, f, 3)
            omega_s = (np.einsum('nfji,nfj->nfi', E, omega) +
                       np.einsum('nfij,nfj->nfi', so3_right_jacobian(sigma), sigma_dot)).reshape(len(times), -1)
            vel = omega_s
            base_jet = CurveJet(omega_s, grid.derivative(omega_s, 1))
        else:
            pts = values[k] + s * variation.delta[k]
            vel = grid.derivative(pts, 1)
            base_jet = CurveJet(pts, vel, grid.derivative(pts, 2))
        xi = -np.einsum('nij,nj->ni', conn.eval(pts), vel)
        segments.append((times, base_jet, CurveJet(xi, grid.derivative(xi, 1))))
    return segment_cost(bundle, segments)


def first_variation_check(trajectory: Trajectory, problem: InterpolationProblem, n_variations: int = 100,
                          epsilon: float = 1e-3, seed: int = 0, tolerance: float = 1e-4,
                          verbose: bool = False) -> VariationReport:
    """
    Finite-difference dJ/ds over random admissible variations.

    The cost depends on the base curve only once xi is eliminated through the
    constraint, so the group curve is not reconstructed for the perturbed
    curves. Central differences at eps and eps/2 are Richardson-combined.
    """
    if not 1e-6 <= epsilon <= 1e-2:
        raise InvalidInputError(f"epsilon must lie in [1e-6, 1e-2], got {epsilon}")
    rng = np.random.default_rng(seed)
    cost = perturbed_cost(problem, trajectory, _zero_variation(trajectory), 0.0)
    full, half, extrap, unc = [], [], [], []
    for _ in tqdm(range(int(n_variations)), desc="Variations", disable=not verbose, leave=False):
        var = random_variation(problem, trajectory, rng)
        d_full = (perturbed_cost(problem, trajectory, var, epsilon) -
                  perturbed_cost(problem, trajectory, var, -epsilon)) / (2 * epsilon)
        e2 = 0.5 * epsilon
        d_half = (perturbed_cost(problem, trajectory, var, e2) -
                  perturbed_cost(problem, trajectory, var, -e2)) / (2 * e2)
        full.append(float(d_full))
        half.append(float(d_half))
        extrap.append(float((4.0 * d_half - d_full) / 3.0))
        unc.append(float(abs(d_full - d_half)))
    max_abs = max((abs(v) for v in extrap), default=0.0)
    limit = tolerance * (1.0 + cost)
    return VariationReport(full, half, extrap, unc, float(max_abs), float(cost), float(limit),
                           float(epsilon), bool(max_abs <= limit))


def _zero_variation(trajectory: Trajectory) -> VariationField:
    zeros = np.zeros_like(trajectory.segment_values)
    return VariationField(zeros, zeros, zeros)


def constraint_defect_audit(trajectory: Trajectory, connection: LocalConnection) -> float:
    """max over nodes of |xi + A(x) xdot|_inf."""
    A = connection.eval(trajectory.x)
    return float(np.abs(trajectory.xi + np.einsum('nij,nj->ni', A, trajectory.xdot)).max())


# Finite-difference connection oracle

class ChristoffelOracle:
    """
    Levi-Civita connection of a left-invariant metric computed from scratch in
    exponential coordinates phi -> exp(phi), with metric
    G(phi) = J(phi)^T I J(phi) and J the exact right Jacobian obtained from a
    block matrix exponential. Only finite differences and linear algebra are used.
    """

    def __init__(self, algebra: LieAlgebra, metric: Optional[MetricSpec] = None, step: float = 1e-4,
                 curvature_step: float = 5e-4):
        self.algebra = algebra
        self.metric = metric or MetricSpec.identity(algebra.dim)
        self.step = float(step)
        self.curvature_step = float(curvature_step)
        self._basis = [algebra.matrix_hat(e) for e in np.eye(algebra.dim)]

    def right_jacobian(self, phi: np.ndarray) -> np.ndarray:
        m = self.algebra.matrix_size
        P = self.algebra.matrix_hat(phi)
        g_inv = np.linalg.inv(expm(P))
        cols = []
        for E in self._basis:
            block = np.zeros((2 * m, 2 * m))
            block[:m, :m] = P
            block[m:, m:] = P
            block[:m, m:] = E
            dexp = expm(block)[:m, m:]
            cols.append(self.algebra.matrix_vee(g_inv @ dexp))
        return np.stack(cols, axis=1)

    def metric_at(self, phi: np.ndarray) -> np.ndarray:
        J = self.right_jacobian(phi)
        return J.T @ self.metric.inner_matrix @ J

    def christoffel(self, phi: np.ndarray, step: Optional[float] = None) -> np.ndarray:
        """Gamma[k, i, j] at phi."""
        n, h = self.algebra.dim, step or self.step
        G = self.metric_at(phi)
        dG = np.zeros((n, n, n))  # dG[l] = d G / d phi_l
        for l in range(n):
            e = np.zeros(n)
            e[l] = h
            dG[l] = (self.metric_at(phi + e) - self.metric_at(phi - e)) / (2 * h)
        # lowered[l, i, j] = 1/2 (d_i G_jl + d_j G_il - d_l G_ij)
        lowered = 0.5 * (np.einsum('ijl->lij', dG) + np.einsum('jil->lij', dG) - dG)
        return np.einsum('kl,lij->kij', np.linalg.inv(G), lowered)

    def cov_der(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """nabla_xi eta for the left-invariant fields at the identity."""
        h = self.step
        field_plus = np.linalg.solve(self.right_jacobian(h * xi), eta)
        field_minus = np.linalg.solve(self.right_jacobian(-h * xi), eta)
        directional = (field_plus - field_minus) / (2 * h)
        gamma = self.christoffel(np.zeros(self.algebra.dim))
        return directional + np.einsum('kij,i,j->k', gamma, xi, eta)

    def curvature(self, X: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """R(X, Y) Z at the identity from Gamma and its finite-difference derivative."""
        n, h = self.algebra.dim, self.curvature_step
        gamma = self.christoffel(np.zeros(n), h)
        d_gamma = np.zeros((n, n, n, n))  # d_gamma[m] = d Gamma / d phi_m
        for m in range(n):
            e = np.zeros(n)
            e[m] = h
            d_gamma[m] = (self.christoffel(e, h) - self.christoffel(-e, h)) / (2 * h)
        riemann = (np.einsum('iljk->lijk', d_gamma) - np.einsum('jlik->lijk', d_gamma) +
                   np.einsum('lim,mjk->lijk', gamma, gamma) - np.einsum('ljm,mik->lijk', gamma, gamma))
        return np.einsum('lijk,i,j,k->l', riemann, X, Y, Z)


# Identity suite

def _record(report: IdentityReport, name: str, algebra: LieAlgebra, error: float, tol: float):
    report.results.append({'name': name, 'algebra': algebra.tag, 'max_error': float(error),
                           'tolerance': float(tol), 'passed': bool(error <= tol)})


def _algebras_of(bundle: BundleSpec) -> List[Tuple[LieAlgebra, MetricSpec, bool]]:
    """(algebra, metric, is group algebra) for every algebra the bundle carries."""
    out = [(bundle.group, bundle.group_metric, True)]
    if bundle.is_compact_base:
        out.append((bundle.base_algebra, bundle.base_metric, False))
    return out


def identity_suite(bundle: BundleSpec, seed: int = 0, n_samples: int = 1000, tol: float = 1e-10,
                   oracle_tol: float = 2e-6, cov_der: Optional[Callable] = None) -> IdentityReport:
    """
    Seeded checks of the algebraic identities behind the connection formulas.

    Args:
        bundle: Bundle whose group (and compact base) algebras are checked
        seed: Seed of the random samples
        n_samples: Random samples per algebraic identity
        tol: Tolerance of the algebraic identities
        oracle_tol: Tolerance of the finite-difference comparisons
        cov_der: Replacement covariant derivative for the group algebra (negative controls)

    Returns:
        IdentityReport with one record per check; failures are recorded, never raised
    """
    rng = np.random.default_rng(seed)
    report = IdentityReport(seed=seed)

    for algebra, metric, is_group in _algebras_of(bundle):
        conn = InvariantConnection(algebra, metric)
        nab = cov_der if (cov_der is not None and is_group) else conn.cov_der

        def curv(X, Y, Z):
            return nab(X, nab(Y, Z)) - nab(Y, nab(X, Z)) - nab(algebra.bracket(X, Y), Z)

        X, Y, Z, W = rng.normal(size=(4, n_samples, algebra.dim))
        br = algebra.bracket
        jacobi = br(X, br(Y, Z)) + br(Y, br(Z, X)) + br(Z, br(X, Y))
        _record(report, 'jacobi', algebra, np.abs(jacobi).max(), tol)

        R_xy = curv(X, Y, Z)
        _record(report, 'curvature_antisymmetry', algebra, np.abs(R_xy + curv(Y, X, Z)).max(), tol)
        bianchi = R_xy + curv(Y, Z, X) + curv(Z, X, Y)
        _record(report, 'first_bianchi', algebra, np.abs(bianchi).max(), tol)
        torsion = nab(X, Y) - nab(Y, X) - br(X, Y)
        _record(report, 'torsion_free', algebra, np.abs(torsion).max(), tol)
        # d/dt <Y, Z> along X for left-invariant fields is zero
        compat = metric.inner(nab(X, Y), Z) + metric.inner(Y, nab(X, Z))
        _record(report, 'metric_compatibility', algebra, np.abs(compat).max(), tol)
        pair = metric.inner(curv(X, Y, Z), W) + metric.inner(curv(X, Y, W), Z)
        _record(report, 'curvature_skew_in_last_pair', algebra, np.abs(pair).max(), tol)

        if algebra.is_compact and metric.is_identity:
            shortcut = CompactConnection(algebra)
            err = max(np.abs(nab(X, Y) - shortcut.cov_der(X, Y)).max(),
                      np.abs(curv(X, Y, Z) - shortcut.curv(X, Y, Z)).max())
            _record(report, 'compact_shortcut', algebra, err, tol)

        if 'se3' in algebra.factors and metric.is_identity:
            _record(report, 'se3_block_form', algebra, _block_form_error(algebra, nab, X, Y), tol)

        oracle = ChristoffelOracle(algebra, metric)
        split, fd_nab = 0.0, 0.0
        for k in range(min(5, n_samples)):
            xu, yu = X[k] / np.linalg.norm(X[k]), Y[k] / np.linalg.norm(Y[k])
            reference = oracle.cov_der(xu, yu)
            split = max(split, float(np.abs(reference - _factorwise(algebra, metric, xu, yu)).max()))
            fd_nab = max(fd_nab, float(np.abs(reference - nab(xu, yu)).max()))
        _record(report, 'product_splitting', algebra, split, oracle_tol)
        _record(report, 'finite_difference_connection', algebra, fd_nab, oracle_tol)
    return report


def _factorwise(algebra: LieAlgebra, metric: MetricSpec, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Covariant derivative assembled factor by factor with the diagonal metric blocks."""
    out = np.zeros(algebra.dim)
    G = metric.inner_matrix
    for name, sl in zip(algebra.factors, algebra.slices):
        factor_conn = InvariantConnection(LieAlgebra([name]), MetricSpec(G[sl, sl]))
        out[sl] = factor_conn.cov_der(xi[sl], eta[sl])
    return out


def _block_form_error(algebra: LieAlgebra, nab: Callable, X: np.ndarray, Y: np.ndarray) -> float:
    """Distance to (1/2 w_xi x w_eta, w_xi x v_eta) on each se(3) factor."""
    got = nab(X, Y)
    worst = 0.0
    for name, sl in zip(algebra.factors, algebra.slices):
        if name != 'se3':
            continue
        wx, wy, vy = X[..., sl][..., :3], Y[..., sl][..., :3], Y[..., sl][..., 3:]
        expected = np.concatenate([0.5 * np.cross(wx, wy), np.cross(wx, vy)], axis=-1)
        worst = max(worst, float(np.abs(got[..., sl] - expected).max()))
    return worst


def curvature_oracle_error(algebra: LieAlgebra, metric: Optional[MetricSpec] = None, seed: int = 0,
                           n_samples: int = 3) -> float:
    """Largest gap between the algebraic curvature and the finite-difference oracle."""
    metric = metric or MetricSpec.identity(algebra.dim)
    rng = np.random.default_rng(seed)
    conn = InvariantConnection(algebra, metric)
    oracle = ChristoffelOracle(algebra, metric)
    worst = 0.0
    for _ in range(n_samples):
        X, Y, Z = rng.normal(size=(3, algebra.dim))
        X, Y, Z = (v / np.linalg.norm(v) for v in (X, Y, Z))
        worst = max(worst, float(np.abs(oracle.curvature(X, Y, Z) - conn.curv(X, Y, Z)).max()))
    return worst
