import numpy as np
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .algebra import AlgebraVector, GroupElement, InvalidInputError, InvariantConnection, LieAlgebra, so3_exp
from .connection import LocalConnection, connection_jet, metric_adjoint
from .geometry import BundleSpec, ChartJet, CurveJet, body_velocity_jet, elastic_base, elastic_group
from .interpolator import InterpolationProblem, SolverConfig, Waypoint

SYSTEM_NAME = 'purcell_generalized'

SE3 = LieAlgebra(['se3'])

# Monomials of the rotational and translational rows, evaluated on (r, r1, r2, r3) and (t, t1, t2, t3)
ROTATIONAL_MONOMIALS = {
    'r3': lambda r, r1, r2, r3: r3,
    'r x r2': lambda r, r1, r2, r3: np.cross(r, r2),
    'r x (r x r1)': lambda r, r1, r2, r3: np.cross(r, np.cross(r, r1)),
    'r x (r1 x r)': lambda r, r1, r2, r3: np.cross(r, np.cross(r1, r)),
    '(r1 x r) x r': lambda r, r1, r2, r3: np.cross(np.cross(r1, r), r),
}

TRANSLATIONAL_MONOMIALS = {
    't3': lambda r, t: t[3],
    'r x t2': lambda r, t: np.cross(r[0], t[2]),
    'r1 x t1': lambda r, t: np.cross(r[1], t[1]),
    'r2 x t': lambda r, t: np.cross(r[2], t[0]),
    'r x (r x t1)': lambda r, t: np.cross(r[0], np.cross(r[0], t[1])),
    'r x (r1 x t)': lambda r, t: np.cross(r[0], np.cross(r[1], t[0])),
    'r1 x (r x t)': lambda r, t: np.cross(r[1], np.cross(r[0], t[0])),
    'r x (r x (r x t))': lambda r, t: np.cross(r[0], np.cross(r[0], np.cross(r[0], t[0]))),
}

# Closed-form coefficients as published for the swimmer
PRINTED_COEFFICIENTS = {
    'rotational': {'r3': 1.0, 'r x r2': 1.5, 'r x (r x r1)': 0.5, 'r x (r1 x r)': 0.5, '(r1 x r) x r': 1.0},
    'translational': {'t3': 1.0, 'r x t2': 3.0, 'r1 x t1': 3.0, 'r2 x t': 1.0, 'r x (r x t1)': 2.5,
                      'r x (r1 x t)': 3.5, 'r1 x (r x t)': 2.0, 'r x (r x (r x t))': 0.5},
}

# Coefficients obtained by expanding the generic group elastic operator on se(3)
# with the identity metric; see docs/swimmer_coefficients.md
GENERIC_COEFFICIENTS = {
    'rotational': {'r3': 1.0, 'r x r2': 1.0, 'r x (r x r1)': 0.0, 'r x (r1 x r)': 0.0, '(r1 x r) x r': 0.0},
    'translational': {'t3': 1.0, 'r x t2': 3.0, 'r1 x t1': 3.0, 'r2 x t': 1.0, 'r x (r x t1)': 3.0,
                      'r x (r1 x t)': 2.0, 'r1 x (r x t)': 1.0, 'r x (r x (r x t))': 1.0},
}

COEFFICIENT_SETS = {'printed': PRINTED_COEFFICIENTS, 'generic': GENERIC_COEFFICIENTS}

# Linearly independent rotational monomials; the other two reduce to -/+ 'r x (r x r1)'
CANONICAL_ROTATIONAL = ('r3', 'r x r2', 'r x (r x r1)')
_ROTATIONAL_REDUCTION = {'r3': ('r3', 1.0), 'r x r2': ('r x r2', 1.0), 'r x (r x r1)': ('r x (r x r1)', 1.0),
                         'r x (r1 x r)': ('r x (r x r1)', -1.0), '(r1 x r) x r': ('r x (r x r1)', 1.0)}


@dataclass
class SwimmerState:
    """Generalized Purcell swimmer: outer-link frames, mid-link pose and velocities."""
    R1: GroupElement
    R2: GroupElement
    g: GroupElement
    omega1: AlgebraVector
    omega2: AlgebraVector
    xi: AlgebraVector

    def __post_init__(self):
        for name, expected in (('R1', 'so3'), ('R2', 'so3'), ('g', 'se3')):
            if getattr(self, name).group_tag != expected:
                raise InvalidInputError(f"{name} must be an element of {expected.upper()}")
        for name, expected in (('omega1', 'so3'), ('omega2', 'so3'), ('xi', 'se3')):
            if getattr(self, name).algebra_tag != expected:
                raise InvalidInputError(f"{name} must be an {expected} vector")

    @property
    def shape(self) -> np.ndarray:
        return np.stack([self.R1.mat, self.R2.mat])

    @property
    def shape_velocity(self) -> np.ndarray:
        return np.concatenate([self.omega1.coords, self.omega2.coords])

    @property
    def xi_rotational(self) -> np.ndarray:
        return self.xi.coords[:3]

    @property
    def xi_translational(self) -> np.ndarray:
        return self.xi.coords[3:]

    def constraint_defect(self, conn: LocalConnection) -> float:
        return float(np.abs(self.xi.coords + conn.eval(self.shape) @ self.shape_velocity).max())

    def check_constraint(self, conn: LocalConnection, tol: float = 1e-8) -> bool:
        return self.constraint_defect(conn) <= tol


def swimmer_bundle() -> BundleSpec:
    return BundleSpec.compact(2, 'se3')


def swimmer_base_elastic(jet1: CurveJet, jet2: CurveJet) -> np.ndarray:
    """[w1''' - w1'' x w1, w2''' - w2'' x w2]."""
    blocks = []
    for jet in (jet1, jet2):
        if jet.dim != 3:
            raise InvalidInputError(f"shape velocity jets are 3-dimensional, got {jet.dim}")
        jet.require(3, 'shape velocity jet')
        blocks.append(jet.d3 - np.cross(jet.d2, jet.value))
    return np.concatenate(blocks, axis=-1)


def swimmer_group_elastic(xi_jet: CurveJet, coefficients: str = 'generic') -> np.ndarray:
    """
    Closed-form group elastic term of the swimmer on se(3) with the identity metric.

    Args:
        xi_jet: Body-velocity jet of the mid link through d3
        coefficients: 'printed' for the published coefficient set, 'generic'
            for the set that reproduces elastic_group exactly

    Returns:
        se(3) coordinates [rotational | translational]
    """
    if coefficients not in COEFFICIENT_SETS:
        raise InvalidInputError(f"unknown coefficient set '{coefficients}'")
    if xi_jet.dim != 6:
        raise InvalidInputError(f"se(3) jets are 6-dimensional, got {xi_jet.dim}")
    xi_jet.require(3, 'se(3) jet')
    coeffs = COEFFICIENT_SETS[coefficients]
    r = [xi_jet.value[..., :3], xi_jet.d1[..., :3], xi_jet.d2[..., :3], xi_jet.d3[..., :3]]
    t = [xi_jet.value[..., 3:], xi_jet.d1[..., 3:], xi_jet.d2[..., 3:], xi_jet.d3[..., 3:]]

    rot = sum(c * ROTATIONAL_MONOMIALS[name](*r) for name, c in coeffs['rotational'].items() if c)
    trans = sum(c * TRANSLATIONAL_MONOMIALS[name](r, t) for name, c in coeffs['translational'].items() if c)
    return np.concatenate([rot, trans], axis=-1)


def swimmer_residual(conn: LocalConnection, shape_jets: Sequence[ChartJet], config: Optional[SolverConfig] = None,
                     coefficients: str = 'generic', segment_length: float = 1.0) -> np.ndarray:
    """
    Swimmer Euler-Lagrange residual at one time: base elastic - A^T (group elastic).

    Args:
        conn: Connection mapping so(3) x so(3) shape velocities to se(3)
        shape_jets: One ChartJet holding both shape factors, or one ChartJet per factor
        config: Supplies the connection-jet step (fd_connection_step * segment_length)
        coefficients: Coefficient set of the group elastic term
    """
    if conn.bundle.base_factors != 2 or conn.bundle.group.tag != 'se3':
        raise InvalidInputError("swimmer connections map so(3) x so(3) to se(3)")
    chart = _merge_charts(shape_jets)
    config = config or SolverConfig()
    h = config.fd_connection_step * segment_length

    omega = body_velocity_jet(chart, h)
    xi = connection_jet(conn, chart, h_fd=h)
    jet1 = CurveJet(*(entry[:3] for entry in (omega.value, omega.d1, omega.d2, omega.d3)))
    jet2 = CurveJet(*(entry[3:] for entry in (omega.value, omega.d1, omega.d2, omega.d3)))

    adj = metric_adjoint(conn.eval(chart.points(0.0)[0]), conn.bundle.base_metric, conn.bundle.group_metric)
    return swimmer_base_elastic(jet1, jet2) - adj @ swimmer_group_elastic(xi, coefficients)


def _merge_charts(shape_jets) -> ChartJet:
    if isinstance(shape_jets, ChartJet):
        return shape_jets
    shape_jets = list(shape_jets)
    if len(shape_jets) == 1:
        return shape_jets[0]
    if len(shape_jets) != 2:
        raise InvalidInputError(f"expected 2 shape jets, got {len(shape_jets)}")
    order = min(len(j.phi) for j in shape_jets)
    centers = np.concatenate([j.center for j in shape_jets])
    phi = [np.concatenate([j.phi[k] for j in shape_jets]) for k in range(order)]
    return ChartJet(centers, phi)


def coefficient_report(n_samples: int = 1000, seed: int = 0) -> Dict:
    """
    Fit the generic se(3) elastic operator onto the swimmer monomial basis.

    Rotational monomials are reduced to the independent set r3, r x r2,
    r x (r x r1) before fitting; translational monomials are independent.

    Returns:
        Per-row dictionaries with printed / fitted / generic coefficients,
        the discrepancy list and the agreement of each coefficient set with
        elastic_group over the random jets.
    """
    rng = np.random.default_rng(seed)
    jets = rng.normal(size=(4, n_samples, 6))
    xi_jet = CurveJet(*jets, algebra=SE3)
    generic = elastic_group(None, xi_jet, SE3)
    r = [jets[k, :, :3] for k in range(4)]
    t = [jets[k, :, 3:] for k in range(4)]

    rot_basis = np.stack([ROTATIONAL_MONOMIALS[name](*r).ravel() for name in CANONICAL_ROTATIONAL], axis=1)
    rot_fit = np.linalg.lstsq(rot_basis, generic[:, :3].ravel(), rcond=None)[0]
    names = list(TRANSLATIONAL_MONOMIALS)
    trans_basis = np.stack([TRANSLATIONAL_MONOMIALS[name](r, t).ravel() for name in names], axis=1)
    trans_fit = np.linalg.lstsq(trans_basis, generic[:, 3:].ravel(), rcond=None)[0]

    def canonical(coeffs: Dict[str, float]) -> Dict[str, float]:
        out = {name: 0.0 for name in CANONICAL_ROTATIONAL}
        for name, c in coeffs.items():
            target, sign = _ROTATIONAL_REDUCTION[name]
            out[target] += sign * c
        return out

    rows = {'rotational': {}, 'translational': {}}
    printed_rot = canonical(PRINTED_COEFFICIENTS['rotational'])
    generic_rot = canonical(GENERIC_COEFFICIENTS['rotational'])
    for name, fitted in zip(CANONICAL_ROTATIONAL, rot_fit):
        rows['rotational'][name] = {'printed': printed_rot[name], 'fitted': float(fitted),
                                    'generic': generic_rot[name]}
    for name, fitted in zip(names, trans_fit):
        rows['translational'][name] = {'printed': PRINTED_COEFFICIENTS['translational'][name],
                                       'fitted': float(fitted),
                                       'generic': GENERIC_COEFFICIENTS['translational'][name]}

    discrepancies = [f"{row}: {name} printed {entry['printed']:g}, derived {entry['fitted']:.12g}"
                     for row, entries in rows.items() for name, entry in entries.items()
                     if abs(entry['printed'] - entry['fitted']) > 1e-8]
    agreement = {key: float(np.abs(swimmer_group_elastic(xi_jet, key) - generic).max())
                 for key in COEFFICIENT_SETS}
    if discrepancies:
        warnings.warn(f"printed swimmer coefficients disagree with the generic expansion "
                      f"({len(discrepancies)} coefficient(s))")
    return {'rows': rows, 'discrepancies': discrepancies, 'max_abs_difference': agreement,
            'n_samples': int(n_samples), 'seed': int(seed)}


def purcell_problem(n_waypoints: int = 3, duration: float = 2.0, amplitude: float = 0.4,
                    config_overrides: Optional[Dict] = None) -> Tuple[InterpolationProblem, SolverConfig]:
    """
    Built-in swimmer interpolation problem: a flapping shape gait on SO(3) x SO(3)
    with the synthetic purcell_test connection, mid link starting at the identity.
    """
    bundle = swimmer_bundle()
    conn = LocalConnection.purcell_test(bundle)
    times = np.linspace(0.0, duration, n_waypoints)
    waypoints = []
    for i, t in enumerate(times):
        phase = np.pi * i / max(n_waypoints - 1, 1)
        r1 = amplitude * np.array([np.sin(phase), 0.3 * np.cos(phase), 0.1 * i])
        r2 = amplitude * np.array([0.2 * i, -np.sin(phase), 0.5 * np.cos(phase)])
        x = np.stack([so3_exp(r1), so3_exp(r2)])
        waypoints.append(Waypoint(t, x, GroupElement.identity(SE3) if i == 0 else None))
    v0 = np.array([0.2, 0.0, 0.0, 0.0, -0.1, 0.0])
    vN = np.array([0.0, 0.1, 0.0, 0.1, 0.0, 0.0])
    problem = InterpolationProblem(bundle, conn, waypoints, v0, vN, name=SYSTEM_NAME)
    config = SolverConfig.from_dict({'euler_lagrange': 'reduced', **(config_overrides or {})})
    return problem, config
