import numpy as np
from scipy.linalg import polar
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union


FACTOR_DIMS = {'so3': 3, 'se3': 6}
MATRIX_SIZES = {'so3': 3, 'se3': 4}

# Rodrigues log is ill-conditioned at pi
LOG_ANGLE_LIMIT = np.pi - 1e-6
ORTHONORMAL_TOL = 1e-10
SKEW_TOL = 1e-10
SYMMETRY_TOL = 1e-12


class InterpolationError(ValueError):
    """Base class for every error raised by the interpolation package."""


class InvalidInputError(InterpolationError):
    """Raised on dimension/tag mismatches, malformed matrices and bad configs."""


class DomainError(InterpolationError):
    """Raised when an operation is evaluated outside its domain (log near pi)."""

    def __init__(self, message: str, element: Optional[np.ndarray] = None):
        super().__init__(message)
        self.element = element


class ConvergenceError(InterpolationError):
    """Raised by the solver when Newton iterations do not converge."""

    def __init__(self, message: str, trajectory=None, residual_history=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.residual_history = list(residual_history or [])


def skew(v: np.ndarray) -> np.ndarray:
    """Batched hat map (..., 3) -> (..., 3, 3)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def unskew(m: np.ndarray) -> np.ndarray:
    """Batched vee map (..., 3, 3) -> (..., 3), no skew check."""
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _rodrigues_coefficients(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """sin(t)/t, (1-cos t)/t^2 and (t-sin t)/t^3 with series near zero."""
    theta = np.asarray(theta, dtype=float)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(safe)) / safe**2)
    c = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0, (safe - np.sin(safe)) / safe**3)
    return a, b, c


def so3_exp(v: np.ndarray) -> np.ndarray:
    """Batched Rodrigues formula."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    a, b, _ = _rodrigues_coefficients(theta)
    K = skew(v)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Batched rotation logarithm. Raises DomainError at angles >= pi - 1e-6."""
    R = np.asarray(R, dtype=float)
    w = unskew(R - np.swapaxes(R, -1, -2))  # 2 sin(theta) * axis
    s = 0.5 * np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    if np.any(theta >= LOG_ANGLE_LIMIT):
        bad = np.argmax(np.atleast_1d(theta))
        element = R.reshape((-1, 3, 3))[bad]
        raise DomainError(
            f"rotation angle {float(np.atleast_1d(theta)[bad]):.9f} is at or beyond the "
            f"logarithm limit pi - 1e-6; insert an intermediate waypoint. Element:\n{element}",
            element=element)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    factor = np.where(small, 0.5 * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0),
                      safe / (2.0 * np.sin(safe)))
    return factor[..., None] * w


def so3_right_jacobian(v: np.ndarray) -> np.ndarray:
    """J_r(v): maps d/dt v to the body velocity of exp(v(t))."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    _, b, c = _rodrigues_coefficients(theta)
    K = skew(v)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye - b[..., None, None] * K + c[..., None, None] * (K @ K)


def so3_right_jacobian_inverse(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    d = np.where(small, 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0,
                 1.0 / safe**2 - (1.0 + np.cos(safe)) / (2.0 * safe * np.sin(safe)))
    K = skew(v)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + 0.5 * K + d[..., None, None] * (K @ K)


def se3_exp(v: np.ndarray) -> np.ndarray:
    """Closed-form SE(3) exponential, coordinates [omega | v]."""
    v = np.asarray(v, dtype=float)
    omega, trans = v[..., :3], v[..., 3:]
    theta = np.linalg.norm(omega, axis=-1)
    a, b, c = _rodrigues_coefficients(theta)
    K = skew(omega)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + a[..., None, None] * K + b[..., None, None] * K2
    V = eye + b[..., None, None] * K + c[..., None, None] * K2
    out = np.zeros(v.shape[:-1] + (4, 4))
    out[..., :3, :3] = R
    out[..., :3, 3] = np.einsum('...ij,...j->...i', V, trans)
    out[..., 3, 3] = 1.0
    return out


def se3_log(T: np.ndarray) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    omega = so3_log(T[..., :3, :3])
    theta = np.linalg.norm(omega, axis=-1)
    a, b, _ = _rodrigues_coefficients(theta)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    coef = np.where(small, 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0,
                    (1.0 - a / (2.0 * np.where(small, 1.0, b))) / safe**2)
    K = skew(omega)
    eye = np.broadcast_to(np.eye(3), K.shape)
    V_inv = eye - 0.5 * K + coef[..., None, None] * (K @ K)
    trans = np.einsum('...ij,...j->...i', V_inv, T[..., :3, 3])
    return np.concatenate([omega, trans], axis=-1)


class LieAlgebra:
    """
    Descriptor of so(3), se(3) or a finite product of them.

    Coordinates of a product are the concatenation of the factor coordinates;
    se(3) factors are ordered [rotational | translational]. All array methods
    accept a leading batch axis.
    """

    def __init__(self, factors: Sequence[str]):
        factors = tuple(factors)
        if not factors:
            raise InvalidInputError("an algebra needs at least one factor")
        for name in factors:
            if name not in FACTOR_DIMS:
                raise InvalidInputError(f"unknown algebra factor '{name}' (expected so3 or se3)")
        self.factors = factors
        self.dim = sum(FACTOR_DIMS[f] for f in factors)
        self.matrix_size = sum(MATRIX_SIZES[f] for f in factors)

        self.slices: List[slice] = []
        self.matrix_slices: List[slice] = []
        offset, moffset = 0, 0
        for name in factors:
            self.slices.append(slice(offset, offset + FACTOR_DIMS[name]))
            self.matrix_slices.append(slice(moffset, moffset + MATRIX_SIZES[name]))
            offset += FACTOR_DIMS[name]
            moffset += MATRIX_SIZES[name]

    @classmethod
    def from_tag(cls, tag: str) -> 'LieAlgebra':
        parts = [p.strip() for p in str(tag).lower().replace('×', 'x').split('x') if p.strip()]
        if any(p not in FACTOR_DIMS for p in parts):
            raise InvalidInputError(f"unknown algebra tag '{tag}'")
        return cls(parts)

    @property
    def tag(self) -> str:
        return 'x'.join(self.factors)

    @property
    def is_compact(self) -> bool:
        return all(f == 'so3' for f in self.factors)

    def __eq__(self, other) -> bool:
        return isinstance(other, LieAlgebra) and self.factors == other.factors

    def __hash__(self) -> int:
        return hash(self.factors)

    def __repr__(self) -> str:
        return f"LieAlgebra('{self.tag}')"

    def check(self, coords: np.ndarray, name: str = 'vector') -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        if coords.shape[-1:] != (self.dim,):
            raise InvalidInputError(
                f"{name} has dimension {coords.shape[-1] if coords.ndim else 0}, "
                f"expected {self.dim} for {self.tag}")
        return coords

    def bracket(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        out = np.empty(a.shape)
        for name, sl in zip(self.factors, self.slices):
            fa, fb = a[..., sl], b[..., sl]
            if name == 'so3':
                out[..., sl] = np.cross(fa, fb)
            else:
                wa, va, wb, vb = fa[..., :3], fa[..., 3:], fb[..., :3], fb[..., 3:]
                out[..., sl.start:sl.start + 3] = np.cross(wa, wb)
                out[..., sl.start + 3:sl.stop] = np.cross(wa, vb) - np.cross(wb, va)
        return out

    def ad(self, a: np.ndarray) -> np.ndarray:
        """Matrix of b -> [a, b]."""
        a = np.asarray(a, dtype=float)
        out = np.zeros(a.shape[:-1] + (self.dim, self.dim))
        for name, sl in zip(self.factors, self.slices):
            fa = a[..., sl]
            if name == 'so3':
                out[..., sl, sl] = skew(fa)
            else:
                s = sl.start
                w_hat, v_hat = skew(fa[..., :3]), skew(fa[..., 3:])
                out[..., s:s + 3, s:s + 3] = w_hat
                out[..., s + 3:s + 6, s:s + 3] = v_hat
                out[..., s + 3:s + 6, s + 3:s + 6] = w_hat
        return out

    def matrix_hat(self, v: np.ndarray) -> np.ndarray:
        """Matrix representation used by the group integrator (block diagonal)."""
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape[:-1] + (self.matrix_size, self.matrix_size))
        for name, sl, msl in zip(self.factors, self.slices, self.matrix_slices):
            fv = v[..., sl]
            m = msl.start
            if name == 'so3':
                out[..., msl, msl] = skew(fv)
            else:
                out[..., m:m + 3, m:m + 3] = skew(fv[..., :3])
                out[..., m:m + 3, m + 3] = fv[..., 3:]
        return out

    def matrix_vee(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        out = np.zeros(M.shape[:-2] + (self.dim,))
        for name, sl, msl in zip(self.factors, self.slices, self.matrix_slices):
            m = msl.start
            if name == 'so3':
                out[..., sl] = unskew(M[..., msl, msl])
            else:
                out[..., sl.start:sl.start + 3] = unskew(M[..., m:m + 3, m:m + 3])
                out[..., sl.start + 3:sl.stop] = M[..., m:m + 3, m + 3]
        return out

    def exp(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape[:-1] + (self.matrix_size, self.matrix_size))
        for name, sl, msl in zip(self.factors, self.slices, self.matrix_slices):
            out[..., msl, msl] = so3_exp(v[..., sl]) if name == 'so3' else se3_exp(v[..., sl])
        return out

    def log(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        out = np.zeros(M.shape[:-2] + (self.dim,))
        for name, sl, msl in zip(self.factors, self.slices, self.matrix_slices):
            block = M[..., msl, msl]
            out[..., sl] = so3_log(block) if name == 'so3' else se3_log(block)
        return out

    def identity(self) -> np.ndarray:
        return np.eye(self.matrix_size)

    def inverse(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        out = np.zeros_like(M)
        for name, msl in zip(self.factors, self.matrix_slices):
            m = msl.start
            R = M[..., m:m + 3, m:m + 3]
            Rt = np.swapaxes(R, -1, -2)
            out[..., m:m + 3, m:m + 3] = Rt
            if name == 'se3':
                out[..., m:m + 3, m + 3] = -np.einsum('...ij,...j->...i', Rt, M[..., m:m + 3, m + 3])
                out[..., m + 3, m + 3] = 1.0
        return out

    def project(self, M: np.ndarray) -> np.ndarray:
        """Polar re-projection of every rotation block; restores the SE(3) bottom row."""
        M = np.array(M, dtype=float, copy=True)
        flat = M.reshape((-1,) + M.shape[-2:])
        for k in range(flat.shape[0]):
            for name, msl in zip(self.factors, self.matrix_slices):
                m = msl.start
                u, _ = polar(flat[k, m:m + 3, m:m + 3])
                flat[k, m:m + 3, m:m + 3] = u
                if name == 'se3':
                    flat[k, m + 3, m:m + 3] = 0.0
                    flat[k, m + 3, m + 3] = 1.0
        return flat.reshape(M.shape)

    def group_defect(self, M: np.ndarray) -> float:
        """Largest violation of the orthonormality / determinant invariants."""
        M = np.asarray(M, dtype=float)
        worst = 0.0
        for name, msl in zip(self.factors, self.matrix_slices):
            m = msl.start
            R = M[..., m:m + 3, m:m + 3]
            orth = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max()
            det = np.abs(np.linalg.det(R) - 1.0).max()
            worst = max(worst, float(orth), float(det))
            if name == 'se3':
                row = M[..., m + 3, m:m + 4]
                if np.any(row != np.array([0.0, 0.0, 0.0, 1.0])):
                    worst = max(worst, float(np.abs(row - np.array([0.0, 0.0, 0.0, 1.0])).max()))
        return worst


def _as_algebra(algebra: Union[str, LieAlgebra]) -> LieAlgebra:
    return algebra if isinstance(algebra, LieAlgebra) else LieAlgebra.from_tag(algebra)


@dataclass(frozen=True)
class AlgebraVector:
    """Coordinate vector of a Lie algebra element."""
    coords: np.ndarray
    algebra: LieAlgebra

    def __post_init__(self):
        algebra = _as_algebra(self.algebra)
        coords = algebra.check(np.array(self.coords, dtype=float).reshape(-1), 'AlgebraVector')
        if not np.all(np.isfinite(coords)):
            raise InvalidInputError("AlgebraVector coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, 'algebra', algebra)
        object.__setattr__(self, 'coords', coords)

    @property
    def algebra_tag(self) -> str:
        return self.algebra.tag

    @classmethod
    def zero(cls, algebra: Union[str, LieAlgebra]) -> 'AlgebraVector':
        algebra = _as_algebra(algebra)
        return cls(np.zeros(algebra.dim), algebra)

    def __add__(self, other: 'AlgebraVector') -> 'AlgebraVector':
        _same_algebra(self, other)
        return AlgebraVector(self.coords + other.coords, self.algebra)

    def __sub__(self, other: 'AlgebraVector') -> 'AlgebraVector':
        _same_algebra(self, other)
        return AlgebraVector(self.coords - other.coords, self.algebra)

    def __mul__(self, scalar: float) -> 'AlgebraVector':
        return AlgebraVector(self.coords * float(scalar), self.algebra)

    __rmul__ = __mul__


@dataclass(frozen=True)
class GroupElement:
    """Matrix representative of an element of SO(3), SE(3) or a product group."""
    mat: np.ndarray
    algebra: LieAlgebra

    def __post_init__(self):
        algebra = _as_algebra(self.algebra)
        mat = np.array(self.mat, dtype=float)
        size = algebra.matrix_size
        if mat.shape != (size, size):
            raise InvalidInputError(f"group matrix has shape {mat.shape}, expected {(size, size)} "
                                    f"for {algebra.tag}")
        defect = algebra.group_defect(mat)
        if defect > ORTHONORMAL_TOL:
            raise InvalidInputError(f"matrix is not an element of {algebra.tag.upper()} "
                                    f"(invariant defect {defect:.3e})")
        mat.setflags(write=False)
        object.__setattr__(self, 'algebra', algebra)
        object.__setattr__(self, 'mat', mat)

    @property
    def group_tag(self) -> str:
        return self.algebra.tag

    @classmethod
    def identity(cls, algebra: Union[str, LieAlgebra]) -> 'GroupElement':
        algebra = _as_algebra(algebra)
        return cls(algebra.identity(), algebra)

    def __matmul__(self, other: 'GroupElement') -> 'GroupElement':
        if self.algebra != other.algebra:
            raise InvalidInputError(f"cannot compose {self.group_tag} with {other.group_tag}")
        return GroupElement(self.algebra.project(self.mat @ other.mat), self.algebra)

    def inverse(self) -> 'GroupElement':
        return GroupElement(self.algebra.inverse(self.mat), self.algebra)


@dataclass(frozen=True)
class MetricSpec:
    """Symmetric positive-definite inner product on a Lie algebra (or base space)."""
    inner_matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.inner_matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidInputError(f"metric must be a square matrix, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise InvalidInputError("metric entries must be finite")
        if np.abs(mat - mat.T).max(initial=0.0) > SYMMETRY_TOL:
            raise InvalidInputError("metric is not symmetric within 1e-12")
        eigenvalues = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        if eigenvalues.min() <= 0.0:
            raise InvalidInputError(
                f"metric is singular or indefinite (smallest eigenvalue {eigenvalues.min():.3e})")
        mat.setflags(write=False)
        object.__setattr__(self, 'inner_matrix', mat)

    @classmethod
    def identity(cls, dim: int) -> 'MetricSpec':
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.inner_matrix.shape[0]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.inner_matrix, np.eye(self.dim)))

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.inner_matrix)

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.einsum('...i,ij,...j->...', a, self.inner_matrix, b)


class InvariantConnection:
    """
    Riemannian connection of a left-invariant metric evaluated on algebra
    coordinates (left-invariant fields):

        nabla_xi eta = 1/2 ([xi, eta] - I^-1 (ad*_xi I eta + ad*_eta I xi))
        R(X, Y) Z   = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z
    """

    def __init__(self, algebra: Union[str, LieAlgebra], metric: Optional[MetricSpec] = None):
        self.algebra = _as_algebra(algebra)
        self.metric = metric if metric is not None else MetricSpec.identity(self.algebra.dim)
        if self.metric.dim != self.algebra.dim:
            raise InvalidInputError(f"metric dimension {self.metric.dim} does not match "
                                    f"{self.algebra.tag} (dimension {self.algebra.dim})")
        self._inner = self.metric.inner_matrix
        self._inner_inv = self.metric.inverse

    def cov_der(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        xi, eta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(eta, dtype=float))
        bracket = self.algebra.bracket(xi, eta)
        coad = (np.einsum('...ji,...j->...i', self.algebra.ad(xi), eta @ self._inner) +
                np.einsum('...ji,...j->...i', self.algebra.ad(eta), xi @ self._inner))
        return 0.5 * (bracket - coad @ self._inner_inv.T)

    def curv(self, X: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
        nab = self.cov_der
        return nab(X, nab(Y, Z)) - nab(Y, nab(X, Z)) - nab(self.algebra.bracket(X, Y), Z)


class CompactConnection:
    """Bi-invariant shortcut on compact algebras: nabla = 1/2 [,], R = -1/4 [[,],]."""

    def __init__(self, algebra: Union[str, LieAlgebra]):
        self.algebra = _as_algebra(algebra)
        if not self.algebra.is_compact:
            raise InvalidInputError(
                f"{self.algebra.tag} is not compact; its curvature must come from curv_invariant")
        self.metric = MetricSpec.identity(self.algebra.dim)

    def cov_der(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        return 0.5 * self.algebra.bracket(xi, eta)

    def curv(self, X: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
        return -0.25 * self.algebra.bracket(self.algebra.bracket(X, Y), Z)


# Operations on AlgebraVector / GroupElement values

def _same_algebra(*vectors: AlgebraVector) -> LieAlgebra:
    algebra = vectors[0].algebra
    for v in vectors[1:]:
        if v.algebra != algebra:
            raise InvalidInputError(f"mismatched algebras: {algebra.tag} and {v.algebra.tag}")
    return algebra


def hat(v: Union[AlgebraVector, np.ndarray]) -> np.ndarray:
    """so(3) coordinates -> 3x3 skew-symmetric matrix."""
    if isinstance(v, AlgebraVector):
        if v.algebra.factors != ('so3',):
            raise InvalidInputError(f"hat expects an so3 vector, got {v.algebra_tag}")
        v = v.coords
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise InvalidInputError(f"hat expects 3 coordinates, got shape {v.shape}")
    return skew(v)


def vee(m: np.ndarray) -> AlgebraVector:
    """3x3 skew-symmetric matrix -> so(3) coordinates."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise InvalidInputError(f"vee expects a 3x3 matrix, got shape {m.shape}")
    if np.abs(m + m.T).max() > SKEW_TOL:
        raise InvalidInputError(f"matrix is not skew-symmetric (|m + m^T| = {np.abs(m + m.T).max():.3e})")
    return AlgebraVector(unskew(m), 'so3')


def exp_group(v: AlgebraVector) -> GroupElement:
    return GroupElement(v.algebra.exp(v.coords), v.algebra)


def log_group(g: GroupElement) -> AlgebraVector:
    return AlgebraVector(g.algebra.log(g.mat), g.algebra)


def bracket(a: AlgebraVector, b: AlgebraVector) -> AlgebraVector:
    algebra = _same_algebra(a, b)
    return AlgebraVector(algebra.bracket(a.coords, b.coords), algebra)


def cov_der_invariant(metric: MetricSpec, xi: AlgebraVector, eta: AlgebraVector) -> AlgebraVector:
    algebra = _same_algebra(xi, eta)
    return AlgebraVector(InvariantConnection(algebra, metric).cov_der(xi.coords, eta.coords), algebra)


def cov_der_compact(xi: AlgebraVector, eta: AlgebraVector) -> AlgebraVector:
    algebra = _same_algebra(xi, eta)
    return AlgebraVector(CompactConnection(algebra).cov_der(xi.coords, eta.coords), algebra)


def curv_compact(X: AlgebraVector, Y: AlgebraVector, Z: AlgebraVector) -> AlgebraVector:
    algebra = _same_algebra(X, Y, Z)
    return AlgebraVector(CompactConnection(algebra).curv(X.coords, Y.coords, Z.coords), algebra)


def curv_invariant(metric: MetricSpec, X: AlgebraVector, Y: AlgebraVector,
                   Z: AlgebraVector) -> AlgebraVector:
    algebra = _same_algebra(X, Y, Z)
    return AlgebraVector(InvariantConnection(algebra, metric).curv(X.coords, Y.coords, Z.coords),
                         algebra)
