import numpy as np
from functools import lru_cache
from math import factorial
from scipy.integrate import simpson, trapezoid
from typing import Dict, Optional, Sequence


def finite_difference_weights(offsets: Sequence[float], order: int) -> np.ndarray:
    """Weights w with sum_j w_j f(offset_j) ~ f^(order)(0) for unit spacing."""
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    if order >= m:
        raise ValueError(f"need more than {order} points for derivative order {order}")
    vander = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = factorial(order)
    return np.linalg.solve(vander, rhs)


@lru_cache(maxsize=None)
def central_weights(order: int, half_width: int = 3) -> np.ndarray:
    """Central stencil on offsets -half_width..half_width (7 points by default)."""
    weights = finite_difference_weights(np.arange(-half_width, half_width + 1), order)
    weights.setflags(write=False)
    return weights


@lru_cache(maxsize=None)
def derivative_matrix(n: int, order: int) -> np.ndarray:
    """
    Unit-spacing derivative matrix on n nodes.

    Interior rows use a centered window (order + 4 points for odd orders,
    order + 3 for even orders); rows near the ends fall back to a one-sided
    window of order + 4 points so every row keeps at least fourth-order
    accuracy. Windows are capped at n points.
    """
    centered = order + 4 if order % 2 else order + 3
    one_sided = min(order + 4, n)
    centered = min(centered, n)
    half = centered // 2

    D = np.zeros((n, n))
    for i in range(n):
        if i - half >= 0 and i + half <= n - 1 and centered % 2 == 1:
            lo = i - half
            width = centered
        else:
            lo = min(max(i - one_sided // 2, 0), n - one_sided)
            width = one_sided
        idx = np.arange(lo, lo + width)
        D[i, idx] = finite_difference_weights(idx - i, order)
    D.setflags(write=False)
    return D


class SegmentGrid:
    """Uniform grid of n nodes on one segment [t0, t1] with its derivative matrices."""

    def __init__(self, t0: float, t1: float, n: int):
        if n < 5 or n % 2 == 0:
            raise ValueError(f"segment grids need an odd node count >= 5, got {n}")
        if not t1 > t0:
            raise ValueError(f"segment end {t1} must exceed its start {t0}")
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.n = int(n)
        self.times = np.linspace(self.t0, self.t1, self.n)
        self.h = (self.t1 - self.t0) / (self.n - 1)
        self._matrices: Dict[int, np.ndarray] = {}

    @property
    def length(self) -> float:
        return self.t1 - self.t0

    def matrix(self, order: int) -> np.ndarray:
        if order not in self._matrices:
            self._matrices[order] = derivative_matrix(self.n, order) / self.h**order
        return self._matrices[order]

    def derivative(self, values: np.ndarray, order: int) -> np.ndarray:
        """Differentiate nodal samples (n, ...) along the node axis."""
        values = np.asarray(values, dtype=float)
        flat = values.reshape(self.n, -1)
        return (self.matrix(order) @ flat).reshape(values.shape)


def uniform_spacing(times: np.ndarray, rtol: float = 1e-9) -> float:
    """Return the spacing of a uniform grid, raising ValueError otherwise."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError("a time grid needs at least two nodes")
    steps = np.diff(times)
    h = (times[-1] - times[0]) / (len(times) - 1)
    if h <= 0 or np.abs(steps - h).max() > rtol * max(abs(h), 1.0):
        raise ValueError("time grid is not uniform and increasing")
    return float(h)


def integrate_samples(values: np.ndarray, times: np.ndarray, rule: str = 'simpson') -> float:
    """Composite Simpson for odd node counts, trapezoid otherwise."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if rule == 'simpson' and len(times) % 2 == 1:
        return float(simpson(values, x=times))
    if rule not in ('simpson', 'trapezoid'):
        raise ValueError(f"unknown quadrature rule '{rule}'")
    return float(trapezoid(values, x=times))


def segment_slices(n_segments: int, n: int) -> Sequence[slice]:
    """Slices of each segment inside the global grid (junction nodes shared)."""
    return [slice(s * (n - 1), s * (n - 1) + n) for s in range(n_segments)]


def merge_segments(values: np.ndarray) -> np.ndarray:
    """(N, n, ...) per-segment samples -> global samples without duplicated junctions."""
    values = np.asarray(values)
    pieces = [values[0]] + [values[s, 1:] for s in range(1, values.shape[0])]
    return np.concatenate(pieces, axis=0)


def split_segments(values: np.ndarray, n_segments: int, n: Optional[int] = None) -> np.ndarray:
    """Inverse of merge_segments."""
    values = np.asarray(values)
    if n is None:
        if (values.shape[0] - 1) % n_segments:
            raise ValueError(f"{values.shape[0]} nodes cannot be split into {n_segments} segments")
        n = (values.shape[0] - 1) // n_segments + 1
    if values.shape[0] != n_segments * (n - 1) + 1:
        raise ValueError(f"expected {n_segments * (n - 1) + 1} nodes, got {values.shape[0]}")
    return np.stack([values[sl] for sl in segment_slices(n_segments, n)])
