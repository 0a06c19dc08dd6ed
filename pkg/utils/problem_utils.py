import json
import numpy as np
from typing import Dict, Optional, Tuple

from src.algebra import GroupElement, InvalidInputError, LieAlgebra, MetricSpec, so3_exp
from src.connection import LocalConnection
from src.geometry import BundleSpec
from src.interpolator import InterpolationProblem, SolverConfig, Waypoint

SYSTEMS = {
    'purcell_generalized': {
        'bundle': {'base': {'kind': 'compact_group', 'factors': 2}, 'group': {'kind': 'se3'}},
        'connection': {'kind': 'builtin', 'builtin': 'purcell_test'},
    },
}


class ProblemFileError(InvalidInputError):
    """Problem file error tagged with the offending field path or line."""

    def __init__(self, message: str, path: str = ''):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _vector(value, path: str, size: Optional[int] = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ProblemFileError("expected a list of numbers", path)
    if not np.all(np.isfinite(arr)):
        raise ProblemFileError("entries must be finite numbers", path)
    if size is not None and arr.size != size:
        raise ProblemFileError(f"expected {size} numbers, got {arr.size}", path)
    return arr


def _matrix(value, path: str, size: int) -> np.ndarray:
    return _vector(value, path, size * size).reshape(size, size)


def _require(doc: Dict, key: str, path: str):
    if not isinstance(doc, dict):
        raise ProblemFileError("expected an object", path)
    if key not in doc:
        raise ProblemFileError(f"missing required key '{key}'", f"{path}.{key}" if path else key)
    return doc[key]


def parse_bundle(doc: Dict) -> BundleSpec:
    base = _require(doc, 'base', 'bundle')
    group = _require(doc, 'group', 'bundle')
    kind = _require(base, 'kind', 'bundle.base')
    try:
        algebra = LieAlgebra.from_tag(_require(group, 'kind', 'bundle.group'))
    except InvalidInputError as exc:
        raise ProblemFileError(str(exc), 'bundle.group.kind')

    if kind == 'euclidean':
        dim = _require(base, 'dim', 'bundle.base')
        if not isinstance(dim, int) or dim < 1:
            raise ProblemFileError("dimension must be a positive integer", 'bundle.base.dim')
        base_dim = dim
    elif kind == 'compact_group':
        factors = _require(base, 'factors', 'bundle.base')
        if not isinstance(factors, int) or factors < 1:
            raise ProblemFileError("factor count must be a positive integer", 'bundle.base.factors')
        base_dim = 3 * factors
    else:
        raise ProblemFileError(f"unknown base kind '{kind}' (expected euclidean or compact_group)",
                               'bundle.base.kind')

    metrics = {}
    for key, dim in (('base_metric', base_dim), ('group_metric', algebra.dim)):
        if doc.get(key) is None:
            metrics[key] = MetricSpec.identity(dim)
            continue
        try:
            metrics[key] = MetricSpec(_matrix(doc[key], f'bundle.{key}', dim))
        except ProblemFileError:
            raise
        except InvalidInputError as exc:
            raise ProblemFileError(str(exc), f'bundle.{key}')
    try:
        return BundleSpec(kind, base_dim, algebra, metrics['base_metric'], metrics['group_metric'])
    except InvalidInputError as exc:
        raise ProblemFileError(str(exc), 'bundle')


def parse_connection(doc: Dict, bundle: BundleSpec) -> LocalConnection:
    kind = _require(doc, 'kind', 'connection')
    if kind == 'zero':
        return LocalConnection.zero(bundle)
    if kind == 'constant':
        size = bundle.group.dim * bundle.base_dim
        matrix = _vector(_require(doc, 'matrix', 'connection'), 'connection.matrix', size)
        return LocalConnection.constant(bundle, matrix.reshape(bundle.group.dim, bundle.base_dim))
    if kind == 'builtin':
        name = _require(doc, 'builtin', 'connection')
        if name != 'purcell_test':
            raise ProblemFileError(f"unknown builtin connection '{name}'", 'connection.builtin')
        try:
            return LocalConnection.purcell_test(bundle)
        except InvalidInputError as exc:
            raise ProblemFileError(str(exc), 'connection.builtin')
    raise ProblemFileError(f"unknown connection kind '{kind}' (expected zero, constant or builtin)",
                           'connection.kind')


def parse_base_point(value, path: str, bundle: BundleSpec) -> np.ndarray:
    """Euclidean coordinates, or one rotation vector per SO(3) factor."""
    if not bundle.is_compact_base:
        return _vector(value, path, bundle.base_dim)
    rotvecs = _vector(value, path, bundle.base_dim).reshape(bundle.base_factors, 3)
    if np.any(np.linalg.norm(rotvecs, axis=1) >= np.pi):
        raise ProblemFileError("rotation vectors must have norm below pi", path)
    return so3_exp(rotvecs)


def parse_problem(doc: Dict) -> Tuple[InterpolationProblem, SolverConfig]:
    """Build the problem and solver configuration from a decoded problem document."""
    if not isinstance(doc, dict):
        raise ProblemFileError("problem file must contain a JSON object")
    system = doc.get('system')
    if system is not None:
        if system not in SYSTEMS:
            raise ProblemFileError(f"unknown system '{system}'", 'system')
        doc = {**SYSTEMS[system], **doc}

    bundle = parse_bundle(_require(doc, 'bundle', ''))
    connection = parse_connection(_require(doc, 'connection', ''), bundle)

    raw = _require(doc, 'waypoints', '')
    if not isinstance(raw, list) or len(raw) < 2:
        raise ProblemFileError("at least 2 waypoints are required", 'waypoints')
    waypoints = []
    for i, entry in enumerate(raw):
        path = f'waypoints[{i}]'
        t = _require(entry, 't', path)
        if not isinstance(t, (int, float)) or isinstance(t, bool) or not np.isfinite(t):
            raise ProblemFileError("time must be a finite number", f'{path}.t')
        if waypoints and not t > waypoints[-1].t:
            raise ProblemFileError(f"time {t} is not after waypoint {i - 1} time {waypoints[-1].t}; "
                                   f"waypoint times must be strictly increasing", f'{path}.t')
        x = parse_base_point(_require(entry, 'x', path), f'{path}.x', bundle)
        g = None
        if entry.get('g') is not None:
            try:
                g = GroupElement(_matrix(entry['g'], f'{path}.g', bundle.group.matrix_size), bundle.group)
            except ProblemFileError:
                raise
            except InvalidInputError as exc:
                raise ProblemFileError(str(exc), f'{path}.g')
        waypoints.append(Waypoint(float(t), x, g))

    boundary = _require(doc, 'boundary', '')
    v0 = _vector(_require(boundary, 'v0', 'boundary'), 'boundary.v0', bundle.base_dim)
    vN = _vector(_require(boundary, 'vN', 'boundary'), 'boundary.vN', bundle.base_dim)
    xi0 = boundary.get('xi0')
    xiN = boundary.get('xiN')
    xi0 = None if xi0 is None else _vector(xi0, 'boundary.xi0', bundle.group.dim)
    xiN = None if xiN is None else _vector(xiN, 'boundary.xiN', bundle.group.dim)

    try:
        problem = InterpolationProblem(bundle, connection, waypoints, v0, vN, xi0, xiN,
                                       name=str(doc.get('name', system or '')))
    except ProblemFileError:
        raise
    except InvalidInputError as exc:
        raise ProblemFileError(str(exc), 'boundary' if 'xi' in str(exc) else 'waypoints')

    solver = doc.get('solver') or {}
    if not isinstance(solver, dict):
        raise ProblemFileError("expected an object of solver overrides", 'solver')
    try:
        config = SolverConfig.from_dict(solver)
    except InvalidInputError as exc:
        raise ProblemFileError(str(exc), 'solver')
    return problem, config


def load_problem(path: str, overrides: Optional[Dict] = None) -> Tuple[InterpolationProblem, SolverConfig]:
    """Read a JSON problem file; `overrides` (CLI flags) take precedence over its solver block."""
    try:
        with open(path, 'r') as f:
            text = f.read()
    except OSError as exc:
        raise ProblemFileError(f"cannot read problem file: {exc}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg} (column {exc.colno})", f"line {exc.lineno}")
    problem, config = parse_problem(doc)
    if overrides:
        try:
            config = SolverConfig.from_dict({k: v for k, v in overrides.items() if v is not None}, config)
        except InvalidInputError as exc:
            raise ProblemFileError(str(exc), 'command line')
    return problem, config
