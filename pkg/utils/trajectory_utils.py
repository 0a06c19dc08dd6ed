import os
import numpy as np
from dataclasses import dataclass, field
from scipy.spatial.transform import Rotation
from typing import Dict, List, Optional

from src.algebra import InvalidInputError, LieAlgebra
from src.interpolator import InterpolationProblem, SolverConfig, Trajectory
from utils.grid_utils import split_segments

CSV_FORMAT = '%.17g'


class TrajectoryFileError(InvalidInputError):
    """Malformed or inconsistent trajectory CSV."""


@dataclass
class TrajectoryTable:
    """Columns, numeric rows and trailing metadata of a trajectory CSV."""
    columns: List[str]
    data: np.ndarray
    metadata: Dict[str, str] = field(default_factory=dict)

    def block(self, prefix: str) -> np.ndarray:
        idx = [i for i, name in enumerate(self.columns) if name.split('_')[0] == prefix]
        return self.data[:, idx]

    @property
    def times(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def group(self) -> LieAlgebra:
        return LieAlgebra.from_tag(self.metadata.get('group', ''))

    @property
    def compact_base(self) -> bool:
        return self.metadata.get('base', 'euclidean') == 'compact_group'


def trajectory_columns(n_x: int, n_v: int, n_xi: int, n_g: int) -> List[str]:
    return (['t'] + [f'x_{i}' for i in range(n_x)] + [f'xdot_{i}' for i in range(n_v)] +
            [f'xi_{i}' for i in range(n_xi)] + [f'g_{i}' for i in range(n_g)])


def trajectory_metadata(trajectory: Trajectory, problem: InterpolationProblem) -> Dict[str, str]:
    bundle = problem.bundle
    return {
        'J': repr(float(trajectory.cost)),
        'residual': repr(float(trajectory.residual_norm)),
        'converged': str(bool(trajectory.converged)).lower(),
        'iterations': str(int(trajectory.iterations)),
        'segments': str(trajectory.n_segments),
        'nodes_per_segment': str(trajectory.nodes_per_segment),
        'euler_lagrange': trajectory.config.euler_lagrange,
        'group': bundle.group.tag,
        'base': bundle.base_kind,
        'base_dim': str(bundle.base_dim),
    }


def write_trajectory_csv(trajectory: Trajectory, problem: InterpolationProblem, filename: str) -> str:
    """
    Write a solved trajectory as CSV: header row, one row per global grid node
    (t, x, xdot, xi, g row-major) and trailing '#key=value' metadata lines.
    Compact-base x is written as the row-major 3x3 rotation of every factor.
    """
    n_nodes = len(trajectory.times)
    x = trajectory.x.reshape(n_nodes, -1)
    g = trajectory.g.reshape(n_nodes, -1)
    data = np.column_stack([trajectory.times, x, trajectory.xdot, trajectory.xi, g])
    columns = trajectory_columns(x.shape[1], trajectory.xdot.shape[1], trajectory.xi.shape[1], g.shape[1])
    meta = trajectory_metadata(trajectory, problem)

    directory = os.path.dirname(filename)
    if directory:
        os.makedirs(directory, exist_ok=True)
    np.savetxt(filename, data, fmt=CSV_FORMAT, delimiter=',', header=','.join(columns),
               footer='\n'.join(f'#{k}={v}' for k, v in meta.items()), comments='')
    return filename


def read_trajectory_csv(filename: str) -> TrajectoryTable:
    try:
        with open(filename, 'r') as f:
            lines = [line.strip() for line in f if line.strip()]
    except OSError as exc:
        raise TrajectoryFileError(f"cannot read trajectory file: {exc}")

    metadata = {}
    for line in lines:
        if line.startswith('#') and '=' in line:
            key, value = line[1:].split('=', 1)
            metadata[key.strip()] = value.strip()
    body = [line for line in lines if not line.startswith('#')]
    if not body:
        raise TrajectoryFileError(f"{filename}: empty trajectory file")

    columns = [c.strip() for c in body[0].split(',')]
    if columns[0] != 't':
        raise TrajectoryFileError(f"{filename}: header must start with 't', got '{columns[0]}'")
    if len(body) < 2:
        raise TrajectoryFileError(f"{filename}: trajectory has no data rows")
    try:
        data = np.loadtxt(body[1:], delimiter=',', ndmin=2)
    except ValueError as exc:
        raise TrajectoryFileError(f"{filename}: malformed data row ({exc})")
    if data.shape[1] != len(columns):
        raise TrajectoryFileError(f"{filename}: {data.shape[1]} values per row but {len(columns)} header columns")
    if not np.all(np.isfinite(data)):
        raise TrajectoryFileError(f"{filename}: non-finite entries")
    if np.any(np.diff(data[:, 0]) <= 0):
        row = int(np.argmax(np.diff(data[:, 0]) <= 0)) + 1
        raise TrajectoryFileError(f"{filename}: t is not strictly increasing at data row {row}")
    return TrajectoryTable(columns, data, metadata)


def table_to_trajectory(table: TrajectoryTable, problem: InterpolationProblem) -> Trajectory:
    """Rebuild a Trajectory for `problem` from a CSV table, checking that the dimensions agree."""
    bundle = problem.bundle
    n_x = 9 * bundle.base_factors if bundle.is_compact_base else bundle.base_dim
    expected = trajectory_columns(n_x, bundle.base_dim, bundle.group.dim, bundle.group.matrix_size ** 2)
    if table.columns != expected:
        raise TrajectoryFileError(f"trajectory columns ({len(table.columns)}) do not match the problem "
                                  f"bundle {bundle.describe()} ({len(expected)} columns expected)")

    N = problem.n_segments
    n_nodes = len(table.times)
    try:
        segment_times = split_segments(table.times, N)
    except ValueError as exc:
        raise TrajectoryFileError(f"trajectory grid does not fit {N} segment(s): {exc}")
    if not np.allclose(segment_times[:, [0, -1]], np.column_stack([problem.times[:-1], problem.times[1:]]),
                       atol=1e-12, rtol=0.0):
        raise TrajectoryFileError("trajectory segment boundaries do not match the waypoint times")

    x = table.block('x')
    xdot = table.block('xdot')
    if bundle.is_compact_base:
        x = x.reshape(n_nodes, bundle.base_factors, 3, 3)
        segment_values = split_segments(xdot, N)
    else:
        segment_values = split_segments(x, N)

    overrides = {'nodes_per_segment': segment_times.shape[1]}
    if table.metadata.get('euler_lagrange'):
        overrides['euler_lagrange'] = table.metadata['euler_lagrange']
    try:
        config = SolverConfig.from_dict(overrides)
    except InvalidInputError as exc:
        raise TrajectoryFileError(f"trajectory metadata: {exc}")
    m = bundle.group.matrix_size
    return Trajectory(
        times=table.times.copy(),
        x=x,
        xdot=xdot,
        xi=table.block('xi'),
        g=table.block('g').reshape(n_nodes, m, m),
        cost=float(table.metadata.get('J', 'nan')),
        residual_norm=float(table.metadata.get('residual', 'nan')),
        iterations=int(table.metadata.get('iterations', 0)),
        converged=table.metadata.get('converged', 'false') == 'true',
        segment_values=segment_values,
        segment_times=segment_times,
        config=config,
    )


# Plot data

def _quaternions(rotations: np.ndarray) -> np.ndarray:
    """(..., 3, 3) rotations -> (..., 4) quaternions (w, x, y, z) with w >= 0."""
    flat = rotations.reshape(-1, 3, 3)
    q = Rotation.from_matrix(flat).as_quat()[:, [3, 0, 1, 2]]
    q[q[:, 0] < 0] *= -1.0
    return q.reshape(rotations.shape[:-2] + (4,))


def plot_table(table: TrajectoryTable) -> TrajectoryTable:
    """
    Plot-ready time series: the trajectory columns followed by a pose path per
    group factor (position for se3 factors, then the quaternion of the rotation
    block) and, for a compact base, a quaternion per base factor.
    """
    try:
        group = table.group
    except InvalidInputError:
        raise TrajectoryFileError("trajectory metadata has no valid '#group=' line")
    g_cols = table.block('g')
    m = group.matrix_size
    if g_cols.shape[1] != m * m:
        raise TrajectoryFileError(f"{g_cols.shape[1]} group columns do not fit a {group.tag} matrix")
    g = g_cols.reshape(-1, m, m)

    columns = ['t'] + [c for c in table.columns[1:] if not c.startswith('g_')]
    pieces = [table.data[:, [table.columns.index(c) for c in columns]]]
    for f, (name, sl) in enumerate(zip(group.factors, group.matrix_slices)):
        block = g[:, sl, sl]
        if name == 'se3':
            pieces.append(block[:, :3, 3])
            columns += [f'p{f}_x', f'p{f}_y', f'p{f}_z']
        pieces.append(_quaternions(block[:, :3, :3]))
        columns += [f'q{f}_w', f'q{f}_x', f'q{f}_y', f'q{f}_z']

    if table.compact_base:
        x = table.block('x')
        base = x.reshape(x.shape[0], -1, 3, 3)
        quats = _quaternions(base)
        for f in range(base.shape[1]):
            pieces.append(quats[:, f])
            columns += [f'base{f}_w', f'base{f}_x', f'base{f}_y', f'base{f}_z']
    return TrajectoryTable(columns, np.column_stack(pieces), dict(table.metadata))


def write_plot_data(table: TrajectoryTable, filename: str) -> str:
    directory = os.path.dirname(filename)
    if directory:
        os.makedirs(directory, exist_ok=True)
    np.savetxt(filename, table.data, fmt=CSV_FORMAT, delimiter=',', header=','.join(table.columns),
               comments='')
    return filename


def render_plot(table: TrajectoryTable, filename: str) -> str:
    """Render base, body-velocity and pose-path panels of a plot table as a PNG."""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    t = table.times
    panels = [('base x', 'x'), ('base velocity', 'xdot'), ('group body velocity xi', 'xi')]
    positions = [i for i, c in enumerate(table.columns) if c.startswith('p') and c[1:2].isdigit()]
    fig, axes = plt.subplots(len(panels) + 1, 1, figsize=(10, 12), sharex=True)
    for ax, (title, prefix) in zip(axes, panels):
        values = table.block(prefix)
        for i in range(values.shape[1]):
            ax.plot(t, values[:, i], label=f'{prefix}_{i}')
        ax.set_title(title)
        if values.shape[1] <= 12:
            ax.legend(fontsize=7, ncol=3)
    ax = axes[-1]
    if positions:
        for i in positions:
            ax.plot(t, table.data[:, i], label=table.columns[i])
        ax.set_title('group position')
    else:
        for i, c in enumerate(table.columns):
            if c.startswith('q') and c[1:2].isdigit():
                ax.plot(t, table.data[:, i], label=c)
        ax.set_title('group rotation quaternion')
    ax.legend(fontsize=7, ncol=3)
    ax.set_xlabel('t')

    directory = os.path.dirname(filename)
    if directory:
        os.makedirs(directory, exist_ok=True)
    plt.tight_layout()
    plt.savefig(filename, dpi=150, bbox_inches='tight')
    plt.close(fig)
    return filename
