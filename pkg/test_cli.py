#!/usr/bin/env python3
"""
End-to-end tests of the solve / verify / plotdata commands
"""

import json
import os
import tempfile
import numpy as np
from numpy.testing import assert_allclose

from main import EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, main
from src.algebra import DomainError
from src.interpolator import CollocationSolver
from utils.problem_utils import ProblemFileError, parse_problem
from utils.trajectory_utils import read_trajectory_csv

PROBLEMS = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'problems')


def _problem(name: str) -> str:
    return os.path.join(PROBLEMS, name)


def _raises(exc_type, fn, *args):
    try:
        fn(*args)
    except exc_type as exc:
        return exc
    raise AssertionError(f"{fn.__name__} did not raise {exc_type.__name__}")


def _flat_doc():
    with open(_problem('flat_two_waypoints.json')) as f:
        return json.load(f)


def _write_json(directory: str, name: str, doc) -> str:
    path = os.path.join(directory, name)
    with open(path, 'w') as f:
        json.dump(doc, f, indent=2)
    return path


def test_solve_flat_problem():
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, 'flat.csv')
        assert main(['solve', _problem('flat_two_waypoints.json'), out]) == EXIT_OK
        table = read_trajectory_csv(out)
        t = table.times
        assert_allclose(table.block('x')[:, 0], 3 * t**2 - 2 * t**3, atol=1e-7)
        assert table.metadata['converged'] == 'true'
        assert abs(float(table.metadata['J']) - 6.0) < 1e-6
        with open(os.path.join(tmp, 'flat_report.json')) as f:
            report = json.load(f)
        assert report['converged'] is True


def test_solve_is_deterministic():
    with tempfile.TemporaryDirectory() as tmp:
        paths = [os.path.join(tmp, f'run{k}.csv') for k in range(2)]
        for path in paths:
            assert main(['solve', _problem('flat_plane_so3.json'), path, '--nodes', '9']) == EXIT_OK
        with open(paths[0], 'rb') as a, open(paths[1], 'rb') as b:
            assert a.read() == b.read()


def test_solve_rejects_bad_problem_files():
    with tempfile.TemporaryDirectory() as tmp:
        doc = _flat_doc()
        doc['waypoints'].append({'t': 0.5, 'x': [2.0]})
        assert main(['solve', _write_json(tmp, 'bad.json', doc), os.path.join(tmp, 'o.csv')]) == EXIT_INPUT

        broken = os.path.join(tmp, 'broken.json')
        with open(broken, 'w') as f:
            f.write('{"bundle": ')
        assert main(['solve', broken, os.path.join(tmp, 'o.csv')]) == EXIT_INPUT
        assert main(['solve', os.path.join(tmp, 'missing.json'), os.path.join(tmp, 'o.csv')]) == EXIT_INPUT
        assert main(['solve', _problem('flat_two_waypoints.json'), os.path.join(tmp, 'o.csv'),
                     '--nodes', '8']) == EXIT_INPUT
        assert not os.path.exists(os.path.join(tmp, 'o.csv'))


def test_solve_reports_non_convergence():
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, 'swimmer.csv')
        code = main(['solve', _problem('purcell_swimmer.json'), out, '--nodes', '9', '--max-iters', '1'])
        assert code == EXIT_NOT_CONVERGED
        with open(os.path.join(tmp, 'swimmer_report.json')) as f:
            report = json.load(f)
        assert report['converged'] is False
        assert len(report['residual_history']) == 2


def test_solve_writes_last_iterate_when_solver_fails():
    original = CollocationSolver.jacobian

    def failing_jacobian(self, z, r, states):
        raise DomainError("rotation angle at the logarithm limit")

    CollocationSolver.jacobian = failing_jacobian
    try:
        with tempfile.TemporaryDirectory() as tmp:
            out = os.path.join(tmp, 'swimmer.csv')
            code = main(['solve', _problem('purcell_swimmer.json'), out, '--nodes', '9'])
            assert code == EXIT_NOT_CONVERGED
            assert read_trajectory_csv(out).metadata['converged'] == 'false'
            with open(os.path.join(tmp, 'swimmer_report.json')) as f:
                report = json.load(f)
            assert report['converged'] is False and report['iterations'] == 0
            assert 'logarithm limit' in report['message']
    finally:
        CollocationSolver.jacobian = original


def test_round_trip_every_shipped_problem():
    names = sorted(name for name in os.listdir(PROBLEMS) if name.endswith('.json'))
    assert 'purcell_swimmer.json' in names
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            out = os.path.join(tmp, name.replace('.json', '.csv'))
            assert main(['solve', _problem(name), out]) == EXIT_OK, name
            assert main(['verify', out, _problem(name), '--variations', '20']) == EXIT_OK, name


def test_problem_parsing_errors_name_the_field():
    doc = _flat_doc()
    doc['waypoints'][1]['t'] = 0.0
    exc = _raises(ProblemFileError, parse_problem, doc)
    assert exc.path == 'waypoints[1].t' and 'waypoint 0' in str(exc)

    doc = _flat_doc()
    doc['boundary']['v0'] = [0.0, 1.0]
    assert _raises(ProblemFileError, parse_problem, doc).path == 'boundary.v0'

    doc = _flat_doc()
    doc['connection'] = {'kind': 'constant', 'matrix': [1.0, 0.0]}
    assert _raises(ProblemFileError, parse_problem, doc).path == 'connection.matrix'

    doc = _flat_doc()
    doc['bundle']['group']['kind'] = 'su2'
    assert _raises(ProblemFileError, parse_problem, doc).path == 'bundle.group.kind'

    doc = _flat_doc()
    del doc['boundary']
    assert _raises(ProblemFileError, parse_problem, doc).path == 'boundary'

    doc = _flat_doc()
    doc['solver'] = {'max_newton_iters': 3}
    _, config = parse_problem(doc)
    assert config.max_newton_iters == 3


def test_verify_solution_and_corruption():
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, 'flat.csv')
        problem = _problem('flat_two_waypoints.json')
        assert main(['solve', problem, out]) == EXIT_OK
        assert main(['verify', out, problem, '--variations', '20']) == EXIT_OK

        with open(out) as f:
            lines = f.read().splitlines()
        column = lines[0].split(',').index('xi_0')
        row = lines[5].split(',')
        row[column] = '0.5'
        lines[5] = ','.join(row)
        corrupted = os.path.join(tmp, 'corrupted.csv')
        with open(corrupted, 'w') as f:
            f.write('\n'.join(lines) + '\n')
        assert main(['verify', corrupted, problem, '--variations', '5']) == EXIT_CHECK_FAILED

        # trajectory solved for a different problem
        assert main(['verify', out, _problem('flat_plane_so3.json')]) == EXIT_INPUT


def test_verify_identities_only():
    assert main(['verify', '--identities', _problem('purcell_swimmer.json')]) == EXIT_OK
    assert main(['verify', _problem('so3_geodesic.json')]) == EXIT_INPUT


def test_plotdata():
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, 'geodesic.csv')
        assert main(['solve', _problem('so3_geodesic.json'), out, '--nodes', '9']) == EXIT_OK
        plot = os.path.join(tmp, 'plots', 'geodesic_plot.csv')
        assert main(['plotdata', out, plot, '--png']) == EXIT_OK
        assert os.path.exists(os.path.join(tmp, 'plots', 'geodesic_plot.png'))

        source, table = read_trajectory_csv(out), read_trajectory_csv(plot)
        for name in ('x_0', 'x_4', 'xdot_2'):
            assert np.array_equal(table.data[:, table.columns.index(name)],
                                  source.data[:, source.columns.index(name)])
        assert {'q0_w', 'base0_w'} <= set(table.columns)
        assert not any(c.startswith('g_') for c in table.columns)
        quat = table.data[:, [table.columns.index(f'q0_{a}') for a in 'wxyz']]
        assert_allclose(np.linalg.norm(quat, axis=1), 1.0, atol=1e-12)

        empty = os.path.join(tmp, 'empty.csv')
        open(empty, 'w').close()
        assert main(['plotdata', empty, os.path.join(tmp, 'e.csv')]) == EXIT_INPUT


def main_tests():
    print("Testing Command Line Interface")
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
    raise SystemExit(main_tests())
