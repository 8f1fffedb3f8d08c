import io
import json
import os
import sys
import tempfile
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import unittest
from pathlib import Path
from unittest.mock import patch

# Add the src directory to the Python path
sys.path.insert(0, str(Path(__file__).parent.parent / 'src'))

from weylwalk import cli


class TestCLIDispatch(unittest.TestCase):

    @patch('weylwalk.cli.cmd_validate', return_value=0)
    def test_validate_command(self, mock_validate):
        """Test the 'validate' command with a walk file."""
        self.assertEqual(cli.run(['validate', 'walk.json', '--tol', '1e-12']), 0)
        mock_validate.assert_called_once()
        args = mock_validate.call_args[0][0]
        self.assertEqual(args.walk, 'walk.json')
        self.assertEqual(args.tol, 1e-12)

    @patch('weylwalk.cli.cmd_bound_check', return_value=1)
    def test_bound_check_failure_exit_code(self, mock_bound_check):
        """A failed physical check is exit code 1."""
        self.assertEqual(cli.run(['bound-check', '--name', 'bb_weyl_3d', '--lambda', '0.1']), 1)
        self.assertEqual(mock_bound_check.call_args[0][0].lam, 0.1)

    @patch('weylwalk.cli.cmd_zoo', return_value=0)
    def test_main_exits_with_code(self, mock_zoo):
        """Test that main() exits with the code of the command."""
        with patch.object(sys, 'argv', ['weylwalk', 'zoo', 'list']):
            with self.assertRaises(SystemExit) as e:
                cli.main()
        self.assertEqual(e.exception.code, 0)
        mock_zoo.assert_called_once()

    def test_no_command(self):
        """Running without a command is a usage error."""
        with patch('sys.stderr', new_callable=io.StringIO):
            self.assertEqual(cli.run([]), 2)

    def test_unknown_flag(self):
        with patch('sys.stderr', new_callable=io.StringIO) as stderr:
            self.assertEqual(cli.run(['validate', '--bogus']), 2)
        self.assertIn('usage', stderr.getvalue())

    def test_non_decimal_momentum(self):
        with patch('sys.stderr', new_callable=io.StringIO):
            self.assertEqual(cli.run(['trace-test', '--name', 'spin1_3d', '--p', '0,,1']), 2)


class TestCLIStudies(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def run_cli(self, argv):
        with patch('sys.stdout', new_callable=io.StringIO) as stdout, \
                patch('sys.stderr', new_callable=io.StringIO) as stderr:
            code = cli.run(argv)
        return code, stdout.getvalue(), stderr.getvalue()

    def export(self, name, *extra):
        path = self.tmp / f'{name}.json'
        code, _, _ = self.run_cli(['zoo', 'export', '--name', name, '--out', str(path), *extra])
        self.assertEqual(code, 0)
        return path

    def test_zoo_list(self):
        code, out, _ = self.run_cli(['zoo', 'list'])
        self.assertEqual(code, 0)
        for name in ('massless_1d', 'massive_1d', 'bb_weyl_3d', 'spin1_3d', 'dirac_3d'):
            self.assertIn(name, out)

    def test_export_then_canonicalize(self):
        path = self.export('bb_weyl_3d')
        code, out, _ = self.run_cli(['canonicalize', str(path)])
        self.assertEqual(code, 0)
        self.assertIn('gamma = (1, 1, 1) * (a/dt)', out)
        self.assertIn('handedness: right', out)

    def test_canonicalize_spin1_is_unsupported(self):
        code, _, err = self.run_cli(['canonicalize', '--name', 'spin1_3d'])
        self.assertEqual(code, 2)
        self.assertIn('two-level', err)

    def test_trace_test_spin1(self):
        path = self.export('spin1_3d')
        code, out, _ = self.run_cli(['trace-test', str(path), '--p', '0,0,1'])
        self.assertEqual(code, 0)
        self.assertIn('-1.0000000000', out)

    def test_validate_broken_walk(self):
        path = self.export('bb_weyl_3d')
        document = json.loads(path.read_text())
        entry = document['coins'][0]['matrix'][0][0]
        entry[0] = entry[0] * 1.01 + 0.01
        path.write_text(json.dumps(document))
        code, out, _ = self.run_cli(['validate', str(path)])
        self.assertEqual(code, 1)
        self.assertIn('unitary: FAIL', out)

    def test_validate_zoo_walk(self):
        code, out, _ = self.run_cli(['validate', '--name', 'dirac_3d', '--m', '0.5'])
        self.assertEqual(code, 0)
        self.assertIn('unitary: PASS', out)

    def test_malformed_file_is_usage_error(self):
        path = self.tmp / 'bad.json'
        path.write_text('{"version": "weylwalk/1", "d": 1')
        code, _, err = self.run_cli(['validate', str(path)])
        self.assertEqual(code, 2)
        self.assertIn('malformed_json', err)

    def test_missing_file_is_usage_error(self):
        code, _, _ = self.run_cli(['validate', str(self.tmp / 'missing.json')])
        self.assertEqual(code, 2)

    def test_decompose_massive(self):
        code, out, _ = self.run_cli(['decompose', '--name', 'massive_1d', '--m', '1', '--a', '0.1', '--dt', '0.1'])
        self.assertEqual(code, 0)
        self.assertIn('massless: False', out)
        self.assertIn('M =', out)

    def test_dispersion_csv(self):
        out_path = self.tmp / 'dispersion.csv'
        code, _, _ = self.run_cli(['dispersion', '--name', 'massless_1d', '--p', '1', '--samples', '5',
                                   '--out', str(out_path)])
        self.assertEqual(code, 0)
        lines = out_path.read_bytes().split(b'\r\n')
        self.assertEqual(lines[0], b's,p1,theta1_over_dt,theta2_over_dt,energy1,energy2')
        self.assertEqual(len([line for line in lines if line]), 6)

    def test_bound_check_quadratic(self):
        out_path = self.tmp / 'bound.csv'
        code, out, _ = self.run_cli(['bound-check', '--name', 'bb_weyl_3d', '--a', '0.1', '--dt', '0.1',
                                     '--lambda', '0.2', '--grid', '24', '--out', str(out_path)])
        self.assertEqual(code, 0)
        self.assertIn('bound: PASS', out)
        self.assertIn('quadratic', out_path.read_text())

    def test_bound_check_falls_back_to_series(self):
        code, out, _ = self.run_cli(['bound-check', '--name', 'spin1_3d', '--a', '0.1', '--dt', '0.1',
                                     '--lambda', '0.5', '--grid', '24'])
        self.assertEqual(code, 0)
        self.assertIn('series', out)

    def test_bound_check_massive(self):
        out_path = self.tmp / 'split.csv'
        code, out, _ = self.run_cli(['bound-check', '--name', 'dirac_3d', '--m', '0.5', '--a', '0.1',
                                     '--dt', '0.1', '--lambda', '1', '--grid', '16', '--out', str(out_path)])
        self.assertEqual(code, 0)
        self.assertIn('triangle split: PASS', out)
        lines = out_path.read_text().splitlines()
        self.assertEqual(lines[0], 'measured,mixing,massless,satisfied,lambda,a')
        self.assertEqual(lines[1].split(',')[3], 'true')

    def test_cutoff_outside_zone(self):
        code, _, err = self.run_cli(['bound-check', '--name', 'bb_weyl_3d', '--lambda', '4'])
        self.assertEqual(code, 2)
        self.assertIn('Brillouin', err)

    def test_csv_is_identical_across_thread_counts(self):
        outputs = []
        for threads in ('1', '4'):
            out_path = self.tmp / f'bound_{threads}.csv'
            with patch.dict(os.environ, {'WEYLWALK_THREADS': threads}):
                code, _, _ = self.run_cli(['bound-check', '--name', 'bb_weyl_3d', '--a', '0.1', '--dt', '0.1',
                                           '--lambda', '0.5', '--grid', '32', '--out', str(out_path)])
            self.assertEqual(code, 0)
            outputs.append(out_path.read_bytes())
        self.assertEqual(outputs[0], outputs[1])

    def test_scaling_study_of_exact_walk(self):
        code, out, _ = self.run_cli(['scaling-study', '--name', 'massless_1d', '--lambda', '1',
                                     '--a-schedule', '0.1,0.05,0.025,0.0125'])
        self.assertEqual(code, 0)
        self.assertIn('exact', out)

    def test_scaling_study_from_config(self):
        config = self.tmp / 'study.toml'
        config.write_text('[study]\nwalk = "bb_weyl_3d"\nlambda = 1.0\ngrid_per_dim = 16\n'
                          'a_schedule = [0.1, 0.05, 0.025, 0.0125]\n')
        out_path = self.tmp / 'scaling.csv'
        code, out, _ = self.run_cli(['scaling-study', '--config', str(config), '--out', str(out_path)])
        self.assertEqual(code, 0)
        exponent = float(out.split('exponent = ')[1].split(',')[0])
        self.assertTrue(1.9 <= exponent <= 2.1)
        self.assertTrue(out_path.with_suffix('.toml').exists())

    def test_scaling_study_from_shipped_study(self):
        out_path = self.tmp / 'shipped.csv'
        code, out, _ = self.run_cli(['scaling-study', '--study', 'bb_weyl_scaling', '--grid', '16',
                                     '--out', str(out_path)])
        self.assertEqual(code, 0)
        self.assertIn('n-step norm at t = 0.4', out)
        self.assertTrue(out_path.read_text().startswith('a,lambda,norm,n_step_norm'))
        with open(out_path.with_suffix('.toml'), 'rb') as f:
            summary = tomllib.load(f)
        self.assertEqual(summary['study']['walk'], 'bb_weyl_3d')
        self.assertEqual(summary['study']['t'], 0.4)
        n_step = summary['result']['n_step_norms']
        self.assertEqual(len(n_step), 4)
        self.assertTrue(all(x > y for x, y in zip(n_step, n_step[1:])))

    def test_unknown_shipped_study(self):
        code, _, err = self.run_cli(['scaling-study', '--study', 'missing'])
        self.assertEqual(code, 2)
        self.assertIn('bb_weyl_scaling', err)

    def test_study_and_config_are_exclusive(self):
        code, _, err = self.run_cli(['scaling-study', '--study', 'bb_weyl_scaling', '--config', 'study.toml'])
        self.assertEqual(code, 2)
        self.assertIn('not both', err)

    def test_scaling_study_rejects_fractional_steps(self):
        code, _, _ = self.run_cli(['scaling-study', '--name', 'bb_weyl_3d', '--lambda', '1', '--grid', '16',
                                   '--a-schedule', '0.1,0.05,0.025,0.0125', '--t', '0.33'])
        self.assertEqual(code, 2)

    def test_scaling_study_needs_schedule(self):
        code, _, _ = self.run_cli(['scaling-study', '--name', 'bb_weyl_3d', '--lambda', '1'])
        self.assertEqual(code, 2)

    def test_evolve(self):
        out_path = self.tmp / 'packet.csv'
        code, out, _ = self.run_cli(['evolve', '--name', 'massless_1d', '--steps', '5', '--p', '0.1',
                                     '--sigma', '30', '--out', str(out_path)])
        self.assertEqual(code, 0)
        self.assertIn('final distance', out)
        self.assertEqual(len(out_path.read_text().strip().splitlines()), 7)

    def test_evolve_rejects_grid(self):
        code, _, err = self.run_cli(['evolve', '--name', 'massless_1d', '--steps', '5', '--sigma', '30',
                                     '--grid', '32'])
        self.assertEqual(code, 2)
        self.assertIn('--grid', err)

    def test_huge_displacement_is_usage_error(self):
        path = self.export('massless_1d')
        document = json.loads(path.read_text())
        document['coins'][0]['q'] = [10**30]
        path.write_text(json.dumps(document))
        for command in (['decompose'], ['dispersion', '--p', '1'], ['validate']):
            code, _, err = self.run_cli([*command, str(path)])
            self.assertEqual(code, 2)
            self.assertIn('invalid_field', err)
            self.assertIn('coins[0].q[0]', err)

    def test_evolve_narrow_packet(self):
        code, _, err = self.run_cli(['evolve', '--name', 'massless_1d', '--steps', '5', '--sigma', '2'])
        self.assertEqual(code, 2)
        self.assertIn('ten lattice sites', err)


if __name__ == '__main__':
    unittest.main()
