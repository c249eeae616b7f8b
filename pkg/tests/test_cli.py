# vim: ts=4 sw=4 noet

# Copyright 2025 The Board of Trustees of the Leland Stanford Junior University
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

# Stdlib imports
import json
import os
import pathlib

# PyPi imports
import pandas as pd
import pytest

# Local imports
from platedm.cli import run


# A 13-node mirror with five actuators, small enough to run every command
TOY = [
	'--set', 'grid.node_pitch=0.5',
	'--set', 'actuator.pitch=0.5',
	'--set', 'actuator.inclusion_radius=0.6',
	'--set', 'observation.modes=3',
	'--set', 'simulation.f=300',
	'--set', 'identification.p_grid="1:2"',
	'--set', 'identification.estimator=varx',
	'--set', 'identification.max_lag=20',
]


def toy_args(command: str, output: pathlib.Path, *extra: str) -> list[str]:
	return [command, *TOY, '--set', f"output_dir={output}", *extra]


def manifest_paths(output: pathlib.Path) -> set[str]:
	manifest = json.loads((output / 'manifest.json').read_text())
	return {entry['path'] for entry in manifest['artifacts']}


# The reduced identification experiment shipped with the package
REDUCED = pathlib.Path(__file__).parents[1] / 'configs' / 'reduced_identification.json'


def reduced_args(output: pathlib.Path, *extra: str) -> list[str]:
	return ['fit', '--config', str(REDUCED), '--set', f"output_dir={output}", *extra]


acceptance = pytest.mark.skipif(
	'PLATEDM_ACCEPTANCE' not in os.environ,
	reason='Set PLATEDM_ACCEPTANCE to run full-size checks',
)


# Now, our tests

def test_build_model(tmp_path: pathlib.Path, capsys: pytest.CaptureFixture[str]) -> None:
	assert run(toy_args('build-model', tmp_path)) == 0
	assert 'n=13 m=5 r=5' in capsys.readouterr().out
	for name in ('model.json', 'M1.coo', 'M2.coo', 'M3.coo', 'B.coo', 'C.coo'):
		assert (tmp_path / 'model' / name).exists()
	assert 'config.resolved.json' in manifest_paths(tmp_path)
	assert 'model/M3.coo' in manifest_paths(tmp_path)


def test_rebuilding_gives_identical_files(tmp_path: pathlib.Path) -> None:
	first = tmp_path / 'first'
	second = tmp_path / 'second'
	assert run(toy_args('build-model', first)) == 0
	assert run(toy_args('build-model', second)) == 0
	for name in ('model.json', 'M3.coo', 'C.coo'):
		assert (first / 'model' / name).read_bytes() == (second / 'model' / name).read_bytes()


def test_steady_state(tmp_path: pathlib.Path, capsys: pytest.CaptureFixture[str]) -> None:
	code = run(toy_args('steady-state', tmp_path, '--mode', 'Z2^0', '--mode', 'Z1^1'))
	assert code == 0
	table = pd.read_csv(tmp_path / 'steady_state.csv')
	# Sorted by Noll index
	assert table['mode'].tolist() == ['Z1^1', 'Z2^0']
	assert (table['e'] >= 0).all()
	forces = pd.read_csv(tmp_path / 'steady_state_forces.csv')
	assert len(forces) == 5
	assert (tmp_path / 'wavefront_Z2_0.csv').exists()
	assert (tmp_path / 'forces_Z1_1.svg').exists()
	assert 'steady_state.svg' in manifest_paths(tmp_path)
	assert 'Z2^0 e=' in capsys.readouterr().out


@pytest.mark.parametrize('extra', [
	['--set', 'steady_state.modes=[]'],
	['--amplitude', '0'],
	['--mode', 'Z2^1'],
	['--tol', '-1'],
])
def test_steady_state_rejects_bad_requests(tmp_path: pathlib.Path, extra: list[str]) -> None:
	assert run(toy_args('steady-state', tmp_path, *extra)) == 2


def test_demo_needs_its_actuators(tmp_path: pathlib.Path) -> None:
	"""The toy layout has no actuators two pitches out.
	"""
	assert run(toy_args('steady-state', tmp_path, '--mode', 'Z2^0', '--demo')) == 3


def test_numerical_failure(tmp_path: pathlib.Path) -> None:
	assert run(toy_args('build-model', tmp_path, '--set', 'grid.node_pitch=2.0')) == 3


@pytest.mark.parametrize('extra', [
	['--set', 'grid.colour=blue'],
	['--set', 'material.poisson_ratio=0.7'],
	['--set', 'nonsense'],
])
def test_configuration_errors(tmp_path: pathlib.Path, extra: list[str]) -> None:
	assert run(toy_args('build-model', tmp_path, *extra)) == 2


def test_missing_config_file(tmp_path: pathlib.Path) -> None:
	args = ['build-model', '--config', str(tmp_path / 'missing.json')]
	assert run(args) == 2


def test_thread_variable(tmp_path: pathlib.Path, monkeypatch: pytest.MonkeyPatch) -> None:
	monkeypatch.setenv('PLATEDM_THREADS', 'many')
	assert run(toy_args('build-model', tmp_path)) == 2


def test_simulate(tmp_path: pathlib.Path) -> None:
	code = run(toy_args('simulate', tmp_path, '--f', '50', '--snr', '20', '--name', 'noisy'))
	assert code == 0
	table = pd.read_csv(tmp_path / 'noisy.csv')
	assert len(table) == 50
	assert list(table.columns) == ['k'] + [f"u_{j}" for j in range(5)] + [f"q_{j}" for j in range(3)]
	sidecar = json.loads((tmp_path / 'noisy.json').read_text())
	assert sidecar['snr'] == 20
	assert sidecar['model_hash']
	assert (tmp_path / 'noisy.clean.csv').exists()

	assert run(toy_args('simulate', tmp_path, '--f', '1')) == 2


def test_fit_validate_and_report(tmp_path: pathlib.Path, capsys: pytest.CaptureFixture[str]) -> None:
	assert run(toy_args('fit', tmp_path)) == 0
	out = capsys.readouterr().out
	assert 'p by AIC' in out

	summary = json.loads((tmp_path / 'summary.json').read_text())
	assert summary['p_aic'] in (1, 2)
	assert summary['p_ol'] in (1, 2)
	report = pd.read_csv(tmp_path / 'fit_report.csv')
	assert report['p'].tolist() == [1, 2]
	for name in ('train.csv', 'val.csv', 'test.csv', 'predictor_p1.json', 'predictor_p2.json'):
		assert (tmp_path / name).exists()
	p = summary['p_ol']
	assert (tmp_path / f"traces_p{p}.csv").exists()
	assert (tmp_path / f"acf_p{p}.svg").exists()

	predictor = json.loads((tmp_path / 'predictor_p1.json').read_text())
	assert predictor['kind'] == 'varx'
	assert predictor['metadata']['model_hash'] == summary['model_hash']

	code = run(toy_args(
		'validate', tmp_path,
		'--predictor', str(tmp_path / 'predictor_p1.json'),
		'--trajectory', str(tmp_path / 'test.csv'),
	))
	assert code == 0
	validation = json.loads((tmp_path / 'validation_predictor_p1.json').read_text())
	assert validation['p'] == 1
	assert validation['eps_cl'] == pytest.approx(report['test_eps_cl'][0], rel=1e-9)

	(tmp_path / 'selection.svg').unlink()
	assert run(toy_args('report', tmp_path)) == 0
	assert (tmp_path / 'selection.svg').exists()


def test_fit_reruns_give_identical_tables(tmp_path: pathlib.Path) -> None:
	first = tmp_path / 'first'
	second = tmp_path / 'second'
	assert run(toy_args('fit', first)) == 0
	assert run(toy_args('fit', second)) == 0
	tables = sorted(path.name for path in first.glob('*.csv'))
	assert 'fit_report.csv' in tables
	assert tables == sorted(path.name for path in second.glob('*.csv'))
	for name in tables:
		assert (first / name).read_bytes() == (second / name).read_bytes(), name


@acceptance
def test_reduced_noisy_fit_leaves_white_residuals(tmp_path: pathlib.Path) -> None:
	args = reduced_args(
		tmp_path,
		'--set', 'simulation.snr=20',
		'--set', 'identification.estimator=varx',
	)
	assert run(args) == 0
	summary = json.loads((tmp_path / 'summary.json').read_text())
	assert summary['outside_fraction'] <= 0.07


@acceptance
def test_reduced_network_matches_least_squares(tmp_path: pathlib.Path) -> None:
	assert run(reduced_args(tmp_path / 'varx', '--set', 'identification.estimator=varx')) == 0
	p = json.loads((tmp_path / 'varx' / 'summary.json').read_text())['p_ol']
	linear = pd.read_csv(tmp_path / 'varx' / 'fit_report.csv').set_index('p').loc[p]

	assert run(reduced_args(tmp_path / 'network', '--set', f"identification.p_grid=[{p}]")) == 0
	network = pd.read_csv(tmp_path / 'network' / 'fit_report.csv').set_index('p').loc[p]
	assert network['test_eps_ol'] <= 0.05
	assert network['train_mse'] <= 1.05 * linear['train_mse']


def test_validate_with_missing_files(tmp_path: pathlib.Path) -> None:
	code = run(toy_args(
		'validate', tmp_path,
		'--predictor', str(tmp_path / 'nothing.json'),
		'--trajectory', str(tmp_path / 'nothing.csv'),
	))
	assert code == 2
