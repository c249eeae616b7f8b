#!python3
# vim: ts=4 sw=4 noet

# This is the `platedm` command.  Each subcommand runs one stage of a
# deformable-mirror experiment from a JSON config:
# * `build-model` assembles the mirror model and exports its matrices.
# * `steady-state` finds actuator forces for Zernike targets, and reports how
#   well each target is reached.
# * `simulate` writes one simulated input/output trajectory.
# * `fit` generates training, validation, and test data, fits a predictor for
#   every candidate past window, and picks a window.
# * `validate` checks a saved predictor against a saved trajectory.
# * `report` redraws charts from CSV files written earlier.

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

# Exit codes: 0 for success, 2 for configuration or usage problems, and 3
# when the numerics fail.

# stdlib imports
import argparse
import logging
import pathlib
import sys
from typing import Callable, NoReturn

# PyPi imports
import numpy as np

# local imports
import platedm.artifacts as artifacts
import platedm.plots as plots
from platedm.config import (
	ExperimentConfig,
	config_hash,
	load_config,
	resolved_json,
	thread_count,
)
from platedm.exceptions import *
from platedm.manifest import RunManifest
from platedm.mirror.plate_model import (
	SecondOrderModel,
	assemble_model,
	build_grid,
	build_layout,
)
from platedm.mirror.simulate import (
	Trajectory,
	generate_dataset,
	with_noise,
)
from platedm.mirror.steady_state import (
	apply_control,
	demo_forces,
	static_deflection,
	sweep_modes,
)
from platedm.mirror.zernike import ZernikeMap, build_zernike_map, parse_mode
from platedm.sysid.prediction import predict_closed_loop, predict_open_loop
from platedm.sysid.selection import Datasets, select_order
from platedm.sysid.validation import residual_whiteness

# Partially set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warn = logger.warning
info = logger.info
debug = logger.debug

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

MODEL_DIRECTORY = 'model'

# Options every subcommand takes
argp = argparse.ArgumentParser(
	add_help=False,
)
argp.add_argument('--config',
	help='A JSON experiment config.  Defaults describe the reference mirror.',
	type=pathlib.Path,
)
argp.add_argument('--set',
	help='Override a config key, like `--set identification.p_grid=1:20`.  May be repeated.',
	action='append',
	default=[],
	dest='overrides',
	metavar='KEY=VALUE',
)
argp.add_argument('--debug',
	help='Enable debug logging.  Overrides --verbose',
	action='store_true',
)
argp.add_argument('--verbose',
	help='Enable verbose logging.',
	action='store_true',
)

# Subcommands that work on a model also take this
argm = argparse.ArgumentParser(
	add_help=False,
)
argm.add_argument('--model',
	help='An exported model directory.  Default is to use `<output_dir>/model`, building it if needed.',
	type=pathlib.Path,
)


def _make_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(
		prog='platedm',
		description='Faceplate deformable-mirror modelling and identification',
	)
	commands = parser.add_subparsers(
		dest='command',
		required=True,
	)

	build = commands.add_parser('build-model',
		parents=[argp],
		help='Assemble and export the mirror model.',
	)
	build.add_argument('--model-out',
		help='Where to export the model.  Default is `<output_dir>/model`.',
		type=pathlib.Path,
	)

	steady = commands.add_parser('steady-state',
		parents=[argp, argm],
		help='Find actuator forces for Zernike targets.',
	)
	steady.add_argument('--mode',
		help='A mode like `Z2^0`.  May be repeated; replaces the configured modes.',
		action='append',
		dest='modes',
	)
	steady.add_argument('--amplitude',
		help='Target amplitude, in m.',
		type=float,
	)
	steady.add_argument('--tol',
		help='Least-squares certificate tolerance.',
		type=float,
	)
	steady.add_argument('--demo',
		help='Also write the deflection from the five-actuator demonstration pattern.',
		action='store_true',
	)

	simulate = commands.add_parser('simulate',
		parents=[argp, argm],
		help='Simulate one trajectory.',
	)
	simulate.add_argument('--f', type=int, help='Number of samples.')
	simulate.add_argument('--h', type=float, help='Time step, in s.')
	simulate.add_argument('--seed', type=int, help='Random seed.  Default is the training seed.')
	simulate.add_argument('--snr', type=float, help='Per-channel signal-to-noise variance ratio.')
	simulate.add_argument('--input-std', type=float, help='Force standard deviation, in N.')
	simulate.add_argument('--init-std', type=float, help='Initial displacement standard deviation, in m.')
	simulate.add_argument('--name',
		help='Base name of the trajectory files.',
		default='trajectory',
	)

	commands.add_parser('fit',
		parents=[argp, argm],
		help='Generate data, fit predictors, and select the past window.',
	)

	validate = commands.add_parser('validate',
		parents=[argp],
		help='Evaluate a saved predictor on a saved trajectory.',
	)
	validate.add_argument('--predictor',
		help='A predictor JSON file written by `fit`.',
		type=pathlib.Path,
		required=True,
	)
	validate.add_argument('--trajectory',
		help='A trajectory CSV file written by `simulate` or `fit`.',
		type=pathlib.Path,
		required=True,
	)

	commands.add_parser('report',
		parents=[argp],
		help='Redraw charts from CSV files in the output directory.',
	)
	return parser


# Helpers

def build_model(config: ExperimentConfig) -> SecondOrderModel:
	"""Assemble the model a config describes."""
	material = config.material.to_spec()
	actuator = config.actuator.to_spec()
	grid = build_grid(material, config.grid.node_pitch, config.grid.boundary)
	layout = build_layout(actuator)
	return assemble_model(
		grid, material, actuator, layout,
		obs_radius=config.observation.obs_radius,
		rayleigh_alpha=config.grid.rayleigh_alpha,
		rayleigh_beta=config.grid.rayleigh_beta,
	)


def _obtain_model(
	args: argparse.Namespace,
	config: ExperimentConfig,
	manifest: RunManifest,
) -> tuple[SecondOrderModel, str]:
	"""Load the model, or build and export it.

	:returns: The model, and the hash of its exported files.
	"""
	directory = args.model
	if directory is None:
		directory = config.output_path / MODEL_DIRECTORY
		if not (directory / artifacts.MODEL_HEADER).exists():
			info(f"No model in {directory}; building one")
			with manifest.timed('build model'):
				model = build_model(config)
				manifest.add(artifacts.export_model(model, directory))
	with manifest.timed('load model'):
		model = artifacts.load_model(directory)
	return model, artifacts.model_hash(directory)


def _zernike_map(
	model: SecondOrderModel,
	config: ExperimentConfig,
) -> ZernikeMap:
	return build_zernike_map(model.observed_points, config.observation.modes, model.obs_radius)


# Subcommands

def cmd_build_model(
	args: argparse.Namespace,
	config: ExperimentConfig,
	manifest: RunManifest,
) -> int:
	directory = args.model_out or (config.output_path / MODEL_DIRECTORY)
	with manifest.timed('build model'):
		model = build_model(config)
	manifest.add(artifacts.export_model(model, directory))
	print(f"n={model.n} m={model.m} r={model.r}")
	print(f"model hash {artifacts.model_hash(directory)}")
	return EXIT_OK


def cmd_steady_sweep(
	args: argparse.Namespace,
	config: ExperimentConfig,
	manifest: RunManifest,
) -> int:
	names = args.modes if args.modes is not None else config.steady_state.modes
	if len(names) == 0:
		print('No modes to sweep.', file=sys.stderr)
		return EXIT_CONFIG
	try:
		modes = [parse_mode(name) for name in names]
	except ValueError as e:
		print(f"Bad mode: {e}", file=sys.stderr)
		return EXIT_CONFIG
	amplitude = args.amplitude if args.amplitude is not None else config.steady_state.amplitude
	if amplitude == 0.0:
		print('The amplitude must be non-zero; the relative error is undefined.', file=sys.stderr)
		return EXIT_CONFIG
	tol = args.tol if args.tol is not None else config.steady_state.tol
	if not tol > 0:
		print('The tolerance must be positive.', file=sys.stderr)
		return EXIT_CONFIG

	model, _ = _obtain_model(args, config, manifest)
	zmap = _zernike_map(model, config)
	output = config.output_path
	with manifest.timed('steady-state sweep'):
		rows = sweep_modes(
			model, zmap, modes,
			amplitude=amplitude,
			tol=tol,
			max_iter=config.steady_state.max_iter,
			threads=thread_count(),
		)

	table = artifacts.sweep_table(rows)
	manifest.add(artifacts.write_table(output / 'steady_state.csv', table))
	manifest.add(artifacts.write_table(
		output / 'steady_state_forces.csv',
		artifacts.forces_table(rows, model.layout),
	))
	manifest.add(plots.plot_sweep_errors(table, output / 'steady_state.svg'))

	observed = model.observed_points
	for row in rows:
		slug = row.mode.name.replace('^', '_')
		manifest.add(plots.plot_field(
			model.layout.positions, row.u,
			output / f"forces_{slug}.svg",
			title=f"Actuator forces for {row.mode.name}",
			label='Force [N]',
		))
		maps = {
			'desired': row.y_d,
			'produced': row.y_star,
			'error': row.y_d - row.y_star,
		}
		manifest.add(artifacts.write_table(
			output / f"wavefront_{slug}.csv",
			artifacts.deflection_table(observed, maps),
		))
		manifest.add(plots.plot_field(
			model.grid.nodes, row.z,
			output / f"deflection_{slug}.svg",
			title=f"Plate deflection for {row.mode.name}",
			label='Deflection [m]',
		))
		status = '' if row.converged else ' (not converged)'
		print(f"{row.mode.name} e={row.e:.6e} residual={row.residual_norm:.3e} iterations={row.iterations}{status}")

	if args.demo:
		forces = demo_forces(model.layout)
		deflection = static_deflection(model, forces)
		manifest.add(artifacts.write_table(
			output / 'demo_deflection.csv',
			artifacts.deflection_table(model.grid.nodes, {'z': deflection}),
		))
		manifest.add(plots.plot_field(
			model.grid.nodes, deflection,
			output / 'demo_deflection.svg',
			title='Five-actuator demonstration',
			label='Deflection [m]',
		))
		info(f"Demonstration peak deflection {float(np.max(np.abs(apply_control(model, forces)))):.3e} m")
	return EXIT_OK


def cmd_simulate(
	args: argparse.Namespace,
	config: ExperimentConfig,
	manifest: RunManifest,
) -> int:
	sim = config.simulation
	f = args.f if args.f is not None else sim.f
	h = args.h if args.h is not None else sim.h
	seed = args.seed if args.seed is not None else config.seeds.train
	snr = args.snr if args.snr is not None else sim.snr
	input_std = args.input_std if args.input_std is not None else sim.input_std
	init_std = args.init_std if args.init_std is not None else sim.init_std
	if f < 2 or not h > 0 or input_std < 0 or init_std < 0 or seed < 0:
		print('Need f >= 2, h > 0, a non-negative seed, and non-negative standard deviations.', file=sys.stderr)
		return EXIT_CONFIG
	if snr is not None and not snr > 0:
		print('The signal-to-noise ratio must be positive.', file=sys.stderr)
		return EXIT_CONFIG

	model, digest = _obtain_model(args, config, manifest)
	zmap = _zernike_map(model, config)
	with manifest.timed('simulate'):
		traj = generate_dataset(model, zmap, h, f, seed, input_std, init_std)
		if snr is not None:
			traj = with_noise(traj, snr, seed)
	manifest.add(artifacts.write_trajectory(
		traj, config.output_path / f"{args.name}.csv", model_digest=digest,
	))
	print(f"Wrote {traj.f} samples of {traj.m} inputs and {traj.l} outputs")
	return EXIT_OK


def _datasets(
	model: SecondOrderModel,
	zmap: ZernikeMap,
	config: ExperimentConfig,
) -> Datasets:
	sim = config.simulation
	made = []
	for seed in (config.seeds.train, config.seeds.val, config.seeds.test):
		traj = generate_dataset(model, zmap, sim.h, sim.f, seed, sim.input_std, sim.init_std)
		if sim.snr is not None:
			traj = with_noise(traj, sim.snr, seed)
		made.append(traj)
	return Datasets(*made)


def cmd_identify(
	args: argparse.Namespace,
	config: ExperimentConfig,
	manifest: RunManifest,
) -> int:
	ident = config.identification
	if ident.trace_channel >= config.observation.modes:
		print(f"trace_channel must be below {config.observation.modes}.", file=sys.stderr)
		return EXIT_CONFIG
	model, digest = _obtain_model(args, config, manifest)
	zmap = _zernike_map(model, config)
	output = config.output_path

	with manifest.timed('generate datasets'):
		datasets = _datasets(model, zmap, config)
	for name, traj in zip(Datasets._fields, datasets):
		manifest.add(artifacts.write_trajectory(traj, output / f"{name}.csv", model_digest=digest))

	with manifest.timed('select past window'):
		result = select_order(
			datasets,
			ident.p_grid,
			ident.settings(network_seed=config.seeds.network, threads=thread_count()),
		)

	fit_table = artifacts.fit_table(result.reports)
	manifest.add(artifacts.write_table(output / 'fit_report.csv', fit_table))
	manifest.add(plots.plot_selection(fit_table, output / 'selection.svg'))
	for fit in result.fits:
		p = fit.report.p
		manifest.add(artifacts.write_predictor(
			fit.predictor,
			output / f"predictor_p{p}.json",
			metadata={
				'model_hash': digest,
				'train_seed': config.seeds.train,
				'network_seed': config.seeds.network,
				'estimator': fit.report.estimator,
				'best_epoch': fit.report.history.best_epoch if fit.report.history else None,
			},
		))
		if fit.report.history is not None:
			history = artifacts.history_table(fit.report.history)
			manifest.add(artifacts.write_table(output / f"history_p{p}.csv", history))

	selected = sorted({result.p_aic, result.p_ol})
	for p in selected:
		fit = result.fit_for(p)
		traces = artifacts.trace_table(fit.test_closed, fit.test_open, p, ident.trace_channel)
		manifest.add(artifacts.write_table(output / f"traces_p{p}.csv", traces))
		manifest.add(plots.plot_traces(
			traces, output / f"traces_p{p}.svg",
			title=f"Test-set predictions of q_{ident.trace_channel}, p={p}",
		))
		acf = artifacts.acf_table(fit.report.whiteness)
		manifest.add(artifacts.write_table(output / f"acf_p{p}.csv", acf))
		manifest.add(plots.plot_acf(acf, f"q_{ident.trace_channel}", output / f"acf_p{p}.svg"))

	chosen = result.fit_for(result.p_ol).report
	summary = {
		'p_aic': result.p_aic,
		'p_ol': result.p_ol,
		'estimator': ident.estimator,
		'snr': config.simulation.snr,
		'eps_cl': chosen.test_eps_cl,
		'eps_ol': chosen.test_eps_ol if np.isfinite(chosen.test_eps_ol) else None,
		'outside_fraction': chosen.outside_fraction,
		'whiteness_bound': chosen.whiteness.bound,
		'model_hash': digest,
	}
	manifest.add(artifacts.write_json(output / 'summary.json', summary))
	print(f"p by AIC: {result.p_aic}")
	print(f"p by open-loop error: {result.p_ol}")
	print(f"test eps_cl={chosen.test_eps_cl:.4e} eps_ol={chosen.test_eps_ol:.4e} outside={chosen.outside_fraction:.2%}")
	return EXIT_OK


def cmd_validate(
	args: argparse.Namespace,
	config: ExperimentConfig,
	manifest: RunManifest,
) -> int:
	try:
		predictor = artifacts.read_predictor(args.predictor)
		traj = artifacts.read_trajectory(args.trajectory)
	except (OSError, KeyError, ValueError) as e:
		print(f"Cannot read inputs: {e}", file=sys.stderr)
		return EXIT_CONFIG
	closed = predict_closed_loop(predictor, traj)
	open_loop = predict_open_loop(predictor, traj)
	whiteness = residual_whiteness(closed.residuals, config.identification.max_lag)
	output = config.output_path
	stem = args.predictor.stem
	manifest.add(artifacts.write_json(output / f"validation_{stem}.json", {
		'predictor': str(args.predictor),
		'trajectory': str(args.trajectory),
		'p': predictor.p,
		'eps_cl': closed.eps,
		'eps_ol': open_loop.eps if np.isfinite(open_loop.eps) else None,
		'diverged': open_loop.diverged,
		'outside_fraction': whiteness.outside_fraction,
		'whiteness_bound': whiteness.bound,
		'ljung_box_pvalues': [
			None if np.isnan(value) else float(value)
			for value in whiteness.ljung_box_pvalues
		],
	}))
	manifest.add(artifacts.write_table(
		output / f"validation_{stem}_traces.csv",
		artifacts.trace_table(closed, open_loop, predictor.p, config.identification.trace_channel),
	))
	print(f"eps_cl={closed.eps:.4e} eps_ol={open_loop.eps:.4e} outside={whiteness.outside_fraction:.2%}")
	return EXIT_OK


def cmd_report(
	args: argparse.Namespace,
	config: ExperimentConfig,
	manifest: RunManifest,
) -> int:
	output = config.output_path
	drawn = 0
	sweep = output / 'steady_state.csv'
	if sweep.exists():
		manifest.add(plots.plot_sweep_errors(artifacts.read_table(sweep), output / 'steady_state.svg'))
		drawn += 1
	fits = output / 'fit_report.csv'
	if fits.exists():
		manifest.add(plots.plot_selection(artifacts.read_table(fits), output / 'selection.svg'))
		drawn += 1
	for path in sorted(output.glob('history_p*.csv')):
		manifest.add(plots.plot_history(
			artifacts.read_table(path), path.with_suffix('.svg'),
			title=f"Training history, {path.stem.removeprefix('history_')}",
		))
		drawn += 1
	for path in sorted(output.glob('traces_p*.csv')):
		manifest.add(plots.plot_traces(
			artifacts.read_table(path), path.with_suffix('.svg'),
			title=f"Test-set predictions, {path.stem.removeprefix('traces_')}",
		))
		drawn += 1
	for path in sorted(output.glob('acf_p*.csv')):
		table = artifacts.read_table(path)
		channel = f"q_{config.identification.trace_channel}"
		if channel in table.columns:
			manifest.add(plots.plot_acf(table, channel, path.with_suffix('.svg')))
			drawn += 1
	print(f"Drew {drawn} charts")
	return EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace, ExperimentConfig, RunManifest], int]] = {
	'build-model': cmd_build_model,
	'steady-state': cmd_steady_sweep,
	'simulate': cmd_simulate,
	'fit': cmd_identify,
	'validate': cmd_validate,
	'report': cmd_report,
}


def run(argv: list[str] | None = None) -> int:
	"""Run a subcommand, and return its exit code."""
	args = _make_parser().parse_args(argv)

	# Do top-level (program-level) logging configuration
	logging.basicConfig(
		level=(
			'DEBUG' if args.debug is True else (
				'INFO' if args.verbose is True else 'WARNING'
			)
		),
	)

	try:
		config = load_config(args.config, args.overrides)
		thread_count()
	except ConfigError as e:
		print(f"Configuration error: {e}", file=sys.stderr)
		return EXIT_CONFIG

	output = config.output_path
	output.mkdir(parents=True, exist_ok=True)
	manifest = RunManifest(
		command=args.command,
		config_hash=config_hash(config),
		output_dir=output,
	)
	resolved = output / 'config.resolved.json'
	resolved.write_text(resolved_json(config))
	manifest.add(resolved)

	try:
		code = COMMANDS[args.command](args, config, manifest)
	except ConfigError as e:
		print(f"Configuration error: {e}", file=sys.stderr)
		return EXIT_CONFIG
	except (NumericalError, ModelError, ProjectionError, ControlError) as e:
		debug('Numerical failure', exc_info=True)
		print(f"Numerical failure: {e}", file=sys.stderr)
		return EXIT_NUMERICAL
	except ValueError as e:
		debug('Invalid input', exc_info=True)
		print(f"Invalid input: {e}", file=sys.stderr)
		return EXIT_CONFIG

	manifest.write()
	return code


def main() -> NoReturn:
	sys.exit(run())
