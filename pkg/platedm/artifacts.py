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

"""Files that platedm reads and writes

Numbers are always written with 17 significant digits, so they read back
exactly.  JSON is written with sorted keys.  Together with the keyed random
streams, re-running a command gives byte-identical files.
"""

# Stdlib imports
import dataclasses
import hashlib
import json
import logging
import pathlib
from collections.abc import Sequence
from typing import Any

# PyPi imports
import numpy as np
import numpy.typing as npt
import pandas as pd
import scipy.sparse

# Local imports
from platedm.exceptions import *
from platedm.mirror.plate_model import (
	ActuatorLayout,
	ActuatorSpec,
	BoundaryMode,
	MaterialSpec,
	SecondOrderModel,
	build_grid,
)
from platedm.mirror.simulate import Trajectory
from platedm.mirror.steady_state import SweepRow
from platedm.sysid.network import TrainingHistory
from platedm.sysid.prediction import Prediction, Predictor, predictor_from_dict
from platedm.sysid.selection import FitReport
from platedm.sysid.validation import WhitenessReport

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

FLOAT_FORMAT = '%.17g'
MATRIX_NAMES = ('M1', 'M2', 'M3', 'B', 'C')
MODEL_HEADER = 'model.json'


def write_json(path: pathlib.Path, data: Any) -> pathlib.Path:
	path.write_text(json.dumps(data, sort_keys=True, indent=2) + '\n')
	debug(f"Wrote {path}")
	return path


def write_table(path: pathlib.Path, table: pd.DataFrame) -> pathlib.Path:
	table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
	debug(f"Wrote {path}")
	return path


def read_table(path: pathlib.Path, **kwargs: Any) -> pd.DataFrame:
	return pd.read_csv(path, float_precision='round_trip', **kwargs)


def file_hash(path: pathlib.Path) -> str:
	return hashlib.sha256(path.read_bytes()).hexdigest()


# Models

def _write_coo(path: pathlib.Path, matrix: scipy.sparse.spmatrix) -> pathlib.Path:
	coo = scipy.sparse.coo_matrix(matrix)
	order = np.lexsort((coo.col, coo.row))
	table = pd.DataFrame({
		'row': coo.row[order],
		'col': coo.col[order],
		'value': coo.data[order],
	})
	table.to_csv(path, sep=' ', index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
	return path


def _read_coo(path: pathlib.Path, shape: tuple[int, int]) -> scipy.sparse.csr_matrix:
	table = read_table(path, sep=' ')
	matrix = scipy.sparse.coo_matrix(
		(
			table['value'].to_numpy(dtype=np.float64),
			(table['row'].to_numpy(dtype=np.int64), table['col'].to_numpy(dtype=np.int64)),
		),
		shape=shape,
	).tocsr()
	matrix.sort_indices()
	return matrix


def export_model(
	model: SecondOrderModel,
	directory: pathlib.Path,
) -> list[pathlib.Path]:
	"""Write the five matrices as `row col value` text, plus a JSON header.

	:returns: Every file written.
	"""
	directory.mkdir(parents=True, exist_ok=True)
	assert model.layout.node_index is not None
	header = {
		'n': model.n,
		'm': model.m,
		'r': model.r,
		'node_pitch': model.grid.node_pitch,
		'boundary_mode': model.grid.boundary_mode.value,
		'obs_radius': model.obs_radius,
		'material': dataclasses.asdict(model.material),
		'actuator': dataclasses.asdict(model.actuator),
		'actuator_lattice': model.layout.lattice.tolist(),
		'actuator_nodes': model.layout.node_index.tolist(),
		'observed_nodes': model.observed_nodes.tolist(),
		'flexural_rigidity': model.material.flexural_rigidity,
	}
	written = [write_json(directory / MODEL_HEADER, header)]
	for name in MATRIX_NAMES:
		written.append(_write_coo(directory / f"{name}.coo", getattr(model, name)))
	info(f"Exported model (n={model.n}, m={model.m}, r={model.r}) to {directory}")
	return written


def load_model(directory: pathlib.Path) -> SecondOrderModel:
	"""Read a model written by `export_model`.

	:raises ModelError: The files are missing or inconsistent.
	"""
	try:
		header = json.loads((directory / MODEL_HEADER).read_text())
	except OSError as e:
		raise ModelError(f"No model in {directory}: {e.strerror}")
	material = MaterialSpec(**header['material'])
	actuator = ActuatorSpec(**header['actuator'])
	grid = build_grid(material, header['node_pitch'], BoundaryMode(header['boundary_mode']))
	n, m, r = header['n'], header['m'], header['r']
	if grid.n != n:
		raise ModelError(f"The header says n={n}, but the grid has {grid.n} nodes")
	layout = ActuatorLayout(
		lattice=np.asarray(header['actuator_lattice'], dtype=np.int64).reshape(-1, 2),
		pitch=actuator.pitch,
		node_index=np.asarray(header['actuator_nodes'], dtype=np.int64),
	)
	shapes = {
		'M1': (n, n),
		'M2': (n, n),
		'M3': (n, n),
		'B': (n, m),
		'C': (r, n),
	}
	matrices = {}
	for name in MATRIX_NAMES:
		try:
			matrices[name] = _read_coo(directory / f"{name}.coo", shapes[name])
		except OSError as e:
			raise ModelError(f"Cannot read {name} from {directory}: {e.strerror}")
	return SecondOrderModel(
		grid=grid,
		layout=layout,
		obs_radius=header['obs_radius'],
		material=material,
		actuator=actuator,
		**matrices,
	)


def model_hash(directory: pathlib.Path) -> str:
	"""Hash every file of an exported model."""
	digest = hashlib.sha256()
	for name in (MODEL_HEADER,) + tuple(f"{name}.coo" for name in MATRIX_NAMES):
		digest.update(name.encode('utf-8'))
		digest.update((directory / name).read_bytes())
	return digest.hexdigest()


# Trajectories

def write_trajectory(
	traj: Trajectory,
	path: pathlib.Path,
	model_digest: str | None = None,
) -> list[pathlib.Path]:
	"""Write `k, u_0 … u_{m-1}, q_0 … q_{l-1}` as CSV, with a JSON sidecar."""
	columns: dict[str, Any] = {'k': np.arange(traj.f)}
	for index in range(traj.m):
		columns[f"u_{index}"] = traj.U[index]
	for index in range(traj.l):
		columns[f"q_{index}"] = traj.Q[index]
	written = [write_table(path, pd.DataFrame(columns))]
	if traj.Q_clean is not None:
		clean = pd.DataFrame({'k': np.arange(traj.f)})
		for index in range(traj.l):
			clean[f"q_{index}"] = traj.Q_clean[index]
		written.append(write_table(path.with_name(path.stem + '.clean.csv'), clean))
	sidecar = {
		'h': traj.h,
		'f': traj.f,
		'l': traj.l,
		'm': traj.m,
		'model_hash': model_digest,
		'has_clean': traj.Q_clean is not None,
		**traj.meta,
	}
	written.append(write_json(path.with_suffix('.json'), sidecar))
	return written


def read_trajectory(path: pathlib.Path) -> Trajectory:
	"""Read a trajectory written by `write_trajectory`."""
	sidecar = json.loads(path.with_suffix('.json').read_text())
	table = read_table(path)
	l, m = sidecar['l'], sidecar['m']
	U = np.vstack([table[f"u_{index}"].to_numpy(dtype=np.float64) for index in range(m)])
	Q = np.vstack([table[f"q_{index}"].to_numpy(dtype=np.float64) for index in range(l)])
	Q_clean = None
	if sidecar.get('has_clean'):
		clean = read_table(path.with_name(path.stem + '.clean.csv'))
		Q_clean = np.vstack([clean[f"q_{index}"].to_numpy(dtype=np.float64) for index in range(l)])
	meta = {
		key: value
		for key, value in sidecar.items()
		if key not in ('h', 'f', 'l', 'm', 'has_clean')
	}
	return Trajectory(
		h=float(sidecar['h']),
		U=U,
		Q=Q,
		Q_clean=Q_clean,
		meta=meta,
	)


# Predictors

def write_predictor(
	predictor: Predictor,
	path: pathlib.Path,
	metadata: dict[str, Any] | None = None,
) -> pathlib.Path:
	return write_json(path, {**predictor.to_dict(), 'metadata': metadata or {}})


def read_predictor(path: pathlib.Path) -> Predictor:
	"""Read a predictor written by `write_predictor`."""
	return predictor_from_dict(json.loads(path.read_text()))


# Reports

def sweep_table(rows: Sequence[SweepRow]) -> pd.DataFrame:
	return pd.DataFrame({
		'mode': [row.mode.name for row in rows],
		'noll_j': [row.mode.noll_j for row in rows],
		'e': [row.e for row in rows],
		'residual': [row.residual_norm for row in rows],
		'iterations': [row.iterations for row in rows],
		'certificate': [row.certificate for row in rows],
		'converged': [row.converged for row in rows],
	})


def forces_table(rows: Sequence[SweepRow], layout: ActuatorLayout) -> pd.DataFrame:
	table = pd.DataFrame({
		'actuator': np.arange(layout.count),
		'x': layout.positions[:, 0],
		'y': layout.positions[:, 1],
	})
	for row in rows:
		table[row.mode.name] = row.u
	return table


def fit_table(reports: Sequence[FitReport]) -> pd.DataFrame:
	return pd.DataFrame({
		'p': [report.p for report in reports],
		'estimator': [report.estimator for report in reports],
		'num_params': [report.num_params for report in reports],
		'eps_cl': [report.eps_cl for report in reports],
		'eps_ol': [report.eps_ol for report in reports],
		'test_eps_cl': [report.test_eps_cl for report in reports],
		'test_eps_ol': [report.test_eps_ol for report in reports],
		'aic': [report.aic for report in reports],
		'train_mse': [report.train_mse for report in reports],
		'outside_fraction': [report.outside_fraction for report in reports],
		'min_ljung_box_pvalue': [
			float(np.nanmin(report.whiteness.ljung_box_pvalues))
			if np.any(~np.isnan(report.whiteness.ljung_box_pvalues)) else np.nan
			for report in reports
		],
		'best_epoch': [
			report.history.best_epoch if report.history is not None else 0
			for report in reports
		],
		'diverged': [report.diverged for report in reports],
	})


def history_table(history: TrainingHistory) -> pd.DataFrame:
	return pd.DataFrame({
		'epoch': np.arange(1, history.train_mse.size + 1),
		'train_mse': history.train_mse,
		'val_mse': history.val_mse,
	})


def acf_table(whiteness: WhitenessReport) -> pd.DataFrame:
	table = pd.DataFrame({'lag': np.arange(1, whiteness.max_lag + 1)})
	for channel in range(whiteness.acf.shape[0]):
		table[f"q_{channel}"] = whiteness.acf[channel]
	table['bound'] = whiteness.bound
	return table


def trace_table(
	closed: Prediction,
	open_loop: Prediction,
	p: int,
	channel: int,
) -> pd.DataFrame:
	"""Measured, closed-loop and open-loop values of one output channel."""
	if not 0 <= channel < closed.targets.shape[1]:
		raise ValueError(f"There is no output channel {channel}")
	return pd.DataFrame({
		'k': np.arange(p, p + closed.targets.shape[0]),
		'measured': closed.targets[:, channel],
		'closed_loop': closed.values[:, channel],
		'open_loop': open_loop.values[:, channel],
	})


def deflection_table(
	nodes: npt.NDArray[np.float64],
	columns: dict[str, npt.NDArray[np.float64]],
) -> pd.DataFrame:
	table = pd.DataFrame({'x': nodes[:, 0], 'y': nodes[:, 1]})
	for name, values in columns.items():
		table[name] = values
	return table
