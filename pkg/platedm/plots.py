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

"""SVG charts

Charts are drawn from the same tables that get written as CSV.  The SVG
writer is pinned (fixed hash salt, no date) so charts are reproducible.
"""

# Stdlib imports
import logging
import pathlib

# PyPi imports
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import numpy.typing as npt
import pandas as pd

# Set up logging
logger = logging.getLogger(__name__)
debug = logger.debug

matplotlib.rcParams['svg.hashsalt'] = 'platedm'


def _save(figure: plt.Figure, path: pathlib.Path) -> pathlib.Path:
	figure.tight_layout()
	figure.savefig(path, format='svg', metadata={'Date': None})
	plt.close(figure)
	debug(f"Wrote {path}")
	return path


def plot_sweep_errors(
	table: pd.DataFrame,
	path: pathlib.Path,
	title: str = 'Steady-state wavefront error',
) -> pathlib.Path:
	"""Bar chart of the relative error per mode, on a log scale."""
	figure, axes = plt.subplots(figsize=(6, 4))
	axes.bar(table['mode'], table['e'], color='tab:blue')
	axes.set_yscale('log')
	axes.set_xlabel('Mode')
	axes.set_ylabel('Relative error e')
	axes.set_title(title)
	return _save(figure, path)


def plot_field(
	points: npt.NDArray[np.float64],
	values: npt.NDArray[np.float64],
	path: pathlib.Path,
	title: str,
	label: str,
) -> pathlib.Path:
	"""Colour map of a quantity sampled at points, such as forces or deflections."""
	figure, axes = plt.subplots(figsize=(5, 4.5))
	limit = float(np.max(np.abs(values))) or 1.0
	scatter = axes.scatter(
		points[:, 0], points[:, 1],
		c=values,
		cmap='coolwarm',
		vmin=-limit,
		vmax=limit,
		s=18,
	)
	figure.colorbar(scatter, ax=axes, label=label)
	axes.set_aspect('equal')
	axes.set_xlabel('x [m]')
	axes.set_ylabel('y [m]')
	axes.set_title(title)
	return _save(figure, path)


def plot_selection(
	table: pd.DataFrame,
	path: pathlib.Path,
) -> pathlib.Path:
	"""Closed- and open-loop error (log) and AIC against the past window."""
	figure, axes = plt.subplots(figsize=(6, 4))
	axes.semilogy(table['p'], table['eps_cl'], marker='o', label='closed loop')
	axes.semilogy(table['p'], table['eps_ol'].replace(np.inf, np.nan), marker='s', label='open loop')
	axes.set_xlabel('Past window p')
	axes.set_ylabel('Relative error')
	other = axes.twinx()
	other.plot(table['p'], table['aic'], color='tab:green', marker='^', label='AIC')
	other.set_ylabel('AIC')
	lines = axes.get_lines() + other.get_lines()
	axes.legend(lines, [line.get_label() for line in lines], loc='upper right')  # type: ignore[misc]
	axes.set_title('Past-window selection')
	return _save(figure, path)


def plot_traces(
	table: pd.DataFrame,
	path: pathlib.Path,
	title: str,
) -> pathlib.Path:
	"""Measured output against closed- and open-loop predictions."""
	figure, axes = plt.subplots(figsize=(7, 3.5))
	axes.plot(table['k'], table['measured'], label='measured', linewidth=1.0)
	axes.plot(table['k'], table['closed_loop'], label='closed loop', linewidth=0.8)
	axes.plot(table['k'], table['open_loop'], label='open loop', linewidth=0.8, linestyle='--')
	axes.set_xlabel('Step k')
	axes.set_ylabel('Coefficient')
	axes.legend(loc='upper right')
	axes.set_title(title)
	return _save(figure, path)


def plot_acf(
	table: pd.DataFrame,
	channel: str,
	path: pathlib.Path,
) -> pathlib.Path:
	"""Residual autocorrelation of one channel, with the ±1.96/√N band."""
	figure, axes = plt.subplots(figsize=(6, 3.5))
	axes.vlines(table['lag'], 0.0, table[channel], color='tab:blue')
	bound = float(table['bound'].iloc[0])
	axes.axhline(bound, color='tab:red', linestyle='--')
	axes.axhline(-bound, color='tab:red', linestyle='--')
	axes.set_xlabel('Lag')
	axes.set_ylabel('Autocorrelation')
	axes.set_title(f"Residual autocorrelation, {channel}")
	return _save(figure, path)


def plot_history(
	table: pd.DataFrame,
	path: pathlib.Path,
	title: str,
) -> pathlib.Path:
	"""Training and validation MSE per epoch."""
	figure, axes = plt.subplots(figsize=(6, 3.5))
	axes.semilogy(table['epoch'], table['train_mse'], label='training')
	axes.semilogy(table['epoch'], table['val_mse'], label='validation')
	axes.set_xlabel('Epoch')
	axes.set_ylabel('MSE (scaled units)')
	axes.legend(loc='upper right')
	axes.set_title(title)
	return _save(figure, path)
