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

"""Past-window selection

One predictor is fitted per candidate past window.  Two rules pick a
winner: the smallest AIC (on training residuals), and the smallest
open-loop error on the validation set.  Ties go to the smaller window.
"""

# Stdlib imports
import concurrent.futures
import dataclasses
import logging
import math
from collections.abc import Sequence
from typing import NamedTuple

# PyPi imports
import numpy as np

# Local imports
from platedm.exceptions import *
from platedm.mirror.simulate import Trajectory
from platedm.sysid.network import TrainingHistory, init_network, train_network
from platedm.sysid.prediction import (
	Prediction,
	Predictor,
	predict_closed_loop,
	predict_open_loop,
)
from platedm.sysid.regression import Scaling, build_regressors
from platedm.sysid.validation import WhitenessReport, compute_aic, residual_whiteness
from platedm.sysid.varx import fit_varx

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug


class Datasets(NamedTuple):
	train: Trajectory
	val: Trajectory
	test: Trajectory


@dataclasses.dataclass(frozen=True)
class SelectionSettings:
	"""How each candidate predictor is fitted and judged."""

	estimator: str = 'network'
	"""`network` or `varx`."""

	width: int = 32
	depth: int = 2
	activation: str = 'identity'
	epochs: int = 5000
	lr: float = 1e-3
	batch: int | None = None
	ridge: float = 1e-10
	max_lag: int = 100
	network_seed: int = 4
	aic_floor: float = 1e-10
	"""Added to the standardized residual covariance before the AIC."""

	threads: int = 1

	def __post_init__(self) -> None:
		if self.estimator not in ('network', 'varx'):
			raise ValueError(f"Unknown estimator {self.estimator!r}")


@dataclasses.dataclass(frozen=True, eq=False)
class FitReport:
	"""Everything measured for one past window."""

	p: int
	estimator: str
	num_params: int
	eps_cl: float
	"""Closed-loop relative error on the validation set."""

	eps_ol: float
	"""Open-loop relative error on the validation set."""

	test_eps_cl: float
	test_eps_ol: float
	aic: float
	train_mse: float
	"""Mean squared one-step error on the training set, scaled units."""

	whiteness: WhitenessReport
	"""Of the closed-loop residuals on the test set."""

	history: TrainingHistory | None = None
	diverged: bool = False

	@property
	def outside_fraction(self) -> float:
		return self.whiteness.outside_fraction

	@property
	def residual_acf(self) -> np.ndarray:
		return self.whiteness.acf


@dataclasses.dataclass(frozen=True, eq=False)
class CandidateFit:
	report: FitReport
	predictor: Predictor
	test_closed: Prediction
	test_open: Prediction


@dataclasses.dataclass(frozen=True, eq=False)
class SelectionResult:
	fits: tuple[CandidateFit, ...]
	p_aic: int
	p_ol: int

	@property
	def reports(self) -> list[FitReport]:
		return [fit.report for fit in self.fits]

	def fit_for(self, p: int) -> CandidateFit:
		for fit in self.fits:
			if fit.report.p == p:
				return fit
		raise KeyError(p)


def fit_candidate(
	datasets: Datasets,
	p: int,
	settings: SelectionSettings,
) -> CandidateFit:
	"""Fit and judge one past window."""
	train, val, test = datasets
	scaling = Scaling.fit(train)
	reg_train = build_regressors(train, p, scaling)
	reg_val = build_regressors(val, p, scaling)

	history: TrainingHistory | None = None
	predictor: Predictor
	if settings.estimator == 'varx':
		predictor = fit_varx(reg_train, ridge=settings.ridge)
	else:
		net = init_network(
			p, train.l, train.m,
			width=settings.width,
			depth=settings.depth,
			seed=settings.network_seed,
			activation=settings.activation,
			scaling=scaling,
		)
		predictor, history = train_network(
			net, reg_train, reg_val,
			epochs=settings.epochs,
			lr=settings.lr,
			batch=settings.batch,
			seed=settings.network_seed,
		)

	train_closed = predict_closed_loop(predictor, train)
	scaled_residuals = train_closed.residuals / scaling.q_scale
	aic = compute_aic(scaled_residuals, predictor.num_params, floor=settings.aic_floor)
	val_closed = predict_closed_loop(predictor, val)
	val_open = predict_open_loop(predictor, val)
	test_closed = predict_closed_loop(predictor, test)
	test_open = predict_open_loop(predictor, test)
	whiteness = residual_whiteness(test_closed.residuals, settings.max_lag)

	report = FitReport(
		p=p,
		estimator=settings.estimator,
		num_params=predictor.num_params,
		eps_cl=val_closed.eps,
		eps_ol=val_open.eps,
		test_eps_cl=test_closed.eps,
		test_eps_ol=test_open.eps,
		aic=aic,
		train_mse=float(np.mean(scaled_residuals**2)),
		whiteness=whiteness,
		history=history,
		diverged=val_open.diverged or test_open.diverged,
	)
	info(
		f"p={p}: eps_cl={report.eps_cl:.4e}, eps_ol={report.eps_ol:.4e}, "
		f"AIC={report.aic:.6e}"
	)
	return CandidateFit(
		report=report,
		predictor=predictor,
		test_closed=test_closed,
		test_open=test_open,
	)


def pick_open_loop(reports: Sequence[FitReport]) -> int:
	"""Smallest open-loop error, with near-ties going to the smaller p."""
	best = min(report.eps_ol for report in reports)
	if not math.isfinite(best):
		warning('Every candidate diverged in open loop; picking the smallest p')
		return min(report.p for report in reports)
	slack = max(1e-8, 1e-6 * best)
	return min(report.p for report in reports if report.eps_ol <= best + slack)


def pick_aic(reports: Sequence[FitReport]) -> int:
	"""Smallest AIC, with exact ties going to the smaller p."""
	return min(reports, key=lambda report: (report.aic, report.p)).p


def select_order(
	datasets: Datasets,
	p_grid: Sequence[int],
	settings: SelectionSettings,
) -> SelectionResult:
	"""Fit every candidate past window and pick winners.

	Each candidate uses its own random streams, so the result does not
	depend on the number of threads.

	:raises ValueError: `p_grid` is empty.
	"""
	grid = sorted(set(int(p) for p in p_grid))
	if not grid:
		raise ValueError('The past-window grid is empty')
	info(f"Selecting the past window over {grid} with the {settings.estimator} estimator")

	if settings.threads <= 1 or len(grid) == 1:
		fits = [fit_candidate(datasets, p, settings) for p in grid]
	else:
		with concurrent.futures.ThreadPoolExecutor(max_workers=settings.threads) as pool:
			futures = [pool.submit(fit_candidate, datasets, p, settings) for p in grid]
			fits = [future.result() for future in futures]

	reports = [fit.report for fit in fits]
	p_aic = pick_aic(reports)
	p_ol = pick_open_loop(reports)
	info(f"Selected p={p_aic} by AIC and p={p_ol} by open-loop error")
	return SelectionResult(
		fits=tuple(fits),
		p_aic=p_aic,
		p_ol=p_ol,
	)
