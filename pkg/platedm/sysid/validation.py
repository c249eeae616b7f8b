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

"""Model quality measures: AIC and residual whiteness"""

# Stdlib imports
import dataclasses
import logging
import math

# PyPi imports
import numpy as np
import numpy.typing as npt
from statsmodels.stats.diagnostic import acorr_ljungbox
from statsmodels.tsa.stattools import acf

# Local imports
from platedm.exceptions import *

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

FloatArray = npt.NDArray[np.float64]

CONFIDENCE_Z: float = 1.96


def compute_aic(
	residuals: npt.ArrayLike,
	num_params: int,
	floor: float = 0.0,
) -> float:
	"""Return N·ln det Σ̂ + 2k, with Σ̂ = residualsᵀ·residuals / N.

	:param residuals: Shape (N, l).

	:param num_params: k, the number of fitted parameters.

	:param floor: Added to the diagonal of Σ̂.  Exact fits then compare by
	parameter count instead of by rounding noise.

	:raises ValueError: There are no more rows than channels.

	:raises EstimationError: Σ̂ is singular.
	"""
	R = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
	N, l = R.shape
	if N <= l:
		raise ValueError(f"Need more residual rows ({N}) than channels ({l})")
	sigma = (R.T @ R) / N
	if floor > 0:
		sigma = sigma + floor * np.eye(l)
	sign, logdet = np.linalg.slogdet(sigma)
	if sign <= 0 or not math.isfinite(logdet):
		raise EstimationError(
			'The residual covariance is singular; use more data, fewer outputs, '
			'or a covariance floor'
		)
	return N * float(logdet) + 2.0 * num_params


@dataclasses.dataclass(frozen=True, eq=False)
class WhitenessReport:
	"""Residual autocorrelation against the white-noise band."""

	acf: FloatArray
	"""Shape (l, max_lag); row j holds r_j(1) … r_j(max_lag).  NaN for
	constant channels."""

	bound: float
	"""1.96/√N."""

	outside_fraction: float
	"""The share of (channel, lag) pairs outside ±bound."""

	ljung_box_pvalues: FloatArray
	"""Per channel, at max_lag.  NaN for constant channels."""

	constant_channels: tuple[int, ...] = ()

	@property
	def max_lag(self) -> int:
		return int(self.acf.shape[1])


def residual_whiteness(
	residuals: npt.ArrayLike,
	max_lag: int = 100,
) -> WhitenessReport:
	"""Test each residual channel for whiteness.

	:param residuals: Shape (N, l).

	:param max_lag: The largest lag to examine.

	:raises ValueError: `max_lag` is not below N/4.
	"""
	R = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
	N, l = R.shape
	if max_lag < 1 or 4 * max_lag >= N:
		raise ValueError(f"max_lag must be in [1, N/4) with N={N}, got {max_lag}")
	bound = CONFIDENCE_Z / math.sqrt(N)

	correlations = np.full((l, max_lag), np.nan)
	pvalues = np.full(l, np.nan)
	constant = []
	for j in range(l):
		channel = R[:, j]
		if np.all(channel == channel[0]):
			constant.append(j)
			continue
		correlations[j] = acf(channel, nlags=max_lag, fft=True)[1:]
		table = acorr_ljungbox(channel, lags=[max_lag])
		pvalues[j] = float(table['lb_pvalue'].iloc[0])
	if constant:
		warning(f"Residual channels {constant} are constant; their autocorrelation is undefined")

	usable = correlations[~np.isnan(correlations[:, 0])]
	if usable.size:
		outside = float(np.mean(np.abs(usable) > bound))
	else:
		outside = 0.0
	debug(f"Whiteness: {outside:.2%} of correlations outside ±{bound:.4f}")
	return WhitenessReport(
		acf=correlations,
		bound=bound,
		outside_fraction=outside,
		ljung_box_pvalues=pvalues,
		constant_channels=tuple(constant),
	)
