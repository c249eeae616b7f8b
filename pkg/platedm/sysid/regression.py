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

"""Regression layout shared by every predictor

Row k of the regressor matrix is

	[q_{k−1}ᵀ, …, q_{k−p}ᵀ, u_{k−1}ᵀ, …, u_{k−p}ᵀ]

(outputs first, newest lag first), and row k of the target is q_kᵀ, for
k = p … f−1.
"""

# Stdlib imports
import dataclasses
import logging
from typing import Any

# PyPi imports
import numpy as np
import numpy.typing as npt

# Local imports
from platedm.mirror.simulate import Trajectory

# Set up logging
logger = logging.getLogger(__name__)
debug = logger.debug

FloatArray = npt.NDArray[np.float64]


@dataclasses.dataclass(frozen=True, eq=False)
class Scaling:
	"""Per-channel scale factors.

	Channels are divided by their scale before fitting.  There is no
	centring, so linear maps without intercepts stay without intercepts.
	"""

	q_scale: FloatArray
	u_scale: FloatArray

	@classmethod
	def identity(cls, l: int, m: int) -> 'Scaling':
		return cls(q_scale=np.ones(l), u_scale=np.ones(m))

	@classmethod
	def fit(cls, traj: Trajectory) -> 'Scaling':
		"""Use each channel's RMS over a trajectory (1 for silent channels)."""
		q_scale = np.sqrt(np.mean(traj.Q**2, axis=1))
		u_scale = np.sqrt(np.mean(traj.U**2, axis=1))
		q_scale[q_scale == 0.0] = 1.0
		u_scale[u_scale == 0.0] = 1.0
		return cls(q_scale=q_scale, u_scale=u_scale)

	def regressor_scale(self, p: int) -> FloatArray:
		"""The scale of every regressor column for a past window p."""
		return np.concatenate((np.tile(self.q_scale, p), np.tile(self.u_scale, p)))

	def to_dict(self) -> dict[str, Any]:
		return {
			'q_scale': self.q_scale.tolist(),
			'u_scale': self.u_scale.tolist(),
		}

	@classmethod
	def from_dict(cls, data: dict[str, Any]) -> 'Scaling':
		return cls(
			q_scale=np.asarray(data['q_scale'], dtype=np.float64),
			u_scale=np.asarray(data['u_scale'], dtype=np.float64),
		)


@dataclasses.dataclass(frozen=True, eq=False)
class RegressionSet:
	"""Regressors and targets, in scaled units."""

	Phi: FloatArray
	"""Shape (f−p, p(l+m))."""

	T: FloatArray
	"""Shape (f−p, l)."""

	p: int
	l: int
	m: int
	scaling: Scaling

	@property
	def rows(self) -> int:
		return int(self.T.shape[0])


def regressor_matrix(
	Q: FloatArray,
	U: FloatArray,
	p: int,
) -> FloatArray:
	"""Stack lagged outputs and inputs, one row per k = p … f−1."""
	f = Q.shape[1]
	blocks = [Q[:, p - i:f - i].T for i in range(1, p + 1)]
	blocks += [U[:, p - i:f - i].T for i in range(1, p + 1)]
	return np.hstack(blocks)


def build_regressors(
	traj: Trajectory,
	p: int,
	scaling: Scaling | None = None,
) -> RegressionSet:
	"""Build the regression problem for a past window `p`.

	:param traj: The trajectory.

	:param p: The past window.

	:param scaling: Channel scales; none means physical units.

	:returns: The regression set.

	:raises ValueError: `p` is outside 1 … f−1.
	"""
	if p < 1:
		raise ValueError(f"The past window must be at least 1, got {p}")
	if p >= traj.f:
		raise ValueError(f"The past window {p} needs more than {traj.f} samples")
	if scaling is None:
		scaling = Scaling.identity(traj.l, traj.m)
	Q = traj.Q / scaling.q_scale[:, None]
	U = traj.U / scaling.u_scale[:, None]
	Phi = regressor_matrix(Q, U, p)
	T = Q[:, p:].T.copy()
	debug(f"Regressors for p={p}: {Phi.shape[0]} rows, {Phi.shape[1]} columns")
	return RegressionSet(
		Phi=Phi,
		T=T,
		p=p,
		l=traj.l,
		m=traj.m,
		scaling=scaling,
	)
