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

"""Direct least-squares VARX estimation"""

# Stdlib imports
import dataclasses
import logging
from typing import Any

# PyPi imports
import numpy as np
import numpy.typing as npt

# Local imports
from platedm.exceptions import *
from platedm.sysid.regression import RegressionSet

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

FloatArray = npt.NDArray[np.float64]


@dataclasses.dataclass(frozen=True, eq=False)
class VarxModel:
	"""q_k = Σ_i Q_i q_{k−i} + Σ_i U_i u_{k−i}, in physical units.

	There is no intercept.
	"""

	p: int
	Q: FloatArray
	"""Output coefficients, shape (p, l, l); `Q[i-1]` is Q_i."""

	U: FloatArray
	"""Input coefficients, shape (p, l, m); `U[i-1]` is U_i."""

	def __post_init__(self) -> None:
		if self.Q.shape[0] != self.p or self.U.shape[0] != self.p:
			raise ValueError(f"Expected {self.p} coefficient blocks")
		if self.Q.shape[1] != self.Q.shape[2] or self.U.shape[1] != self.Q.shape[1]:
			raise ValueError('Inconsistent coefficient shapes')

	@property
	def l(self) -> int:
		return int(self.Q.shape[1])

	@property
	def m(self) -> int:
		return int(self.U.shape[2])

	@property
	def num_params(self) -> int:
		return self.p * self.l * (self.l + self.m)

	@property
	def weights(self) -> FloatArray:
		"""The stacked matrix W with q_kᵀ = φ_kᵀ W, shape (p(l+m), l)."""
		return np.vstack(
			[self.Q[i].T for i in range(self.p)]
			+ [self.U[i].T for i in range(self.p)]
		)

	@classmethod
	def from_weights(cls,
		W: FloatArray,
		p: int,
		l: int,
		m: int,
	) -> 'VarxModel':
		"""Split a stacked weight matrix into coefficient blocks."""
		if W.shape != (p * (l + m), l):
			raise ValueError(f"W has shape {W.shape}, expected {(p * (l + m), l)}")
		Q = np.stack([W[i * l:(i + 1) * l].T for i in range(p)])
		U = np.stack([W[p * l + i * m:p * l + (i + 1) * m].T for i in range(p)])
		return cls(p=p, Q=Q, U=U)

	def predict_rows(self, Phi: FloatArray) -> FloatArray:
		"""One-step predictions for physical-unit regressor rows."""
		result: FloatArray = Phi @ self.weights
		return result

	def to_dict(self) -> dict[str, Any]:
		return {
			'kind': 'varx',
			'p': self.p,
			'l': self.l,
			'm': self.m,
			'Q': self.Q.tolist(),
			'U': self.U.tolist(),
		}

	@classmethod
	def from_dict(cls, data: dict[str, Any]) -> 'VarxModel':
		return cls(
			p=int(data['p']),
			Q=np.asarray(data['Q'], dtype=np.float64).reshape(data['p'], data['l'], data['l']),
			U=np.asarray(data['U'], dtype=np.float64).reshape(data['p'], data['l'], data['m']),
		)


def solve_ridge(
	Phi: FloatArray,
	T: FloatArray,
	ridge: float,
) -> FloatArray:
	"""Minimize ||Phi W − T||² + ridge·||W||².

	:raises ValueError: `ridge` is negative.

	:raises EstimationError: `ridge` is zero and Phi is rank-deficient.
	"""
	if ridge < 0:
		raise ValueError(f"ridge must be non-negative, got {ridge}")
	rows, cols = Phi.shape
	if ridge == 0.0:
		W, _, rank, _ = np.linalg.lstsq(Phi, T, rcond=None)
		if rank < cols:
			raise EstimationError(
				f"The regressors are rank-deficient ({rank} of {cols} columns, "
				f"{rows} rows); use a ridge > 0 or a smaller past window"
			)
		return W  # type: ignore[return-value]
	A = np.vstack((Phi, np.sqrt(ridge) * np.eye(cols)))
	b = np.vstack((T, np.zeros((cols, T.shape[1]))))
	W, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
	return W


def fit_varx(
	reg: RegressionSet,
	ridge: float = 0.0,
) -> VarxModel:
	"""Fit VARX coefficients by (ridge) least squares.

	The fit happens in the regression set's scaled units; the returned
	coefficients are converted back to physical units.

	:param reg: The regression set.

	:param ridge: Ridge penalty, in scaled units.

	:returns: The model.

	:raises EstimationError: `ridge` is zero and the regressors are
	rank-deficient.
	"""
	W_scaled = solve_ridge(reg.Phi, reg.T, ridge)
	column_scale = reg.scaling.regressor_scale(reg.p)
	W = W_scaled * reg.scaling.q_scale[None, :] / column_scale[:, None]
	debug(f"VARX fit for p={reg.p}, ridge={ridge}: |W|={np.linalg.norm(W):.3e}")
	return VarxModel.from_weights(W, reg.p, reg.l, reg.m)
