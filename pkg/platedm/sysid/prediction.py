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

"""Closed-loop and open-loop prediction

Closed-loop prediction feeds the predictor measured past outputs, so every
prediction is one step ahead.  Open-loop prediction starts from the first p
measured outputs, and from then on feeds back its own predictions.
"""

# Stdlib imports
import dataclasses
import logging
import math
from typing import Any, Protocol

# PyPi imports
import numpy as np
import numpy.typing as npt

# Local imports
from platedm.mirror.simulate import Trajectory
from platedm.sysid.network import NetworkModel
from platedm.sysid.regression import build_regressors
from platedm.sysid.varx import VarxModel

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

FloatArray = npt.NDArray[np.float64]


class Predictor(Protocol):
	"""Anything that maps physical regressor rows to predicted outputs."""

	@property
	def p(self) -> int: ...

	@property
	def l(self) -> int: ...

	@property
	def m(self) -> int: ...

	@property
	def num_params(self) -> int: ...

	def predict_rows(self, Phi: FloatArray) -> FloatArray: ...

	def to_dict(self) -> dict[str, Any]: ...


@dataclasses.dataclass(frozen=True, eq=False)
class Prediction:
	"""Predicted outputs for k = p … f−1, with the relative error."""

	values: FloatArray
	"""Shape (f−p, l)."""

	targets: FloatArray
	"""The measured outputs for the same steps, shape (f−p, l)."""

	eps: float
	diverged: bool = False

	@property
	def residuals(self) -> FloatArray:
		result: FloatArray = self.targets - self.values
		return result


def predictor_from_dict(data: dict[str, Any]) -> Predictor:
	"""Rebuild a predictor saved with `to_dict`.

	:raises ValueError: The kind is unknown.
	"""
	kind = data.get('kind')
	if kind == 'varx':
		return VarxModel.from_dict(data)
	if kind == 'network':
		return NetworkModel.from_dict(data)
	raise ValueError(f"Unknown predictor kind {kind!r}")


def relative_error(
	targets: FloatArray,
	values: FloatArray,
) -> float:
	"""||targets − values|| / ||targets|| over every entry."""
	scale = float(np.linalg.norm(targets))
	if scale == 0.0:
		return 0.0 if not np.any(values) else math.inf
	return float(np.linalg.norm(targets - values)) / scale


def _check(model: Predictor, traj: Trajectory) -> None:
	if traj.f <= model.p:
		raise ValueError(f"The trajectory has {traj.f} samples; p={model.p} needs more")
	if traj.l != model.l or traj.m != model.m:
		raise ValueError(
			f"The trajectory has l={traj.l}, m={traj.m}; the model expects "
			f"l={model.l}, m={model.m}"
		)


def predict_closed_loop(
	model: Predictor,
	traj: Trajectory,
) -> Prediction:
	"""Predict every output from measured past outputs and inputs.

	:raises ValueError: The trajectory is too short or the wrong shape.
	"""
	_check(model, traj)
	reg = build_regressors(traj, model.p)
	values = model.predict_rows(reg.Phi)
	return Prediction(
		values=values,
		targets=reg.T,
		eps=relative_error(reg.T, values),
	)


def predict_open_loop(
	model: Predictor,
	traj: Trajectory,
) -> Prediction:
	"""Predict recursively from the first p measured outputs.

	If the recursion blows up, the prediction is flagged as diverged and its
	error is infinite.

	:raises ValueError: The trajectory is too short or the wrong shape.
	"""
	_check(model, traj)
	p = model.p
	f = traj.f
	history = np.zeros((model.l, f))
	history[:, :p] = traj.Q[:, :p]
	diverged = False
	with np.errstate(over='ignore', invalid='ignore'):
		for k in range(p, f):
			row = np.concatenate(
				[history[:, k - i] for i in range(1, p + 1)]
				+ [traj.U[:, k - i] for i in range(1, p + 1)]
			)
			history[:, k] = model.predict_rows(row[None, :])[0]
			if not np.all(np.isfinite(history[:, k])):
				warning(f"Open-loop prediction diverged at step {k} (p={p})")
				diverged = True
				break
	targets = traj.Q[:, p:].T
	values = history[:, p:].T
	return Prediction(
		values=values,
		targets=targets,
		eps=math.inf if diverged else relative_error(targets, values),
		diverged=diverged,
	)
