# vim: ts=4 sw=4 noet

# These are the exceptions that platedm can throw.

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
from typing import Any


class PlateDMError(Exception):
	"""A platedm error.
	"""
	pass

class ModelError(PlateDMError):
	"""There was a problem building or using a structural model.
	"""
	pass

class GeometryError(ModelError):
	"""The plate, grid, or actuator geometry is unusable.

	Examples are an actuator layout with no actuators, a grid pitch that is
	too coarse for the plate, or two actuators landing on the same node.
	"""
	pass

class RigidModeError(ModelError):
	"""The stiffness matrix is singular.

	A free plate with fewer than three non-collinear actuator springs can
	float and tilt freely, so static deflections are not defined.
	"""
	pass

class ModelSizeError(ModelError):
	"""The model is too large for a dense operation."""
	pass

class ProjectionError(PlateDMError):
	"""The observation points cannot resolve the requested Zernike modes."""
	pass

class ControlError(PlateDMError):
	"""A control-performance quantity is undefined."""
	pass

class NumericalError(PlateDMError):
	"""A numerical method failed.
	"""
	pass

class SolverConvergenceError(NumericalError):
	"""A least-squares solve did not reach its optimality certificate.

	The best solution found is attached, so callers can still inspect it.
	"""

	best: Any
	"""The best solution found."""

	residual_norm: float
	"""The residual norm of the best solution."""

	certificate: float
	"""The relative normal-equation residual of the best solution."""

	iterations: int
	"""How many refinement passes were spent."""

	def __init__(self,
		message: str,
		best: Any,
		residual_norm: float,
		certificate: float,
		iterations: int,
	) -> None:
		super().__init__(message)
		self.best = best
		self.residual_norm = residual_norm
		self.certificate = certificate
		self.iterations = iterations

class SingularSystemError(NumericalError):
	"""A linear system that must be factorized is singular."""
	pass

class EstimationError(NumericalError):
	"""A model could not be estimated from data.
	"""
	pass

class TrainingDivergedError(EstimationError):
	"""The training loss became non-finite."""
	pass

class ConfigError(PlateDMError):
	"""The experiment configuration is invalid.

	:param message: What is wrong.

	:param key: The dotted path of the offending key, if known.
	"""

	key: str | None

	def __init__(self,
		message: str,
		key: str | None = None,
	) -> None:
		super().__init__(
			message if key is None else f"{key}: {message}"
		)
		self.key = key

__all__ = (
	'PlateDMError',
	'ModelError',
	'GeometryError',
	'RigidModeError',
	'ModelSizeError',
	'ProjectionError',
	'ControlError',
	'NumericalError',
	'SolverConvergenceError',
	'SingularSystemError',
	'EstimationError',
	'TrainingDivergedError',
	'ConfigError',
)
