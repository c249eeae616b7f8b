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
import collections.abc

# PyPi imports
import numpy as np
import pytest

# Local imports
from platedm.mirror.plate_model import (
	ActuatorSpec,
	MaterialSpec,
	SecondOrderModel,
	assemble_model,
	build_grid,
	build_layout,
)
from platedm.mirror.simulate import Trajectory
from platedm.streams import Purpose, stream


@pytest.fixture
def toy_model() -> SecondOrderModel:
	"""13 plate nodes at pitch 0.5, five actuators in a plus, five observed nodes.
	"""
	material = MaterialSpec()
	grid = build_grid(material, 0.5)
	actuator = ActuatorSpec(pitch=0.5, inclusion_radius=0.6)
	return assemble_model(grid, material, actuator, build_layout(actuator), obs_radius=0.6)


@pytest.fixture
def small_model() -> SecondOrderModel:
	"""49 plate nodes at pitch 0.25, a 3×3 block of actuators, 21 observed nodes.
	"""
	material = MaterialSpec()
	grid = build_grid(material, 0.25)
	actuator = ActuatorSpec(pitch=0.5, inclusion_radius=0.9)
	return assemble_model(grid, material, actuator, build_layout(actuator), obs_radius=0.6)


# Coefficients of a stable VARX(3) with two outputs and two inputs
VARX_Q = np.array([
	[[0.5, 0.1], [0.0, 0.4]],
	[[-0.2, 0.0], [0.1, -0.1]],
	[[0.1, 0.0], [0.0, 0.05]],
])
VARX_U = np.array([
	[[1.0, 0.5], [0.0, 1.0]],
	[[0.3, 0.0], [0.2, -0.4]],
	[[0.2, 0.1], [-0.1, 0.3]],
])


def varx_trajectory(
	seed: int,
	f: int = 1000,
	noise: float = 0.0,
	innovation: float = 0.0,
	order: int = 3,
) -> Trajectory:
	"""Simulate the VARX(3) above under white-noise inputs.

	`noise` is added to the recorded outputs only.  `innovation` drives the
	recursion itself, from a stream of its own.  A smaller `order` keeps
	only the leading coefficient blocks.
	"""
	rng = stream(seed, Purpose.SYNTHETIC)
	U = rng.standard_normal((2, f))
	Q = np.zeros((2, f))
	if innovation > 0:
		Q += innovation * stream(seed, Purpose.SYNTHETIC, 1).standard_normal((2, f))
	for k in range(f):
		for i in range(1, order + 1):
			if k - i >= 0:
				Q[:, k] += VARX_Q[i - 1] @ Q[:, k - i] + VARX_U[i - 1] @ U[:, k - i]
	if noise > 0:
		Q = Q + noise * rng.standard_normal(Q.shape)  # type: ignore[assignment]
	return Trajectory(h=1e-3, U=U, Q=Q)


@pytest.fixture
def make_varx() -> collections.abc.Callable[..., Trajectory]:
	"""Hand out `varx_trajectory`, so tests can draw several datasets."""
	return varx_trajectory


@pytest.fixture
def varx_coefficients() -> tuple[np.ndarray, np.ndarray]:
	"""The (Q, U) coefficient blocks behind `make_varx`."""
	return VARX_Q, VARX_U
