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

# PyPi imports
import numpy as np
import pytest

# Local imports
from platedm.mirror.simulate import Trajectory
from platedm.sysid.regression import (
	Scaling,
	build_regressors,
)


def tiny() -> Trajectory:
	return Trajectory(
		h=1e-3,
		U=np.array([[10.0, 20.0, 30.0]]),
		Q=np.array([[1.0, 2.0, 3.0]]),
	)


# Now, our tests

def test_rows_by_hand() -> None:
	reg = build_regressors(tiny(), 1)
	assert reg.Phi.tolist() == [[1.0, 10.0], [2.0, 20.0]]
	assert reg.T.tolist() == [[2.0], [3.0]]
	assert reg.rows == 2


def test_longest_window_leaves_one_row() -> None:
	reg = build_regressors(tiny(), 2)
	# Newest lag first, outputs before inputs
	assert reg.Phi.tolist() == [[2.0, 1.0, 20.0, 10.0]]
	assert reg.T.tolist() == [[3.0]]


def test_column_layout(make_varx) -> None:
	traj = make_varx(0, f=50)
	reg = build_regressors(traj, 4)
	assert reg.Phi.shape == (46, 4 * (2 + 2))
	assert reg.T.shape == (46, 2)
	# Column block i (from zero) holds q_{k-i-1}
	assert np.array_equal(reg.Phi[:, 0:2], traj.Q[:, 3:49].T)
	assert np.array_equal(reg.Phi[:, 6:8], traj.Q[:, 0:46].T)
	assert np.array_equal(reg.Phi[:, 8:10], traj.U[:, 3:49].T)


def test_window_limits() -> None:
	with pytest.raises(ValueError):
		build_regressors(tiny(), 0)
	with pytest.raises(ValueError):
		build_regressors(tiny(), 3)


def test_scaling() -> None:
	traj = Trajectory(
		h=1e-3,
		U=np.array([[3.0, -3.0, 3.0, -3.0], [0.0, 0.0, 0.0, 0.0]]),
		Q=np.array([[2.0, 2.0, -2.0, -2.0]]),
	)
	scaling = Scaling.fit(traj)
	assert scaling.q_scale.tolist() == [2.0]
	# Silent channels keep a unit scale.
	assert scaling.u_scale.tolist() == [3.0, 1.0]
	assert scaling.regressor_scale(2).tolist() == [2.0, 2.0, 3.0, 1.0, 3.0, 1.0]

	reg = build_regressors(traj, 1, scaling)
	assert reg.Phi.tolist() == [
		[1.0, 1.0, 0.0],
		[1.0, -1.0, 0.0],
		[-1.0, 1.0, 0.0],
	]
	assert reg.T.tolist() == [[1.0], [-1.0], [-1.0]]

	again = Scaling.from_dict(scaling.to_dict())
	assert np.array_equal(again.q_scale, scaling.q_scale)
	assert np.array_equal(again.u_scale, scaling.u_scale)
