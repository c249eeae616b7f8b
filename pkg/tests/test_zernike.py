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
import math

# PyPi imports
import numpy as np
import pytest

# Local imports
from platedm.exceptions import *
from platedm.mirror.zernike import (
	ModeIndex,
	build_zernike_map,
	eval_basis,
	nm_to_noll,
	noll_modes,
	noll_to_nm,
	parse_mode,
	projection_matrix,
	synthesize_target,
)
from platedm.streams import Purpose, stream


# The first few Noll indices
NOLL = {
	1: (0, 0),
	2: (1, 1),
	3: (1, -1),
	4: (2, 0),
	5: (2, -2),
	6: (2, 2),
	7: (3, -1),
	8: (3, 1),
	9: (3, -3),
	10: (3, 3),
	11: (4, 0),
}


def disk_points(count: int, radius: float = 1.0, seed: int = 0) -> np.ndarray:
	"""Uniform random points on a disk."""
	rng = stream(seed, Purpose.SYNTHETIC)
	r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
	theta = rng.uniform(0.0, 2.0 * math.pi, count)
	return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


# Now, our tests

def test_noll_conversion() -> None:
	for j, nm in NOLL.items():
		assert noll_to_nm(j) == nm
		assert nm_to_noll(*nm) == j
	for j in range(1, 200):
		assert nm_to_noll(*noll_to_nm(j)) == j
	with pytest.raises(ValueError):
		noll_to_nm(0)
	with pytest.raises(ValueError):
		nm_to_noll(2, 1)


def test_mode_names() -> None:
	assert parse_mode('Z2^0') == ModeIndex(n=2, m=0, noll_j=4)
	assert parse_mode('Z3^-1') == ModeIndex(n=3, m=-1, noll_j=7)
	assert parse_mode('6') == ModeIndex(n=2, m=2, noll_j=6)
	assert ModeIndex.from_noll(9).name == 'Z3^-3'
	assert str(ModeIndex.from_nm(3, 3)) == 'Z3^3'
	for bad in ('Z1', 'defocus', 'Z2^1', '1', 'Z0^0'):
		with pytest.raises(ValueError):
			parse_mode(bad)
	with pytest.raises(ValueError):
		ModeIndex(n=2, m=0, noll_j=5)


def test_noll_modes() -> None:
	assert [(mode.n, mode.m, mode.noll_j) for mode in noll_modes(2)] == [
		(1, 1, 2),
		(1, -1, 3),
	]
	assert [(mode.n, mode.m) for mode in noll_modes(3)] == [(1, 1), (1, -1), (2, 0)]
	last = noll_modes(32)[-1]
	assert (last.n, last.noll_j) == (7, 33)
	with pytest.raises(ValueError):
		noll_modes(0)


def test_closed_form_values() -> None:
	centre = np.array([[0.0, 0.0]])
	defocus = eval_basis(centre, [ModeIndex.from_noll(4)], 1.0)
	assert defocus[0, 0] == pytest.approx(-math.sqrt(3.0), rel=1e-12)

	modes = [mode for mode in noll_modes(20) if mode.m != 0]
	assert np.all(eval_basis(centre, modes, 1.0) == 0.0)

	points = disk_points(50, radius=0.6)
	values = eval_basis(points, [ModeIndex.from_nm(2, 0)], 0.6)[:, 0]
	rho = np.hypot(points[:, 0], points[:, 1]) / 0.6
	assert np.allclose(values, math.sqrt(3.0) * (2.0 * rho**2 - 1.0), rtol=1e-12, atol=1e-12)


def test_points_outside_the_disk() -> None:
	with pytest.raises(ValueError):
		eval_basis(np.array([[0.7, 0.0]]), noll_modes(3), 0.6)


def test_orthonormal_over_the_disk() -> None:
	"""Modes have unit mean square and are mutually orthogonal.
	"""
	points = disk_points(1_000_000, seed=1)
	Z = eval_basis(points, noll_modes(10), 1.0)
	gram = Z.T @ Z / points.shape[0]
	assert np.allclose(gram, np.eye(10), atol=0.01)


def test_unit_mean_square_up_to_32_modes() -> None:
	points = disk_points(1_000_000, seed=4)
	for mode in noll_modes(32):
		values = eval_basis(points, [mode], 1.0)[:, 0]
		assert np.mean(values**2) == pytest.approx(1.0, abs=0.01), mode.name


def test_rotation_mixes_cosine_and_sine_pairs() -> None:
	points = disk_points(200, seed=5)
	phi = 0.7
	turn = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
	rotated = points @ turn.T
	modes = noll_modes(20)
	before = {(mode.n, mode.m): column for mode, column in zip(modes, eval_basis(points, modes, 1.0).T)}
	after = {(mode.n, mode.m): column for mode, column in zip(modes, eval_basis(rotated, modes, 1.0).T)}

	for (n, m), value in after.items():
		if m == 0:
			assert np.allclose(value, before[n, m], rtol=1e-10, atol=1e-12)
			continue
		k = abs(m)
		if (n, k) not in before or (n, -k) not in before:
			continue
		c, s = math.cos(k * phi), math.sin(k * phi)
		if m > 0:
			expected = c * before[n, k] - s * before[n, -k]
		else:
			expected = s * before[n, k] + c * before[n, -k]
		assert np.allclose(value, expected, rtol=1e-10, atol=1e-12), (n, m)


def test_projection() -> None:
	points = disk_points(200, radius=0.6, seed=2)
	zmap = build_zernike_map(points, 8, 0.6)
	assert zmap.l == 8
	assert zmap.Z.shape == (200, 8)
	assert np.allclose(zmap.C1 @ zmap.Z, np.eye(8), atol=1e-12)

	coefficients = np.arange(1.0, 9.0)
	assert np.allclose(zmap.project(zmap.Z @ coefficients), coefficients, rtol=1e-10)

	# Anything orthogonal to the sampled modes projects to zero.
	Q, _ = np.linalg.qr(zmap.Z, mode='complete')
	orthogonal = Q[:, 8]
	assert np.allclose(zmap.project(orthogonal), 0.0, atol=1e-12)

	# Projection works on whole trajectories too.
	many = zmap.Z @ np.vstack([coefficients, -coefficients]).T
	assert zmap.project(many).shape == (8, 2)


def test_insufficient_coverage() -> None:
	with pytest.raises(ProjectionError, match='insufficient observation coverage'):
		build_zernike_map(disk_points(5), 6, 1.0)
	# Points on a line cannot tell tip from tilt.
	line = np.column_stack((np.linspace(-0.5, 0.5, 20), np.zeros(20)))
	with pytest.raises(ProjectionError):
		projection_matrix(eval_basis(line, noll_modes(2), 1.0))


def test_synthesize_target() -> None:
	points = disk_points(30, radius=0.6, seed=3)
	tip = ModeIndex.from_noll(2)
	target = synthesize_target(tip, 1e-6, points, 0.6)
	assert np.allclose(target, 1e-6 * 2.0 * points[:, 0] / 0.6, rtol=1e-12, atol=1e-20)
	assert not np.any(synthesize_target(tip, 0.0, points, 0.6))
