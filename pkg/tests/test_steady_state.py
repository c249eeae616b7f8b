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
import os

# PyPi imports
import numpy as np
import pytest
import scipy.sparse

# Local imports
from platedm.exceptions import *
from platedm.mirror.plate_model import (
	ActuatorSpec,
	MaterialSpec,
	SecondOrderModel,
	assemble_model,
	build_grid,
	build_layout,
	reference_actuator,
)
import platedm.mirror.steady_state as steady_state
from platedm.mirror.steady_state import (
	apply_control,
	assemble_augmented,
	control_error,
	demo_forces,
	dense_influence,
	solve_steady_state,
	static_deflection,
	sweep_modes,
)
from platedm.mirror.zernike import build_zernike_map, parse_mode
from platedm.streams import Purpose, stream


acceptance = pytest.mark.skipif(
	'PLATEDM_ACCEPTANCE' not in os.environ,
	reason='Set PLATEDM_ACCEPTANCE to run full-size checks',
)


def reference_model(pitch: float) -> SecondOrderModel:
	material = MaterialSpec()
	actuator = reference_actuator(pitch)
	grid = build_grid(material, 0.05)
	return assemble_model(grid, material, actuator, build_layout(actuator), obs_radius=0.6)


# Now, our tests

def test_augmented_layout() -> None:
	"""A hand-made two-node model, to check the block layout.
	"""
	model = SecondOrderModel.__new__(SecondOrderModel)
	object.__setattr__(model, 'M3', scipy.sparse.csr_matrix(np.array([[2.0, -1.0], [-1.0, 3.0]])))
	object.__setattr__(model, 'B', scipy.sparse.csr_matrix(np.array([[1.0], [0.0]])))
	object.__setattr__(model, 'C', scipy.sparse.csr_matrix(np.array([[0.0, 1.0]])))
	aug = assemble_augmented(model, [5.0])
	assert np.array_equal(aug.S.toarray(), np.array([
		[2.0, -1.0, -1.0],
		[-1.0, 3.0, 0.0],
		[0.0, 1.0, 0.0],
	]))
	assert np.array_equal(aug.g, np.array([0.0, 0.0, 5.0]))
	assert (aug.n, aug.m, aug.r) == (2, 1, 1)

	with pytest.raises(ValueError):
		assemble_augmented(model, [1.0, 2.0])

	# Solving it: z2 = 5 forces z1 = 15 and u = 25.
	solution = solve_steady_state(aug, tol=1e-10)
	assert np.allclose(solution.z, [15.0, 5.0], rtol=1e-9)
	assert np.allclose(solution.u, [25.0], rtol=1e-9)
	assert solution.residual_norm < 1e-9


def test_zero_target(small_model: SecondOrderModel) -> None:
	aug = assemble_augmented(small_model, np.zeros(small_model.r))
	assert not np.any(aug.g)
	solution = solve_steady_state(aug)
	assert not np.any(solution.u)
	assert not np.any(solution.z)
	assert solution.residual_norm == 0.0
	assert solution.iterations == 0


def test_reachable_target(small_model: SecondOrderModel) -> None:
	"""A wavefront the actuators can make exactly is reproduced exactly.
	"""
	model = small_model
	forces = stream(0, Purpose.SYNTHETIC).standard_normal(model.m)
	y_d = apply_control(model, forces)
	solution = solve_steady_state(assemble_augmented(model, y_d), tol=1e-9)
	assert control_error(y_d, solution.y_star) < 1e-6
	assert np.allclose(solution.u, forces, rtol=1e-6, atol=1e-6 * np.abs(forces).max())
	assert np.allclose(apply_control(model, solution.u), solution.y_star, rtol=1e-6, atol=1e-6 * np.abs(y_d).max())
	assert solution.certificate <= 1e-9


def test_matches_influence_least_squares(small_model: SecondOrderModel) -> None:
	"""Near-reachable targets give the same forces as least squares on C M3⁻¹ B.
	"""
	model = small_model
	rng = stream(1, Purpose.SYNTHETIC)
	influence = dense_influence(model)
	base = influence @ rng.standard_normal(model.m)
	y_d = base + 0.01 * np.linalg.norm(base) / np.sqrt(model.r) * rng.standard_normal(model.r)
	solution = solve_steady_state(assemble_augmented(model, y_d), tol=1e-10)
	expected, _, _, _ = np.linalg.lstsq(influence, y_d, rcond=None)
	assert np.linalg.norm(solution.u - expected) <= 1e-6 * np.linalg.norm(expected)


def test_matches_dense_solve(toy_model: SecondOrderModel) -> None:
	"""With as many actuators as observed nodes, S is square and invertible.
	"""
	model = toy_model
	zmap = build_zernike_map(model.observed_points, 3, model.obs_radius)
	y_d = 1e-6 * zmap.Z[:, 2]
	aug = assemble_augmented(model, y_d)
	solution = solve_steady_state(aug, tol=1e-10)
	expected = np.linalg.solve(aug.S.toarray(), aug.g)
	found = np.concatenate((solution.z, solution.u))
	assert np.linalg.norm(found - expected) <= 1e-8 * np.linalg.norm(expected)


def test_solution_is_linear(toy_model: SecondOrderModel) -> None:
	model = toy_model
	zmap = build_zernike_map(model.observed_points, 3, model.obs_radius)
	y_d = 1e-6 * zmap.Z[:, 0]
	once = solve_steady_state(assemble_augmented(model, y_d), tol=1e-10)
	thrice = solve_steady_state(assemble_augmented(model, 3.0 * y_d), tol=1e-10)
	assert np.allclose(thrice.u, 3.0 * once.u, rtol=1e-8, atol=1e-8 * np.abs(thrice.u).max())


def test_convergence_failure_keeps_best(small_model: SecondOrderModel) -> None:
	"""No double-precision solve gets the certificate down to 1e-30.
	"""
	model = small_model
	zmap = build_zernike_map(model.observed_points, 5, model.obs_radius)
	y_d = 1e-6 * zmap.Z[:, 3]
	with pytest.raises(SolverConvergenceError) as info:
		solve_steady_state(assemble_augmented(model, y_d), tol=1e-30, max_iter=1)
	assert info.value.iterations <= 1
	assert info.value.best.u.shape == (model.m,)
	assert info.value.certificate > 1e-30
	assert info.value.certificate < 1e-10


def test_certificate_and_residual(small_model: SecondOrderModel) -> None:
	"""The certificate is met, and the reported residual matches S w − g.
	"""
	model = small_model
	zmap = build_zernike_map(model.observed_points, 6, model.obs_radius)
	y_d = 1e-6 * zmap.Z[:, 4]
	aug = assemble_augmented(model, y_d)
	solution = solve_steady_state(aug, tol=1e-10)
	assert solution.certificate <= 1e-10
	w = np.concatenate((solution.z, solution.u))
	direct = np.linalg.norm(aug.S @ w - aug.g)
	assert direct == pytest.approx(solution.residual_norm, rel=1e-6)
	assert np.array_equal(solution.y_star, model.C @ solution.z)


def test_size_guard(small_model: SecondOrderModel, monkeypatch: pytest.MonkeyPatch) -> None:
	monkeypatch.setattr(steady_state, 'DENSE_ENTRIES', 100)
	y_d = np.ones(small_model.r)
	with pytest.raises(ModelSizeError):
		solve_steady_state(assemble_augmented(small_model, y_d))


def test_tol_must_be_positive(toy_model: SecondOrderModel) -> None:
	with pytest.raises(ValueError):
		solve_steady_state(assemble_augmented(toy_model, np.ones(toy_model.r)), tol=0.0)


def test_apply_control(toy_model: SecondOrderModel) -> None:
	model = toy_model
	assert not np.any(apply_control(model, np.zeros(model.m)))
	forces = np.ones(model.m)
	z = static_deflection(model, forces)
	assert np.allclose(model.M3 @ z, model.B @ forces, rtol=1e-10, atol=1e-12)
	assert np.array_equal(apply_control(model, forces), model.C @ z)
	with pytest.raises(ValueError):
		static_deflection(model, np.ones(model.m + 1))


def test_control_error() -> None:
	y_d = np.array([1.0, -2.0, 0.5])
	assert control_error(y_d, y_d) == 0.0
	assert control_error(y_d, np.zeros(3)) == 1.0
	assert control_error(y_d, 2.0 * y_d) == pytest.approx(1.0)
	with pytest.raises(ControlError, match='undefined relative error'):
		control_error(np.zeros(3), y_d)


def test_dense_influence(small_model: SecondOrderModel) -> None:
	model = small_model
	influence = dense_influence(model)
	assert influence.shape == (model.r, model.m)
	for j in (0, model.m // 2, model.m - 1):
		unit = np.zeros(model.m)
		unit[j] = 1.0
		assert np.allclose(influence[:, j], apply_control(model, unit), rtol=1e-12, atol=0.0)

	with pytest.raises(ModelSizeError):
		dense_influence(model, limit=10)


def test_influence_reciprocity(small_model: SecondOrderModel) -> None:
	"""Observed at the actuator nodes, the influence matrix is symmetric.
	"""
	model = small_model
	columns = model.stiffness_factor.solve(model.B.toarray())
	at_actuators = model.B.T @ columns
	assert np.allclose(at_actuators, at_actuators.T, rtol=1e-10, atol=0.0)


def test_sweep(small_model: SecondOrderModel) -> None:
	model = small_model
	zmap = build_zernike_map(model.observed_points, 5, model.obs_radius)
	modes = [parse_mode('Z2^2'), parse_mode('Z1^1'), parse_mode('Z2^0')]
	rows = sweep_modes(model, zmap, modes, amplitude=1e-6, tol=1e-8)
	assert [row.mode.noll_j for row in rows] == [2, 4, 6]
	for row in rows:
		assert row.u.shape == (model.m,)
		assert row.z.shape == (model.n,)
		assert 0.0 <= row.e < 1.0
		assert row.e == pytest.approx(control_error(row.y_d, row.y_star))
		assert row.converged
		assert row.certificate <= 1e-8

	# Threads give the same answer.
	threaded = sweep_modes(model, zmap, modes, amplitude=1e-6, tol=1e-8, threads=3)
	for one, other in zip(rows, threaded):
		assert np.array_equal(one.u, other.u)

	with pytest.raises(ValueError):
		sweep_modes(model, zmap, [], amplitude=1e-6)
	with pytest.raises(ValueError):
		sweep_modes(model, zmap, modes, amplitude=0.0)


def test_sweep_records_unconverged_modes(small_model: SecondOrderModel) -> None:
	model = small_model
	zmap = build_zernike_map(model.observed_points, 5, model.obs_radius)
	rows = sweep_modes(model, zmap, [parse_mode('Z2^0')], tol=1e-30, max_iter=1)
	assert len(rows) == 1
	assert not rows[0].converged
	assert np.isfinite(rows[0].e)


def test_more_actuators_never_hurt() -> None:
	"""Growing the actuator set can only shrink the steady-state error.
	"""
	material = MaterialSpec()
	grid = build_grid(material, 0.125)
	errors = []
	for radius in (0.3, 0.55, 0.8):
		actuator = ActuatorSpec(pitch=0.25, inclusion_radius=radius)
		model = assemble_model(grid, material, actuator, build_layout(actuator), obs_radius=0.6)
		zmap = build_zernike_map(model.observed_points, 6, model.obs_radius)
		rows = sweep_modes(model, zmap, [parse_mode('Z2^0')], tol=1e-8)
		errors.append(rows[0].e)
	assert errors[0] >= errors[1] - 1e-6
	assert errors[1] >= errors[2] - 1e-6


def test_defocus_forces_are_symmetric(small_model: SecondOrderModel) -> None:
	model = small_model
	zmap = build_zernike_map(model.observed_points, 5, model.obs_radius)
	row = sweep_modes(model, zmap, [parse_mode('Z2^0')], tol=1e-10)[0]
	lattice = model.layout.lattice
	where = {(int(i), int(j)): k for k, (i, j) in enumerate(lattice)}
	scale = np.abs(row.u).max()
	for k, (i, j) in enumerate(lattice):
		rotated = where[(-int(j), int(i))]
		assert row.u[k] == pytest.approx(row.u[rotated], abs=1e-6 * scale)


def test_demo_forces() -> None:
	layout = build_layout(reference_actuator(0.2))
	forces = demo_forces(layout)
	assert forces.sum() == pytest.approx(2.5)
	assert np.count_nonzero(forces) == 5
	where = {(int(i), int(j)): k for k, (i, j) in enumerate(layout.lattice)}
	assert forces[where[(0, 0)]] == 1.5
	assert forces[where[(2, 0)]] == 1.0
	assert forces[where[(-1, 0)]] == -0.5

	with pytest.raises(GeometryError):
		demo_forces(build_layout(ActuatorSpec(pitch=0.5, inclusion_radius=0.6)))


@acceptance
def test_demo_deflection_shape() -> None:
	"""The demonstration pattern makes a central bump with dips beside it.
	"""
	model = reference_model(0.2)
	z = static_deflection(model, demo_forces(model.layout))
	index = model.grid.index
	centre = z[index[(0, 0)]]
	assert centre > 0

	def bend(i: int) -> float:
		return float(z[index[(i - 1, 0)]] + z[index[(i + 1, 0)]] - 2.0 * z[index[(i, 0)]])

	# Pushed at the centre, so it bends down there.
	assert bend(0) < 0
	for i in (4, -4):
		# Pulled one pitch out, the plate dips below the centre and curves up.
		assert z[index[(i, 0)]] < centre
		assert bend(i) > 0
	assert z[index[(4, 0)]] == pytest.approx(z[index[(-4, 0)]], rel=1e-6)


@acceptance
def test_halving_the_pitch_improves_correction() -> None:
	"""Low-order errors drop by an order of magnitude at half the actuator pitch.
	"""
	modes = [parse_mode(name) for name in ('Z2^0', 'Z2^2', 'Z3^1', 'Z3^3')]
	results = {}
	for pitch in (0.2, 0.1):
		model = reference_model(pitch)
		zmap = build_zernike_map(model.observed_points, 32, model.obs_radius)
		results[pitch] = sweep_modes(model, zmap, modes, tol=1e-10)
	for coarse, fine in zip(results[0.2], results[0.1]):
		assert fine.e <= 0.1 * coarse.e


@acceptance
def test_reference_sweep_reaches_the_optimum() -> None:
	"""On the 0.2-pitch mirror, every mode converges to the best reachable error.
	"""
	model = reference_model(0.2)
	zmap = build_zernike_map(model.observed_points, 32, model.obs_radius)
	modes = [parse_mode(name) for name in ('Z2^0', 'Z2^2', 'Z3^1', 'Z3^3')]
	rows = sweep_modes(model, zmap, modes, tol=1e-10)
	influence = dense_influence(model)
	for row in rows:
		assert row.converged
		assert row.certificate <= 1e-10
		forces, _, _, _ = np.linalg.lstsq(influence, row.y_d, rcond=None)
		best = control_error(row.y_d, influence @ forces)
		assert row.e <= best * (1.0 + 1e-6)
		assert row.e >= 0.99 * best
