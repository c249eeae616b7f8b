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

"""Steady-state wavefront correction

At steady state the mirror obeys M3 z = B u, y = C z.  To produce a desired
wavefront y_d, stack both relations into

	S w = g,    S = [[M3, -B], [C, 0]],    w = [z; u],    g = [0; y_d]

and solve it in the least-squares sense.

The solve eliminates z through the sparse factorization of M3.  Write the
first block residual as s = M3 z − B u, so z = M3⁻¹(B u + s).  With
G = C M3⁻¹ B and Q = M3⁻¹ Cᵀ, minimizing ||s||² + ||C z − y_d||² over s
leaves the dense m-column problem

	min over u of (G u − y_d)ᵀ (I + QᵀQ)⁻¹ (G u − y_d)

after which v = (I + QᵀQ)⁻¹(G u − y_d), s = −Q v and C z − y_d = v.  At the
minimizer, Sᵀ(S w − g) = [Cᵀ(C z − y_d − v); Gᵀ v], and that vector is the
optimality certificate.  Recomputing M3 z − B u instead would cancel away
every digit of the observation block.
"""

# Stdlib imports
import concurrent.futures
import dataclasses
import logging
import math
import time
from collections.abc import Sequence
from typing import Any

# PyPi imports
import humanfriendly
import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

# Local imports
from platedm.exceptions import *
from platedm.mirror.plate_model import ActuatorLayout, SecondOrderModel
from platedm.mirror.zernike import ModeIndex, ZernikeMap, synthesize_target

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

FloatArray = npt.NDArray[np.float64]

DEFAULT_TOL: float = 1e-10
DEFAULT_AMPLITUDE: float = 1e-6
DENSE_LIMIT: int = 5000
DENSE_ENTRIES: int = 50_000_000
DEFAULT_REFINEMENTS: int = 3


@dataclasses.dataclass(frozen=True, eq=False)
class AugmentedSystem:
	"""The stacked steady-state system S w = g."""

	S: scipy.sparse.csr_matrix
	g: FloatArray
	n: int
	m: int
	r: int
	model: SecondOrderModel | None = None
	"""The source model, whose cached M3 factorization the solver reuses."""


@dataclasses.dataclass(frozen=True, eq=False)
class SteadyStateSolution:
	"""A least-squares solution of the augmented system."""

	u: FloatArray
	"""Actuator forces, in N."""

	z: FloatArray
	"""Plate displacements at every node, in m."""

	residual_norm: float
	"""||g − S w||."""

	y_star: FloatArray
	"""The produced wavefront, C z."""

	iterations: int = 0
	"""Refinement passes after the first solve."""

	certificate: float = 0.0
	"""||Sᵀ(g − Sw)|| / ||Sᵀg||, or 0 for a zero target."""


@dataclasses.dataclass(frozen=True, eq=False)
class SweepRow:
	"""One mode's result in a steady-state sweep."""

	mode: ModeIndex
	e: float
	u: FloatArray
	residual_norm: float
	iterations: int
	certificate: float
	converged: bool
	y_d: FloatArray
	y_star: FloatArray
	z: FloatArray
	"""Whole-plate deflection."""


def assemble_augmented(
	model: SecondOrderModel,
	y_d: npt.ArrayLike,
) -> AugmentedSystem:
	"""Stack the model and a target into S and g.

	:raises ValueError: `y_d` does not have r entries.
	"""
	target = np.asarray(y_d, dtype=np.float64)
	if target.shape != (model.r,):
		raise ValueError(
			f"Target has shape {target.shape}, but the model observes {model.r} nodes"
		)
	S = scipy.sparse.bmat(
		[
			[model.M3, -model.B],
			[model.C, None],
		],
		format='csr',
	)
	g = np.concatenate((np.zeros(model.n), target))
	return AugmentedSystem(
		S=S,
		g=g,
		n=model.n,
		m=model.m,
		r=model.r,
		model=model,
	)


@dataclasses.dataclass(frozen=True, eq=False)
class _Elimination:
	"""The dense operators of the reduced problem."""

	factor: Any
	C: scipy.sparse.csr_matrix
	P: FloatArray
	"""M3⁻¹ B, shape (n, m)."""

	Q: FloatArray
	"""M3⁻¹ Cᵀ, shape (n, r)."""

	G: FloatArray
	"""C M3⁻¹ B, shape (r, m)."""

	L: FloatArray
	"""Lower Cholesky factor of I + QᵀQ."""

	A: FloatArray
	"""L⁻¹ G, the whitened influence matrix."""


def _eliminate(aug: AugmentedSystem) -> _Elimination:
	n, m, r = aug.n, aug.m, aug.r
	if n * (m + r) > DENSE_ENTRIES:
		raise ModelSizeError(
			f"Model has {n} nodes, {m} actuators and {r} outputs; "
			f"the steady-state solve is limited to {DENSE_ENTRIES} dense entries"
		)
	if aug.model is not None:
		factor = aug.model.stiffness_factor
	else:
		factor = _factorize(aug.S[:n, :n])
	B = -aug.S[:n, n:]
	C = aug.S[n:, :n].tocsr()
	P = np.asarray(factor.solve(B.toarray()), dtype=np.float64).reshape(n, m)
	Q = np.asarray(factor.solve(C.T.toarray()), dtype=np.float64).reshape(n, r)
	G = np.asarray(C @ P)
	weight = np.eye(r) + Q.T @ Q
	L = scipy.linalg.cholesky(0.5 * (weight + weight.T), lower=True)
	A = scipy.linalg.solve_triangular(L, G, lower=True)
	return _Elimination(factor=factor, C=C, P=P, Q=Q, G=G, L=L, A=A)


def _factorize(M3: scipy.sparse.csr_matrix) -> Any:
	try:
		return scipy.sparse.linalg.splu(M3.tocsc())
	except RuntimeError as e:
		raise RigidModeError(f"unsupported rigid modes: {e}")


def _minimum_norm(
	elim: _Elimination,
	u: FloatArray,
	z_shift: FloatArray,
	cutoff: float,
) -> FloatArray:
	"""Move u along the null space of G to the smallest ||[z; u]||."""
	null = scipy.linalg.null_space(elim.A, rcond=cutoff)
	if null.shape[1] == 0:
		return u
	debug(f"Influence matrix has a {null.shape[1]}-dimensional null space")
	stacked = np.vstack((elim.P @ null, null))
	offset = np.concatenate((elim.P @ u + z_shift, u))
	c, _, _, _ = scipy.linalg.lstsq(stacked, -offset)
	result: FloatArray = u + null @ c
	return result


def _assemble(
	aug: AugmentedSystem,
	elim: _Elimination,
	u: FloatArray,
	cutoff: float,
) -> tuple[SteadyStateSolution, float]:
	y_d = aug.g[aug.n:]
	v = scipy.linalg.cho_solve((elim.L, True), elim.G @ u - y_d)
	z_shift = -np.asarray(elim.factor.solve(elim.Q @ v), dtype=np.float64)
	u = _minimum_norm(elim, u, z_shift, cutoff)
	z = elim.P @ u + z_shift
	y_star = np.asarray(elim.C @ z)
	output_residual = y_star - y_d
	gradient = np.concatenate((
		elim.C.T @ (output_residual - v),
		elim.G.T @ v,
	))
	certificate = float(np.linalg.norm(gradient)) / float(np.linalg.norm(elim.C.T @ y_d))
	first_block = elim.Q @ v
	residual_norm = math.hypot(
		float(np.linalg.norm(first_block)),
		float(np.linalg.norm(output_residual)),
	)
	solution = SteadyStateSolution(
		u=u,
		z=z,
		residual_norm=residual_norm,
		y_star=y_star,
		certificate=certificate,
	)
	return solution, certificate


def solve_steady_state(
	aug: AugmentedSystem,
	tol: float = DEFAULT_TOL,
	max_iter: int | None = None,
) -> SteadyStateSolution:
	"""Solve the augmented system in the least-squares sense.

	The first solve is followed by up to `max_iter` passes of iterative
	refinement on the reduced problem, until the certificate
	||Sᵀ(g − Sw)|| / ||Sᵀg|| is at most `tol`.  When several minimizers
	exist, the one with the smallest ||w|| is returned.

	:param aug: The augmented system.

	:param tol: The relative normal-equation residual to reach.

	:param max_iter: Refinement passes allowed.  Defaults to
	`DEFAULT_REFINEMENTS`.

	:returns: The solution.

	:raises ValueError: `tol` is not positive.

	:raises RigidModeError: M3 is singular.

	:raises ModelSizeError: The dense operators would be too large.

	:raises SolverConvergenceError: `tol` was not reached.  The best
	solution found is attached as a `SteadyStateSolution`.
	"""
	if not tol > 0:
		raise ValueError(f"tol must be positive, got {tol}")
	if max_iter is None:
		max_iter = DEFAULT_REFINEMENTS
	n, m = aug.n, aug.m
	y_d = aug.g[n:]
	if not np.any(y_d):
		debug('Zero target; returning the zero solution')
		return SteadyStateSolution(
			u=np.zeros(m),
			z=np.zeros(n),
			residual_norm=0.0,
			y_star=np.zeros(aug.r),
		)

	start = time.perf_counter()
	elim = _eliminate(aug)
	cutoff = float(np.finfo(np.float64).eps) * max(elim.A.shape)
	target = scipy.linalg.solve_triangular(elim.L, y_d, lower=True)

	u, _, rank, _ = scipy.linalg.lstsq(elim.A, target, cond=cutoff)
	if rank < m:
		debug(f"Influence matrix has rank {rank} of {m}")
	best, best_cert = _assemble(aug, elim, u, cutoff)
	passes = 0
	while best_cert > tol and passes < max_iter:
		passes += 1
		misfit = target - elim.A @ best.u
		step, _, _, _ = scipy.linalg.lstsq(elim.A, misfit, cond=cutoff)
		candidate, cert = _assemble(aug, elim, best.u + step, cutoff)
		debug(f"Refinement pass {passes}: certificate {cert:.3e}")
		if cert >= best_cert:
			break
		best, best_cert = candidate, cert

	best = dataclasses.replace(best, iterations=passes)
	elapsed = humanfriendly.format_timespan(time.perf_counter() - start, detailed=True)
	if best_cert > tol:
		raise SolverConvergenceError(
			f"Least-squares solve stopped at certificate {best_cert:.3e} "
			f"(wanted {tol:.1e}) after {passes} refinement passes",
			best=best,
			residual_norm=best.residual_norm,
			certificate=best_cert,
			iterations=passes,
		)
	info(
		f"Steady state solved with {passes} refinement passes ({elapsed}), "
		f"certificate {best_cert:.3e}"
	)
	return best


def static_deflection(
	model: SecondOrderModel,
	u: npt.ArrayLike,
) -> FloatArray:
	"""Solve M3 z = B u for the whole-plate deflection.

	:raises RigidModeError: M3 is singular.
	"""
	forces = np.asarray(u, dtype=np.float64)
	if forces.shape[0] != model.m:
		raise ValueError(f"Expected {model.m} forces, got {forces.shape[0]}")
	result: FloatArray = model.stiffness_factor.solve(model.B @ forces)
	return result


def apply_control(
	model: SecondOrderModel,
	u: npt.ArrayLike,
) -> FloatArray:
	"""Return the wavefront y* = C M3⁻¹ B u produced by forces `u`.

	The factorization of M3 is computed once per model and reused.

	:raises RigidModeError: M3 is singular.
	"""
	result: FloatArray = model.C @ static_deflection(model, u)
	return result


def control_error(
	y_d: npt.ArrayLike,
	y_star: npt.ArrayLike,
) -> float:
	"""Return e = ||y_d − y*|| / ||y_d||.

	:raises ControlError: `y_d` is zero.
	"""
	desired = np.asarray(y_d, dtype=np.float64)
	produced = np.asarray(y_star, dtype=np.float64)
	scale = float(np.linalg.norm(desired))
	if scale == 0.0:
		raise ControlError('undefined relative error: the target wavefront is zero')
	return float(np.linalg.norm(desired - produced)) / scale


def _sweep_one(
	model: SecondOrderModel,
	zmap: ZernikeMap,
	mode: ModeIndex,
	amplitude: float,
	tol: float,
	max_iter: int | None,
) -> SweepRow:
	y_d = synthesize_target(mode, amplitude, model.observed_points, zmap.norm_radius)
	aug = assemble_augmented(model, y_d)
	converged = True
	try:
		solution = solve_steady_state(aug, tol=tol, max_iter=max_iter)
	except SolverConvergenceError as e:
		warning(f"Mode {mode.name}: {e}")
		solution = e.best
		converged = False
	return SweepRow(
		mode=mode,
		e=control_error(y_d, solution.y_star),
		u=solution.u,
		residual_norm=solution.residual_norm,
		iterations=solution.iterations,
		certificate=solution.certificate,
		converged=converged,
		y_d=y_d,
		y_star=solution.y_star,
		z=solution.z,
	)


def sweep_modes(
	model: SecondOrderModel,
	zmap: ZernikeMap,
	modes: Sequence[ModeIndex],
	amplitude: float = DEFAULT_AMPLITUDE,
	tol: float = DEFAULT_TOL,
	max_iter: int | None = None,
	threads: int = 1,
) -> list[SweepRow]:
	"""Correct each mode in turn, and record how well it worked.

	Solves that miss `tol` are kept, with `converged` set to False.

	:param model: The mirror.

	:param zmap: The Zernike map over the model's observed nodes.

	:param modes: The modes to try.

	:param amplitude: Target amplitude, in m.

	:param threads: Worker threads.

	:returns: One row per mode, sorted by Noll index.

	:raises ValueError: No modes, or a zero amplitude.
	"""
	if len(modes) == 0:
		raise ValueError('No modes to sweep')
	if amplitude == 0.0:
		raise ValueError('amplitude must be non-zero; the relative error is undefined')
	ordered = sorted(modes, key=lambda mode: mode.noll_j)
	info(f"Sweeping {len(ordered)} modes at amplitude {amplitude} m")
	if threads <= 1:
		return [
			_sweep_one(model, zmap, mode, amplitude, tol, max_iter)
			for mode in ordered
		]
	# Factorize before fanning out.
	model.stiffness_factor
	with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
		futures = [
			pool.submit(_sweep_one, model, zmap, mode, amplitude, tol, max_iter)
			for mode in ordered
		]
		return [future.result() for future in futures]


def dense_influence(
	model: SecondOrderModel,
	limit: int = DENSE_LIMIT,
) -> FloatArray:
	"""Return the influence matrix C M3⁻¹ B, shape (r, m).

	:raises ModelSizeError: The model has more than `limit` nodes.

	:raises RigidModeError: M3 is singular.
	"""
	if model.n > limit:
		raise ModelSizeError(
			f"Model has {model.n} nodes; the dense influence matrix is limited to {limit}"
		)
	factor = model.stiffness_factor
	columns = factor.solve(model.B.toarray())
	result: FloatArray = model.C @ columns
	return result


def demo_forces(
	layout: ActuatorLayout,
) -> FloatArray:
	"""The five-actuator demonstration pattern.

	The centre actuator pushes with 1.5 N, its two x-neighbours pull with
	0.5 N, and the next two along x push with 1 N.  Every other actuator is
	idle.

	:raises GeometryError: The layout is missing one of those actuators.
	"""
	pattern = {
		(0, 0): 1.5,
		(1, 0): -0.5,
		(-1, 0): -0.5,
		(2, 0): 1.0,
		(-2, 0): 1.0,
	}
	where = {
		(int(i), int(j)): k
		for k, (i, j) in enumerate(layout.lattice)
	}
	forces = np.zeros(layout.count)
	for point, force in pattern.items():
		if point not in where:
			raise GeometryError(f"No actuator at lattice point {point}")
		forces[where[point]] = force
	return forces
