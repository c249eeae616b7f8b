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

"""Time-domain simulation

The second-order model is rewritten in descriptor form, E ẋ = A x + G u with
x = [z; ż], and integrated with backward Euler:

	(E − hA) x_{k+1} = E x_k + h G u_{k+1}

(E − hA) is factorized once per run.  In a `Trajectory`, column k of `U` is
the force applied over the step from k to k+1, and column k of `Q` is the
Zernike decomposition of the observed displacement at step k.  So q_k only
depends on u_0 .. u_{k−1}.
"""

# Stdlib imports
import dataclasses
import functools
import logging
import math
import time
from typing import Any

# PyPi imports
import humanfriendly
import numpy as np
import numpy.typing as npt
import scipy.sparse
import scipy.sparse.linalg

# Local imports
from platedm.exceptions import *
from platedm.mirror.plate_model import SecondOrderModel
from platedm.mirror.zernike import ZernikeMap
from platedm.streams import Purpose, stream

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

FloatArray = npt.NDArray[np.float64]


@dataclasses.dataclass(frozen=True, eq=False)
class DescriptorSystem:
	"""E ẋ = A x + G u, y = C z, with x = [z; ż]."""

	E: scipy.sparse.csr_matrix
	A: scipy.sparse.csr_matrix
	G: scipy.sparse.csr_matrix
	C: scipy.sparse.csr_matrix
	n: int

	@property
	def m(self) -> int:
		return int(self.G.shape[1])

	@functools.cached_property
	def M1(self) -> scipy.sparse.csr_matrix:
		return self.E[self.n:, self.n:].tocsr()

	@functools.cached_property
	def M3(self) -> scipy.sparse.csr_matrix:
		return (-self.A[self.n:, :self.n]).tocsr()

	def energy(self, x: FloatArray) -> float:
		"""Return ½(żᵀ M1 ż + zᵀ M3 z) for a state x = [z; ż]."""
		z = x[:self.n]
		zdot = x[self.n:]
		return 0.5 * float(zdot @ (self.M1 @ zdot) + z @ (self.M3 @ z))


@dataclasses.dataclass(frozen=True, eq=False)
class SimulationResult:
	"""What `simulate_be` produced.

	Every array has f+1 columns (or entries), for steps 0 through f.
	"""

	Y: FloatArray
	X: FloatArray | None = None
	energy: FloatArray | None = None


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
	"""A recorded input/output sequence.

	:raises ValueError: The arrays disagree, or h is not positive.
	"""

	h: float
	U: FloatArray
	"""Actuator forces, shape (m, f), in N."""

	Q: FloatArray
	"""Zernike coefficients, shape (l, f)."""

	Q_clean: FloatArray | None = None
	"""The coefficients before measurement noise, if noise was added."""

	meta: dict[str, Any] = dataclasses.field(default_factory=dict)

	def __post_init__(self) -> None:
		if not self.h > 0:
			raise ValueError(f"h must be positive, got {self.h}")
		if self.U.ndim != 2 or self.Q.ndim != 2:
			raise ValueError('U and Q must be two-dimensional')
		if self.U.shape[1] != self.Q.shape[1]:
			raise ValueError(
				f"U has {self.U.shape[1]} samples but Q has {self.Q.shape[1]}"
			)
		if self.Q_clean is not None and self.Q_clean.shape != self.Q.shape:
			raise ValueError('Q_clean must have the same shape as Q')

	@property
	def f(self) -> int:
		return int(self.Q.shape[1])

	@property
	def l(self) -> int:
		return int(self.Q.shape[0])

	@property
	def m(self) -> int:
		return int(self.U.shape[0])


def to_descriptor(model: SecondOrderModel) -> DescriptorSystem:
	"""Embed the second-order model in first-order descriptor form."""
	n = model.n
	identity = scipy.sparse.identity(n, format='csr')
	E = scipy.sparse.block_diag((identity, model.M1), format='csr')
	A = scipy.sparse.bmat(
		[
			[None, identity],
			[-model.M3, -model.M2],
		],
		format='csr',
	)
	G = scipy.sparse.bmat(
		[
			[scipy.sparse.csr_matrix((n, model.m))],
			[model.B],
		],
		format='csr',
	)
	return DescriptorSystem(
		E=E,
		A=A,
		G=G,
		C=model.C,
		n=n,
	)


def simulate_be(
	sys: DescriptorSystem,
	h: float,
	x0: npt.ArrayLike,
	U: npt.ArrayLike,
	keep_states: bool = False,
	track_energy: bool = False,
) -> SimulationResult:
	"""Integrate with backward Euler.

	Column k of `U` is the input over the step from k to k+1.

	:param sys: The descriptor system.

	:param h: Time step, in s.

	:param x0: Initial state, length 2n.

	:param U: Inputs, shape (m, f).

	:param keep_states: Also return every state.

	:param track_energy: Also return the stored energy at every step.

	:returns: Outputs (and optionally states and energy) for steps 0..f.

	:raises ValueError: h is not positive, or shapes disagree.

	:raises SingularSystemError: (E − hA) is singular.
	"""
	if not h > 0:
		raise ValueError(f"h must be positive, got {h}")
	inputs = np.atleast_2d(np.asarray(U, dtype=np.float64))
	x = np.asarray(x0, dtype=np.float64).copy()
	if x.shape != (2 * sys.n,):
		raise ValueError(f"x0 must have length {2 * sys.n}, got {x.shape}")
	if inputs.shape[0] != sys.m:
		raise ValueError(f"U must have {sys.m} rows, got {inputs.shape[0]}")
	f = inputs.shape[1]

	try:
		factor = scipy.sparse.linalg.splu((sys.E - h * sys.A).tocsc())
	except RuntimeError as e:
		raise SingularSystemError(f"(E - hA) is singular: {e}")
	debug(f"Factorized (E - hA) once for {f} steps at h={h}")

	Y = np.empty((sys.C.shape[0], f + 1))
	X = np.empty((2 * sys.n, f + 1)) if keep_states else None
	energy = np.empty(f + 1) if track_energy else None

	start = time.perf_counter()
	for k in range(f + 1):
		if k > 0:
			x = factor.solve(sys.E @ x + h * (sys.G @ inputs[:, k - 1]))
		Y[:, k] = sys.C @ x[:sys.n]
		if X is not None:
			X[:, k] = x
		if energy is not None:
			energy[k] = sys.energy(x)
	debug(
		f"Simulated {f} steps in "
		f"{humanfriendly.format_timespan(time.perf_counter() - start, detailed=True)}"
	)
	return SimulationResult(Y=Y, X=X, energy=energy)


def generate_dataset(
	model: SecondOrderModel,
	zmap: ZernikeMap,
	h: float,
	f: int,
	seed: int,
	input_std: float,
	init_std: float,
) -> Trajectory:
	"""Simulate the mirror under white-noise forces from a random shape.

	Forces are i.i.d. Gaussian with standard deviation `input_std` per
	actuator and step.  The initial displacement is i.i.d. Gaussian with
	standard deviation `init_std` per free node, and the initial velocity is
	zero.  The result depends only on the arguments.

	:raises ValueError: `f` is below 2, or a standard deviation is negative.
	"""
	if f < 2:
		raise ValueError(f"Need at least two samples, got f={f}")
	if input_std < 0 or init_std < 0:
		raise ValueError('Standard deviations must be non-negative')

	U = input_std * stream(seed, Purpose.INPUTS).standard_normal((model.m, f))
	z0 = init_std * stream(seed, Purpose.INITIAL_STATE).standard_normal(model.n)
	z0[model.grid.pinned] = 0.0
	x0 = np.concatenate((z0, np.zeros(model.n)))

	info(f"Generating dataset: seed={seed}, f={f}, h={h}")
	result = simulate_be(to_descriptor(model), h, x0, U)
	Q = zmap.project(result.Y[:, :f])
	return Trajectory(
		h=h,
		U=U,
		Q=Q,
		meta={
			'seed': seed,
			'input_std': input_std,
			'init_std': init_std,
			'snr': None,
		},
	)


def add_measurement_noise(
	Q: npt.ArrayLike,
	snr: float,
	seed: int,
) -> FloatArray:
	"""Add white Gaussian noise at a given per-channel variance ratio.

	Channel j gets noise with standard deviation std(Q[j]) / √snr.

	:raises ValueError: `snr` is not positive.
	"""
	if not snr > 0:
		raise ValueError(f"snr must be positive, got {snr}")
	clean = np.asarray(Q, dtype=np.float64)
	spread = clean.std(axis=1)
	flat = np.flatnonzero(spread == 0.0)
	if flat.size:
		warning(f"Channels {flat.tolist()} are constant; they get no noise")
	sigma = spread / math.sqrt(snr)
	noise = stream(seed, Purpose.MEASUREMENT_NOISE).standard_normal(clean.shape)
	result: FloatArray = clean + noise * sigma[:, None]
	return result


def with_noise(
	traj: Trajectory,
	snr: float,
	seed: int,
) -> Trajectory:
	"""Return a copy of `traj` with measurement noise on its outputs."""
	noisy = add_measurement_noise(traj.Q, snr, seed)
	return dataclasses.replace(
		traj,
		Q=noisy,
		Q_clean=traj.Q,
		meta={**traj.meta, 'snr': snr},
	)
