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

"""Zernike modes over the observed aperture

Modes use Noll's single-index ordering and RMS normalization: every mode has
mean square 1 over the unit disk.  Positive azimuthal orders are cosine
modes, negative orders are sine modes.  Piston (j = 1) is never used.
"""

# Stdlib imports
import dataclasses
import logging
import math
import re

# PyPi imports
import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.special import binom

# Local imports
from platedm.exceptions import *

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

FloatArray = npt.NDArray[np.float64]

MODE_NAME = re.compile(r'^Z(\d+)\^(-?\d+)$')


def noll_to_nm(j: int) -> tuple[int, int]:
	"""Convert a Noll index to (radial degree, azimuthal order).

	:raises ValueError: `j` is less than 1.
	"""
	if j < 1:
		raise ValueError(f"Noll indices start at 1, got {j}")
	n = int(np.sqrt(2 * j - 1) + 0.5) - 1
	s = n % 2
	m_even = 2 * int((2 * j + 1 - n * (n + 1)) / 4)
	m_odd = 2 * int((2 * (j + 1) - n * (n + 1)) / 4) - 1
	m = (m_odd * s + m_even * (1 - s)) * (1 - 2 * (j % 2))
	return n, m


def nm_to_noll(n: int, m: int) -> int:
	"""Convert (radial degree, azimuthal order) to a Noll index.

	:raises ValueError: (n, m) is not a Zernike mode.
	"""
	if n < 0 or abs(m) > n or (n - abs(m)) % 2 != 0:
		raise ValueError(f"({n}, {m}) is not a Zernike mode")
	first = n * (n + 1) // 2 + 1
	for j in range(first, first + n + 1):
		if noll_to_nm(j) == (n, m):
			return j
	raise ValueError(f"({n}, {m}) has no Noll index") # pragma: no cover


@dataclasses.dataclass(frozen=True)
class ModeIndex:
	"""One Zernike mode.

	:raises ValueError: The fields are inconsistent, or the mode is piston.
	"""

	n: int
	m: int
	noll_j: int

	def __post_init__(self) -> None:
		if self.noll_j < 2:
			raise ValueError('Piston (j=1) is not a usable mode')
		if noll_to_nm(self.noll_j) != (self.n, self.m):
			raise ValueError(
				f"Noll index {self.noll_j} is not (n={self.n}, m={self.m})"
			)

	@classmethod
	def from_noll(cls, j: int) -> 'ModeIndex':
		n, m = noll_to_nm(j)
		return cls(n=n, m=m, noll_j=j)

	@classmethod
	def from_nm(cls, n: int, m: int) -> 'ModeIndex':
		return cls(n=n, m=m, noll_j=nm_to_noll(n, m))

	@property
	def name(self) -> str:
		"""The mode name, like `Z2^0` for defocus."""
		return f"Z{self.n}^{self.m}"

	def __str__(self) -> str:
		return self.name


def parse_mode(name: str) -> ModeIndex:
	"""Parse a mode name like `Z2^0`, `Z3^-1`, or a bare Noll index like `5`.

	:raises ValueError: The name cannot be parsed, or names piston.
	"""
	text = name.strip()
	if text.isdigit():
		return ModeIndex.from_noll(int(text))
	match = MODE_NAME.match(text)
	if match is None:
		raise ValueError(f"Not a Zernike mode name: {name!r}")
	return ModeIndex.from_nm(int(match.group(1)), int(match.group(2)))


def noll_modes(l: int) -> list[ModeIndex]:
	"""Return the first `l` Noll-ordered modes after piston.

	:raises ValueError: `l` is less than 1.
	"""
	if l < 1:
		raise ValueError(f"Need at least one mode, got {l}")
	return [ModeIndex.from_noll(j) for j in range(2, l + 2)]


def _radial(
	n: int,
	m: int,
	rho: FloatArray,
) -> FloatArray:
	m0 = abs(m)
	radial = np.zeros_like(rho)
	for k in range((n - m0) // 2 + 1):
		radial += (
			(-1.0)**k
			* binom(n - k, k)
			* binom(n - 2 * k, (n - m0) // 2 - k)
			* rho**(n - 2 * k)
		)
	return radial


def _mode_values(
	mode: ModeIndex,
	rho: FloatArray,
	theta: FloatArray,
) -> FloatArray:
	radial = _radial(mode.n, mode.m, rho)
	if mode.m == 0:
		return math.sqrt(mode.n + 1) * radial
	factor = math.sqrt(2 * (mode.n + 1))
	if mode.m > 0:
		return factor * radial * np.cos(mode.m * theta)
	return factor * radial * np.sin(-mode.m * theta)


def _polar(
	points: npt.ArrayLike,
	norm_radius: float,
) -> tuple[FloatArray, FloatArray]:
	xy = np.atleast_2d(np.asarray(points, dtype=np.float64))
	if xy.shape[1] != 2:
		raise ValueError(f"Points must have shape (r, 2), got {xy.shape}")
	if not norm_radius > 0:
		raise ValueError(f"norm_radius must be positive, got {norm_radius}")
	rho = np.hypot(xy[:, 0], xy[:, 1]) / norm_radius
	if np.any(rho > 1.0 + 1e-12):
		raise ValueError(
			f"{int(np.sum(rho > 1.0 + 1e-12))} points lie outside norm_radius {norm_radius}"
		)
	theta = np.arctan2(xy[:, 1], xy[:, 0])
	return np.minimum(rho, 1.0), theta


def eval_basis(
	points: npt.ArrayLike,
	modes: list[ModeIndex],
	norm_radius: float,
) -> FloatArray:
	"""Sample modes at points.

	:param points: Coordinates, shape (r, 2), in m.

	:param modes: The modes, giving the columns.

	:param norm_radius: The radius mapped to ρ = 1, in m.

	:returns: Z, shape (r, l).

	:raises ValueError: A point lies outside `norm_radius`.
	"""
	rho, theta = _polar(points, norm_radius)
	Z = np.empty((rho.size, len(modes)))
	for k, mode in enumerate(modes):
		Z[:, k] = _mode_values(mode, rho, theta)
	return Z


def projection_matrix(Z: FloatArray) -> FloatArray:
	"""Return the least-squares projector C1 with C1·Z = I.

	C1 comes from a reduced QR factorization of Z, not the normal
	equations.

	:raises ProjectionError: Z does not have full column rank.
	"""
	rows, cols = Z.shape
	if rows < cols:
		raise ProjectionError(
			f"insufficient observation coverage: {rows} points for {cols} modes"
		)
	Q, R = np.linalg.qr(Z, mode='reduced')
	pivots = np.abs(np.diag(R))
	tolerance = max(rows, cols) * np.finfo(np.float64).eps * max(pivots.max(initial=0.0), 1.0)
	if pivots.size == 0 or pivots.min() <= tolerance:
		raise ProjectionError(
			'insufficient observation coverage: the sampled modes are linearly dependent'
		)
	return scipy.linalg.solve_triangular(R, Q.T)


@dataclasses.dataclass(frozen=True, eq=False)
class ZernikeMap:
	"""The sampled basis Z and its projector C1, with C1·Z = I."""

	modes: tuple[ModeIndex, ...]
	Z: FloatArray
	C1: FloatArray
	norm_radius: float

	@property
	def l(self) -> int:
		return len(self.modes)

	def project(self, y: npt.ArrayLike) -> FloatArray:
		"""Map displacements (r,) or (r, f) to coefficients (l,) or (l, f)."""
		return self.C1 @ np.asarray(y, dtype=np.float64)


def build_zernike_map(
	points: npt.ArrayLike,
	l: int,
	norm_radius: float,
) -> ZernikeMap:
	"""Build the map for the first `l` non-piston modes over `points`.

	:raises ProjectionError: The points cannot resolve `l` modes.
	"""
	modes = noll_modes(l)
	Z = eval_basis(points, modes, norm_radius)
	C1 = projection_matrix(Z)
	debug(f"Zernike map: {Z.shape[0]} points, {l} modes, radius {norm_radius}")
	return ZernikeMap(
		modes=tuple(modes),
		Z=Z,
		C1=C1,
		norm_radius=norm_radius,
	)


def synthesize_target(
	mode: ModeIndex,
	amplitude: float,
	points: npt.ArrayLike,
	norm_radius: float,
) -> FloatArray:
	"""Return the desired wavefront `amplitude · Z_mode` at `points`.
	"""
	rho, theta = _polar(points, norm_radius)
	return amplitude * _mode_values(mode, rho, theta)
