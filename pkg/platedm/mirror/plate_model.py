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

"""Structural model of a faceplate deformable mirror

A thin circular faceplate is pushed by a square lattice of actuators.  Each
actuator is a mass-spring-damper lumped at the plate node nearest to it.  The
result is the second-order model

	M1 z'' + M2 z' + M3 z = B u,    y = C z

where `z` holds the out-of-plane displacement of every plate node, `u` holds
the actuator forces, and `y` holds the displacements of the observed nodes.

The plate bending stiffness comes from a finite-difference discretization of
the Kirchhoff-Love bending energy on a square lattice masked to the disk.
The stiffness matrix is the exact Hessian of the discrete energy, so it is
symmetric and positive semi-definite, and free edges need no special
stencils: curvature terms that would reach outside the plate simply do not
exist.
"""

# Stdlib imports
import dataclasses
import enum
import functools
import logging
from typing import Any

# PyPi imports
import numpy as np
import numpy.typing as npt
import scipy.sparse
import scipy.sparse.linalg

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
IntArray = npt.NDArray[np.int64]

LATTICE_TOLERANCE: float = 1e-9
"""Relative slack when testing lattice points against a radius."""

SINGULAR_PIVOT_RATIO: float = 1e-11
"""Pivots smaller than this (relative to the largest) mean a singular M3."""


class BoundaryMode(enum.Enum):
	"""How the plate edge is supported.
	"""
	FREE = 'free'
	CLAMPED = 'clamped'


@dataclasses.dataclass(frozen=True)
class MaterialSpec:
	"""Faceplate material and geometry.

	The defaults are the Zerodur faceplate of the reference mirror.

	:raises ValueError: A field is out of range.
	"""

	youngs_modulus: float = 9.03e10
	"""Young's modulus, in Pa."""

	density: float = 2530.0
	"""Density, in kg/m³."""

	poisson_ratio: float = 0.24
	"""Poisson's ratio, in [0, 0.5)."""

	thickness: float = 0.003
	"""Plate thickness, in m."""

	plate_radius: float = 1.0
	"""Plate radius, in m."""

	def __post_init__(self) -> None:
		for name in ('youngs_modulus', 'density', 'thickness', 'plate_radius'):
			if not getattr(self, name) > 0:
				raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
		if not (0.0 <= self.poisson_ratio < 0.5):
			raise ValueError(f"poisson_ratio must be in [0, 0.5), got {self.poisson_ratio}")

	@property
	def flexural_rigidity(self) -> float:
		"""D = E·t³/(12(1−ν²)), in N·m."""
		return (
			self.youngs_modulus * self.thickness**3
			/ (12.0 * (1.0 - self.poisson_ratio**2))
		)

	@property
	def areal_mass(self) -> float:
		"""ρ·t, in kg/m²."""
		return self.density * self.thickness


@dataclasses.dataclass(frozen=True)
class ActuatorSpec:
	"""Actuator dynamics and lattice geometry.

	:raises ValueError: A field is out of range.
	"""

	stiffness: float = 1e4
	"""Spring stiffness, in N/m."""

	damping: float = 500.0
	"""Dashpot damping, in N·s/m."""

	mass: float = 0.3
	"""Moving mass, in kg."""

	pitch: float = 0.2
	"""Lattice spacing, in m."""

	inclusion_radius: float = 0.9
	"""Lattice points within this radius get an actuator, in m."""

	def __post_init__(self) -> None:
		if not self.stiffness > 0:
			raise ValueError(f"stiffness must be positive, got {self.stiffness}")
		if not self.mass > 0:
			raise ValueError(f"mass must be positive, got {self.mass}")
		if not self.damping >= 0:
			raise ValueError(f"damping must be non-negative, got {self.damping}")
		if not self.pitch > 0:
			raise ValueError(f"pitch must be positive, got {self.pitch}")
		if not self.inclusion_radius > 0:
			raise ValueError(f"inclusion_radius must be positive, got {self.inclusion_radius}")
		if self.pitch > 2.0 * self.inclusion_radius:
			warning(
				f"Actuator pitch {self.pitch} exceeds twice the inclusion "
				f"radius {self.inclusion_radius}; only the centre actuator fits"
			)


@dataclasses.dataclass(frozen=True, eq=False)
class PlateGrid:
	"""A square lattice of plate nodes, masked to a disk.

	Node `k` sits at `lattice[k] * node_pitch`.  Nodes are numbered row by
	row, bottom to top, left to right.

	In clamped mode the lattice reaches past the plate radius, and every
	node farther than `plate_radius - node_pitch/2` from the centre is pinned
	to zero displacement.
	"""

	node_pitch: float
	plate_radius: float
	lattice: IntArray
	"""Integer lattice coordinates, shape (n, 2)."""

	boundary_mode: BoundaryMode
	pinned: npt.NDArray[np.bool_]
	"""Which nodes are held at zero displacement, shape (n,)."""

	@property
	def n(self) -> int:
		return int(self.lattice.shape[0])

	@property
	def nodes(self) -> FloatArray:
		"""Node coordinates in metres, shape (n, 2)."""
		return self.lattice.astype(np.float64) * self.node_pitch

	@functools.cached_property
	def index(self) -> dict[tuple[int, int], int]:
		"""Map lattice coordinates to node numbers."""
		return {
			(int(i), int(j)): k
			for k, (i, j) in enumerate(self.lattice)
		}

	def neighbour(self,
		di: int,
		dj: int,
	) -> IntArray:
		"""Return the node number at an offset from every node.

		:param di: Offset along x, in lattice steps.

		:param dj: Offset along y, in lattice steps.

		:returns: An array of node numbers, with -1 where the neighbour is
		not on the grid.
		"""
		low = self.lattice.min(axis=0) - 2
		high = self.lattice.max(axis=0) + 2
		table = np.full(
			(int(high[0] - low[0]) + 1, int(high[1] - low[1]) + 1),
			-1,
			dtype=np.int64,
		)
		table[self.lattice[:, 0] - low[0], self.lattice[:, 1] - low[1]] = np.arange(self.n)
		target = self.lattice + np.array([di, dj])
		inside = np.all((target >= low) & (target <= high), axis=1)
		result = np.full(self.n, -1, dtype=np.int64)
		result[inside] = table[
			target[inside, 0] - low[0],
			target[inside, 1] - low[1],
		]
		return result


@dataclasses.dataclass(frozen=True, eq=False)
class ActuatorLayout:
	"""Where the actuators are.

	`node_index` is filled in by `map_layout_to_grid`.
	"""

	lattice: IntArray
	"""Integer lattice coordinates, shape (m, 2)."""

	pitch: float
	node_index: IntArray | None = None
	"""The plate node each actuator pushes on, shape (m,)."""

	@property
	def count(self) -> int:
		return int(self.lattice.shape[0])

	@property
	def positions(self) -> FloatArray:
		"""Actuator coordinates in metres, shape (m, 2)."""
		return self.lattice.astype(np.float64) * self.pitch


@dataclasses.dataclass(frozen=True, eq=False)
class SecondOrderModel:
	"""The assembled model, M1 z'' + M2 z' + M3 z = B u, y = C z.

	Models are never modified after assembly, so they can be shared between
	threads.
	"""

	M1: scipy.sparse.csr_matrix
	M2: scipy.sparse.csr_matrix
	M3: scipy.sparse.csr_matrix
	B: scipy.sparse.csr_matrix
	C: scipy.sparse.csr_matrix
	grid: PlateGrid
	layout: ActuatorLayout
	obs_radius: float
	material: MaterialSpec
	actuator: ActuatorSpec

	@property
	def n(self) -> int:
		return int(self.M3.shape[0])

	@property
	def m(self) -> int:
		return int(self.B.shape[1])

	@property
	def r(self) -> int:
		return int(self.C.shape[0])

	@functools.cached_property
	def observed_nodes(self) -> IntArray:
		"""Node numbers of the observed nodes, in output order."""
		return np.asarray(self.C.indices, dtype=np.int64)

	@property
	def observed_points(self) -> FloatArray:
		"""Coordinates of the observed nodes, shape (r, 2)."""
		return self.grid.nodes[self.observed_nodes]

	@functools.cached_property
	def stiffness_factor(self) -> Any:
		"""A sparse LU factorization of M3.

		:raises RigidModeError: M3 is singular.
		"""
		debug(f"Factorizing M3 ({self.n}x{self.n}, nnz={self.M3.nnz})")
		try:
			factor = scipy.sparse.linalg.splu(self.M3.tocsc())
		except RuntimeError as e:
			raise RigidModeError(f"unsupported rigid modes: {e}")
		pivots = np.abs(factor.U.diagonal())
		if pivots.min() <= SINGULAR_PIVOT_RATIO * pivots.max():
			raise RigidModeError(
				'unsupported rigid modes: the stiffness matrix is singular; '
				'at least three non-collinear actuators are needed'
			)
		return factor


def _disk_lattice(
	radius: float,
) -> IntArray:
	"""Return every integer point (i, j) with i² + j² ≤ radius².

	Points come back row by row, bottom to top, left to right.
	"""
	reach = int(np.floor(radius)) + 1
	steps = np.arange(-reach, reach + 1, dtype=np.int64)
	ii, jj = np.meshgrid(steps, steps, indexing='xy')
	ii = ii.ravel()
	jj = jj.ravel()
	limit = radius**2 * (1.0 + LATTICE_TOLERANCE) + LATTICE_TOLERANCE
	keep = (ii * ii + jj * jj) <= limit
	return np.column_stack((ii[keep], jj[keep]))


def reference_material() -> MaterialSpec:
	"""The Zerodur faceplate of the reference mirror."""
	return MaterialSpec()


def reference_actuator(
	pitch: float = 0.2,
) -> ActuatorSpec:
	"""The reference mirror's actuators, at a given pitch."""
	return ActuatorSpec(pitch=pitch)


def build_layout(
	act: ActuatorSpec,
) -> ActuatorLayout:
	"""Place actuators on every lattice point inside the inclusion radius.

	The lattice has a point at the origin, and spacing `act.pitch`.

	:param act: The actuator parameters.

	:returns: The layout, without node assignments.

	:raises GeometryError: No lattice point qualifies.
	"""
	lattice = _disk_lattice(act.inclusion_radius / act.pitch)
	if lattice.shape[0] == 0:
		raise GeometryError('no actuators')
	info(f"Actuator layout: {lattice.shape[0]} actuators at pitch {act.pitch}")
	return ActuatorLayout(
		lattice=lattice,
		pitch=act.pitch,
	)


def build_grid(
	mat: MaterialSpec,
	node_pitch: float,
	boundary_mode: BoundaryMode = BoundaryMode.FREE,
) -> PlateGrid:
	"""Lay out plate nodes on a square lattice masked to the plate.

	:param mat: The plate material; only the radius is used.

	:param node_pitch: Node spacing, in m.

	:param boundary_mode: Free or clamped edge.

	:returns: The grid.

	:raises ValueError: The pitch is not positive.

	:raises GeometryError: The pitch is coarser than half the plate radius.
	"""
	if not node_pitch > 0:
		raise ValueError(f"node_pitch must be positive, got {node_pitch}")
	radius = mat.plate_radius
	if node_pitch > radius / 2.0:
		raise GeometryError(
			f"pitch too coarse: {node_pitch} m for a plate of radius {radius} m"
		)
	if node_pitch > radius / 4.0:
		warning(f"Node pitch {node_pitch} m gives a very coarse grid")

	if boundary_mode is BoundaryMode.FREE:
		lattice = _disk_lattice(radius / node_pitch)
		pinned = np.zeros(lattice.shape[0], dtype=np.bool_)
	else:
		lattice = _disk_lattice(radius / node_pitch + 1.5)
		distance = np.hypot(lattice[:, 0], lattice[:, 1]) * node_pitch
		pinned = distance > (radius - 0.5 * node_pitch) * (1.0 + LATTICE_TOLERANCE)  # type: ignore[assignment]

	debug(f"Grid: {lattice.shape[0]} nodes, {int(pinned.sum())} pinned")
	return PlateGrid(
		node_pitch=node_pitch,
		plate_radius=radius,
		lattice=lattice,
		boundary_mode=boundary_mode,
		pinned=pinned,
	)


def map_layout_to_grid(
	layout: ActuatorLayout,
	grid: PlateGrid,
) -> ActuatorLayout:
	"""Attach every actuator to its nearest free plate node.

	:returns: A new layout with `node_index` filled in.

	:raises GeometryError: Two actuators land on the same node.
	"""
	if layout.count == 0:
		return dataclasses.replace(layout, node_index=np.zeros(0, dtype=np.int64))
	candidates = np.flatnonzero(~grid.pinned)
	nodes = grid.nodes[candidates]
	distance = np.linalg.norm(
		layout.positions[:, None, :] - nodes[None, :, :],
		axis=2,
	)
	node_index = candidates[np.argmin(distance, axis=1)].astype(np.int64)
	if np.unique(node_index).size != node_index.size:
		raise GeometryError(
			'duplicate actuator nodes: the grid is too coarse for the actuator pitch'
		)
	return dataclasses.replace(layout, node_index=node_index)


def _quadratic_form(
	left: IntArray,
	left_coef: FloatArray,
	right: IntArray,
	right_coef: FloatArray,
	weight: float,
) -> tuple[IntArray, IntArray, FloatArray]:
	"""Coordinate entries of weight·Σ_s a_s b_sᵀ for stencils a, b.

	:param left: Node numbers of the left stencil, shape (sites, ka).

	:param left_coef: Coefficients of the left stencil, shape (ka,).

	:param right: Node numbers of the right stencil, shape (sites, kb).

	:param right_coef: Coefficients of the right stencil, shape (kb,).

	:param weight: A scalar weight.
	"""
	sites = left.shape[0]
	rows = np.broadcast_to(left[:, :, None], (sites, left.shape[1], right.shape[1]))
	cols = np.broadcast_to(right[:, None, :], (sites, left.shape[1], right.shape[1]))
	data = np.broadcast_to(
		weight * np.outer(left_coef, right_coef)[None, :, :],
		(sites, left.shape[1], right.shape[1]),
	)
	return rows.ravel(), cols.ravel(), data.ravel()


def assemble_bending_stiffness(
	grid: PlateGrid,
	mat: MaterialSpec,
) -> scipy.sparse.csr_matrix:
	"""Assemble the plate bending stiffness.

	The discrete bending energy is

		U = (D/2)·d²·[ Σ_nodes (w_xx² + w_yy² + 2ν·w_xx·w_yy)
		               + Σ_cells 2(1−ν)·w_xy² ]

	with w_xx and w_yy as centred second differences at nodes, and w_xy as
	the mixed difference over each lattice cell.  Where only one of w_xx and
	w_yy exists (along the free edge), the missing curvature is condensed
	out, leaving (1−ν²) times the square of the one that exists.

	The stiffness is the Hessian of U.  In clamped mode, rows and columns of
	pinned nodes are cleared, and their diagonal is set to the mean free
	diagonal.

	:param grid: The plate grid.

	:param mat: The plate material.

	:returns: A symmetric positive semi-definite n×n matrix.
	"""
	d = grid.node_pitch
	nu = mat.poisson_ratio
	weight = mat.flexural_rigidity * d**2
	centre = np.arange(grid.n, dtype=np.int64)

	west = grid.neighbour(-1, 0)
	east = grid.neighbour(1, 0)
	south = grid.neighbour(0, -1)
	north = grid.neighbour(0, 1)
	north_east = grid.neighbour(1, 1)

	second = np.array([1.0, -2.0, 1.0]) / d**2
	twist = np.array([1.0, -1.0, -1.0, 1.0]) / d**2

	has_xx = (west >= 0) & (east >= 0)
	has_yy = (south >= 0) & (north >= 0)
	has_xy = (east >= 0) & (north >= 0) & (north_east >= 0)

	xx = np.column_stack((west, centre, east))
	yy = np.column_stack((south, centre, north))
	xy = np.column_stack((centre, east, north, north_east))

	both = has_xx & has_yy
	only_xx = has_xx & ~has_yy
	only_yy = has_yy & ~has_xx

	pieces = [
		_quadratic_form(xx[both], second, xx[both], second, weight),
		_quadratic_form(yy[both], second, yy[both], second, weight),
		_quadratic_form(xx[both], second, yy[both], second, weight * nu),
		_quadratic_form(yy[both], second, xx[both], second, weight * nu),
		_quadratic_form(xx[only_xx], second, xx[only_xx], second, weight * (1.0 - nu**2)),
		_quadratic_form(yy[only_yy], second, yy[only_yy], second, weight * (1.0 - nu**2)),
		_quadratic_form(xy[has_xy], twist, xy[has_xy], twist, weight * 2.0 * (1.0 - nu)),
	]
	rows = np.concatenate([piece[0] for piece in pieces])
	cols = np.concatenate([piece[1] for piece in pieces])
	data = np.concatenate([piece[2] for piece in pieces])

	# Duplicates are summed in a fixed order, so assembly is reproducible.
	K = scipy.sparse.coo_matrix((data, (rows, cols)), shape=(grid.n, grid.n)).tocsr()
	K = ((K + K.T) * 0.5).tocsr()

	if grid.pinned.any():
		free = (~grid.pinned).astype(np.float64)
		keep = scipy.sparse.diags(free)
		scale = float(K.diagonal()[~grid.pinned].mean())
		K = (keep @ K @ keep + scipy.sparse.diags(grid.pinned.astype(np.float64) * scale)).tocsr()

	K.eliminate_zeros()
	K.sort_indices()
	debug(f"Bending stiffness: n={grid.n}, nnz={K.nnz}")
	return K


def assemble_model(
	grid: PlateGrid,
	mat: MaterialSpec,
	act: ActuatorSpec,
	layout: ActuatorLayout,
	obs_radius: float = 0.6,
	rayleigh_alpha: float = 0.0,
	rayleigh_beta: float = 0.0,
) -> SecondOrderModel:
	"""Assemble M1, M2, M3, B and C.

	* M1 is the lumped plate mass ρ·t·d² at every node, plus the actuator
	  mass at actuated nodes.
	* M2 is the actuator damping at actuated nodes, plus the optional
	  Rayleigh terms α·M1 + β·K.
	* M3 is the bending stiffness plus the actuator stiffness at actuated
	  nodes.
	* Column j of B is a unit force at actuator j's node.
	* C picks the nodes within `obs_radius` of the centre.

	:param grid: The plate grid.

	:param mat: The plate material.

	:param act: The actuator parameters.

	:param layout: The actuator layout.  If it has no node assignments yet,
	they are computed here.

	:param obs_radius: Radius of the observed disk, in m.

	:param rayleigh_alpha: Mass-proportional plate damping.

	:param rayleigh_beta: Stiffness-proportional plate damping.

	:returns: The model.

	:raises GeometryError: Actuators share a node, or nothing is observed.
	"""
	if layout.node_index is None:
		layout = map_layout_to_grid(layout, grid)
	assert layout.node_index is not None
	node_index = layout.node_index
	if np.unique(node_index).size != node_index.size:
		raise GeometryError('duplicate actuator nodes')
	if obs_radius >= mat.plate_radius:
		warning(
			f"Observation radius {obs_radius} m reaches the plate edge "
			f"({mat.plate_radius} m)"
		)

	n = grid.n
	m = layout.count
	K = assemble_bending_stiffness(grid, mat)

	lumped = np.full(n, mat.areal_mass * grid.node_pitch**2)
	mass = lumped.copy()
	np.add.at(mass, node_index, act.mass)
	damping = np.zeros(n)
	np.add.at(damping, node_index, act.damping)
	springs = np.zeros(n)
	np.add.at(springs, node_index, act.stiffness)

	M1 = scipy.sparse.diags(mass).tocsr()
	M2 = scipy.sparse.diags(damping).tocsr()
	if rayleigh_alpha != 0.0 or rayleigh_beta != 0.0:
		M2 = (M2 + rayleigh_alpha * M1 + rayleigh_beta * K).tocsr()
	M3 = (K + scipy.sparse.diags(springs)).tocsr()
	M3.sort_indices()

	B = scipy.sparse.csr_matrix(
		(np.ones(m), (node_index, np.arange(m))),
		shape=(n, m),
	)

	distance = np.linalg.norm(grid.nodes, axis=1)
	observed = np.flatnonzero(
		(distance <= obs_radius * (1.0 + LATTICE_TOLERANCE)) & ~grid.pinned
	)
	if observed.size == 0:
		raise GeometryError(f"no plate nodes within obs_radius {obs_radius} m")
	C = scipy.sparse.csr_matrix(
		(np.ones(observed.size), (np.arange(observed.size), observed)),
		shape=(observed.size, n),
	)

	info(f"Assembled model: n={n}, m={m}, r={observed.size}, nnz(M3)={M3.nnz}")
	return SecondOrderModel(
		M1=M1,
		M2=M2,
		M3=M3,
		B=B,
		C=C,
		grid=grid,
		layout=layout,
		obs_radius=obs_radius,
		material=mat,
		actuator=act,
	)
