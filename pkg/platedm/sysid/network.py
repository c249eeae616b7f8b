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

"""Layered-network predictors

The network takes one regressor row (in scaled units) and returns one
scaled output vector.  Weights live in numpy arrays between runs; training
copies them into a float64 `torch.nn.Sequential` and back.

With identity activations the whole network is one affine map, so it can
be collapsed into an equivalent VARX model.
"""

# Stdlib imports
import dataclasses
import logging
import math
import time
from typing import Any

# PyPi imports
import humanfriendly
import numpy as np
import numpy.typing as npt
import torch
from torch import nn

# Local imports
from platedm.exceptions import *
from platedm.streams import Purpose, stream
from platedm.sysid.regression import RegressionSet, Scaling
from platedm.sysid.varx import VarxModel

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

FloatArray = npt.NDArray[np.float64]
Layer = tuple[FloatArray, FloatArray]

ACTIVATIONS = ('identity', 'tanh', 'relu')


def _activate(name: str, x: FloatArray) -> FloatArray:
	if name == 'tanh':
		return np.tanh(x)
	if name == 'relu':
		return np.maximum(x, 0.0)
	return x


def _torch_activation(name: str) -> nn.Module:
	if name == 'tanh':
		return nn.Tanh()
	if name == 'relu':
		return nn.ReLU()
	return nn.Identity()


@dataclasses.dataclass(frozen=True, eq=False)
class NetworkModel:
	"""A fully connected network predicting q_k from one regressor row.

	Each layer is a pair (W, b) with W of shape (out, in).  The activation
	follows every layer but the last.
	"""

	p: int
	l: int
	m: int
	layers: tuple[Layer, ...]
	scaling: Scaling
	activation: str = 'identity'

	def __post_init__(self) -> None:
		if self.activation not in ACTIVATIONS:
			raise ValueError(f"Unknown activation {self.activation!r}")
		expected = self.p * (self.l + self.m)
		for W, b in self.layers:
			if W.shape[1] != expected or b.shape != (W.shape[0],):
				raise ValueError('Layer shapes do not chain')
			expected = W.shape[0]
		if expected != self.l:
			raise ValueError(f"The last layer has {expected} outputs, expected {self.l}")

	@property
	def widths(self) -> list[int]:
		return [self.layers[0][0].shape[1]] + [W.shape[0] for W, _ in self.layers]

	@property
	def num_params(self) -> int:
		return sum(W.size + b.size for W, b in self.layers)

	def forward(self, X: FloatArray) -> FloatArray:
		"""Evaluate on scaled regressor rows, shape (rows, p(l+m))."""
		out = X
		for index, (W, b) in enumerate(self.layers):
			out = out @ W.T + b
			if index < len(self.layers) - 1:
				out = _activate(self.activation, out)
		return out

	def predict_rows(self, Phi: FloatArray) -> FloatArray:
		"""One-step predictions for physical-unit regressor rows."""
		scaled = Phi / self.scaling.regressor_scale(self.p)
		result: FloatArray = self.forward(scaled) * self.scaling.q_scale
		return result

	def collapse(self) -> Layer:
		"""Collapse an identity-activation network to one affine map.

		:returns: (W, b) in physical units, with q = W φ + b.

		:raises ValueError: The activation is not the identity.
		"""
		if self.activation != 'identity':
			raise ValueError('Only identity-activation networks collapse')
		W = np.eye(self.layers[0][0].shape[1])
		b = np.zeros(self.layers[0][0].shape[1])
		for layer_W, layer_b in self.layers:
			W = layer_W @ W
			b = layer_W @ b + layer_b  # type: ignore[assignment]
		column_scale = self.scaling.regressor_scale(self.p)
		q_scale = self.scaling.q_scale
		return (
			W * q_scale[:, None] / column_scale[None, :],
			b * q_scale,
		)

	def to_varx(self) -> VarxModel:
		"""Return the equivalent VARX model.

		:raises ValueError: The network is not linear, or has a net bias.
		"""
		W, b = self.collapse()
		if np.any(b != 0.0):
			raise ValueError('The network has a non-zero intercept')
		return VarxModel.from_weights(W.T.copy(), self.p, self.l, self.m)

	def to_dict(self) -> dict[str, Any]:
		return {
			'kind': 'network',
			'p': self.p,
			'l': self.l,
			'm': self.m,
			'activation': self.activation,
			'layer_shapes': [list(W.shape) for W, _ in self.layers],
			'weights': [W.ravel().tolist() for W, _ in self.layers],
			'biases': [b.tolist() for _, b in self.layers],
			'scaling': self.scaling.to_dict(),
		}

	@classmethod
	def from_dict(cls, data: dict[str, Any]) -> 'NetworkModel':
		layers = tuple(
			(
				np.asarray(weights, dtype=np.float64).reshape(shape),
				np.asarray(biases, dtype=np.float64),
			)
			for shape, weights, biases in zip(
				data['layer_shapes'], data['weights'], data['biases'],
			)
		)
		return cls(
			p=int(data['p']),
			l=int(data['l']),
			m=int(data['m']),
			layers=layers,
			scaling=Scaling.from_dict(data['scaling']),
			activation=data.get('activation', 'identity'),
		)


@dataclasses.dataclass(frozen=True, eq=False)
class TrainingHistory:
	"""Per-epoch mean squared errors, in scaled units."""

	train_mse: FloatArray
	val_mse: FloatArray
	best_epoch: int
	"""The epoch (counted from 1) whose weights were kept."""


def init_network(
	p: int,
	l: int,
	m: int,
	width: int = 32,
	depth: int = 2,
	seed: int = 0,
	activation: str = 'identity',
	scaling: Scaling | None = None,
) -> NetworkModel:
	"""Create a network with `depth` hidden layers of `width` units.

	Weights are uniform on ±1/√fan_in, and biases are zero.  Each past
	window gets its own random stream, so the result depends only on the
	arguments.

	:raises ValueError: `width` or `depth` is out of range.
	"""
	if width < 1:
		raise ValueError(f"width must be at least 1, got {width}")
	if depth < 0:
		raise ValueError(f"depth must be non-negative, got {depth}")
	rng = stream(seed, Purpose.NETWORK_INIT, p)
	widths = [p * (l + m)] + [width] * depth + [l]
	layers = []
	for fan_in, fan_out in zip(widths[:-1], widths[1:]):
		bound = 1.0 / math.sqrt(fan_in)
		layers.append((
			rng.uniform(-bound, bound, size=(fan_out, fan_in)),
			np.zeros(fan_out),
		))
	return NetworkModel(
		p=p,
		l=l,
		m=m,
		layers=tuple(layers),
		scaling=scaling if scaling is not None else Scaling.identity(l, m),
		activation=activation,
	)


def _to_torch(net: NetworkModel) -> nn.Sequential:
	modules: list[nn.Module] = []
	for index, (W, b) in enumerate(net.layers):
		linear = nn.Linear(W.shape[1], W.shape[0], dtype=torch.float64)
		with torch.no_grad():
			linear.weight.copy_(torch.from_numpy(W))
			linear.bias.copy_(torch.from_numpy(b))
		modules.append(linear)
		if index < len(net.layers) - 1:
			modules.append(_torch_activation(net.activation))
	return nn.Sequential(*modules)


def _snapshot(module: nn.Sequential) -> tuple[Layer, ...]:
	return tuple(
		(
			layer.weight.detach().numpy().copy(),
			layer.bias.detach().numpy().copy(),
		)
		for layer in module
		if isinstance(layer, nn.Linear)
	)


def train_network(
	net: NetworkModel,
	train: RegressionSet,
	val: RegressionSet,
	epochs: int = 5000,
	lr: float = 1e-3,
	batch: int | None = None,
	seed: int = 0,
) -> tuple[NetworkModel, TrainingHistory]:
	"""Train with Adam (β = 0.9, 0.999) on the mean squared error.

	After every epoch the closed-loop (one-step) MSE on `val` is measured,
	and the weights with the smallest validation MSE are returned.  Both
	sets must use the network's scaling.

	:param net: The starting network.

	:param train: Training regressors.

	:param val: Validation regressors.

	:param epochs: Passes over the training set.

	:param lr: Adam step size.

	:param batch: Mini-batch size; none means the full set.

	:param seed: Seeds the mini-batch shuffle.

	:returns: The best network, and the loss history.

	:raises ValueError: `epochs` is below 1.

	:raises TrainingDivergedError: The loss stopped being finite.
	"""
	if epochs < 1:
		raise ValueError(f"Need at least one epoch, got {epochs}")
	if train.p != net.p or val.p != net.p:
		raise ValueError('The regression sets were built for a different past window')

	module = _to_torch(net)
	optimizer = torch.optim.Adam(module.parameters(), lr=lr, betas=(0.9, 0.999))
	loss_fn = nn.MSELoss()
	X = torch.from_numpy(train.Phi)
	Y = torch.from_numpy(train.T)
	X_val = torch.from_numpy(val.Phi)
	Y_val = torch.from_numpy(val.T)
	rows = train.rows
	shuffle = stream(seed, Purpose.NETWORK_SHUFFLE, net.p)

	train_mse = np.empty(epochs)
	val_mse = np.empty(epochs)
	best_val = math.inf
	best_epoch = 0
	best_layers = net.layers
	report_every = max(1, epochs // 10)
	start = time.perf_counter()

	for epoch in range(epochs):
		module.train()
		if batch is None or batch >= rows:
			batches = [np.arange(rows)]
		else:
			order = shuffle.permutation(rows)
			batches = [order[i:i + batch] for i in range(0, rows, batch)]  # type: ignore[misc]
		for indices in batches:
			index = torch.from_numpy(indices)
			optimizer.zero_grad()
			loss = loss_fn(module(X[index]), Y[index])
			loss.backward()
			optimizer.step()

		module.eval()
		with torch.no_grad():
			train_mse[epoch] = loss_fn(module(X), Y).item()
			val_mse[epoch] = loss_fn(module(X_val), Y_val).item()
		if not (math.isfinite(train_mse[epoch]) and math.isfinite(val_mse[epoch])):
			raise TrainingDivergedError(
				f"Training diverged at epoch {epoch + 1}; try a smaller learning rate than {lr}"
			)
		if val_mse[epoch] < best_val:
			best_val = float(val_mse[epoch])
			best_epoch = epoch + 1
			best_layers = _snapshot(module)

		debug('p=%d epoch %d: train %.6e, val %.6e', net.p, epoch + 1, train_mse[epoch], val_mse[epoch])
		if (epoch + 1) % report_every == 0:
			info(
				f"p={net.p}: epoch {epoch + 1}/{epochs}, train MSE {train_mse[epoch]:.4e}, "
				f"validation MSE {val_mse[epoch]:.4e}"
			)

	info(
		f"p={net.p}: trained {epochs} epochs in "
		f"{humanfriendly.format_timespan(time.perf_counter() - start)}, "
		f"best validation epoch {best_epoch}"
	)
	return (
		dataclasses.replace(net, layers=best_layers),
		TrainingHistory(
			train_mse=train_mse,
			val_mse=val_mse,
			best_epoch=best_epoch,
		),
	)
