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

"""Experiment configuration

A config is a JSON document validated against `ExperimentConfig`.  Every
field but `output_dir` has a default, and the defaults describe the
reference mirror.  Keys can be overridden from the command line with dotted
paths, like `identification.p_grid=1:20`.
"""

# Stdlib imports
import hashlib
import json
import logging
import os
import pathlib
from typing import Any, Literal

# PyPi imports
import pydantic
from pydantic import BaseModel, ConfigDict, Field

# Local imports
from platedm.exceptions import *
from platedm.mirror.plate_model import ActuatorSpec, BoundaryMode, MaterialSpec
from platedm.mirror.zernike import parse_mode
from platedm.sysid.selection import SelectionSettings

# Set up logging
logger = logging.getLogger(__name__)
exception = logger.exception
error = logger.error
warning = logger.warning
info = logger.info
debug = logger.debug

THREADS_VARIABLE = 'PLATEDM_THREADS'


class _Section(BaseModel):
	model_config = ConfigDict(extra='forbid')


class MaterialConfig(_Section):
	youngs_modulus: float = Field(9.03e10, gt=0)
	density: float = Field(2530.0, gt=0)
	poisson_ratio: float = Field(0.24, ge=0, lt=0.5)
	thickness: float = Field(0.003, gt=0)
	plate_radius: float = Field(1.0, gt=0)

	def to_spec(self) -> MaterialSpec:
		return MaterialSpec(**self.model_dump())


class ActuatorConfig(_Section):
	stiffness: float = Field(1e4, gt=0)
	damping: float = Field(500.0, ge=0)
	mass: float = Field(0.3, gt=0)
	pitch: float = Field(0.2, gt=0)
	inclusion_radius: float = Field(0.9, gt=0)

	def to_spec(self) -> ActuatorSpec:
		return ActuatorSpec(**self.model_dump())


class GridConfig(_Section):
	node_pitch: float = Field(0.05, gt=0)
	boundary_mode: Literal['free', 'clamped'] = 'free'
	rayleigh_alpha: float = Field(0.0, ge=0)
	rayleigh_beta: float = Field(0.0, ge=0)

	@property
	def boundary(self) -> BoundaryMode:
		return BoundaryMode(self.boundary_mode)


class ObservationConfig(_Section):
	obs_radius: float = Field(0.6, gt=0)
	modes: int = Field(32, ge=1)
	"""How many Zernike modes (after piston) make up the output."""


class SteadyStateConfig(_Section):
	modes: list[str] = ['Z2^0', 'Z2^2', 'Z3^1', 'Z3^3']
	amplitude: float = 1e-6
	tol: float = Field(1e-10, gt=0)
	max_iter: int | None = Field(None, ge=1)

	@pydantic.field_validator('modes')
	@classmethod
	def _check_modes(cls, value: list[str]) -> list[str]:
		for name in value:
			parse_mode(name)
		return value


class SimulationConfig(_Section):
	h: float = Field(1e-3, gt=0)
	f: int = Field(4000, ge=2)
	input_std: float = Field(0.5, ge=0)
	init_std: float = Field(1e-6, ge=0)
	snr: float | None = Field(None, gt=0)


class IdentificationConfig(_Section):
	p_grid: list[int] = list(range(1, 21))
	estimator: Literal['network', 'varx'] = 'network'
	width: int = Field(32, ge=1)
	depth: int = Field(2, ge=0)
	activation: Literal['identity', 'tanh', 'relu'] = 'identity'
	epochs: int = Field(5000, ge=1)
	lr: float = Field(1e-3, gt=0)
	batch: int | None = Field(None, ge=1)
	ridge: float = Field(1e-10, ge=0)
	aic_floor: float = Field(1e-10, gt=0)
	max_lag: int = Field(100, ge=1)
	trace_channel: int = Field(0, ge=0)
	"""The output channel written to the prediction-trace CSV."""

	@pydantic.field_validator('p_grid', mode='before')
	@classmethod
	def _parse_range(cls, value: Any) -> Any:
		if isinstance(value, str):
			return parse_p_grid(value)
		return value

	@pydantic.field_validator('p_grid')
	@classmethod
	def _check_grid(cls, value: list[int]) -> list[int]:
		if not value:
			raise ValueError('the past-window grid is empty')
		if min(value) < 1:
			raise ValueError('past windows start at 1')
		return value

	def settings(self, network_seed: int, threads: int = 1) -> SelectionSettings:
		return SelectionSettings(
			estimator=self.estimator,
			width=self.width,
			depth=self.depth,
			activation=self.activation,
			epochs=self.epochs,
			lr=self.lr,
			batch=self.batch,
			ridge=self.ridge,
			max_lag=self.max_lag,
			network_seed=network_seed,
			aic_floor=self.aic_floor,
			threads=threads,
		)


class SeedsConfig(_Section):
	train: int = Field(1, ge=0)
	val: int = Field(2, ge=0)
	test: int = Field(3, ge=0)
	network: int = Field(4, ge=0)


class ExperimentConfig(_Section):
	"""A complete experiment.
	"""

	material: MaterialConfig = Field(default_factory=MaterialConfig)  # type: ignore[arg-type]
	actuator: ActuatorConfig = Field(default_factory=ActuatorConfig)  # type: ignore[arg-type]
	grid: GridConfig = Field(default_factory=GridConfig)  # type: ignore[arg-type]
	observation: ObservationConfig = Field(default_factory=ObservationConfig)  # type: ignore[arg-type]
	steady_state: SteadyStateConfig = Field(default_factory=SteadyStateConfig)  # type: ignore[arg-type]
	simulation: SimulationConfig = Field(default_factory=SimulationConfig)  # type: ignore[arg-type]
	identification: IdentificationConfig = Field(default_factory=IdentificationConfig)  # type: ignore[arg-type]
	seeds: SeedsConfig = Field(default_factory=SeedsConfig)  # type: ignore[arg-type]
	output_dir: str

	@property
	def output_path(self) -> pathlib.Path:
		return pathlib.Path(self.output_dir)


def parse_p_grid(text: str) -> list[int]:
	"""Parse `a:b` (inclusive) or `a,b,c` into a list of past windows.

	:raises ValueError: The text is not a range or a list.
	"""
	text = text.strip()
	if ':' in text:
		low, _, high = text.partition(':')
		start, stop = int(low), int(high)
		if stop < start:
			raise ValueError(f"empty range {text!r}")
		return list(range(start, stop + 1))
	return [int(part) for part in text.split(',') if part.strip()]


def parse_override(text: str) -> tuple[list[str], Any]:
	"""Split `a.b.c=value` into a key path and a value.

	The value is read as JSON if it parses, and as a plain string otherwise.

	:raises ConfigError: There is no `=`, or the key is empty.
	"""
	key, sep, raw = text.partition('=')
	key = key.strip()
	if not sep or not key:
		raise ConfigError(f"overrides look like key.path=value, got {text!r}")
	try:
		value = json.loads(raw)
	except json.JSONDecodeError:
		value = raw
	return key.split('.'), value


def _apply_override(
	data: dict[str, Any],
	path: list[str],
	value: Any,
) -> None:
	node = data
	for index, part in enumerate(path[:-1]):
		child = node.setdefault(part, {})
		if not isinstance(child, dict):
			raise ConfigError('not a section', key='.'.join(path[:index + 1]))
		node = child
	node[path[-1]] = value


def validate_config(data: dict[str, Any]) -> ExperimentConfig:
	"""Validate a raw config document.

	:raises ConfigError: Validation failed.  The key path of the first
	problem is attached.
	"""
	try:
		return ExperimentConfig.model_validate(data)
	except pydantic.ValidationError as e:
		problem = e.errors()[0]
		key = '.'.join(str(part) for part in problem['loc'])
		raise ConfigError(problem['msg'], key=key or None)


def load_config(
	path: pathlib.Path | None = None,
	overrides: list[str] | None = None,
) -> ExperimentConfig:
	"""Load a config file, apply overrides, and validate.

	:param path: A JSON config file, or none to start from defaults.

	:param overrides: `key.path=value` strings, applied in order.

	:raises ConfigError: The file cannot be read, or the result is invalid.
	"""
	data: dict[str, Any] = {}
	if path is not None:
		try:
			loaded = json.loads(path.read_text())
		except OSError as e:
			raise ConfigError(f"cannot read {path}: {e.strerror}")
		except json.JSONDecodeError as e:
			raise ConfigError(f"{path} is not valid JSON: {e}")
		if not isinstance(loaded, dict):
			raise ConfigError(f"{path} must hold a JSON object")
		data = loaded
	for text in overrides or []:
		key_path, value = parse_override(text)
		debug(f"Override {'.'.join(key_path)} = {value!r}")
		_apply_override(data, key_path, value)
	return validate_config(data)


def resolved_json(config: ExperimentConfig) -> str:
	"""The config with every default filled in, as sorted JSON."""
	return json.dumps(config.model_dump(mode='json'), sort_keys=True, indent=2) + '\n'


def config_hash(config: ExperimentConfig) -> str:
	"""SHA-256 of the resolved config; key order never matters."""
	canonical = json.dumps(
		config.model_dump(mode='json'),
		sort_keys=True,
		separators=(',', ':'),
	)
	return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def thread_count() -> int:
	"""Read the worker-thread count from the environment (default 1).

	:raises ConfigError: The variable is not a positive integer.
	"""
	raw = os.environ.get(THREADS_VARIABLE)
	if raw is None or raw.strip() == '':
		return 1
	try:
		count = int(raw)
	except ValueError:
		raise ConfigError(f"must be a positive integer, got {raw!r}", key=THREADS_VARIABLE)
	if count < 1:
		raise ConfigError(f"must be a positive integer, got {raw!r}", key=THREADS_VARIABLE)
	return count
