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

# The run manifest is the only output allowed to change between identical
# runs: it holds wall-clock timings.

# Stdlib imports
import collections.abc
import contextlib
import dataclasses
import datetime
import importlib.metadata
import logging
import pathlib
from typing import Any

# PyPi imports
import humanfriendly

# Local imports
from platedm.artifacts import file_hash, write_json

# Set up logging
logger = logging.getLogger(__name__)
info = logger.info
debug = logger.debug

MANIFEST_NAME = 'manifest.json'

DISTRIBUTIONS = (
	'platedm',
	'numpy',
	'scipy',
	'torch',
	'statsmodels',
	'pandas',
	'pydantic',
	'matplotlib',
	'humanfriendly',
)


def versions() -> dict[str, str]:
	"""Installed versions of platedm and its dependencies."""
	found = {}
	for name in DISTRIBUTIONS:
		try:
			found[name] = importlib.metadata.version(name)
		except importlib.metadata.PackageNotFoundError:
			found[name] = 'unknown'
	return found


@dataclasses.dataclass
class RunManifest:
	"""What a command did: its config, files, versions, and timings."""

	command: str
	config_hash: str
	output_dir: pathlib.Path
	artifacts: list[pathlib.Path] = dataclasses.field(default_factory=list)
	timings: dict[str, float] = dataclasses.field(default_factory=dict)
	started: datetime.datetime = dataclasses.field(
		default_factory=lambda: datetime.datetime.now(datetime.timezone.utc)
	)

	def add(self, paths: pathlib.Path | collections.abc.Iterable[pathlib.Path]) -> None:
		"""Record emitted files."""
		if isinstance(paths, pathlib.Path):
			paths = [paths]
		for path in paths:
			if path not in self.artifacts:
				self.artifacts.append(path)

	@contextlib.contextmanager
	def timed(self, step: str) -> collections.abc.Iterator[None]:
		"""Time a step of the command."""
		timer = humanfriendly.Timer()
		yield
		self.timings[step] = timer.elapsed_time
		info(f"{step} took {timer}")

	def to_dict(self) -> dict[str, Any]:
		return {
			'command': self.command,
			'config_hash': self.config_hash,
			'started': self.started.isoformat(),
			'versions': versions(),
			'artifacts': [
				{
					'path': self._relative(path),
					'sha256': file_hash(path),
				}
				for path in sorted(self.artifacts)
			],
			'timings': {
				step: {
					'seconds': seconds,
					'text': humanfriendly.format_timespan(seconds, detailed=True),
				}
				for step, seconds in self.timings.items()
			},
		}

	def _relative(self, path: pathlib.Path) -> str:
		try:
			return str(path.relative_to(self.output_dir))
		except ValueError:
			return str(path)

	def write(self) -> pathlib.Path:
		path = self.output_dir / MANIFEST_NAME
		write_json(path, self.to_dict())
		debug(f"Manifest lists {len(self.artifacts)} files")
		return path
