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

"""Keyed random streams

Every random draw in platedm comes from a counter-based (Philox) generator
keyed by a seed and a purpose tag.  Drawing noise never disturbs the input
draw, and each candidate past window gets its own network initialization,
no matter which order things run in.
"""

# Stdlib imports
import enum
import logging

# PyPi imports
import numpy as np

# Set up logging
logger = logging.getLogger(__name__)
debug = logger.debug


class Purpose(enum.IntEnum):
	"""What a random stream is used for.
	"""
	INPUTS = 1
	INITIAL_STATE = 2
	MEASUREMENT_NOISE = 3
	NETWORK_INIT = 4
	NETWORK_SHUFFLE = 5
	SYNTHETIC = 6


def stream(
	seed: int,
	purpose: Purpose,
	*extra: int,
) -> np.random.Generator:
	"""Return a generator for one (seed, purpose) pair.

	:param seed: The user-facing seed.

	:param purpose: What the stream is for.

	:param extra: More integers to mix into the key, like a past window.

	:returns: A fresh Philox-backed generator.

	:raises ValueError: The seed is negative.
	"""
	if seed < 0:
		raise ValueError(f"Seeds must be non-negative, got {seed}")
	debug(f"Opening stream seed={seed} purpose={purpose.name} extra={extra}")
	sequence = np.random.SeedSequence([seed, int(purpose), *extra])
	return np.random.Generator(np.random.Philox(sequence))
