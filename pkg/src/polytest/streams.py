"""Deterministic RNG substreams.

Every piece of randomness in the package is drawn from a generator keyed by a
counter tuple ``(seed, *key)`` fed to :class:`numpy.random.SeedSequence`.  The
scheme is documented here once and reused everywhere:

* ``(seed, ROLE_DATA, rep, cell)`` - data draws in simulation replicates,
* ``(seed, ROLE_PARAMS, rep)`` - random model parameters per replicate,
* ``(seed, ROLE_TUPLES)`` - the Bernoulli index-tuple sample of one test,
* ``(seed, ROLE_PARTITION)`` - the block partitions of the projection step,
* ``(seed, ROLE_MULTIPLIER, a)`` - the Gaussian multipliers of bootstrap
  replicate ``a``.

Two streams with different key tuples are statistically independent, and a
stream is fully determined by its key, independent of thread count or
execution order.
"""

from __future__ import annotations

import numpy as np

ROLE_DATA = 1
ROLE_PARAMS = 2
ROLE_TUPLES = 3
ROLE_PARTITION = 4
ROLE_MULTIPLIER = 5

_MASK64 = (1 << 64) - 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return a PCG64 generator for the counter tuple ``(seed, *key)``."""
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse ``(seed, *key)`` to a single 64-bit integer seed."""
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in key]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
