"""Deterministic, replayable random sub-streams.

Every sampling site in the simulator draws from a Philox counter-based
generator keyed by the 64-bit master seed plus an integer path identifying
the site (role constants below, SNR index, trial index, ...).  Any single
stream can therefore be regenerated in isolation, and results do not depend
on execution order or worker count.
"""

import numpy as np

# Role constants used as the last path component.
MATRIX = 1
SIGNAL = 2
QUANT_NOISE = 3
CHANNEL_NOISE = 4
APRIORI = 5
BITS = 6

# Top-level context constants (first path component after the seed).
CTX_TRIAL = 10
CTX_CALIBRATION = 11
CTX_EXIT = 12
CTX_TRAJECTORY = 13


def substream(seed, *path):
    """Return a Generator for the sub-stream identified by ``path``.

    ``seed`` is the master seed (any non-negative int); ``path`` is a tuple
    of small non-negative ints.  Same (seed, path) always yields the same
    stream.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
