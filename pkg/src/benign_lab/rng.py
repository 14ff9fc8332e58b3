"""Counter-based random streams.

Every random quantity in the package is drawn from a Philox4x64-10 stream
(``numpy.random.Philox``).  A stream is addressed by three integers:

* ``seed``    -- user seed, first 64-bit word of the Philox key;
* ``purpose`` -- a fixed tag (see ``PURPOSES``), second key word;
* ``index``   -- per-item index (sample number, neuron number), placed in
  the third 64-bit word of the 256-bit Philox counter.

Draws inside one stream advance the low counter word, so streams for
different indices never overlap for fewer than 2**64 draws.  Because each
sample owns its stream, the draw for sample ``i`` does not depend on how
many other samples were generated or in which order.
"""

import numpy as np

from .errors import ConfigurationError

_MASK64 = (1 << 64) - 1

PURPOSES = {
    "sample": 1,
    "noise_iid": 2,
    "noise_fixed": 3,
    "weights": 4,
    "signs": 5,
    "test_sample": 6,
    "test_noise": 7,
    "oracle": 8,
}


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigurationError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ConfigurationError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def stream(seed, purpose, index=0):
    """Return a fresh ``numpy.random.Generator`` for (seed, purpose, index)."""
    seed = check_seed(seed)
    try:
        tag = PURPOSES[purpose]
    except KeyError:
        raise ConfigurationError(f"unknown stream purpose {purpose!r}") from None
    if index < 0 or index > _MASK64:
        raise ConfigurationError(f"stream index out of range: {index}")
    key = np.array([seed, tag], dtype=np.uint64)
    counter = np.array([0, 0, int(index), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
