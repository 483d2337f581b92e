"""Counter-based random streams for reproducible, order-independent simulation.

Every particle in a simulation owns a 64-bit stream key; draw number ``c`` of
that particle is ``raw64(key, c)``, a pure function.  Streams are therefore
independent of traversal order, of batch composition, and of how replicates
are partitioned across workers.  Keys are derived hierarchically:

    master key   = mix of the user seed
    replicate r  = raw64(master, 1 + r)
    root particle i of a replicate = raw64(replicate_key, 1 + i)
    child j of a dying particle    = raw64(parent_key, parent_counter + j)

``raw64(key, c)`` is the splitmix64 output function applied to the state
``key + c * PHI``, i.e. the c-th element of a splitmix64 sequence seeded at
``key``.  Distinct keys are (mixed) 64-bit values, so stream collisions occur
only with birthday probability ~n^2/2^64, negligible at feasible population
sizes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_U64 = np.uint64
_PHI = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_MASTER_SALT = _U64(0x243F6A8885A308D3)

def raw64(key, ctr):
    """Draw ``ctr`` of stream ``key`` as a uint64 (vectorized, pure)."""
    # uint64 arithmetic is modular by design; silence the overflow warnings
    # locally rather than globally.
    with np.errstate(over="ignore"):
        z = (np.asarray(key, dtype=np.uint64) + np.asarray(ctr, dtype=np.uint64) * _PHI)
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def uniform01(key, ctr):
    """Uniform draw in the open interval (0, 1)."""
    return (raw64(key, ctr) >> _U64(11)).astype(np.float64) * 2.0 ** -53 + 2.0 ** -54


def normal(key, ctr):
    """Standard normal draw via the inverse CDF."""
    return ndtri(uniform01(key, ctr))


def exponential(key, ctr, rate):
    """Exponential(rate) draw."""
    return -np.log(uniform01(key, ctr)) / rate


def master_key(seed):
    """Mix a user-supplied integer seed into a stream key."""
    return raw64(_U64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)), _MASTER_SALT)


def derive_keys(key, indices):
    """Child stream keys for 1-based ``indices`` under a parent ``key``."""
    return raw64(key, np.asarray(indices, dtype=np.uint64))
