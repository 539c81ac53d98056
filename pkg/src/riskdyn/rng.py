"""Counter-based random streams for reproducible replicas.

Generator definition (bit-exact, all arithmetic modulo 2**64)::

    mix(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
             z = (z ^ (z >> 27)) * 0x94D049BB133111EB
             return z ^ (z >> 31)

    key(master_seed, r)  = mix(master_seed ^ mix(r))
    word(key, c)         = mix(key + (c + 1) * 0x9E3779B97F4A7C15)
    uniform(key, c)      = (word(key, c) >> 11) * 2**-53          # in [0, 1)

``word(key, c)`` is the ``c``-th output of SplitMix64 seeded with ``key``, so
any draw of any replica can be computed directly from its counter.
Replica ``r`` of a simulation seeded with ``master_seed`` uses stream
``key(master_seed, r)``; within a replica the simulator consumes exactly N
draws per step, in ascending risk order.
"""

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0
_MASK64 = (1 << 64) - 1


@nb.njit(nb.uint64(nb.uint64), cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(nb.uint64(nb.uint64, nb.uint64), cache=True, nogil=True)
def stream_key(master_seed, replica):
    return mix64(master_seed ^ mix64(replica))


@nb.njit(nb.float64(nb.uint64, nb.uint64), cache=True, nogil=True)
def uniform_at(key, counter):
    return np.float64(mix64(key + (counter + _ONE) * GOLDEN) >> _S11) * _INV53


def seed_to_uint64(seed) -> np.uint64:
    """Accept any Python int (negative values wrap) as a 64-bit master seed."""
    return np.uint64(int(seed) & _MASK64)


# Pure-Python reference, kept independent of the compiled kernels.


def _mix_py(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def reference_uniforms(master_seed: int, replica: int, count: int, start: int = 0) -> list[float]:
    key = _mix_py((master_seed & _MASK64) ^ _mix_py(replica))
    out = []
    for c in range(start, start + count):
        w = _mix_py(key + (c + 1) * 0x9E3779B97F4A7C15)
        out.append((w >> 11) * 2.0**-53)
    return out
