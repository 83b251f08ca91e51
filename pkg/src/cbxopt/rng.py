"""Counter-based random numbers keyed by (seed, stream, iteration, particle, axis).

Every draw is a pure function of its key, so results do not depend on the
order in which particles are processed. The generator is Philox4x64-10,
vectorised over numpy ``uint64`` arrays; one Philox block yields four words,
which serve four consecutive axes of the same particle.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

_MUL0 = 0xD2E7470EE14C6C93
_MUL1 = 0xCA5A826395121157
_WEYL0 = 0x9E3779B97F4A7C15
_WEYL1 = 0xBB67AE8584CAA73B
_ROUNDS = 10

# stream ids occupy the second key word
STREAMS = {
    "init": 1,
    "noise": 2,
    "memory_noise": 3,
    "batch": 4,
}

_U64_MAX = 2**64 - 1


def _mulhilo(a_lo, a_hi, b):
    # 64x64 -> 128 bit product from 32-bit limbs; a is a python-int constant
    b_lo = b & _M32
    b_hi = b >> _S32
    p00 = a_lo * b_lo
    p01 = a_lo * b_hi
    p10 = a_hi * b_lo
    p11 = a_hi * b_hi
    mid = (p00 >> _S32) + (p01 & _M32) + (p10 & _M32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    lo = (mid << _S32) | (p00 & _M32)
    return hi, lo


_MUL0_LO, _MUL0_HI = np.uint64(_MUL0 & 0xFFFFFFFF), np.uint64(_MUL0 >> 32)
_MUL1_LO, _MUL1_HI = np.uint64(_MUL1 & 0xFFFFFFFF), np.uint64(_MUL1 >> 32)


def philox4x64(counter, key):
    """Philox4x64-10 block function.

    Parameters
    ----------
    counter : sequence of four uint64 arrays (broadcastable)
    key : sequence of two uint64 arrays (broadcastable)

    Returns
    -------
    tuple of four uint64 arrays
    """
    # at least 1-d: uint64 array ops wrap silently, numpy scalars warn on overflow
    c0, c1, c2, c3 = (np.atleast_1d(np.asarray(c, dtype=np.uint64)) for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.atleast_1d(np.asarray(key[0], dtype=np.uint64))
    k1 = np.atleast_1d(np.asarray(key[1], dtype=np.uint64))
    w0 = np.uint64(_WEYL0)
    w1 = np.uint64(_WEYL1)
    for r in range(_ROUNDS):
        if r:
            k0 = k0 + w0
            k1 = k1 + w1
        hi0, lo0 = _mulhilo(_MUL0_LO, _MUL0_HI, c0)
        hi1, lo1 = _mulhilo(_MUL1_LO, _MUL1_HI, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _U64_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def raw_words(seed, stream, iteration, particles, dim):
    """Raw uint64 words of shape ``(len(particles), dim)``."""
    seed = _check_seed(seed)
    stream_id = STREAMS[stream] if isinstance(stream, str) else int(stream)
    particles = np.asarray(particles, dtype=np.uint64).reshape(-1, 1)
    n_blocks = (dim + 3) // 4
    blocks = np.arange(n_blocks, dtype=np.uint64).reshape(1, -1)
    words = philox4x64(
        (blocks, particles, np.uint64(iteration), np.uint64(0)),
        (np.uint64(seed), np.uint64(stream_id)),
    )
    # (n, blocks, 4) -> (n, 4 * blocks), axis k lives in block k // 4, word k % 4
    stacked = np.stack(words, axis=-1).reshape(particles.shape[0], 4 * n_blocks)
    return stacked[:, :dim]


def words_to_uniform(words):
    """Map uint64 words onto the open interval (0, 1).

    52 bits plus a half-ulp offset: the largest value is 1 - 2**-53, which is
    representable, so the inverse normal CDF never sees 0 or 1.
    """
    return ((words >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def uniform(seed, stream, iteration, n, dim):
    return words_to_uniform(raw_words(seed, stream, iteration, np.arange(n), dim))


def normal(seed, stream, iteration, n, dim):
    """Standard normal ``(n, dim)`` array by inverse CDF of the uniform words."""
    return ndtri(uniform(seed, stream, iteration, n, dim))


def rng_draw(seed: int, iteration: int, particle: int, axis: int, stream: str = "noise") -> float:
    """Single standard normal draw addressed by its full key."""
    if axis < 0 or particle < 0 or iteration < 0:
        raise ValueError("iteration, particle and axis must be nonnegative")
    words = philox4x64(
        (np.uint64(axis // 4), np.uint64(particle), np.uint64(iteration), np.uint64(0)),
        (np.uint64(_check_seed(seed)), np.uint64(STREAMS[stream])),
    )
    return float(ndtri(words_to_uniform(words[axis % 4]))[0])
