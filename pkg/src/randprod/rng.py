"""Counter-based random numbers (Philox4x32-10).

Every draw is a pure function of ``(seed, stream, step, word)``: trial ``j`` of an
experiment uses ``stream=j`` and its ``k``-th factor uses ``step=k``.  Nothing
depends on the order in which trials are evaluated, so batched and threaded
runs reproduce sequential ones bit for bit.
"""

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(counter, key, rounds=10):
    """Philox4x32 block function.

    ``counter`` is a sequence of four uint32 arrays (broadcastable), ``key`` a pair
    of uint32 scalars or arrays.  Returns four uint32 arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint64) & _MASK32 for k in key)
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return tuple(np.asarray(x, dtype=np.uint32) for x in (c0, c1, c2, c3))


def uniforms(seed, streams, step, count):
    """Uniform doubles in [0, 1) with 53 random bits.

    Returns an array of shape ``(len(streams), count)``.  Row ``j`` depends only on
    ``(seed, streams[j], step)``.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    streams = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
    step = np.uint64(step)
    key = (np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32))
    nblocks = (count + 1) // 2
    block = np.arange(nblocks, dtype=np.uint64)[None, :]
    s = streams[:, None]
    # counter words: (step, block, stream lo, stream hi)
    counter = (
        np.broadcast_to(step, (1, 1)),
        block,
        s & _MASK32,
        s >> _SHIFT32,
    )
    x0, x1, x2, x3 = philox4x32(counter, key)
    a = np.stack([x0, x2], axis=-1).astype(np.uint64)
    b = np.stack([x1, x3], axis=-1).astype(np.uint64)
    u = ((a >> np.uint64(5)) * np.uint64(67108864) + (b >> np.uint64(6))).astype(float) / 9007199254740992.0
    return u.reshape(len(streams), 2 * nblocks)[:, :count]


def normals(seed, streams, step, count):
    """Standard normal deviates by Box-Muller on :func:`uniforms`."""
    npairs = (count + 1) // 2
    u = uniforms(seed, streams, step, 2 * npairs)
    u1 = 1.0 - u[:, 0::2]  # in (0, 1], keeps the log finite
    u2 = u[:, 1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
    return z.reshape(u.shape[0], 2 * npairs)[:, :count]


@dataclass
class RngState:
    """Position in one random stream: ``seed`` picks the experiment, ``stream`` the trial.

    ``step`` advances by one per sample drawn through this state.
    """

    seed: int
    stream: int = 0
    step: int = 0

    def __post_init__(self):
        for name in ("seed", "stream", "step"):
            value = int(getattr(self, name))
            if not 0 <= value < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer")
            setattr(self, name, value)

    def next_uniforms(self, count):
        u = uniforms(self.seed, [self.stream], self.step, count)[0]
        self.step += 1
        return u

    def next_normals(self, count):
        z = normals(self.seed, [self.stream], self.step, count)[0]
        self.step += 1
        return z
