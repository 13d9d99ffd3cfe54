"""Counter-based random streams.

Every stream is a Philox4x64-10 sequence keyed by ``(seed, stream)``. The
scalar :class:`RngStream` delegates to :class:`numpy.random.Philox`; the
vectorized :class:`StreamArray` evaluates the same block function for many
streams at once, so cell ``i`` of a ``StreamArray`` yields exactly the
sequence of ``RngStream(seed, streams[i])``.

Uniform doubles are ``(word >> 11) * 2**-53``; normals come from Box-Muller
pairs ``(u1, u2)`` of consecutive uniforms, the sine variate being kept as a
spare for the next request.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RngStream", "StreamArray", "philox4x64", "stream_index"]

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_SHIFT11 = np.uint64(11)
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_ROUNDS = 10
_U53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi
_MAX64 = (1 << 64) - 1

STATE_BITS = 16


def stream_index(replication, ordinal):
    """Stream id of one (replication, state ordinal) simulation cell."""
    return (np.asarray(replication, dtype=np.uint64) << np.uint64(STATE_BITS)) | np.asarray(
        ordinal, dtype=np.uint64
    )


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a_lo = a & _MASK32
    a_hi = a >> _SHIFT32
    b_lo = b & _MASK32
    b_hi = b >> _SHIFT32
    lo_lo = a_lo * b_lo
    mid = a_hi * b_lo + (lo_lo >> _SHIFT32)
    mid2 = (mid & _MASK32) + a_lo * b_hi
    hi = a_hi * b_hi + (mid >> _SHIFT32) + (mid2 >> _SHIFT32)
    return hi, a * b


def philox4x64(counter: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Philox4x64-10 block function.

    ``counter`` has shape ``(m, 4)`` and ``key`` shape ``(m, 2)`` (or ``(2,)``),
    both ``uint64``. Returns the ``(m, 4)`` output words.
    """
    c = np.asarray(counter, dtype=np.uint64)
    k = np.broadcast_to(np.asarray(key, dtype=np.uint64), (c.shape[0], 2))
    c0, c1, c2, c3 = (c[:, i].copy() for i in range(4))
    k0 = k[:, 0].copy()
    k1 = k[:, 1].copy()
    with np.errstate(over="ignore"):
        for r in range(_ROUNDS):
            if r:
                k0 += _W0
                k1 += _W1
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=1)


def _check_u64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value <= _MAX64:
        raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")
    return value


def _box_muller(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    theta = _TWO_PI * u2
    return r * np.cos(theta), r * np.sin(theta)


class RngStream:
    """One deterministic stream, keyed by ``(seed, stream)``.

    Not thread-safe; build one per unit of work.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = _check_u64("seed", seed)
        self.stream = _check_u64("stream", stream)
        self._bitgen = np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        self._spare: float | None = None

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"

    def words(self, count: int) -> np.ndarray:
        return np.asarray(self._bitgen.random_raw(count), dtype=np.uint64)

    def uniforms(self, count: int) -> np.ndarray:
        """``count`` doubles in ``[0, 1)``."""
        return (self.words(count) >> _SHIFT11).astype(np.float64) * _U53

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def normals(self, count: int) -> np.ndarray:
        out = np.empty(count)
        start = 0
        if count and self._spare is not None:
            out[0] = self._spare
            self._spare = None
            start = 1
        rest = count - start
        if rest:
            pairs = (rest + 1) // 2
            u = self.uniforms(2 * pairs)
            z_cos, z_sin = _box_muller(u[0::2], u[1::2])
            z = np.empty(2 * pairs)
            z[0::2] = z_cos
            z[1::2] = z_sin
            out[start:] = z[:rest]
            if 2 * pairs > rest:
                self._spare = float(z[-1])
        return out

    def normal(self) -> float:
        return float(self.normals(1)[0])


class StreamArray:
    """Many independent streams advanced in lockstep or by index subsets.

    ``streams`` lists the stream ids; every method takes an optional integer
    index array selecting which cells draw. Cells not selected keep their
    position, so each cell's output depends only on its own key.
    """

    def __init__(self, seed: int, streams):
        self.seed = _check_u64("seed", seed)
        self.streams = np.asarray(streams, dtype=np.uint64).ravel()
        m = self.streams.size
        self._key = np.empty((m, 2), dtype=np.uint64)
        self._key[:, 0] = np.uint64(self.seed)
        self._key[:, 1] = self.streams
        self._pos = np.zeros(m, dtype=np.int64)
        self._block_id = np.full(m, -1, dtype=np.int64)
        self._block = np.zeros((m, 4), dtype=np.uint64)
        self._spare = np.zeros(m)
        self._has_spare = np.zeros(m, dtype=bool)

    def __len__(self) -> int:
        return self.streams.size

    def _cells(self, idx) -> np.ndarray:
        if idx is None:
            return np.arange(self.streams.size)
        return np.asarray(idx, dtype=np.int64)

    def words(self, idx=None) -> np.ndarray:
        """Next raw 64-bit word of each selected cell."""
        cells = self._cells(idx)
        pos = self._pos[cells]
        block = pos >> 2
        stale = block != self._block_id[cells]
        if stale.any():
            todo = cells[stale]
            counter = np.zeros((todo.size, 4), dtype=np.uint64)
            # numpy's Philox bumps the counter before producing a block
            counter[:, 0] = (block[stale] + 1).astype(np.uint64)
            self._block[todo] = philox4x64(counter, self._key[todo])
            self._block_id[todo] = block[stale]
        self._pos[cells] = pos + 1
        return self._block[cells, pos & 3]

    def uniforms(self, idx=None) -> np.ndarray:
        return (self.words(idx) >> _SHIFT11).astype(np.float64) * _U53

    def normals(self, idx=None) -> np.ndarray:
        cells = self._cells(idx)
        out = np.empty(cells.size)
        has = self._has_spare[cells]
        if has.any():
            out[has] = self._spare[cells[has]]
            self._has_spare[cells[has]] = False
        need = cells[~has]
        if need.size:
            u1 = self.uniforms(need)
            u2 = self.uniforms(need)
            z_cos, z_sin = _box_muller(u1, u2)
            out[~has] = z_cos
            self._spare[need] = z_sin
            self._has_spare[need] = True
        return out
