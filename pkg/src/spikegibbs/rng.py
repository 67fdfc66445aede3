"""Seedable, splittable random streams.

Every stream is a Philox4x64 counter-based generator whose 128-bit key is
``(master_seed, stream_id)``.  Each draw consumes exactly one raw 64-bit
word, so a batch of ``n`` draws is identical to ``n`` single draws and the
stream position is simply the number of words consumed.

Word-to-value mapping (frozen; golden vectors in the test suite pin it):

* Bernoulli(0.5) bit  -> most significant bit of the word
* TM-bit uniform      -> top ``TM`` bits of the word (``TM = 0`` gives 0)
* uniform float [0,1) -> top 53 bits scaled by 2**-53
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

U64_MASK = (1 << 64) - 1
MAX_TM = 31


def _check_u64(value: int, name: str) -> int:
    value = int(value)
    if not 0 <= value <= U64_MASK:
        raise ParameterError(f"{name} must be an unsigned 64-bit integer, got {value}")
    return value


def words_to_bits(words: np.ndarray) -> np.ndarray:
    return (np.asarray(words, dtype=np.uint64) >> np.uint64(63)).astype(np.int64)


def words_to_uniform_bits(words: np.ndarray, tm: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint64)
    if tm == 0:
        return np.zeros(words.shape, dtype=np.int64)
    return (words >> np.uint64(64 - tm)).astype(np.int64)


def words_to_unit_float(words: np.ndarray) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint64)
    return (words >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


class RngStream:
    """A deterministic random stream identified by ``(master_seed, stream_id)``.

    Streams are not thread-safe; hand one to a single consumer at a time.
    """

    __slots__ = ("master_seed", "stream_id", "_bitgen", "_position")

    def __init__(self, master_seed: int, stream_id: int):
        self.master_seed = _check_u64(master_seed, "master_seed")
        self.stream_id = _check_u64(stream_id, "stream_id")
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._position = 0

    def __repr__(self) -> str:
        return (f"RngStream(master_seed={self.master_seed}, "
                f"stream_id={self.stream_id}, position={self._position})")

    @property
    def position(self) -> int:
        """Number of 64-bit words consumed so far."""
        return self._position

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words as a uint64 array."""
        n = int(n)
        if n < 0:
            raise ParameterError(f"cannot draw a negative number of words ({n})")
        self._position += n
        return self._bitgen.random_raw(n).astype(np.uint64, copy=False)

    def next_bernoulli_half(self) -> int:
        return int(words_to_bits(self.raw(1))[0])

    def next_uniform_bits(self, tm: int) -> int:
        """Uniform integer on ``[0, 2**tm - 1]``; ``tm`` must lie in [1, 31]."""
        if not 1 <= tm <= MAX_TM:
            raise ParameterError(f"TM must be in [1, {MAX_TM}], got {tm}")
        return int(words_to_uniform_bits(self.raw(1), tm)[0])

    def bernoulli_half(self, n: int) -> np.ndarray:
        return words_to_bits(self.raw(n))

    def uniform_bits(self, tm: int, n: int) -> np.ndarray:
        if not 0 <= tm <= MAX_TM:
            raise ParameterError(f"TM must be in [0, {MAX_TM}], got {tm}")
        return words_to_uniform_bits(self.raw(n), tm)

    def uniform(self, n: int) -> np.ndarray:
        return words_to_unit_float(self.raw(n))

    def generator(self) -> np.random.Generator:
        """A numpy Generator over an independent copy of this stream's key.

        Used for bulk plumbing draws (weight init, shuffles, noise masks)
        where word-level accounting is not needed.  The copy starts at the
        stream's origin and does not advance this stream.
        """
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def make_stream(master_seed: int, stream_id: int) -> RngStream:
    return RngStream(master_seed, stream_id)


def chain_stream_id(chain: int, unit: int) -> int:
    """Stream id for ``unit`` of an independent chain/image ``chain``.

    The high 32 bits select the chain, the low 32 bits the unit.
    """
    if not 0 <= chain < (1 << 32) or not 0 <= unit < (1 << 32):
        raise ParameterError(f"chain {chain} / unit {unit} out of 32-bit range")
    return (chain << 32) | unit


def draw_block(master_seed: int, stream_ids, n_words: int) -> np.ndarray:
    """Draw ``n_words`` from each listed stream; returns (len(ids), n_words)."""
    ids = list(stream_ids)
    out = np.empty((len(ids), n_words), dtype=np.uint64)
    for row, sid in enumerate(ids):
        out[row] = make_stream(master_seed, sid).raw(n_words)
    return out
