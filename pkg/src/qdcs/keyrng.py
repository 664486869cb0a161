"""Keyed deterministic randomness.

All secret structure of the sensing scheme (the pre-randomizing permutation,
the down-sampling index set and the diffusion keystream) is derived from a
single 128-bit key.  The generator is ChaCha20 in counter mode with an
all-zero nonce; its keystream is consumed as little-endian 64-bit words and
turned into uniform integers by rejection sampling.  The 256-bit cipher key
is the 128-bit secret repeated twice, mirroring the key expansion of the
original 16-byte-key ChaCha variant.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

__all__ = [
    "KEY_BYTES",
    "SecretKey",
    "RngState",
    "seed_rng",
    "next_uniform",
    "fisher_yates",
    "partial_fisher_yates",
    "Streams",
    "derive_streams",
    "format_streams",
    "parse_streams",
]

KEY_BYTES = 16
_CHUNK_WORDS = 8192
_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class SecretKey:
    """A 128-bit secret key."""

    key_bytes: bytes = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.key_bytes, (bytes, bytearray)):
            raise TypeError("key_bytes must be bytes")
        if len(self.key_bytes) != KEY_BYTES:
            raise ValueError(
                f"secret key must be exactly {KEY_BYTES} bytes, got {len(self.key_bytes)}"
            )
        object.__setattr__(self, "key_bytes", bytes(self.key_bytes))

    @classmethod
    def from_hex(cls, text: str) -> "SecretKey":
        text = text.strip()
        if len(text) != 2 * KEY_BYTES:
            raise ValueError(f"key must be {2 * KEY_BYTES} hex characters")
        try:
            return cls(bytes.fromhex(text))
        except ValueError as exc:
            raise ValueError(f"key is not valid hex: {exc}") from None

    @classmethod
    def generate(cls) -> "SecretKey":
        return cls(secrets.token_bytes(KEY_BYTES))

    def hex(self) -> str:
        return self.key_bytes.hex()

    def __repr__(self):
        return "SecretKey(<128 bits>)"


class RngState:
    """Uniform integer generator driven by the ChaCha20 keystream.

    Single-owner: drawing mutates the state.  Every call to
    :meth:`next_uniform` counts as one draw and consumes at least one word,
    including the degenerate range ``lo == hi``.
    """

    def __init__(self, key: SecretKey):
        if not isinstance(key, SecretKey):
            raise TypeError("expected a SecretKey")
        cipher = Cipher(algorithms.ChaCha20(key.key_bytes * 2, bytes(16)), mode=None)
        self._encryptor = cipher.encryptor()
        self._buf = np.empty(0, dtype=np.uint64)
        self._pos = 0
        self.draw_count = 0
        self.words_consumed = 0

    def _ensure(self, n):
        avail = self._buf.size - self._pos
        if avail >= n:
            return
        need = n - avail
        nwords = -(-need // _CHUNK_WORDS) * _CHUNK_WORDS
        raw = self._encryptor.update(bytes(8 * nwords))
        fresh = np.frombuffer(raw, dtype="<u8").astype(np.uint64)
        self._buf = np.concatenate([self._buf[self._pos:], fresh])
        self._pos = 0

    def _take(self, n):
        self._ensure(n)
        words = self._buf[self._pos:self._pos + n]
        self._pos += n
        self.words_consumed += n
        return words

    def _unread(self, n):
        # only valid for words returned by the most recent _take
        self._pos -= n
        self.words_consumed -= n

    def next_word(self) -> int:
        """Raw 64-bit output word (does not count as a draw)."""
        return int(self._take(1)[0])

    def next_uniform(self, lo: int, hi: int) -> int:
        lo, hi = int(lo), int(hi)
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        k = hi - lo + 1
        if k > 1 << 64:
            raise ValueError("range wider than 2**64")
        limit = (1 << 64) - ((1 << 64) % k)
        while True:
            w = int(self._take(1)[0])
            if w < limit:
                break
        self.draw_count += 1
        return lo + w % k

    def uniform_many(self, lo, hi) -> np.ndarray:
        """Vectorized equivalent of ``[next_uniform(a, b) for a, b in zip(lo, hi)]``.

        Consumes exactly the same words in the same order as the scalar loop.
        """
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        lo, hi = np.broadcast_arrays(lo, hi)
        lo = lo.ravel()
        hi = hi.ravel()
        if np.any(lo > hi):
            raise ValueError("empty range in uniform_many")
        k = (hi - lo + 1).astype(np.uint64)
        # 2**64 mod k, computed with wrapping uint64 arithmetic
        rem = (~k + np.uint64(1)) % k
        accept_max = _U64_MAX - rem
        count = lo.size
        out = np.empty(count, dtype=np.int64)
        i = 0
        while i < count:
            w = self._take(count - i)
            bad = np.flatnonzero(w > accept_max[i:])
            stop = int(bad[0]) if bad.size else w.size
            out[i:i + stop] = lo[i:i + stop] + (w[:stop] % k[i:i + stop]).astype(np.int64)
            if bad.size:
                # the rejected word stays consumed; the rest is handed back
                self._unread(w.size - stop - 1)
            i += stop
        self.draw_count += count
        return out


def seed_rng(key: SecretKey) -> RngState:
    return RngState(key)


def next_uniform(state: RngState, lo: int, hi: int) -> int:
    return state.next_uniform(lo, hi)


def _draw_many(rng, lo, hi):
    if hasattr(rng, "uniform_many"):
        return rng.uniform_many(lo, hi)
    return np.array([rng.next_uniform(int(a), int(b)) for a, b in zip(lo, hi)], dtype=np.int64)


def partial_fisher_yates(rng, n: int, steps: int) -> np.ndarray:
    """Run the first ``steps`` swaps of a Fisher-Yates pass over ``1..n``.

    Returns the whole array; its first ``steps`` entries are a uniformly
    random ordered sample without replacement.
    """
    n = int(n)
    steps = int(steps)
    if n < 1:
        raise ValueError(f"permutation length must be >= 1, got {n}")
    if not 0 <= steps <= n:
        raise ValueError(f"steps must lie in [0, {n}], got {steps}")
    tau = np.arange(1, n + 1, dtype=np.int64)
    if steps == 0:
        return tau
    i = np.arange(1, steps + 1, dtype=np.int64)
    j = _draw_many(rng, i, np.full(steps, n, dtype=np.int64))
    t = tau.tolist()
    for a, b in zip((i - 1).tolist(), (j - 1).tolist()):
        t[a], t[b] = t[b], t[a]
    return np.array(t, dtype=np.int64)


def fisher_yates(rng, n: int) -> np.ndarray:
    """Uniform random permutation of ``1..n`` (1-based values).

    Step ``i`` draws ``j`` uniformly from ``[i, n]`` and swaps positions
    ``i`` and ``j``; the last step draws from ``[n, n]`` so exactly ``n``
    draws are made.
    """
    return partial_fisher_yates(rng, n, n)


@dataclass(frozen=True)
class Streams:
    """Everything the key determines for an ``n``-pixel, ``m``-measurement setup.

    ``tau_r`` is a permutation of ``1..n``, ``tau_d`` holds ``m`` distinct
    indices in ``1..n``, ``v`` is the ``m + 1`` byte keystream ``v_0..v_m``
    and ``u0`` is the initial quantizer error. Arrays are read-only.
    """

    tau_r: np.ndarray
    tau_d: np.ndarray
    v: np.ndarray
    u0: float
    draw_count: int

    @property
    def n(self):
        return self.tau_r.size

    @property
    def m(self):
        return self.tau_d.size


def _readonly(a):
    a.setflags(write=False)
    return a


@lru_cache(maxsize=16)
def _derive_cached(key_bytes, n, m):
    rng = RngState(SecretKey(key_bytes))
    tau_r = fisher_yates(rng, n)
    tau_d = partial_fisher_yates(rng, n, m)[:m].copy()
    raw = rng.uniform_many(np.ones(m + 1, dtype=np.int64), np.full(m + 1, n, dtype=np.int64))
    v = (raw % 256).astype(np.uint8)
    u0 = float(v[0]) / 256.0 - 0.5
    return Streams(_readonly(tau_r), _readonly(tau_d), _readonly(v), u0, rng.draw_count)


def derive_streams(key: SecretKey, n: int, m: int) -> Streams:
    """Derive (tau_R, tau_D, keystream, u0) from the key.

    Draw order: ``n`` draws for the full permutation, ``m`` draws for a
    partial pass over a fresh ``1..n`` array, then ``m + 1`` raw draws over
    ``[1, n]`` reduced mod 256 for the keystream.
    """
    n = int(n)
    m = int(m)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 1 <= m <= n:
        raise ValueError(f"m must satisfy 1 <= m <= n={n}, got {m}")
    if not isinstance(key, SecretKey):
        raise TypeError("expected a SecretKey")
    return _derive_cached(key.key_bytes, n, m)


def format_streams(streams: Streams) -> str:
    """Golden-vector text: tau_R, then tau_D, then v, one integer per line."""
    values = list(streams.tau_r) + list(streams.tau_d) + list(streams.v)
    return "".join(f"{int(x)}\n" for x in values)


def parse_streams(text: str, n: int, m: int):
    values = [int(line) for line in text.split()]
    if len(values) != n + 2 * m + 1:
        raise ValueError(f"expected {n + 2 * m + 1} integers, got {len(values)}")
    tau_r = np.array(values[:n], dtype=np.int64)
    tau_d = np.array(values[n:n + m], dtype=np.int64)
    v = np.array(values[n + m:], dtype=np.uint8)
    return tau_r, tau_d, v
