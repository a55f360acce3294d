"""Deterministic counter-based random streams.

The generator is SplitMix64 used in counter mode: draw ``i`` of a stream with
key ``k`` is ``mix64(k + (i + 1) * GOLDEN)``, where ``mix64`` is the standard
SplitMix64 finalizer (Steele, Lea & Flood 2014) and GOLDEN is the 64-bit
golden-ratio increment.  Every draw is a pure function of ``(key, index)``, so

* the same seed reproduces the same sequence on every platform (only 64-bit
  integer arithmetic is involved),
* any slice of a stream can be generated out of order or in parallel and
  still agree bit for bit with a serial pass, and
* independent substreams are cheap: a child key is one extra mix.

Floating-point conversion keeps the top 53 bits.  ``uniform_oc`` maps to the
half-open interval (0, 1] so that ``log(u)`` is always finite; ``uniform_oo``
maps to the open interval (0, 1) so that ``log(-log(u))`` is too.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
STREAM_SALT = 0xC2B2AE3D27D4EB4F

_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_INV52 = 1.0 / 4503599627370496.0  # 2**-52


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a python integer (reference implementation).

    Kept in plain integer arithmetic so tests can cross-check the vectorized
    paths against an implementation with no numpy in it.
    """
    z = x & MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_key(seed: int, stream: int = 0) -> int:
    """Key for substream ``stream`` of ``seed``.

    Two mixes keep distinct (seed, stream) pairs statistically unrelated even
    for adjacent small integers, which is how callers choose them.
    """
    base = mix64(seed)
    return mix64((base + ((stream & MASK64) * STREAM_SALT & MASK64) + GOLDEN) & MASK64)


def stable_child(*parts) -> int:
    """Order-independent child index for a labelled substream.

    Hashes the coordinates of a sweep cell (method name, rate, tau, ...)
    into a 63-bit integer, so the substream a cell gets depends only on
    the cell itself and not on where it sits in the caller's loop.  Never
    returns 0; child 0 stays free for setup streams.  Floats must be
    passed as floats: repr() is the canonical shortest round-trip form.
    """
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % ((1 << 63) - 1) + 1


def raw_block(key: int, start: int, n: int) -> np.ndarray:
    """``n`` raw 64-bit outputs for counters ``start .. start+n-1`` (uint64)."""
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + idx * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def to_unit_oc(bits: np.ndarray) -> np.ndarray:
    """uint64 words to doubles in (0, 1]: ((bits >> 11) + 1) * 2**-53."""
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53


def to_unit_oo(bits: np.ndarray) -> np.ndarray:
    """uint64 words to doubles in (0, 1): ((bits >> 12) + 0.5) * 2**-52.

    52 mantissa bits, not 53: the all-ones word under a 53-bit mapping
    rounds up to exactly 1.0, which would blow up -log(-log(u)).
    """
    return ((bits >> np.uint64(12)).astype(np.float64) + 0.5) * _INV52


class RngStream:
    """A seeded, counter-addressed uniform stream.

    The stream owns a key and a cursor.  ``reserve`` hands out a disjoint
    counter range (for kernels that index draws themselves); the ``uniform``
    methods are conveniences over it.  Streams must not be shared between
    threads; spawn one child per worker instead.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream)
        self.key = derive_key(self.seed, self.stream)
        self.counter = 0

    def spawn(self, child: int) -> "RngStream":
        """Independent substream; deterministic in (seed, stream, child)."""
        out = RngStream.__new__(RngStream)
        out.seed = self.seed
        out.stream = self.stream
        out.key = derive_key(self.key, int(child) + 1)
        out.counter = 0
        return out

    def reserve(self, n: int) -> tuple[int, int]:
        """Claim ``n`` counter slots; returns (key, first_index)."""
        if n < 0:
            raise ValueError("cannot reserve a negative count")
        start = self.counter
        self.counter += int(n)
        return self.key, start

    def uniform_oc(self, n: int) -> np.ndarray:
        """``n`` doubles in (0, 1], safe under log()."""
        key, start = self.reserve(n)
        return to_unit_oc(raw_block(key, start, n))

    def uniform_oo(self, n: int) -> np.ndarray:
        """``n`` doubles in (0, 1), safe under log(-log())."""
        key, start = self.reserve(n)
        return to_unit_oo(raw_block(key, start, n))

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard normal doubles via Box-Muller on 2n slots."""
        n = int(n)
        u = self.uniform_oc(2 * n)
        radius = np.sqrt(-2.0 * np.log(u[:n]))
        return radius * np.cos(2.0 * np.pi * u[n:])

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"RngStream(seed={self.seed}, stream={self.stream}, "
            f"counter={self.counter})"
        )
