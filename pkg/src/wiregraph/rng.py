"""Counter-based deterministic random streams.

Every random draw in the package goes through :class:`Rng`.  It wraps a
numpy ``Philox`` bit generator (counter-based, so streams are reproducible
across platforms) and derives named or indexed sub-streams by hashing the
parent key together with the child label.  Two sub-streams with different
labels are statistically independent; the same label always gives the same
stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _derive(key: tuple[int, ...], label: int | str) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in key:
        h.update(int(part).to_bytes(8, "little"))
    h.update(b"\x00" if isinstance(label, str) else b"\x01")
    h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


class Rng:
    """Deterministic generator identified by a 64-bit seed and a sub-stream path.

    ``Rng(7).child("data").child(12)`` is a fixed stream no matter how much
    randomness the parent has already consumed.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()) -> None:
        self.seed = int(seed) & _MASK64
        self._path = _path
        key = self.seed if not _path else _path[-1]
        # Philox takes a 128-bit key; the low word is the stream id, the
        # high word the root seed, so children of different roots never collide.
        self.gen = np.random.Generator(np.random.Philox(key=[key, self.seed]))

    def child(self, label: int | str) -> Rng:
        return Rng(self.seed, self._path + (_derive((self.seed,) + self._path, label),))

    def children(self, n: int) -> list[Rng]:
        return [self.child(i) for i in range(n)]

    # thin pass-throughs used across the package
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def permutation(self, x):
        return self.gen.permutation(x)

    def choice(self, a, size=None, replace=True):
        return self.gen.choice(a, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, depth={len(self._path)})"


def as_rng(rng: Rng | int | None) -> Rng:
    if isinstance(rng, Rng):
        return rng
    return Rng(0 if rng is None else rng)
