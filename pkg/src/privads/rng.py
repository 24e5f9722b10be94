"""Deterministic randomness tree.

Every component draws randomness through an explicit Rng handle so a whole
simulation replays bit-exactly from one master seed.  Child handles are
derived by tag, which keeps sibling components independent of each other's
draw order.
"""

from __future__ import annotations

import hashlib
import random

__all__ = ["Rng"]


class Rng(random.Random):
    """Seeded RNG with tagged child derivation."""

    def __init__(self, seed: int | bytes | str):
        if isinstance(seed, int):
            material = seed.to_bytes((seed.bit_length() + 7) // 8 or 1, "big", signed=False)
        elif isinstance(seed, str):
            material = seed.encode()
        else:
            material = seed
        self._material = material
        super().__init__(int.from_bytes(hashlib.sha256(material).digest(), "big"))

    def child(self, tag: str) -> "Rng":
        return Rng(hashlib.sha256(self._material + b"/" + tag.encode()).digest())

    def take_bytes(self, n: int) -> bytes:
        return self.getrandbits(8 * n).to_bytes(n, "big")
