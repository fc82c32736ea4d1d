"""Seed derivation and weighted sampling helpers.

Every random decision in the toolkit goes through a :class:`random.Random`
seeded from :func:`derive_seed`, so outputs depend only on explicit seeds and
never on scheduling, worker count or wall-clock time.
"""

from __future__ import annotations

import hashlib
import random
from typing import Hashable, Sequence, TypeVar

T = TypeVar("T")

MASK64 = (1 << 64) - 1
# splitmix64 increment (odd, so index * GAMMA is injective mod 2**64)
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer (a bijection on 64-bit ints)."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def index_seed(master_seed: int, index: int) -> int:
    """Seed for the ``index``-th item under ``master_seed``.

    Distinct indices always map to distinct seeds for a fixed master seed.
    """
    return splitmix64((master_seed + index * GOLDEN_GAMMA) & MASK64)


def _part_value(part: Hashable) -> int:
    if isinstance(part, bool):
        part = int(part)
    if isinstance(part, int):
        return part & MASK64
    digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master_seed: int, *parts: Hashable) -> int:
    """Fold ints and strings into a 64-bit seed, stable across platforms."""
    h = splitmix64(master_seed & MASK64)
    for part in parts:
        h = splitmix64(h ^ splitmix64(_part_value(part)))
    return h


def make_rng(master_seed: int, *parts: Hashable) -> random.Random:
    return random.Random(derive_seed(master_seed, *parts))


def weighted_choice(rng: random.Random, items: Sequence[T], weights: Sequence[float]) -> T:
    """Draw one item with probability proportional to its weight."""
    if len(items) != len(weights):
        raise ValueError("items and weights differ in length")
    total = float(sum(weights))
    if not items or total <= 0:
        raise ValueError("weighted_choice needs a positive total weight")
    pick = rng.random() * total
    cumulative = 0.0
    for item, weight in zip(items, weights):
        cumulative += weight
        if pick < cumulative:
            return item
    return items[-1]


def weighted_sample(
    rng: random.Random, items: Sequence[T], weights: Sequence[float], k: int
) -> list[T]:
    """Sequential weighted sampling without replacement.

    Each draw picks among the items not yet drawn with probability
    proportional to their weights, so the j-th draw is an exact categorical
    draw over the remaining support. Returns draws in draw order.
    """
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be strictly positive")
    pool = list(items)
    pool_weights = list(weights)
    out: list[T] = []
    for _ in range(min(k, len(pool))):
        i = weighted_choice(rng, range(len(pool)), pool_weights)
        out.append(pool.pop(i))
        pool_weights.pop(i)
    return out
