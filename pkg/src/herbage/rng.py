"""Deterministic per-image seeding.

Scene generation must be reproducible independently of worker count, so
every image index gets its own stream seeded by an avalanche mix of
(master_seed, image_index).  The mixer is SplitMix64 (Steele et al.,
finalizer of java.util.SplittableRandom): every input bit flips each
output bit with probability ~1/2, so consecutive indices give unrelated
streams.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 finalizer round over a 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def per_image_seed(master_seed: int, image_index: int) -> int:
    """64-bit stream seed for one image, avalanche-mixed from both inputs."""
    return splitmix64((master_seed & _MASK64) ^ splitmix64(image_index & _MASK64))


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator from a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed))


def image_rng(master_seed: int, image_index: int) -> np.random.Generator:
    """Generator owned by the worker producing one image."""
    return make_rng(per_image_seed(master_seed, image_index))
