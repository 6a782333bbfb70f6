"""Deterministic named RNG sub-streams.

All randomized operations accept an integer ``rng_seed`` and derive their
generators here, keyed by a short stage tag and an item index:

    rng = substream(seed, "crofton-lines")
    rng_k = substream(seed, "verify-cut", index=k)

Two runs with the same seed produce identical streams regardless of thread
count or call order, because each (stage, index) pair owns an independent
PCG64 stream: the stage tag enters the seed material as its CRC32, so tags
are stable across platforms and Python hash randomization.
"""

from __future__ import annotations

import zlib

import numpy as np


def stage_id(tag: str) -> int:
    """Stable 32-bit id for a stage tag (CRC32 of its UTF-8 bytes)."""
    return zlib.crc32(tag.encode("utf-8"))


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Return the generator for sub-stream (seed, tag, index).

    Args:
        seed: user-facing integer seed (any Python int >= 0).
        tag: short stage name, e.g. "slab-offsets" or "cuts-ball".
        index: item index within the stage (per-ball, per-cube, ...).
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stage_id(tag), index))
    return np.random.Generator(np.random.PCG64(ss))


def uniform_in_ball(rng: np.random.Generator, center, radius: float, n: int) -> np.ndarray:
    """Sample n points uniformly from the solid ball, shape (n, 3)."""
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return np.asarray(center, dtype=float) + v * r[:, None]


def uniform_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    """Sample n unit vectors uniformly on the 2-sphere, shape (n, 3)."""
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v
