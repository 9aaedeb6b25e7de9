"""Deterministic RNG derivation.

All randomness in harlab flows from a single master seed. Independent
streams (per training run, per dropout schedule, per synthetic user...)
are derived with numpy's SeedSequence so that results never depend on
call order and are stable across platforms.
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_entropy(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"seed path components must be int or str, got {type(part)!r}")


def derive_seed(master_seed: int, *path) -> int:
    """Stable 32-bit seed for the stream identified by ``path``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF] + [_as_entropy(p) for p in path])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def derive_rng(master_seed: int, *path) -> np.random.Generator:
    """Generator for the stream identified by ``path`` under ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF] + [_as_entropy(p) for p in path])
    return np.random.default_rng(ss)
