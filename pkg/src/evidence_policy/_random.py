"""Seed derivation.

All randomness flows through ``numpy.random.Generator`` (PCG64) built from a
``SeedSequence``.  Sub-streams are keyed by integers and strings; strings are
mapped to integers with CRC-32 so keys are stable across Python processes.
"""
import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError(f"seed components must be non-negative, got {part}")
    return part


def seed_sequence(seed, *keys):
    return np.random.SeedSequence([_key(seed), *(_key(k) for k in keys)])


def make_rng(seed, *keys):
    """Generator for the stream ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def derive_seed(seed, *keys):
    """A 63-bit integer seed for the stream ``(seed, *keys)``."""
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0] >> np.uint64(1))
