"""
Seed derivation
All randomness flows from one base seed; each consumer derives its own stream
"""

import hashlib

import numpy as np


def derive_seed(base_seed: int, purpose: str, *indices: int) -> int:
    """Stable 63-bit seed for (base seed, purpose, indices), identical on every platform."""
    payload = f"{int(base_seed)}|{purpose}|" + "|".join(str(int(i)) for i in indices)
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the one generator family used across the repository."""
    return np.random.Generator(np.random.PCG64(seed))
