"""Named, splittable random streams.

Every piece of randomness in the package flows from a single 64-bit master
seed through `derive_rng(master, label, index)`.  The label/index pair is
hashed (SHA-256) into SeedSequence entropy, so independent components get
independent streams and any parallel schedule reproduces the serial one.
"""

import hashlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_seed_sequence(master_seed: int, label: str, index: int = 0) -> np.random.SeedSequence:
    tag = hashlib.sha256(f"{label}#{index}".encode("utf-8")).digest()
    words = np.frombuffer(tag[:16], dtype="<u4")
    entropy = [int(master_seed) & _MASK64] + [int(w) for w in words]
    return np.random.SeedSequence(entropy)


def derive_rng(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Generator for the stream named (label, index) under the master seed."""
    return np.random.default_rng(derive_seed_sequence(master_seed, label, index))
