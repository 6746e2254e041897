"""Seeded random streams keyed by component label."""

import hashlib
from dataclasses import dataclass

import numpy as np


def _label_key(label):
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


@dataclass(frozen=True)
class RandomState:
    """A reproducible random stream.

    The pair ``(master_seed, stream_label)`` fully determines the sequence, so
    components that must not share randomness simply use different labels.
    """

    master_seed: int
    stream_label: str = "default"

    def generator(self):
        """Return a fresh ``numpy.random.Generator`` positioned at the start."""
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed) & (2**64 - 1),
            spawn_key=tuple(_label_key(self.stream_label)),
        )
        return np.random.Generator(np.random.PCG64(seq))

    def derive(self, label):
        """Stream for a sub-component, e.g. ``rs.derive("noise")``."""
        return RandomState(self.master_seed, f"{self.stream_label}/{label}")


def as_generator(rng):
    """Accept a RandomState, Generator, int seed or None."""
    if isinstance(rng, RandomState):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
