"""Seeded random streams.

Every random draw in the toolkit comes from a generator derived from
``(seed, label, *index)``. Labels name disjoint purposes ("train", "test",
...) so training and test data can never share a stream, and indexing by
sample number makes parallel generation independent of worker count.
"""

import zlib

import numpy as np

RNG_ALGORITHM = "numpy-Philox4x64/SeedSequence(seed, crc32(label), index...)"

# Labels used across the package. Kept here so overlap is easy to audit.
TRAIN = "train"
VALID = "valid"
TEST = "test"
TEST_NOISE = "test-noise"
INIT = "init"
SHUFFLE = "shuffle"


def label_key(label):
    return zlib.crc32(label.encode("utf-8"))


def stream(seed, label, *index):
    """Return an independent generator for ``(seed, label, *index)``."""
    if seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(label_key(label), *map(int, index))
    )
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng, shape, var=1.0):
    """Circularly-symmetric CN(0, var) samples.

    Real and imaginary parts are independent with variance ``var / 2`` each.
    """
    scale = np.sqrt(var / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)
