import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named consumer of a single run seed.

    The same ``(seed, name)`` pair always yields the same stream, and different
    names never share state, so e.g. the mask can be re-drawn without shifting
    the k-means restarts.
    """
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])
