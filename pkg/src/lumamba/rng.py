"""Named, counter-based random streams derived from one integer seed."""
import zlib

import numpy as np


def stream(seed, name, *keys):
    """Independent Philox generator for (seed, name, *keys)."""
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    entropy += [int(k) & 0xFFFFFFFF for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
