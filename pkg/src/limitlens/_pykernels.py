"""Pure-Python weighted-length kernels.

Fallback used when the compiled extension is unavailable. Must stay
behaviourally identical to _ckernels (the test suite enforces parity).
"""

from bisect import bisect_right

import numpy as np

BACKEND = "python"


def build_table(light_ranges, default_weight):
    starts = tuple(lo for lo, _ in light_ranges)
    ends = tuple(hi for _, hi in light_ranges)
    return starts, ends, int(default_weight)


def weighted_length(text, table):
    starts, ends, default_weight = table
    if not starts:
        return len(text) * default_weight
    total = 0
    for ch in text:
        cp = ord(ch)
        i = bisect_right(starts, cp) - 1
        if i >= 0 and cp <= ends[i]:
            total += 1
        else:
            total += default_weight
    return total


def weighted_lengths(texts, table):
    out = np.empty(len(texts), dtype=np.int64)
    for i, text in enumerate(texts):
        out[i] = weighted_length(text, table)
    return out
