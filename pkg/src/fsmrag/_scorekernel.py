"""Pure-Python (numpy) overlap-count kernel.

Fallback used when the compiled extension is unavailable. Must produce
counts identical to ``_scorekernel_c.overlap_counts``.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def overlap_counts(
    flat_ids: np.ndarray,
    offsets: np.ndarray,
    query_ids: np.ndarray,
    vocab_size: int,
) -> np.ndarray:
    """Per-passage count of distinct query token ids present in the passage.

    ``flat_ids`` holds the deduplicated token ids of all passages
    concatenated; passage ``i`` spans ``flat_ids[offsets[i]:offsets[i+1]]``.
    Empty spans (passages with no indexable tokens) count 0.
    """
    n = len(offsets) - 1
    if vocab_size == 0 or len(query_ids) == 0 or len(flat_ids) == 0:
        return np.zeros(n, dtype=np.int32)
    member = np.zeros(vocab_size, dtype=np.int32)
    member[query_ids] = 1
    csum = np.zeros(len(flat_ids) + 1, dtype=np.int64)
    np.cumsum(member[flat_ids], out=csum[1:])
    return (csum[offsets[1:]] - csum[offsets[:-1]]).astype(np.int32)
