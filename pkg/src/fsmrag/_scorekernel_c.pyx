# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled overlap-count kernel.

Semantics identical to ``_scorekernel.overlap_counts``; single pass over
the flattened corpus token ids with a query membership table.
"""

import numpy as np

BACKEND = "cython"


def overlap_counts(flat_ids, offsets, query_ids, int vocab_size):
    cdef int[::1] flat = np.ascontiguousarray(flat_ids, dtype=np.int32)
    cdef long[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef int[::1] qids = np.ascontiguousarray(query_ids, dtype=np.int32)
    cdef Py_ssize_t n = offs.shape[0] - 1
    out = np.zeros(n, dtype=np.int32)
    cdef int[::1] counts = out
    if vocab_size == 0 or qids.shape[0] == 0 or flat.shape[0] == 0:
        return out
    member_arr = np.zeros(vocab_size, dtype=np.uint8)
    cdef unsigned char[::1] member = member_arr
    cdef Py_ssize_t i, j
    cdef int c
    for i in range(qids.shape[0]):
        member[qids[i]] = 1
    for i in range(n):
        c = 0
        for j in range(offs[i], offs[i + 1]):
            c += member[flat[j]]
        counts[i] = c
    return out
