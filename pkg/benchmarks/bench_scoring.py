#!/usr/bin/env python3
"""Benchmark the compiled scoring kernel against the numpy fallback.

Builds a synthetic corpus, runs a batch of queries through both
``overlap_counts`` implementations, checks they agree, and prints timings.

    python3 benchmarks/bench_scoring.py --passages 50000 --queries 200
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from fsmrag import _scorekernel

try:
    from fsmrag import _scorekernel_c
except ImportError:
    _scorekernel_c = None


def build_corpus(n_passages: int, vocab_size: int, tokens_per_passage: int, seed: int):
    rng = random.Random(seed)
    flat, offsets = [], [0]
    for _ in range(n_passages):
        ids = sorted(set(rng.randrange(vocab_size) for _ in range(tokens_per_passage)))
        flat.extend(ids)
        offsets.append(len(flat))
    return (
        np.asarray(flat, dtype=np.int32),
        np.asarray(offsets, dtype=np.int64),
    )


def build_queries(n_queries: int, vocab_size: int, tokens_per_query: int, seed: int):
    rng = random.Random(seed)
    return [
        np.asarray(
            sorted(set(rng.randrange(vocab_size) for _ in range(tokens_per_query))),
            dtype=np.int32,
        )
        for _ in range(n_queries)
    ]


def bench(kernel, flat, offsets, queries, vocab_size: int) -> float:
    start = time.perf_counter()
    for q in queries:
        kernel.overlap_counts(flat, offsets, q, vocab_size)
    return time.perf_counter() - start


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--passages", type=int, default=50_000)
    parser.add_argument("--vocab", type=int, default=100_000)
    parser.add_argument("--tokens-per-passage", type=int, default=40)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--tokens-per-query", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    flat, offsets = build_corpus(args.passages, args.vocab, args.tokens_per_passage, args.seed)
    queries = build_queries(args.queries, args.vocab, args.tokens_per_query, args.seed + 1)
    print(
        f"corpus: {args.passages} passages, {len(flat)} token ids, "
        f"vocab {args.vocab}; {args.queries} queries"
    )

    sample = queries[0]
    py_counts = _scorekernel.overlap_counts(flat, offsets, sample, args.vocab)
    py_time = bench(_scorekernel, flat, offsets, queries, args.vocab)
    print(f"python (numpy) kernel: {py_time:.3f}s  ({py_time / args.queries * 1e3:.2f} ms/query)")

    if _scorekernel_c is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation`")
        return
    cy_counts = _scorekernel_c.overlap_counts(flat, offsets, sample, args.vocab)
    assert py_counts.tolist() == cy_counts.tolist(), "kernels disagree"
    cy_time = bench(_scorekernel_c, flat, offsets, queries, args.vocab)
    print(f"cython kernel:         {cy_time:.3f}s  ({cy_time / args.queries * 1e3:.2f} ms/query)")
    print(f"speedup: {py_time / cy_time:.2f}x")


if __name__ == "__main__":
    main()
