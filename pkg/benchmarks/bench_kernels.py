"""Compare the compiled and numpy retrieval-scoring kernels.

    python3 benchmarks/bench_kernels.py [--corpus 3000] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from kbqa_metarl import _kernels_py

try:
    from kbqa_metarl import _kernels
except ImportError:
    _kernels = None


def workload(n_corpus, dim, seed=0):
    rng = np.random.default_rng(seed)
    vocab = rng.normal(size=(200, dim))
    sizes = rng.integers(3, 12, n_corpus)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    corpus = vocab[rng.integers(0, 200, offsets[-1])]
    query = vocab[rng.integers(0, 200, 8)]
    return query, corpus, offsets


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--corpus", type=int, default=3000)
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    q, c, off = workload(args.corpus, args.dim)
    impls = {"python": _kernels_py.semantic_scores}
    if _kernels is not None:
        impls["cython"] = _kernels.semantic_scores
    ref = impls["python"](q, c, off, 0.85)
    times = {}
    for name, fn in impls.items():
        assert np.allclose(fn(q, c, off, 0.85), ref, atol=1e-12)
        times[name] = min(timeit.repeat(lambda: fn(q, c, off, 0.85), number=1, repeat=args.repeat))
        print(f"{name:>7}: {times[name] * 1e3:8.2f} ms per query against {args.corpus} questions")
    if "cython" in times:
        print(f"speedup: {times['python'] / times['cython']:.1f}x")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
