"""Time the hot kernels and one full decode under each available backend.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from global_aware import kernels
from global_aware.core import ScorerConfig
from global_aware.model import SyntheticSpec, make_synthetic, teacher_forced_global_attention
from global_aware.search import beam_search


def cases():
    rng = np.random.default_rng(0)
    local, g = rng.exponential(1, 400), rng.exponential(1, 400)
    a, b = rng.integers(0, 50, 300), rng.integers(0, 50, 300)
    scores = rng.normal(size=(16, 5000))
    model = make_synthetic(SyntheticSpec(seed=0, vocab_size=200, source_len=64))
    inst = model.make_instance(0)
    gt = teacher_forced_global_attention(model, inst.source, inst.reference)
    cfg = ScorerConfig(beam_size=8)
    return {
        "min_sum (n=400)": lambda: kernels.min_sum(local, g),
        "lcs_length (300x300)": lambda: kernels.lcs_length(a, b),
        "rank_candidates (16x5000)": lambda: kernels.rank_candidates(scores),
        "beam_search (K=8, V=200)": lambda: beam_search(model, inst.source, gt, cfg),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    # Backends alternate across rounds so load spikes on a shared host hit both.
    table = {}
    previous = kernels.BACKEND
    try:
        for _ in range(args.repeat):
            for backend in kernels.available_backends():
                kernels.use_backend(backend)
                for name, fn in cases().items():
                    number = 1 if name.startswith("beam") else 50
                    t = min(timeit.repeat(fn, number=number, repeat=3)) / number
                    row = table.setdefault(name, {})
                    row[backend] = min(t, row.get(backend, t))
    finally:
        kernels.use_backend(previous)

    backends = kernels.available_backends()
    print(f"{'case':<28}" + "".join(f"{b:>14}" for b in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for name, row in table.items():
        line = f"{name:<28}" + "".join(f"{row[b] * 1e3:>11.3f} ms" for b in backends)
        if len(backends) == 2:
            line += f"{row['python'] / row['compiled']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
