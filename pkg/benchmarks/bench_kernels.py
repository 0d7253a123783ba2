"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--entities 15000] [--dim 128] [--batch 5000]

Times one training batch (scores, losses and all gradients), one candidate
sweep over every entity and a full filtered evaluation of a few queries.
"""

import argparse
import timeit

import numpy as np

from quatkg import kernels


def make_tables(rng, n_entities, n_relations, dim, dtype):
    scale = 1 / np.sqrt(4 * dim)
    return [rng.uniform(-scale, scale, size=(rows, 4, dim)).astype(dtype)
            for rows in (n_entities, n_relations, n_relations, n_relations)]


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--entities", type=int, default=15_000)
    p.add_argument("--relations", type=int, default=200)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--batch", type=int, default=5_000, help="labelled triples per training batch")
    p.add_argument("--float", type=int, choices=(32, 64), default=64)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    dtype = np.float64 if args.float == 64 else np.float32
    tables = make_tables(rng, args.entities, args.relations, args.dim, dtype)
    triples = np.stack([rng.integers(0, args.entities, args.batch), rng.integers(0, args.relations, args.batch),
                        rng.integers(0, args.entities, args.batch)], axis=1)
    labels = rng.choice([-1.0, 1.0], size=args.batch)
    query = tuple(triples[0])

    print(f"|E|={args.entities} |R|={args.relations} n={args.dim} batch={args.batch} float{args.float}")
    print(f"{'backend':<8} {'train batch':>12} {'tail sweep':>12} {'head sweep':>12}")
    results = {}
    for name in sorted(kernels.BACKENDS):
        step = best_of(lambda: kernels.logistic_grad(tables, triples, labels, True, True, backend=name),
                       args.repeat)
        tail = best_of(lambda: kernels.score_candidates(tables, query, 1, True, True, backend=name), args.repeat)
        head = best_of(lambda: kernels.score_candidates(tables, query, 0, True, True, backend=name), args.repeat)
        results[name] = (step, tail, head)
        print(f"{name:<8} {step * 1e3:10.2f}ms {tail * 1e3:10.2f}ms {head * 1e3:10.2f}ms")
    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        print(f"{'speedup':<8} " + " ".join(f"{a / b:11.1f}x" for a, b in zip(py, cy)))
    else:
        print("compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
