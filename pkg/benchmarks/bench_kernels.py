"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 256] [--d 32] [--repeat 2000]

Prints one CSV row per (kernel, backend) with the mean time per call in ns,
then an end-to-end replay of a generated trace under each backend.
"""
import argparse
import time

import numpy as np

from dynattn import kernels
from dynattn.structure import DynamicAttention
from dynattn.trace import generate, replay


def per_call_ns(fn, repeat):
    fn()
    t0 = time.perf_counter_ns()
    for _ in range(repeat):
        fn()
    return (time.perf_counter_ns() - t0) / repeat


def kernel_cases(n, d, rng):
    Q, K, V = rng.uniform(-0.5, 0.5, (3, n, d))
    M = Q @ K.T
    A = np.exp(M)
    s = A.sum(axis=1)
    C = A @ V
    t = max(1, int(n ** 0.5))
    a_stack, b_stack = rng.normal(size=(n, t)), rng.normal(size=(t, d))
    v_row = rng.integers(0, n, t).astype(np.int64)
    v_col = rng.integers(0, d, t).astype(np.int64)
    v_delta = rng.normal(size=t)
    scratch = np.empty((3, n))
    X = rng.integers(0, 2, (64, 64)).astype(np.uint8)
    Y = rng.integers(0, 2, (64, 64)).astype(np.uint8)

    def cases(mod):
        return {
            "query_entry": lambda: mod.query_entry(C, s, a_stack, b_stack, t, A, v_row, v_col,
                                                   v_delta, t, 1, 2, True, None),
            "k_column": lambda: mod.k_column(Q, M, A, 3, 1, 0.25, *scratch, None),
            "bool_matmul_64": lambda: mod.bool_matmul(X, Y),
        }
    return cases


def end_to_end_ms(mod, tr):
    saved = kernels.query_entry, kernels.k_column
    kernels.query_entry, kernels.k_column = mod.query_entry, mod.k_column
    try:
        t0 = time.perf_counter()
        replay(tr, "dynattn", structure=DynamicAttention(*tr.matrices, a=tr.a))
        return (time.perf_counter() - t0) * 1e3
    finally:
        kernels.query_entry, kernels.k_column = saved


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=256)
    parser.add_argument("--d", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=2000)
    parser.add_argument("--ops", type=int, default=2000)
    args = parser.parse_args(argv)

    backends = kernels.available()
    if "cython" not in backends:
        print("note: compiled kernels not built; only the fallback is timed")
    cases = kernel_cases(args.n, args.d, np.random.default_rng(0))
    print("kernel,backend,ns_per_call")
    for name, mod in backends.items():
        for kernel, fn in cases(mod).items():
            print(f"{kernel},{name},{per_call_ns(fn, args.repeat):.0f}")

    tr = generate(args.n, args.d, 0.5, args.ops, seed=0)
    print("replay,backend,ms")
    for name, mod in backends.items():
        print(f"replay_{args.ops}_ops,{name},{end_to_end_ms(mod, tr):.1f}")


if __name__ == "__main__":
    main()
