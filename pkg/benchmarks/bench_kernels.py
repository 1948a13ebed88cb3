"""Time every hot kernel under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--n 2000] [--repeats 5]
"""
import argparse

from gnnplan.bench import BENCH_HEADER, run_kernel_bench


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rows = run_kernel_bench(args.seed, args.repeats, args.n)
    print(",".join(BENCH_HEADER))
    by_kernel = {}
    for row in rows:
        print(",".join(str(v) for v in row))
        by_kernel.setdefault(row[0], {})[row[1]] = float(row[4])
    print()
    for name, t in by_kernel.items():
        print(f"{name:18s} numpy/numba = {t['numpy'] / max(t['numba'], 1e-9):8.1f}x")


if __name__ == "__main__":
    main()
