"""Compare the numba and pure-numpy ascent kernels.

    python3 benchmarks/bench_kernels.py --dims 2,3 --levels 1,2,3 --out bench.csv
"""
import argparse
import sys

from cbstab.bench import format_rows, run_benchmark


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="2,3")
    ap.add_argument("--levels", default="1,2,3")
    ap.add_argument("--starts", type=int, default=8)
    ap.add_argument("--max-iter", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    a = ap.parse_args(argv)
    rows = run_benchmark(dims=tuple(int(t) for t in a.dims.split(",")),
                         levels=tuple(int(t) for t in a.levels.split(",")),
                         starts=a.starts, max_iter=a.max_iter, repeats=a.repeats, seed=a.seed)
    text = format_rows(rows)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


if __name__ == "__main__":
    main()
