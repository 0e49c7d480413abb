"""Timing of the ascent kernels under the numba and pure-numpy backends."""
from __future__ import annotations

import time

import numpy as np

from . import _kernels
from .matcore import BlockAlgebra, amplified_identity, random_amplified_unitary
from .opspace import BilMap, random_linmap


def _time(fn, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_benchmark(dims=(2, 3), levels=(1, 2, 3), starts: int = 8, max_iter: int = 200,
                  repeats: int = 3, seed: int = 0):
    """Best-of-``repeats`` wall time per backend for linear and bilinear ascent.

    Returns a list of row dicts with the timings, the speed-up and the
    largest disagreement between the two backends' objective values.
    """
    A = BlockAlgebra(tuple(dims))
    rng = np.random.default_rng(seed)
    T = random_linmap(A, A, rng)
    B = BilMap(A, A, rng.standard_normal((A.coord_dim,) * 3))
    Bf = B.tensor.reshape(A.coord_dim, -1)
    backends = ["numpy"] + (["numba"] if _kernels.linear_ascent_nb is not None else [])
    rows = []
    for k in levels:
        X0s = [amplified_identity(A, k)] + [random_amplified_unitary(A, k, rng) for _ in range(starts - 1)]
        Y0s = [random_amplified_unitary(A, k, rng) for _ in range(starts)]
        for kind in ("linear", "bilinear"):
            row = {"dims": "x".join(map(str, dims)), "level": k, "kernel": kind}
            vals = {}
            for be in backends:
                if kind == "linear":
                    def fn(be=be):
                        return [_kernels.linear_ascent(T.matrix, A.offsets, A.dims, A.offsets, A.dims,
                                                       X0, max_iter, 0.0, backend=be)[1] for X0 in X0s]
                else:
                    def fn(be=be):
                        return [_kernels.bilinear_ascent(Bf, A.offsets, A.dims, A.offsets, A.dims,
                                                         X0, Y0, max_iter, 0.0, backend=be)[2]
                                for X0, Y0 in zip(X0s, Y0s)]
                fn()  # warm-up (numba compilation or cache load)
                t, v = _time(fn, repeats)
                row[f"{be}_s"] = t
                vals[be] = np.array(v)
            if len(backends) == 2:
                row["speedup"] = row["numpy_s"] / row["numba_s"]
                row["max_value_diff"] = float(np.abs(vals["numpy"] - vals["numba"]).max())
            rows.append(row)
    return rows


def format_rows(rows) -> str:
    keys = list(rows[0].keys()) if rows else []
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join(f"{r.get(k):.6g}" if isinstance(r.get(k), float) else str(r.get(k, ""))
                              for k in keys))
    return "\n".join(lines) + "\n"
