"""Acceptance criteria, one test per criterion, each reporting a single PASS/FAIL line.

Randomised criteria go through ``cbstab.campaigns`` so they exercise the
same generators and evaluators as the command line.
"""
import math
import time

import numpy as np
import pytest

from cbstab import campaigns
from cbstab.certify import (
    CERTIFIED,
    QUANT_GRID,
    VIOLATED,
    replay_quant_chain,
    threshold_length,
    threshold_nuclear,
    threshold_vn,
)
from cbstab.matcore import BlockAlgebra
from cbstab.opspace import LinMap, amplified_norm, cb_norm, random_automorphism, transpose_map
from cbstab.perturb import correct_multiplication, multiplicative_residual, plant_multiplication


@pytest.fixture
def report(request):
    """Write one summary line per criterion straight to the terminal."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number, title, passed, elapsed, limit, detail=""):
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number}: {title} ({elapsed:.1f}s / {limit:.0f}s){' - ' + detail if detail else ''}"
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)
        return passed

    return emit


def run_campaign(kind, dims, samples, seed, **params):
    cases = campaigns.make_cases(kind, dims, samples, seed, **params)
    return [campaigns.evaluate_case(c) for c in cases]


def test_criterion_1_unit_formula(report):
    t0 = time.perf_counter()
    results = run_campaign("unit", [2], 500, 101) + run_campaign("unit", [3], 500, 102)
    elapsed = time.perf_counter() - t0
    worst = max(max(abs(r["polar"] - r["formula"]), abs(r["search"] - r["formula"])) for r in results)
    ok = all(r["passed"] for r in results) and worst <= 1e-6 and elapsed < 30
    assert report(1, "polar distance = closed form = brute force (500 in M2, 500 in M3)", ok, elapsed, 30,
                  f"max deviation {worst:.2e}")


def test_criterion_2_inver_both_directions(report):
    t0 = time.perf_counter()
    results = run_campaign("inver", [4], 200, 201, draws=1000)
    elapsed = time.perf_counter() - t0
    forward = all(r["min_margin"] >= -1e-9 for r in results)
    maximal = all(r["violating_projection_found"] for r in results)
    ok = forward and maximal and elapsed < 60
    assert report(2, "alpha = ||x^-1||^-2 satisfies (C); 1.01 alpha is violated (200 in M4)", ok, elapsed, 60,
                  f"min margin {min(r['min_margin'] for r in results):.2e}, "
                  f"violations found {sum(r['violating_projection_found'] for r in results)}/200")


def test_criterion_3_unitmult(report):
    t0 = time.perf_counter()
    results = run_campaign("unitmult", [2, 3], 500, 301, tol=1e-9)
    elapsed = time.perf_counter() - t0
    slack = min(r["bound"] + 1e-9 - r["distance"] for r in results)
    ok = all(r["passed"] for r in results) and elapsed < 30
    assert report(3, "||x - uv|| <= 2 sqrt(c^2 - 1) + 1e-9 (500 triples)", ok, elapsed, 30,
                  f"min slack {slack:.2e}")


def test_criterion_4_defmult(report):
    t0 = time.perf_counter()
    results = []
    for j, eps in enumerate((1e-2, 1e-3, 1e-4)):
        n = 334 if j == 0 else 333
        results += run_campaign("defmult", [2, 3], n, 400 + j, eps=eps, restarts=4, max_iter=100)
    elapsed = time.perf_counter() - t0
    bad = [i for i, r in enumerate(results) if not r["passed"]]
    ok = len(results) == 1000 and not bad and elapsed < 600
    assert report(4, "both defect estimates below their bounds (1000 maps on M2+M3)", ok, elapsed, 600,
                  f"violations {len(bad)}")


def test_criterion_5_cb_norm_oracle(report):
    t0 = time.perf_counter()
    M2 = BlockAlgebra((2,))
    M23 = BlockAlgebra((2, 3))
    T = transpose_map(M2)
    lvl2 = amplified_norm(T, 2, restarts=8).value
    lvl1 = amplified_norm(T, 1, restarts=8).value
    ident = cb_norm(LinMap.identity(M23), restarts=4).value
    homs = [cb_norm(random_automorphism(M23, s), restarts=4).value for s in range(3)]
    elapsed = time.perf_counter() - t0
    ok = (2 - 1e-3 <= lvl2 <= 2 + 1e-9 and 1 - 1e-6 <= lvl1 <= 1 + 1e-9
          and all(abs(v - 1) <= 1e-6 for v in [ident] + homs) and elapsed < 10)
    assert report(5, "transpose 2 at level 2, 1 at level 1; identity and *-homomorphisms 1", ok, elapsed, 10,
                  f"level2 {lvl2:.10f}, level1 {lvl1:.10f}, homs max dev {max(abs(v - 1) for v in [ident] + homs):.1e}")


def test_criterion_6_plant_and_recover(report):
    t0 = time.perf_counter()
    dims_cycle = [(2,), (3,), (2, 2), (2, 3), (3, 3)]
    worst_res = worst_iter = worst_ratio = worst_dist_excess = 0.0
    failures = 0
    for i in range(100):
        A = BlockAlgebra(dims_cycle[i % len(dims_cycle)])
        m, _ = plant_multiplication(A, 1e-2, seed=600 + i)
        Phi, trace = correct_multiplication(m, seed=i)
        eps0 = trace.eps[0]
        res = multiplicative_residual(Phi, m, seed=i)
        dist = float(np.linalg.norm(Phi.matrix - np.eye(A.coord_dim), 2))
        ratio = trace.max_ratio
        worst_res = max(worst_res, res)
        worst_iter = max(worst_iter, trace.iterations)
        worst_ratio = max(worst_ratio, ratio if ratio is not None else 0.0)
        worst_dist_excess = max(worst_dist_excess, dist - 10 * eps0)
        ok_i = (trace.iterations <= 8 and res < 1e-10 and dist <= 10 * eps0 + 1e-8
                and (ratio is None or (math.isfinite(ratio) and ratio <= 20)))
        failures += not ok_i
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 300
    assert report(6, "Newton correction of 100 planted products", ok, elapsed, 300,
                  f"max iters {worst_iter}, max residual {worst_res:.1e}, max ratio {worst_ratio:.3f}, "
                  f"max ||Phi - id|| - 10 eps0 = {worst_dist_excess:.2e}")


def test_criterion_7_recovery_pipeline(report):
    t0 = time.perf_counter()
    results = run_campaign("recover", [2, 3], 50, 701, eps=1e-3, restarts=8, tol=1e-9)
    elapsed = time.perf_counter() - t0
    worst = max(max(r.get("multiplicativity", math.inf), r.get("selfadjointness", math.inf),
                    r.get("unitarity", math.inf)) for r in results)
    ratio = max(r.get("distance_to_L", math.inf) / r.get("distance_bound", 1e-300) for r in results)
    ok = all(r["passed"] for r in results) and elapsed < 600
    assert report(7, "recover *-isomorphisms from 50 perturbations (eps = 1e-3)", ok, elapsed, 600,
                  f"max residual {worst:.1e}, max ||pi - L|| / (1808 sqrt(excess)) = {ratio:.2e}")


def test_criterion_8_constant_certification(report):
    t0 = time.perf_counter()
    nuclear = threshold_nuclear("3e-19")
    nuclear_ok = nuclear.all_certified

    chain_bad = []
    for d in QUANT_GRID:
        rep = replay_quant_chain(d)
        chain_bad += [f"{s.name}@{d}" for s in rep.steps if s.status != CERTIFIED]
    chain_ok = not chain_bad

    vn = threshold_vn("4e-6")
    lhs = vn["vn-epsilon0"].derived
    vn_ok = (vn["vn-epsilon0"].status == VIOLATED and lhs.contains(0.176)
             and lhs.certainly_gt(vn["vn-epsilon0"].claimed)
             and threshold_vn("1e-6")["vn-epsilon0"].status == CERTIFIED)

    length_ok = all(threshold_length(ell, K).all_certified for ell in range(1, 7) for K in (1, 2, 10))
    elapsed = time.perf_counter() - t0

    ok = nuclear_ok and chain_ok and vn_ok and length_ok and elapsed < 5
    parts = [f"nuclear {'ok' if nuclear_ok else 'FAIL'}",
             f"quant chain {'ok' if chain_ok else 'not certified: ' + ', '.join(chain_bad)}",
             f"vn discrepancy flagged {'ok' if vn_ok else 'FAIL'}",
             f"length grid {'ok' if length_ok else 'FAIL'}"]
    assert report(8, "interval certification of the printed constants", ok, elapsed, 5, "; ".join(parts))


def test_criterion_9_surjectivity(report):
    t0 = time.perf_counter()
    results = run_campaign("surjectivity", [2], 200, 901, tol=1e-6)
    elapsed = time.perf_counter() - t0
    slack = min(r["bound"] - r["measured"] for r in results if r["passed"])
    ok = all(r["passed"] for r in results) and elapsed < 30
    assert report(9, "quotient-inverse norm of 200 perturbed surjections within K/(1 - K||T-S||)", ok,
                  elapsed, 30, f"min slack {slack:.2e}")
