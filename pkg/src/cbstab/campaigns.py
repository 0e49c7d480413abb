"""Randomised verification campaigns: instance generators and single-case evaluators.

A *case* is a plain JSON-able dict ``{"kind", "params", "inputs"}`` that
holds every matrix needed to re-run the check, so a dump of one case is
enough to replay it.  :func:`evaluate_case` is the only entry point used
by both the campaign runner and ``replay``.
"""
from __future__ import annotations

import math

import numpy as np

from . import certify
from .defect import random_near_isomorphism, symmetrize, unitize, verify_defmult
from .errors import CbstabError
from .matcore import (
    AlgElement,
    BlockAlgebra,
    block2x2,
    condition_C_margins_batch,
    find_violating_projection,
    haar_unitaries,
    min_singular_value,
    op_norm,
    polar,
    random_element,
    random_invertible,
    random_unitary,
    unitary_distance_formula,
    unitary_distance_search,
)
from .opspace import LinMap, decode_complex, encode_complex
from .perturb import quotient_inverse_norm, recover_isomorphism, stability_surjectivity

LEMMAS = ("unit", "inver", "unitmult", "surjectivity")


def sample_seed(seed: int, index: int) -> int:
    """Independent per-sample seed derived from ``(seed, index)``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# generators: (algebra, rng, params) -> case

def gen_unit(algebra, rng, tol=1e-6):
    x = random_invertible(algebra, rng, max_cond=10.0) * float(rng.uniform(0.5, 2.0))
    return {"kind": "unit", "params": {"tol": tol, "seed": int(rng.integers(2 ** 31))},
            "inputs": {"x": x.to_dict()}}


def gen_inver(algebra, rng, draws=1000, tol=1e-9):
    x = random_invertible(algebra, rng, max_cond=100.0)
    x = x / op_norm(x)
    return {"kind": "inver",
            "params": {"draws": draws, "tol": tol, "inflate": 1.01,
                       "seed": int(rng.integers(2 ** 31))},
            "inputs": {"x": x.to_dict()}}


def gen_unitmult(algebra, rng, tol=1e-9):
    u = random_unitary(algebra, rng)
    v = random_unitary(algebra, rng)
    z = random_element(algebra, rng)
    x = u @ v + float(rng.uniform(0.0, 0.5)) * z / op_norm(z)
    return {"kind": "unitmult", "params": {"tol": tol},
            "inputs": {"u": u.to_dict(), "v": v.to_dict(), "x": x.to_dict()}}


def gen_surjectivity(algebra, rng, tol=1e-6):
    rows = int(rng.integers(2, 7))
    cols = rows + int(rng.integers(0, 5))
    T = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    K = quotient_inverse_norm(T)
    E = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    E *= float(rng.uniform(0.0, 0.9)) / (K * np.linalg.norm(E, 2))
    return {"kind": "surjectivity", "params": {"tol": tol, "K": K},
            "inputs": {"T": encode_complex(T), "S": encode_complex(T + E)}}


def gen_defmult(algebra, rng, eps=1e-3, restarts=4, max_iter=100):
    L, _ = random_near_isomorphism(algebra, eps, rng)
    T = unitize(symmetrize(L))
    return {"kind": "defmult",
            "params": {"eps": eps, "restarts": restarts, "max_iter": max_iter,
                       "seed": int(rng.integers(2 ** 31))},
            "inputs": {"T": T.to_dict()}}


def gen_recover(algebra, rng, eps=1e-3, restarts=8, tol=1e-9):
    L, _ = random_near_isomorphism(algebra, eps, rng)
    return {"kind": "recover",
            "params": {"eps": eps, "restarts": restarts, "tol": tol,
                       "seed": int(rng.integers(2 ** 31))},
            "inputs": {"L": L.to_dict()}}


GENERATORS = {"unit": gen_unit, "inver": gen_inver, "unitmult": gen_unitmult,
              "surjectivity": gen_surjectivity, "defmult": gen_defmult, "recover": gen_recover}


# ---------------------------------------------------------------------------
# evaluators: case -> result dict with a boolean "passed"

def _eval_unit(p, inp):
    x = AlgElement.from_dict(inp["x"])
    formula = unitary_distance_formula(x)
    pol = polar(x).distance_to_unitary
    search = unitary_distance_search(x, seed=p["seed"])
    passed = abs(pol - formula) <= p["tol"] and abs(search - formula) <= p["tol"]
    return {"passed": passed, "formula": formula, "polar": pol, "search": search}


def _eval_inver(p, inp):
    x = AlgElement.from_dict(inp["x"])
    rng = np.random.default_rng(p["seed"])
    alpha = min_singular_value(x) ** 2
    n_samples = p["draws"]
    worst = math.inf
    for b, n in zip(x.blocks, x.algebra.dims):
        # random projections of random rank, and contractions with random norm <= 1
        projs = []
        for _ in range(n_samples):
            rank = int(rng.integers(0, n + 1))
            q = haar_unitaries(n, 1, rng)[0][:, :rank]
            projs.append(q @ q.conj().T)
        g = rng.standard_normal((n_samples, n, n)) + 1j * rng.standard_normal((n_samples, n, n))
        g *= (rng.uniform(0, 1, n_samples) / np.linalg.norm(g, ord=2, axis=(-2, -1)))[:, None, None]
        margins = np.concatenate([condition_C_margins_batch(b, alpha, np.stack(projs)),
                                  condition_C_margins_batch(b, alpha, g)])
        worst = min(worst, float(margins.min()))
    witness = find_violating_projection(x, alpha * p["inflate"], p["tol"])
    passed = worst >= -p["tol"] and witness is not None
    return {"passed": passed, "alpha": alpha, "min_margin": worst,
            "violating_projection_found": witness is not None}


def _eval_unitmult(p, inp):
    u, v, x = (AlgElement.from_dict(inp[k]) for k in ("u", "v", "x"))
    one = u.algebra.identity()
    c = max(1.0, op_norm(block2x2(u, x, -one, v)) / math.sqrt(2.0))
    lhs = op_norm(x - u @ v)
    bound = 2.0 * math.sqrt(c * c - 1.0)
    return {"passed": lhs <= bound + p["tol"], "c": c, "distance": lhs, "bound": bound}


def _eval_surjectivity(p, inp):
    T = decode_complex(inp["T"])
    S = decode_complex(inp["S"])
    try:
        bound = stability_surjectivity(T, S, p["K"], tol=p["tol"])
    except CbstabError as e:
        return {"passed": False, "error": f"{type(e).__name__}: {e}"}
    return {"passed": True, "bound": bound, "measured": quotient_inverse_norm(S),
            "distance": float(np.linalg.norm(T - S, 2))}


def _eval_defmult(p, inp):
    T = LinMap.from_dict(inp["T"])
    try:
        rep = verify_defmult(T, restarts=p["restarts"], seed=p["seed"], max_iter=p["max_iter"])
    except CbstabError as e:
        return {"passed": False, "error": f"{type(e).__name__}: {e}"}
    out = rep.row()
    out["passed"] = rep.satisfied
    return out


def _eval_recover(p, inp):
    L = LinMap.from_dict(inp["L"])
    try:
        _, rep = recover_isomorphism(L, restarts=p["restarts"], seed=p["seed"])
    except CbstabError as e:
        return {"passed": False, "error": f"{type(e).__name__}: {e}", "stage": e.stage}
    out = rep.row()
    out["eps_series"] = rep.trace.eps
    tol = p["tol"]
    out["passed"] = (rep.multiplicativity < tol and rep.selfadjointness < tol
                     and rep.unitarity < tol and rep.within_bound)
    return out


def _eval_certify(p, inp):
    allowed = set(p.get("allow_flagged", []))
    reports = certify.all_reports(p["eps_nuclear"], p["eps_vn"], p["deltas"])
    flagged = [s.name for r in reports for s in r.violated()]
    blocking = [n for n in flagged if n not in allowed]
    return {"passed": not blocking, "flagged": flagged, "blocking": blocking,
            "reports": [r.to_dict() for r in reports]}


EVALUATORS = {"unit": _eval_unit, "inver": _eval_inver, "unitmult": _eval_unitmult,
              "surjectivity": _eval_surjectivity, "defmult": _eval_defmult,
              "recover": _eval_recover, "certify": _eval_certify}


class MalformedCase(ValueError):
    pass


def evaluate_case(case: dict) -> dict:
    """Run a single case; raises :class:`MalformedCase` on an unusable dump."""
    if not isinstance(case, dict) or case.get("kind") not in EVALUATORS:
        raise MalformedCase("case must be an object with a known 'kind'")
    try:
        return EVALUATORS[case["kind"]](case.get("params", {}), case.get("inputs", {}))
    except (KeyError, TypeError, ValueError, IndexError) as e:
        if isinstance(e, CbstabError):
            raise
        raise MalformedCase(f"{type(e).__name__}: {e}") from e


def make_cases(kind: str, dims, samples: int, seed: int, **params):
    """Generate ``samples`` cases; sample ``i`` draws from ``default_rng(sample_seed(seed, i))``."""
    gen = GENERATORS[kind]
    algebra = BlockAlgebra(tuple(dims))
    return [gen(algebra, np.random.default_rng(sample_seed(seed, i)), **params)
            for i in range(samples)]
