"""Interval replay of the closed-form constant chains behind the stability theorems.

Each step pairs a *derived* interval (the closed form evaluated in
outward-rounded arithmetic) with the *claimed* majorant.  Norm-type
quantities are handled as excesses over 1 (``||S|| - 1`` rather than
``||S||``) and rewritten without cancellation, so verdicts stay exact
even for ``delta`` far below machine epsilon.

Notation: ``delta = ||L^-1||_cb - 1`` after normalising ``||L||_cb <= 1``;
``S = L(1)^-1 L``; ``T = (S + S*)/2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Union

from .interval import Interval, sqrt

CERTIFIED = "certified"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

PARTIAL_LIMIT = Fraction(1, 10)
FULL_LIMIT = Fraction(1, 200)
SQRT2 = sqrt(2)


@dataclass
class ChainStep:
    name: str
    claimed: Interval
    derived: Optional[Interval]
    relation: str = "<="
    note: str = ""
    status: str = field(init=False)

    def __post_init__(self):
        self.status = verdict(self.derived, self.claimed, self.relation)

    def to_dict(self) -> dict:
        return {"name": self.name, "relation": self.relation, "status": self.status,
                "claimed": self.claimed.to_list(),
                "derived": None if self.derived is None else self.derived.to_list(),
                "note": self.note}


def verdict(derived: Optional[Interval], claimed: Interval, relation: str) -> str:
    if derived is None:
        return INCONCLUSIVE
    if relation == "<=":
        if derived.hi <= claimed.lo:
            return CERTIFIED
        return VIOLATED if derived.lo > claimed.hi else INCONCLUSIVE
    if relation == "<":
        if derived.hi < claimed.lo:
            return CERTIFIED
        return VIOLATED if derived.lo >= claimed.hi else INCONCLUSIVE
    if relation == ">=":
        if derived.lo >= claimed.hi:
            return CERTIFIED
        return VIOLATED if derived.hi < claimed.lo else INCONCLUSIVE
    if relation == "in":
        if claimed.lo <= derived.lo and derived.hi <= claimed.hi:
            return CERTIFIED
        return VIOLATED if derived.hi < claimed.lo or derived.lo > claimed.hi else INCONCLUSIVE
    raise ValueError(f"unknown relation {relation!r}")


@dataclass
class ChainReport:
    title: str
    steps: List[ChainStep] = field(default_factory=list)
    params: Dict[str, object] = field(default_factory=dict)
    extras: Dict[str, object] = field(default_factory=dict)

    def add(self, *args, **kw) -> ChainStep:
        step = ChainStep(*args, **kw)
        self.steps.append(step)
        return step

    def __getitem__(self, name) -> ChainStep:
        for s in self.steps:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def statuses(self) -> Dict[str, str]:
        return {s.name: s.status for s in self.steps}

    def violated(self) -> List[ChainStep]:
        return [s for s in self.steps if s.status == VIOLATED]

    @property
    def all_certified(self) -> bool:
        return all(s.status == CERTIFIED for s in self.steps)

    def to_dict(self) -> dict:
        def enc(v):
            return v.to_list() if isinstance(v, Interval) else v
        return {"title": self.title, "params": {k: enc(v) for k, v in self.params.items()},
                "extras": {k: enc(v) for k, v in self.extras.items()},
                "steps": [s.to_dict() for s in self.steps]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def table(self) -> str:
        head = f"{'step':<24} {'rel':<3} {'derived':<34} {'claimed':<34} status"
        lines = [f"== {self.title} " + " ".join(f"{k}={_fmt(v)}" for k, v in self.params.items()),
                 head, "-" * len(head)]
        for s in self.steps:
            d = "n/a" if s.derived is None else _fmt(s.derived)
            lines.append(f"{s.name:<24} {s.relation:<3} {d:<34} {_fmt(s.claimed):<34} {s.status}")
            if s.note:
                lines.append(f"{'':<28}{s.note}")
        for k, v in self.extras.items():
            lines.append(f"  {k}: {_fmt(v)}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, Interval):
        return f"[{v.lo:.6e}, {v.hi:.6e}]" if v.lo != v.hi else f"{v.lo:.6e}"
    return str(v)


def as_interval(x: Union[Interval, str, int, float, Fraction]) -> Interval:
    if isinstance(x, Interval):
        return x
    if isinstance(x, float):
        return Interval(x)
    return Interval.exact(x)


# ---------------------------------------------------------------------------
# closed forms, all cancellation-free

def s_excess(d: Interval) -> Interval:
    """``(1+d)/sqrt(2-(1+d)^2) - 1`` written as ``(4d+2d^2) / (((1+d)+r) r)``."""
    r = (1 - 2 * d - d * d).sqrt()
    return (4 * d + 2 * d * d) / (((1 + d) + r) * r)


def inv_excess_from_perturbation(d: Interval, e: Interval) -> Interval:
    """``(1+d)/(1-(1+d)e) - 1`` for ``||S^-1|| <= 1+d`` and ``||T-S|| <= e``."""
    k = (1 + d) * e
    return (d + k) / (1 - k)


def mu_excess(t: Interval, ti: Interval) -> Interval:
    """``mu`` from ``||X|| <= 1+t`` and ``||X^-1|| <= 1+ti``.

    ``1 - sqrt(q)`` with ``q = 2/(1+ti)^2 - (1+t)^2`` is evaluated as
    ``(1-q)/(1+sqrt q)`` and ``1 - q = t(2+t) + 2 ti(2+ti)/(1+ti)^2``.
    """
    one_minus_q = t * (2 + t) + 2 * ti * (2 + ti) / ((1 + ti) * (1 + ti))
    q = 1 - one_minus_q
    if q.lo < 0:
        raise ValueError("radicand of mu is not certainly positive")
    return t.max(one_minus_q / (1 + q.sqrt()))


def unit_mult_core(t: Interval, m: Interval) -> Interval:
    """``2 sqrt((1+t+m/sqrt2)^2 - 1)``, the shared term of both defect bounds."""
    a = t + m / SQRT2
    return 2 * (a * (2 + a)).sqrt()


def sa_defect_bound(t: Interval, m: Interval) -> Interval:
    return unit_mult_core(t, m) + 2 * m


def mult_defect_bound(t: Interval, m: Interval) -> Interval:
    return unit_mult_core(t, m) + m * (2 + t)


# ---------------------------------------------------------------------------
# chains

def replay_quant_chain(delta, reading: str = "printed") -> ChainReport:
    """Replay the chain from ``delta`` to the ``3620 sqrt(delta)`` distance bound.

    ``reading="printed"`` feeds each step with the *claimed* majorants of
    the earlier steps (the argument as written); ``"propagated"`` feeds
    the derived intervals instead.  Steps valid for ``delta <= 1/10``
    always run; the rest need ``delta < 1/200`` and are inconclusive
    otherwise.
    """
    if reading not in ("printed", "propagated"):
        raise ValueError("reading must be 'printed' or 'propagated'")
    d = as_interval(delta)
    if d.lo < 0:
        raise ValueError("delta must be non-negative")
    rep = ChainReport("quant-chain", params={"delta": d, "reading": reading})
    rd = d.sqrt()
    printed = reading == "printed"

    def pick(claimed, step):
        if printed or step.derived is None:
            return claimed
        return step.derived

    partial_ok = d.lo > 0 and Interval.exact(PARTIAL_LIMIT).certainly_ge(d)
    full_ok = Interval.exact(FULL_LIMIT).certainly_gt(d)

    if not partial_ok:
        for name in ("S-norm", "mu-S", "f1", "T-invertible", "f6", "T-norm", "T-inverse",
                     "mu-T", "f3", "P3-gate", "J-L", "dKK"):
            rep.add(name, Interval(0.0), None, note="delta outside (0, 1/10]")
        return rep

    s_claim = 3 * d
    s = rep.add("S-norm", s_claim, s_excess(d), "<",
                note="||S|| - 1 from ||S|| <= (1+d)/sqrt(2-(1+d)^2)")
    mu_claim = 2 * d
    mu_s = rep.add("mu-S", mu_claim, mu_excess(s.derived, d),
                   note="mu(S) with ||S^-1|| <= 1+d; the expansion is 4d + O(d^2)")
    f1_claim = 5 * rd
    sa = sa_defect_bound(pick(s_claim, s), pick(mu_claim, mu_s))
    rep.add("f1", 2 * f1_claim, sa, note="||S - S*|| <= 2 f1")
    e = f1_claim if printed else sa / 2
    rep.add("T-invertible", 1 / (1 + d), e, "<", note="||T - S|| < 1/||S^-1||")
    rep.add("f6", 3 * d, s_excess(d), note="||L(1)^-1|| - 1, same closed form as ||S|| - 1")

    tail = ("T-norm", "T-inverse", "mu-T", "f3", "P3-gate", "J-L", "dKK")
    if not full_ok:
        for name in tail:
            rep.add(name, Interval(0.0), None, note="requires delta < 1/200")
        return rep

    t_claim = 6 * rd
    t = rep.add("T-norm", t_claim, pick(s_claim, s) + e, note="||T|| - 1 <= (||S|| - 1) + ||T - S||")
    ti_claim = 8 * rd
    ti = rep.add("T-inverse", ti_claim, inv_excess_from_perturbation(d, e),
                 note="||T^-1|| - 1 from (1+d)/(1-(1+d)||T-S||)")
    mu_t_claim = 40 * rd
    mu_t = rep.add("mu-T", mu_t_claim, mu_excess(pick(t_claim, t), pick(ti_claim, ti)))

    # ||T^v|| <= ||S^v|| + ||E||(1 + 2||S|| + ||E||) with E = T - S
    s_v = mult_defect_bound(pick(s_claim, s), pick(mu_claim, mu_s))
    t_v = s_v + e * (1 + 2 * (1 + pick(s_claim, s)) + e)
    f3_claim = 180 * rd
    f3 = rep.add("f3", f3_claim, (1 + pick(ti_claim, ti)) * t_v,
                 note="||T^-1|| ||T^v|| via T^v = S^v + perturbation terms")
    literal = (1 + pick(ti_claim, ti)) * mult_defect_bound(pick(t_claim, t), pick(mu_t_claim, mu_t))
    f3.note += f"; direct defect bound on T gives {_fmt(literal)}"
    f3_use = pick(f3_claim, f3)
    rep.add("P3-gate", Interval.exact(Fraction(1, 11)), f3_use, "<",
            note="multiplication defect within the rigidity radius 1/11")
    f4 = 10 * f3_use
    f6 = pick(3 * d, rep["f6"])
    jl = f4 + e + f6
    rep.add("J-L", 1808 * rd, jl, note="f4 + f1 + f6 with f4 = 10 f3")
    rep.add("dKK", 3620 * rd, 2 * (1 + d) * (1 + d) * jl, note="2 ||L^-1||^2 (f4 + f1 + f6)")
    return rep


def threshold_nuclear(eps0="3e-19") -> ChainReport:
    """``3620 sqrt(eps0) < 1/420000`` and the largest ``delta`` for which it holds."""
    d = as_interval(eps0)
    rep = ChainReport("threshold-nuclear", params={"eps0": d})
    rep.add("nuclear-delta-gate", Interval.exact("2e-7"), d, "<",
            note="eps0 inside the range where the chain is valid")
    rep.add("nuclear-epsilon0", Interval.exact(Fraction(1, 420000)), 3620 * d.sqrt(), "<",
            note="distance bound 3620 sqrt(delta) below 1/420000")
    rep.extras["max_delta"] = Interval.exact(Fraction(1, 3620 * 420000) ** 2)
    return rep


def _s_defect(d: Interval) -> Interval:
    """``||S^-1|| ||S^v||`` bound with the printed majorants ``||S|| < 1+3d``, ``mu(S) <= 2d``."""
    return (1 + d) * mult_defect_bound(3 * d, 2 * d)


def threshold_vn(eps0="4e-6") -> ChainReport:
    """The von Neumann threshold: ``88 sqrt(delta) < 1/11`` at ``delta = eps0``.

    Reports two readings: the printed gate ``88 sqrt(delta) < 1/11`` and
    the gate applied to the derived defect bound itself.
    """
    d = as_interval(eps0)
    rep = ChainReport("threshold-vn", params={"eps0": d})
    gate = Interval.exact(Fraction(1, 11))
    rep.add("vn-S-defect", 88 * d.sqrt(), _s_defect(d),
            note="||S^-1|| ||S^v|| <= 88 sqrt(delta)")
    rep.add("vn-epsilon0", gate, 88 * d.sqrt(), "<",
            note="printed gate 88 sqrt(delta) < 1/11 at delta = eps0")
    rep.add("vn-derived-gate", gate, _s_defect(d), "<",
            note="gate applied to the derived defect bound instead of 88 sqrt(delta)")
    rep.extras["max_delta_printed_gate"] = Interval.exact(Fraction(1, 968) ** 2)
    rep.extras["max_delta_derived_gate"] = _max_delta(lambda x: _s_defect(x), gate)
    return rep


def _max_delta(f, limit: Interval, hi: float = 0.01) -> Interval:
    """Bracket ``sup{delta : f(delta) < limit}`` by bisection on certified verdicts."""
    lo_ok, hi_bad = 0.0, hi
    for _ in range(200):
        mid = 0.5 * (lo_ok + hi_bad)
        if mid in (lo_ok, hi_bad):
            break
        v = f(Interval(mid))
        if v.certainly_lt(limit):
            lo_ok = mid
        else:
            hi_bad = mid
    return Interval(lo_ok, hi_bad)


def threshold_length(length: int, K) -> ChainReport:
    """``delta = 1e-4 4^-l K^-2`` implies ``88 sqrt(delta) 2^(l-1) < 1/K``."""
    if int(length) != length or length < 1:
        raise ValueError(f"length must be an integer >= 1, got {length!r}")
    length = int(length)
    Kq = Fraction(K) if not isinstance(K, float) else Fraction(K)
    if Kq < 1:
        raise ValueError(f"K must be >= 1, got {K!r}")
    dq = Fraction(1, 10 ** 4) / (Fraction(4) ** length * Kq * Kq)
    d = Interval.exact(dq)
    Ki = Interval.exact(Kq)
    rep = ChainReport("threshold-length", params={"length": length, "K": str(Kq), "delta": d})
    total = Interval(0.0)
    for k in range(length - 1):
        total = total + (1 + 3 * d) ** k
    rep.add("length-sum", Interval.exact(2 ** (length - 1)), total,
            note="sum_{k<=l-2} ||S||^k <= 2^(l-1)")
    lhs = 88 * d.sqrt() * Interval.exact(2 ** (length - 1))
    rep.add("length-gate", 1 / Ki, lhs, "<",
            note="||S^-1|| ||S^{v l}|| <= 88 sqrt(delta) 2^(l-1) < 1/K")
    rep.extras["slack"] = 1 / Ki - lhs
    return rep


def lemma_constant_checks(grid: int = 20) -> ChainReport:
    """Sanity checks of the lemma bounds: vanishing at the isometric point, sign, monotonicity."""
    rep = ChainReport("lemma-constants", params={"grid": grid})
    zero = Interval(0.0)

    def unitmult(c):
        return 2 * (c * c - 1).sqrt()

    def imageunit(nT, nTi):
        return nTi / (2 - (nT * nTi) ** 2).sqrt()

    rep.add("unitmult-at-1", zero, unitmult(Interval(1.0)))
    rep.add("unitmult-enclosure", Interval.hull(Interval.exact("0.0282"), Interval.exact("0.0401")),
            unitmult(Interval.hull(Interval.exact("1.0001"), Interval.exact("1.0002"))), "in")
    rep.add("imageunit-at-isometry", Interval(1.0), imageunit(Interval(1.0), Interval(1.0)), "in")
    rep.add("defmult-mult-at-isometry", zero, mult_defect_bound(zero, zero))
    rep.add("defmult-sa-at-isometry", zero, sa_defect_bound(zero, zero))

    def points(a, b):
        return [Interval.exact(Fraction(a) + (Fraction(b) - Fraction(a)) * i / grid)
                for i in range(grid + 1)]

    families = {
        "unitmult(c)": (lambda x: unitmult(1 + x), points(0, "0.2")),
        "imageunit(||T^-1||)": (lambda x: imageunit(Interval(1.0), 1 + x), points(0, "0.15")),
        "imageunit(||T||)": (lambda x: imageunit(1 + x, Interval(1.0)), points(0, "0.15")),
        "defmult-mult(||T||)": (lambda x: mult_defect_bound(x, Interval.exact("0.01")), points(0, "0.2")),
        "defmult-mult(mu)": (lambda x: mult_defect_bound(zero, x), points(0, "0.2")),
        "defmult-sa(||T||)": (lambda x: sa_defect_bound(x, Interval.exact("0.01")), points(0, "0.2")),
        "defmult-sa(mu)": (lambda x: sa_defect_bound(zero, x), points(0, "0.2")),
    }
    for name, (f, pts) in families.items():
        vals = [f(p) for p in pts]
        # the first cell is replaced by the exact value at its left end, so a bound
        # that vanishes there does not leave a zero-width margin on a whole cell
        cells = [vals[0]] + [f(Interval.hull(a, b)) for a, b in zip(pts[1:], pts[2:])]
        rep.add(f"{name}-nonneg", zero,
                Interval(min(v.lo for v in cells), min(v.hi for v in cells)), ">=",
                note="on the grid point x_0 and the cells [x_i, x_i+1], i >= 1")
        diffs = [a - b for a, b in zip(vals, vals[1:])]
        rep.add(f"{name}-monotone", zero,
                Interval(max(v.lo for v in diffs), max(v.hi for v in diffs)),
                note="max over the grid of f(x_i) - f(x_{i+1})")
    return rep


QUANT_GRID = ("1e-10", "1e-9", "1e-8", "1e-7", "2e-7")


def all_reports(eps_nuclear="3e-19", eps_vn="4e-6", deltas=QUANT_GRID):
    """The reports emitted by the ``certify`` command: one quant chain per delta, then the rest."""
    if isinstance(deltas, (str, int, float)):
        deltas = (deltas,)
    length = ChainReport("threshold-length-grid")
    for ell in range(1, 7):
        for K in (1, 2, 10):
            sub = threshold_length(ell, K)
            for s in sub.steps:
                s.name = f"{s.name}[l={ell},K={K}]"
                length.steps.append(s)
    return [replay_quant_chain(d) for d in deltas] + [
        threshold_nuclear(eps_nuclear), threshold_vn(eps_vn), length, lemma_constant_checks()]
