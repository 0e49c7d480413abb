"""Defect functionals of a map between block algebras.

Multiplicativity defect ``T(ab) - T(a)T(b)``, the adjoint-twisted map
``x -> T(x*)*``, the unitary-distortion scalar ``mu(T)``, the
unitize / symmetrize normalisations and a checker for the two defect
bounds that hold under ``||T||_cb ||T^-1||_cb < sqrt 2``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BoundViolation, HypothesisNotMet, NotInvertible
from .matcore import AlgElement, BlockAlgebra, INVERTIBILITY_RTOL, min_singular_value, op_norm
from .opspace import (
    DEFAULT_RESTARTS,
    BilMap,
    LinMap,
    NormEstimate,
    bilinear_h_norm,
    cb_norm,
    multiplication_tensor,
)

SQRT2 = math.sqrt(2.0)
BOUND_TOL = 1e-9


def mult_defect(T: LinMap) -> BilMap:
    """The bilinear map ``(a, b) -> T(ab) - T(a) T(b)`` as an exact tensor."""
    MA = multiplication_tensor(T.domain)
    MB = multiplication_tensor(T.codomain)
    pulled = np.einsum("sv,vtu->stu", T.matrix, MA)
    pushed = np.einsum("svw,vt,wu->stu", MB, T.matrix, T.matrix)
    return BilMap(T.domain, T.codomain, pulled - pushed)


def star_map(T: LinMap) -> LinMap:
    """``x -> T(x*)*``.  Exactly involutive: entries are only permuted and conjugated."""
    pA = T.domain.star_perm
    pB = T.codomain.star_perm
    return LinMap(T.domain, T.codomain, np.conj(T.matrix)[pB][:, pA])


def mu_from_norms(norm_T: float, norm_Tinv: float) -> float:
    """``max(||T|| - 1, 1 - sqrt(2/||T^-1||^2 - ||T||^2))`` with the radicand clamped at 0."""
    prod = norm_T * norm_Tinv
    if not prod < SQRT2:
        raise HypothesisNotMet(f"||T||_cb ||T^-1||_cb = {prod:.6g} is not below sqrt(2)", value=prod)
    rad = 2.0 / norm_Tinv ** 2 - norm_T ** 2
    if rad <= 0.0:
        return max(norm_T - 1.0, 1.0)
    return max(norm_T - 1.0, 1.0 - math.sqrt(rad), 0.0)


def mu(T: LinMap, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> float:
    """``mu(T)`` from the cb-norm estimates of ``T`` and ``T^-1``.

    Uses the ``value`` fields, which lean high, so ``mu`` errs on the
    conservative side.
    """
    nT = cb_norm(T, restarts, seed).value
    nTi = cb_norm(T.inverse(), restarts, seed + 1).value
    return mu_from_norms(nT, nTi)


def left_multiplication(a: AlgElement) -> LinMap:
    """Matrix of ``y -> a y`` on the algebra of ``a``."""
    return LinMap.from_function(a.algebra, a.algebra, lambda y: a @ y)


def unitize(L: LinMap) -> LinMap:
    """``S = L(1)^-1 L``, so that ``S(1) = 1``."""
    u = L(L.domain.identity())
    if min_singular_value(u) <= INVERTIBILITY_RTOL * op_norm(u):
        raise NotInvertible("L(1) is numerically singular; the near-isometry hypothesis fails")
    return left_multiplication(u.inv()) @ L


def unit_image_bound(norm_L: float, norm_Linv: float) -> float:
    """Upper bound ``||L^-1|| / sqrt(2 - ||L||^2 ||L^-1||^2)`` for ``||L(1)^-1||``."""
    rad = 2.0 - (norm_L * norm_Linv) ** 2
    if rad <= 0:
        raise HypothesisNotMet("||L||_cb ||L^-1||_cb is not below sqrt(2)", value=norm_L * norm_Linv)
    return norm_Linv / math.sqrt(rad)


def unitize_certified(L: LinMap, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                      tol: float = 1e-9):
    """Unitize and check ``||L(1)^-1||`` against :func:`unit_image_bound`.

    Returns ``(S, inverse_norm, bound)``.  The norms of ``L`` and
    ``L^-1`` enter through their ascent values.
    """
    S = unitize(L)
    inv_norm = op_norm(L(L.domain.identity()).inv())
    bound = unit_image_bound(cb_norm(L, restarts, seed).value,
                             cb_norm(L.inverse(), restarts, seed + 1).value)
    if inv_norm > bound + tol:
        raise BoundViolation(f"||L(1)^-1|| = {inv_norm:.12g} exceeds {bound:.12g}")
    return S, inv_norm, bound


def symmetrize(S: LinMap) -> LinMap:
    """``(S + S*) / 2`` where ``S*`` is :func:`star_map`; the result commutes with ``*``."""
    return LinMap(S.domain, S.codomain, 0.5 * (S.matrix + star_map(S).matrix))


def _sqrt_plus(x: float) -> float:
    return math.sqrt(max(x, 0.0))


def defmult_bounds(norm_T: float, mu_T: float):
    """The right-hand sides ``(multiplicative, selfadjoint)`` of the defect estimates."""
    core = 2.0 * _sqrt_plus((norm_T + mu_T / SQRT2) ** 2 - 1.0)
    return core + mu_T * (1.0 + norm_T), core + 2.0 * mu_T


@dataclass
class DefectReport:
    cb_T: NormEstimate
    cb_Tinv: NormEstimate
    mu: float
    mult_defect: NormEstimate
    sa_defect: NormEstimate
    bound_mult: float
    bound_sa: float
    satisfied_mult: bool
    satisfied_sa: bool
    unital_residual: float = 0.0

    @property
    def satisfied(self) -> bool:
        return self.satisfied_mult and self.satisfied_sa

    FIELDS = ("cb_T", "cb_Tinv", "mu", "mult_defect", "bound_mult", "sa_defect", "bound_sa",
              "satisfied_mult", "satisfied_sa")

    def row(self) -> dict:
        return {"cb_T": self.cb_T.value, "cb_Tinv": self.cb_Tinv.value, "mu": self.mu,
                "mult_defect": self.mult_defect.lower, "bound_mult": self.bound_mult,
                "sa_defect": self.sa_defect.lower, "bound_sa": self.bound_sa,
                "satisfied_mult": self.satisfied_mult, "satisfied_sa": self.satisfied_sa}

    def csv_row(self) -> str:
        buf = io.StringIO()
        csv.DictWriter(buf, fieldnames=self.FIELDS, lineterminator="\n").writerow(self.row())
        return buf.getvalue()

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.FIELDS) + "\n"

    def to_dict(self) -> dict:
        return {"mu": self.mu, "bound_mult": self.bound_mult, "bound_sa": self.bound_sa,
                "satisfied_mult": self.satisfied_mult, "satisfied_sa": self.satisfied_sa,
                "unital_residual": self.unital_residual,
                "cb_T": self.cb_T.to_dict(), "cb_Tinv": self.cb_Tinv.to_dict(),
                "mult_defect": self.mult_defect.to_dict(), "sa_defect": self.sa_defect.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def verify_defmult(T: LinMap, restarts: int = 8, seed: int = 0, level: Optional[int] = None,
                   tol: float = BOUND_TOL, unital_tol: float = 1e-9,
                   max_iter: int = 500) -> DefectReport:
    """Estimate both defects of a unital ``T`` and compare with their bounds.

    Defect norms are ascent lower bounds, so a failed flag is a genuine
    counterexample to the inequality (up to ``tol``), not an artefact of
    the estimator.  ``level`` defaults to the largest codomain block.
    """
    one = T.domain.identity()
    unital_res = op_norm(T(one) - T.codomain.identity())
    if unital_res > unital_tol:
        raise HypothesisNotMet(f"T is not unital (||T(1) - 1|| = {unital_res:.3g})", value=unital_res)
    est_T = cb_norm(T, restarts, seed, max_iter=max_iter)
    est_Ti = cb_norm(T.inverse(), restarts, seed + 1, max_iter=max_iter)
    m = mu_from_norms(est_T.value, est_Ti.value)
    k = level or T.codomain.max_block
    d_mult = bilinear_h_norm(mult_defect(T), k, restarts=restarts, seed=seed + 2, max_iter=max_iter)
    d_sa = cb_norm(T - star_map(T), restarts, seed + 3, max_iter=max_iter)
    b_mult, b_sa = defmult_bounds(est_T.value, m)
    return DefectReport(cb_T=est_T, cb_Tinv=est_Ti, mu=m, mult_defect=d_mult, sa_defect=d_sa,
                        bound_mult=b_mult, bound_sa=b_sa,
                        satisfied_mult=d_mult.lower <= b_mult + tol,
                        satisfied_sa=d_sa.lower <= b_sa + tol,
                        unital_residual=unital_res)


def iterated_defect(S: LinMap, length: int, defect_norm: Optional[float] = None,
                    norm_S: Optional[float] = None, restarts: int = 8, seed: int = 0):
    """The ``length``-linear defect ``S(x1...xl) - S(x1)...S(xl)`` and its chained bound.

    Returns ``(evaluate, bound)`` with
    ``bound = ||S^v||_cb * sum_{k=0}^{l-2} ||S||_cb^k``.  Missing norms
    are filled in from the ascent estimators.
    """
    if int(length) != length or length < 2:
        raise ValueError(f"defect length must be an integer >= 2, got {length!r}")
    length = int(length)
    if defect_norm is None:
        defect_norm = bilinear_h_norm(mult_defect(S), S.codomain.max_block,
                                      restarts=restarts, seed=seed).value
    if norm_S is None:
        norm_S = cb_norm(S, restarts, seed + 1).value
    bound = defect_norm * sum(norm_S ** k for k in range(length - 1))

    def evaluate(*xs: AlgElement) -> AlgElement:
        if len(xs) != length:
            raise ValueError(f"expected {length} arguments, got {len(xs)}")
        prod = xs[0]
        img = S(xs[0])
        for x in xs[1:]:
            prod = prod @ x
            img = img @ S(x)
        return S(prod) - img

    return evaluate, bound


def random_near_isomorphism(algebra: BlockAlgebra, eps: float, seed=None):
    """``L = (id + eps G) o pi`` with ``pi`` a random *-automorphism and ``||G|| = 1``.

    Returns ``(L, pi)``.  ``G`` is complex Gaussian normalised in the
    coordinate operator norm.
    """
    from .opspace import random_automorphism, random_linmap

    rng = np.random.default_rng(seed)
    pi = random_automorphism(algebra, rng)
    G = random_linmap(algebra, algebra, rng)
    return (LinMap.identity(algebra) + eps * G) @ pi, pi


def check_iterated_defect(S: LinMap, length: int, samples: int = 500, seed: int = 0,
                          evaluate: Optional[Callable] = None, bound: Optional[float] = None) -> float:
    """Largest ``||S^{v l}(x_1..x_l)|| / prod ||x_i||`` over random samples, minus the bound."""
    from .matcore import random_element

    if evaluate is None or bound is None:
        evaluate, bound = iterated_defect(S, length, seed=seed)
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(samples):
        xs = [random_element(S.domain, rng) for _ in range(length)]
        scale = math.prod(op_norm(x) for x in xs)
        worst = max(worst, op_norm(evaluate(*xs)) / scale - bound)
    return worst
