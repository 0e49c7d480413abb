"""Rigidity of multiplications on ``(+)_i M_{n_i}`` made constructive.

A perturbed associative multiplication ``m`` is pulled back to the native
one by a Newton iteration on the Hochschild complex: solve
``d1 h = m - m_A`` in the least-squares sense, conjugate ``m`` by
``W = id + h`` and repeat.  The composite of the ``W``'s is an algebra
isomorphism ``(A, m) -> (A, m_A)``.  :func:`recover_isomorphism` chains
this with unitization and symmetrization to turn a near-isometric map
into a genuine *-isomorphism.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np

from .defect import star_map, symmetrize, unitize
from .errors import (
    BoundViolation,
    CbstabError,
    HypothesisNotMet,
    NoConvergence,
    SingularStep,
)
from .matcore import (
    AlgElement,
    BlockAlgebra,
    op_norm,
    random_contraction,
    random_element,
    random_unitary,
)
from .opspace import (
    BilMap,
    LinMap,
    bilinear_h_norm,
    cb_distance_upper,
    cb_upper_bound,
    multiplication_tensor,
)

ASSOC_TOL = 1e-8
ASSOC_SAMPLES = 50
NEWTON_TOL = 1e-12
MAX_NEWTON_ITER = 20
SINGULAR_COND = 1e12
PINV_RCOND = 1e-12
HYPOTHESIS_RADIUS = 1.0 / 11.0
# ratios eps_{i+1} / eps_i^2 are meaningless once eps_{i+1} hits rounding noise
RATIO_FLOOR = 1e-13


def _coord_norm(tensor: np.ndarray) -> float:
    """Operator norm of a multilinear tensor flattened to ``d x d^k``."""
    return float(np.linalg.norm(tensor.reshape(tensor.shape[0], -1), 2))


def _random_triples(algebra: BlockAlgebra, count: int, seed: int):
    rng = np.random.default_rng(seed)
    return [tuple(random_contraction(algebra, rng) for _ in range(3)) for _ in range(count)]


class Multiplication:
    """An associative bilinear product on the coordinate space of ``algebra``."""

    def __init__(self, algebra: BlockAlgebra, bil: BilMap, assoc_tol: float = ASSOC_TOL,
                 check: bool = True):
        if bil.domain.dims != algebra.dims or bil.codomain.dims != algebra.dims:
            raise CbstabError("multiplication must map A x A -> A")
        self.algebra = algebra
        self.bil = bil
        self.assoc_tol = assoc_tol
        if check:
            res = self.assoc_residual()
            if res >= assoc_tol:
                raise HypothesisNotMet(f"product is not associative (residual {res:.3g})", value=res)

    @classmethod
    def native(cls, algebra: BlockAlgebra) -> "Multiplication":
        return cls(algebra, BilMap.multiplication(algebra), check=False)

    def __call__(self, x: AlgElement, y: AlgElement) -> AlgElement:
        return self.bil(x, y)

    @property
    def tensor(self) -> np.ndarray:
        return self.bil.tensor

    def assoc_residual(self, samples: int = ASSOC_SAMPLES, seed: int = 0) -> float:
        """``max ||m(m(x,y),z) - m(x,m(y,z))||`` over fixed seeded contraction triples."""
        return max(op_norm(self(self(x, y), z) - self(x, self(y, z)))
                   for x, y, z in _random_triples(self.algebra, samples, seed))

    def defect_tensor(self) -> np.ndarray:
        return self.bil.tensor - multiplication_tensor(self.algebra)

    def distance(self) -> float:
        """Coordinate operator norm of ``m - m_A``; the quantity driving the iteration."""
        return _coord_norm(self.defect_tensor())

    def distance_h(self, restarts: int = 4, seed: int = 0, level: Optional[int] = None):
        """Haagerup cb-norm estimate of ``m - m_A``."""
        D = BilMap(self.algebra, self.algebra, self.defect_tensor())
        return bilinear_h_norm(D, level or self.algebra.max_block, restarts=restarts, seed=seed)

    def star_residual(self, samples: int = ASSOC_SAMPLES, seed: int = 0) -> float:
        """``max ||m(x*, y*) - m(y, x)*||`` over seeded pairs."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(samples):
            x, y = random_contraction(self.algebra, rng), random_contraction(self.algebra, rng)
            worst = max(worst, op_norm(self(x.H, y.H) - self(y, x).H))
        return worst


class TriMap:
    """Trilinear map ``A x A x A -> A`` stored as a ``(d, d, d, d)`` tensor."""

    def __init__(self, algebra: BlockAlgebra, tensor: np.ndarray):
        self.algebra = algebra
        self.tensor = np.asarray(tensor, dtype=complex)

    def __call__(self, x, y, z) -> AlgElement:
        v = np.einsum("stuv,t,u,v->s", self.tensor, x.coords, y.coords, z.coords)
        return self.algebra.from_coords(v)

    def coord_norm(self) -> float:
        return _coord_norm(self.tensor)


# ---------------------------------------------------------------------------
# Hochschild complex

def coboundary_1(h: LinMap) -> BilMap:
    """``(x, y) -> x h(y) - h(xy) + h(x) y``."""
    A = h.domain
    if h.codomain.dims != A.dims:
        raise CbstabError("coboundary_1 needs an endomorphism")
    M = multiplication_tensor(A)
    H = h.matrix
    t = (np.einsum("sta,au->stu", M, H)
         - np.einsum("sa,atu->stu", H, M)
         + np.einsum("sau,at->stu", M, H))
    return BilMap(A, A, t)


def coboundary_2(D: BilMap) -> TriMap:
    """``(x, y, z) -> x D(y,z) - D(xy, z) + D(x, yz) - D(x,y) z``."""
    A = D.domain
    M = multiplication_tensor(A)
    B = D.tensor
    t = (np.einsum("sta,auv->stuv", M, B)
         - np.einsum("sav,atu->stuv", B, M)
         + np.einsum("sta,auv->stuv", B, M)
         - np.einsum("sav,atu->stuv", M, B))
    return TriMap(A, t)


@lru_cache(maxsize=16)
def _coboundary_system(dims: tuple):
    """The matrix of ``h -> d1 h`` on coordinates and its min-norm pseudo-inverse."""
    A = BlockAlgebra(dims)
    d = A.coord_dim
    M = multiplication_tensor(A)
    I = np.eye(d)
    # index order (s, t, u | v, w): output tensor entry, input matrix entry h[v, w]
    op = (np.einsum("stv,wu->stuvw", M, I)
          - np.einsum("sv,wtu->stuvw", I, M)
          + np.einsum("svu,wt->stuvw", M, I)).reshape(d ** 3, d * d)
    pinv = np.linalg.pinv(op, rcond=PINV_RCOND)
    op.setflags(write=False)
    pinv.setflags(write=False)
    return op, pinv


def solve_coboundary(D: BilMap):
    """Minimum-norm least-squares ``h`` with ``d1 h ~ D``.

    Returns ``(h, residual)`` where ``residual`` is the Euclidean distance
    from ``D`` to the range of ``d1``.
    """
    A = D.domain
    op, pinv = _coboundary_system(A.dims)
    rhs = D.tensor.reshape(-1)
    h = pinv @ rhs
    residual = float(np.linalg.norm(op @ h - rhs))
    d = A.coord_dim
    return LinMap(A, A, h.reshape(d, d)), residual


def derivation_dimension(algebra: BlockAlgebra) -> int:
    """Dimension of ``ker d1``, i.e. of the space of derivations."""
    op, _ = _coboundary_system(algebra.dims)
    s = np.linalg.svd(op, compute_uv=False)
    return int(op.shape[1] - (s > PINV_RCOND * s[0]).sum())


# ---------------------------------------------------------------------------
# Newton correction

@dataclass
class IterationTrace:
    eps: List[float] = field(default_factory=list)
    ratios: List[Optional[float]] = field(default_factory=list)
    step_norms: List[float] = field(default_factory=list)
    conds: List[float] = field(default_factory=list)
    solve_residuals: List[float] = field(default_factory=list)
    steps: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.step_norms)

    @property
    def max_ratio(self) -> Optional[float]:
        vals = [r for r in self.ratios if r is not None]
        return max(vals) if vals else None

    def to_dict(self) -> dict:
        return {"eps": self.eps, "ratios": self.ratios, "step_norms": self.step_norms,
                "conds": self.conds, "solve_residuals": self.solve_residuals}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def series_csv(self) -> str:
        """``i, eps_i, ratio_i`` rows for plotting."""
        lines = ["i,eps,ratio"]
        for i, e in enumerate(self.eps):
            r = self.ratios[i] if i < len(self.ratios) else None
            lines.append(f"{i},{e!r},{'' if r is None else repr(r)}")
        return "\n".join(lines) + "\n"


def _conjugate(W: np.ndarray, Winv: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """Tensor of ``(x, y) -> W m(W^-1 x, W^-1 y)``."""
    return np.einsum("sv,vab,at,bu->stu", W, tensor, Winv, Winv, optimize=True)


def correct_multiplication(m: Multiplication, tol: float = NEWTON_TOL,
                           max_iter: int = MAX_NEWTON_ITER, check_hypothesis: bool = True,
                           restarts: int = 4, seed: int = 0):
    """Find ``Phi`` with ``Phi(m(x, y)) = Phi(x) Phi(y)``.

    Returns ``(Phi, trace)``.  The hypothesis ``||m - m_A|| <= 1/11`` is
    checked on the Haagerup estimate; the iteration itself is driven by
    the coordinate operator norm of the defect tensor.
    """
    A = m.algebra
    d = A.coord_dim
    native = multiplication_tensor(A)
    if check_hypothesis:
        est = m.distance_h(restarts=restarts, seed=seed)
        if est.value > HYPOTHESIS_RADIUS:
            raise HypothesisNotMet(f"||m - m_A|| estimate {est.value:.4g} exceeds 1/11",
                                   value=est.value)
    cur = np.array(m.tensor)
    Phi = np.eye(d, dtype=complex)
    trace = IterationTrace()
    for it in range(max_iter + 1):
        D = cur - native
        eps = _coord_norm(D)
        if trace.eps:
            prev = trace.eps[-1]
            trace.ratios.append(eps / prev ** 2 if eps > RATIO_FLOOR and prev > 0 else None)
        trace.eps.append(eps)
        if eps < tol:
            return LinMap(A, A, Phi), trace
        if it == max_iter:
            break
        h, res = solve_coboundary(BilMap(A, A, D))
        W = np.eye(d) + h.matrix
        cond = float(np.linalg.cond(W))
        if not cond < SINGULAR_COND:
            raise SingularStep(f"step {it}: id + h has condition number {cond:.3g}")
        Winv = np.linalg.solve(W, np.eye(d))
        cur = _conjugate(W, Winv, cur)
        Phi = W @ Phi
        trace.step_norms.append(float(np.linalg.norm(h.matrix, 2)))
        trace.conds.append(float(np.linalg.cond(Phi)))
        trace.solve_residuals.append(res)
        trace.steps.append(h.matrix)
    err = NoConvergence(f"defect {trace.eps[-1]:.3g} still above {tol:.1g} after {max_iter} steps")
    err.trace = trace
    raise err


def multiplicative_residual(Phi: LinMap, m: Multiplication, samples: int = 100,
                            seed: int = 0) -> float:
    """``max ||Phi(m(x,y)) - Phi(x) Phi(y)||`` over seeded contraction pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x, y = random_contraction(m.algebra, rng), random_contraction(m.algebra, rng)
        worst = max(worst, op_norm(Phi(m(x, y)) - Phi(x) @ Phi(y)))
    return worst


def homomorphism_residual(T: LinMap, samples: int = 100, seed: int = 0) -> float:
    """``max ||T(xy) - T(x)T(y)|| / (||x|| ||y||)`` over seeded pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x, y = random_element(T.domain, rng), random_element(T.domain, rng)
        worst = max(worst, op_norm(T(x @ y) - T(x) @ T(y)) / (op_norm(x) * op_norm(y)))
    return worst


def induced_multiplication(T: LinMap, assoc_tol: float = ASSOC_TOL) -> Multiplication:
    """``m(x, y) = T^-1(T(x) T(y))`` on the domain of ``T``."""
    Tinv = T.inverse()
    MB = multiplication_tensor(T.codomain)
    t = np.einsum("sv,vab,at,bu->stu", Tinv.matrix, MB, T.matrix, T.matrix, optimize=True)
    return Multiplication(T.domain, BilMap(T.domain, T.domain, t), assoc_tol=assoc_tol)


def plant_multiplication(algebra: BlockAlgebra, size: float, seed=None):
    """``m(x, y) = Phi0^-1(Phi0(x) Phi0(y))`` with ``Phi0 = id + G``.

    ``G`` is Gaussian, rescaled so that its rigorous cb upper bound is
    ``size``; hence ``||Phi0 - id||_cb <= size``.  Returns ``(m, Phi0)``.
    """
    rng = np.random.default_rng(seed)
    d = algebra.coord_dim
    G = LinMap(algebra, algebra, rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    G = G * (size / cb_upper_bound(G))
    Phi0 = LinMap.identity(algebra) + G
    return induced_multiplication(Phi0), Phi0


# ---------------------------------------------------------------------------
# recovery pipeline

@dataclass
class RecoveryReport:
    multiplicativity: float
    selfadjointness: float
    unitarity: float
    distance_to_L: float
    cb_excess: float
    distance_bound: float
    unit_inverse_norm: float
    trace: IterationTrace
    stage_times: dict = field(default_factory=dict)

    @property
    def within_bound(self) -> bool:
        return self.distance_to_L <= self.distance_bound

    FIELDS = ("multiplicativity", "selfadjointness", "unitarity", "distance_to_L",
              "cb_excess", "distance_bound", "unit_inverse_norm", "iterations")

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in self.FIELDS if k != "iterations"}
        d["iterations"] = self.trace.iterations
        return d

    def to_dict(self) -> dict:
        d = self.row()
        d["within_bound"] = self.within_bound
        d["trace"] = self.trace.to_dict()
        return d


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except CbstabError as e:
        if e.stage is None:
            e.stage = name
        raise


def unitary_residual(pi: LinMap, samples: int = 20, seed: int = 0) -> float:
    """``max(||pi(u)* pi(u) - 1||, ||pi(u) pi(u)* - 1||)`` over Haar unitaries."""
    rng = np.random.default_rng(seed)
    one = pi.codomain.identity()
    worst = 0.0
    for _ in range(samples):
        v = pi(random_unitary(pi.domain, rng))
        worst = max(worst, op_norm(v.H @ v - one), op_norm(v @ v.H - one))
    return worst


def recover_isomorphism(L: LinMap, restarts: int = 8, seed: int = 0,
                        tol: float = NEWTON_TOL, samples: int = 100):
    """Turn a near-isometric ``L`` into a *-isomorphism ``pi``.

    Pipeline: ``S = unitize(L)``, ``T = symmetrize(S)``,
    ``m = T^-1(T(.) T(.))``, ``Phi`` from :func:`correct_multiplication`,
    ``pi = T o Phi^-1``.  Stage failures are re-raised with ``stage`` set.

    The report's selfadjointness and distance entries are the rigorous
    upper bounds ``sum_t ||.(e_t)||``; the cb excess of ``L`` is the
    ascent estimate of ``||L||_cb ||L^-1||_cb - 1``.
    """
    import time

    times = {}
    t0 = time.perf_counter()
    excess = _stage("cb-distance", cb_distance_upper, L, restarts, seed) - 1.0
    times["cb-distance"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    S = _stage("unitize", unitize, L)
    unit_inv = op_norm(L(L.domain.identity()).inv())
    T = _stage("symmetrize", symmetrize, S)
    m = _stage("induce", induced_multiplication, T)
    Phi, trace = _stage("correct", correct_multiplication, m, tol=tol, restarts=restarts,
                        seed=seed)
    pi = _stage("compose", lambda: T @ Phi.inverse())
    times["pipeline"] = time.perf_counter() - t0

    report = RecoveryReport(
        multiplicativity=homomorphism_residual(pi, samples, seed),
        selfadjointness=cb_upper_bound(pi - star_map(pi)),
        unitarity=unitary_residual(pi, seed=seed),
        distance_to_L=cb_upper_bound(pi - L),
        cb_excess=excess,
        distance_bound=1808.0 * math.sqrt(max(excess, 0.0)),
        unit_inverse_norm=unit_inv,
        trace=trace,
        stage_times=times,
    )
    return pi, report


# ---------------------------------------------------------------------------
# stability of surjectivity

def _as_matrix(T) -> np.ndarray:
    return np.asarray(T.matrix if isinstance(T, LinMap) else T, dtype=complex)


def quotient_inverse_norm(T) -> float:
    """Norm of the inverse of the induced map ``X / ker T -> Y`` (Euclidean norms).

    Infinite when ``T`` is not surjective.
    """
    M = _as_matrix(T)
    s = np.linalg.svd(M, compute_uv=False)
    rows = M.shape[0]
    if len(s) < rows or s[rows - 1] <= 1e-14 * max(s[0], 1e-300):
        return math.inf
    return float(1.0 / s[rows - 1])


def stability_surjectivity(T, S, K: float, distance: Optional[float] = None,
                           tol: float = 1e-6) -> float:
    """Bound ``K / (1 - K ||T - S||)`` for the quotient inverse of a perturbed surjection.

    ``K`` must dominate the quotient inverse norm of ``T``.  The measured
    quotient inverse norm of ``S`` is checked against the bound; a
    failure raises :class:`BoundViolation`.
    """
    A, B = _as_matrix(T), _as_matrix(S)
    if A.shape != B.shape:
        raise CbstabError(f"maps have shapes {A.shape} and {B.shape}")
    qT = quotient_inverse_norm(A)
    if qT > K * (1 + 1e-12):
        raise HypothesisNotMet(f"quotient inverse norm of T is {qT:.6g} > K = {K:.6g}", value=qT)
    if distance is None:
        distance = float(np.linalg.norm(A - B, 2))
    if K * distance >= 1.0:
        raise HypothesisNotMet(f"||T - S|| = {distance:.6g} is not below 1/K", value=distance)
    bound = K / (1.0 - K * distance)
    measured = quotient_inverse_norm(B)
    if measured > bound + tol:
        raise BoundViolation(f"quotient inverse norm {measured:.12g} exceeds {bound:.12g}")
    return bound
