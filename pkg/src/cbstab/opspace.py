"""Linear and bilinear maps between block algebras, and their amplified norms.

A :class:`LinMap` ``T: A -> B`` is the ``dB x dA`` complex matrix of ``T``
in the matrix-unit bases; a :class:`BilMap` carries a ``(dB, dA, dA)``
tensor.  Completely bounded norms are estimated from below by alternating
ascent over the unit ball of ``M_k(A)``: every reported ``lower`` is the
norm of the image of a stored witness, so it is a genuine lower bound.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import NotInvertible, StructuralError
from .matcore import (
    AlgElement,
    BlockAlgebra,
    amplified_identity,
    amplified_norm_of,
    op_norm,
    random_amplified_unitary,
    random_unitary,
)

DEFAULT_RESTARTS = 32
DEFAULT_MAX_ITER = 500
STALL_TOL = 1e-10
WITNESS_TOL = 1e-9


def encode_complex(a: np.ndarray):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(lst) -> np.ndarray:
    arr = np.asarray(lst, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


class LinMap:
    """Linear map ``domain -> codomain`` in coordinates."""

    def __init__(self, domain: BlockAlgebra, codomain: BlockAlgebra, matrix):
        matrix = np.array(matrix, dtype=complex)
        if matrix.shape != (codomain.coord_dim, domain.coord_dim):
            raise StructuralError(
                f"matrix shape {matrix.shape} does not fit {domain.dims} -> {codomain.dims}")
        if not np.all(np.isfinite(matrix)):
            raise StructuralError("map has non-finite entries")
        matrix.setflags(write=False)
        self.domain = domain
        self.codomain = codomain
        self.matrix = matrix

    @classmethod
    def identity(cls, algebra: BlockAlgebra) -> "LinMap":
        return cls(algebra, algebra, np.eye(algebra.coord_dim))

    @classmethod
    def from_function(cls, domain, codomain, f: Callable[[AlgElement], AlgElement]) -> "LinMap":
        cols = [f(domain.basis(t)).coords for t in range(domain.coord_dim)]
        return cls(domain, codomain, np.stack(cols, axis=1))

    def __call__(self, x: AlgElement) -> AlgElement:
        if x.algebra.dims != self.domain.dims:
            raise StructuralError(f"map expects {self.domain.dims}, got {x.algebra.dims}")
        return self.codomain.from_coords(self.matrix @ x.coords)

    def __matmul__(self, other: "LinMap") -> "LinMap":
        """Composition ``self o other``."""
        if not isinstance(other, LinMap):
            return NotImplemented
        if other.codomain.dims != self.domain.dims:
            raise StructuralError("composition dimensions do not agree")
        return LinMap(other.domain, self.codomain, self.matrix @ other.matrix)

    def _same_shape(self, other):
        if (self.domain.dims, self.codomain.dims) != (other.domain.dims, other.codomain.dims):
            raise StructuralError("maps act between different algebras")

    def __add__(self, other):
        self._same_shape(other)
        return LinMap(self.domain, self.codomain, self.matrix + other.matrix)

    def __sub__(self, other):
        self._same_shape(other)
        return LinMap(self.domain, self.codomain, self.matrix - other.matrix)

    def __neg__(self):
        return LinMap(self.domain, self.codomain, -self.matrix)

    def __mul__(self, c):
        return LinMap(self.domain, self.codomain, c * self.matrix)

    __rmul__ = __mul__

    def inverse(self) -> "LinMap":
        if self.domain.coord_dim != self.codomain.coord_dim:
            raise NotInvertible("map between spaces of different dimension")
        s = np.linalg.svd(self.matrix, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise NotInvertible(f"map is numerically singular (sigma_min/sigma_max = {s[-1] / s[0]:.2e})")
        return LinMap(self.codomain, self.domain, np.linalg.inv(self.matrix))

    def to_dict(self) -> dict:
        return {"domain": list(self.domain.dims), "codomain": list(self.codomain.dims),
                "matrix": encode_complex(self.matrix)}

    @classmethod
    def from_dict(cls, d) -> "LinMap":
        return cls(BlockAlgebra(tuple(d["domain"])), BlockAlgebra(tuple(d["codomain"])),
                   decode_complex(d["matrix"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s) -> "LinMap":
        return cls.from_dict(json.loads(s))

    def __repr__(self):
        return f"LinMap({self.domain.dims} -> {self.codomain.dims})"


def multiplication_tensor(algebra: BlockAlgebra) -> np.ndarray:
    """Structure constants of the native product: ``e_t e_u = sum_s M[s,t,u] e_s``."""
    d = algebra.coord_dim
    M = np.zeros((d, d, d))
    for o, n in zip(algebra.offsets, algebra.dims):
        for r in range(n):
            for c in range(n):
                for c2 in range(n):
                    M[o + r * n + c2, o + r * n + c, o + c * n + c2] = 1.0
    return M


class BilMap:
    """Bilinear map ``A x A -> B`` given by a ``(dB, dA, dA)`` tensor."""

    def __init__(self, domain: BlockAlgebra, codomain: BlockAlgebra, tensor):
        tensor = np.array(tensor, dtype=complex)
        dA, dB = domain.coord_dim, codomain.coord_dim
        if tensor.shape != (dB, dA, dA):
            raise StructuralError(f"tensor shape {tensor.shape}, expected {(dB, dA, dA)}")
        if not np.all(np.isfinite(tensor)):
            raise StructuralError("bilinear map has non-finite entries")
        tensor.setflags(write=False)
        self.domain = domain
        self.codomain = codomain
        self.tensor = tensor

    @classmethod
    def multiplication(cls, algebra: BlockAlgebra) -> "BilMap":
        return cls(algebra, algebra, multiplication_tensor(algebra))

    @classmethod
    def from_function(cls, domain, codomain, f) -> "BilMap":
        d = domain.coord_dim
        T = np.empty((codomain.coord_dim, d, d), dtype=complex)
        for t in range(d):
            et = domain.basis(t)
            for u in range(d):
                T[:, t, u] = f(et, domain.basis(u)).coords
        return cls(domain, codomain, T)

    def __call__(self, x: AlgElement, y: AlgElement) -> AlgElement:
        for z in (x, y):
            if z.algebra.dims != self.domain.dims:
                raise StructuralError(f"bilinear map expects {self.domain.dims}")
        v = np.einsum("stu,t,u->s", self.tensor, x.coords, y.coords)
        return self.codomain.from_coords(v)

    def _same_shape(self, other):
        if (self.domain.dims, self.codomain.dims) != (other.domain.dims, other.codomain.dims):
            raise StructuralError("bilinear maps act between different algebras")

    def __add__(self, other):
        self._same_shape(other)
        return BilMap(self.domain, self.codomain, self.tensor + other.tensor)

    def __sub__(self, other):
        self._same_shape(other)
        return BilMap(self.domain, self.codomain, self.tensor - other.tensor)

    def __mul__(self, c):
        return BilMap(self.domain, self.codomain, c * self.tensor)

    __rmul__ = __mul__

    def coord_norm(self) -> float:
        """Spectral norm of the tensor viewed as a ``dB x dA^2`` matrix."""
        return float(np.linalg.norm(self.tensor.reshape(self.tensor.shape[0], -1), 2))

    def to_dict(self) -> dict:
        return {"domain": list(self.domain.dims), "codomain": list(self.codomain.dims),
                "tensor": encode_complex(self.tensor)}

    @classmethod
    def from_dict(cls, d) -> "BilMap":
        return cls(BlockAlgebra(tuple(d["domain"])), BlockAlgebra(tuple(d["codomain"])),
                   decode_complex(d["tensor"]))


# ---------------------------------------------------------------------------
# map constructors

def transpose_map(algebra: BlockAlgebra) -> LinMap:
    P = np.eye(algebra.coord_dim)[algebra.star_perm]
    return LinMap(algebra, algebra, P)


def conjugation_map(u: AlgElement) -> LinMap:
    """The inner automorphism ``x -> u x u*``."""
    return LinMap.from_function(u.algebra, u.algebra, lambda x: u @ x @ u.H)


def block_permutation_map(algebra: BlockAlgebra, perm: Sequence[int]) -> LinMap:
    """Move block ``perm[i]`` of the input to position ``i`` (equal sizes only)."""
    perm = list(perm)
    if sorted(perm) != list(range(len(algebra.dims))):
        raise StructuralError("not a permutation of the blocks")
    if any(algebra.dims[p] != algebra.dims[i] for i, p in enumerate(perm)):
        raise StructuralError("can only permute blocks of equal size")
    return LinMap.from_function(algebra, algebra,
                                lambda x: AlgElement(algebra, [x.blocks[p] for p in perm]))


def random_automorphism(algebra: BlockAlgebra, seed=None) -> LinMap:
    """A random *-automorphism: unitary conjugation composed with a block shuffle."""
    rng = np.random.default_rng(seed)
    perm = list(range(len(algebra.dims)))
    for n in set(algebra.dims):
        idx = [i for i, m in enumerate(algebra.dims) if m == n]
        shuffled = list(rng.permutation(idx))
        for i, j in zip(idx, shuffled):
            perm[i] = int(j)
    u = random_unitary(algebra, rng)
    return conjugation_map(u) @ block_permutation_map(algebra, perm)


def random_linmap(domain: BlockAlgebra, codomain: BlockAlgebra, seed=None,
                  scale: float = 1.0) -> LinMap:
    """Complex Gaussian map rescaled so its coordinate operator norm is ``scale``."""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((codomain.coord_dim, domain.coord_dim)) \
        + 1j * rng.standard_normal((codomain.coord_dim, domain.coord_dim))
    return LinMap(domain, codomain, G * (scale / np.linalg.norm(G, 2)))


# ---------------------------------------------------------------------------
# norm estimation

@dataclass
class NormEstimate:
    lower: float
    value: float
    level: int
    restarts: int
    converged: bool
    witness: tuple
    iterations: int = 0
    history: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "value": self.value, "level": self.level,
                "restarts": self.restarts, "converged": self.converged,
                "iterations": self.iterations,
                "history": {str(k): v for k, v in self.history.items()},
                "witness": [encode_complex(w) for w in self.witness]}

    @classmethod
    def from_dict(cls, d) -> "NormEstimate":
        return cls(lower=d["lower"], value=d["value"], level=d["level"], restarts=d["restarts"],
                   converged=d["converged"], iterations=d.get("iterations", 0),
                   history={int(k): v for k, v in d.get("history", {}).items()},
                   witness=tuple(decode_complex(w) for w in d["witness"]))


def _normalize(X, algebra):
    return X / max(1.0, amplified_norm_of(X, algebra))


def linear_amplified_value(T: LinMap, X: np.ndarray) -> float:
    """``||(id (x) T)(X)||`` after shrinking ``X`` into the unit ball."""
    X = _normalize(X, T.domain)
    return amplified_norm_of(X @ T.matrix.T, T.codomain)


def bilinear_amplified_value(B: BilMap, X: np.ndarray, Y: np.ndarray) -> float:
    X = _normalize(X, B.domain)
    Y = _normalize(Y, B.domain)
    Z = np.einsum("stu,apt,pbu->abs", B.tensor, X, Y)
    return amplified_norm_of(Z, B.codomain)


def verify_witness(f, est: NormEstimate) -> float:
    """Re-evaluate a stored witness; returns ``|recomputed - est.lower|``."""
    if isinstance(f, BilMap):
        got = bilinear_amplified_value(f, *est.witness)
    else:
        got = linear_amplified_value(f, est.witness[0])
    return abs(got - est.lower)


def _check_level(k):
    if int(k) != k or k < 1:
        raise ValueError(f"amplification level must be a positive integer, got {k!r}")
    return int(k)


def amplified_norm(T: LinMap, k: int, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                   max_iter: int = DEFAULT_MAX_ITER, tol: float = STALL_TOL,
                   starts: Sequence[np.ndarray] = (), backend: Optional[str] = None) -> NormEstimate:
    """Estimate ``||id_{M_k} (x) T||`` from below.

    Restart 0 starts at the identity of ``M_k(A)``, the others at random
    unitaries drawn from ``default_rng([seed, i])``; ``starts`` adds extra
    initial points (e.g. a padded lower-level witness).
    """
    k = _check_level(k)
    A, B = T.domain, T.codomain
    inits = [np.asarray(s, dtype=complex) for s in starts]
    for i in range(restarts):
        if i == 0:
            inits.append(amplified_identity(A, k))
        else:
            inits.append(random_amplified_unitary(A, k, np.random.default_rng([seed, i])))
    best = None
    total_it = 0
    for X0 in inits:
        X, val, it, conv = _kernels.linear_ascent(T.matrix, A.offsets, A.dims, B.offsets, B.dims,
                                                  X0, max_iter, tol, backend=backend)
        total_it += it
        if best is None or val > best[1]:
            best = (X, val, conv)
    X, val, conv = best
    X = _normalize(X, A)
    lower = linear_amplified_value(T, X)
    return NormEstimate(lower=lower, value=max(val, lower), level=k, restarts=len(inits),
                        converged=bool(conv), witness=(X,), iterations=total_it)


def _pad(X: np.ndarray, k: int) -> np.ndarray:
    k0, r0, d = X.shape
    out = np.zeros((k, k, d), dtype=complex)
    out[:k0, :r0] = X
    return out


def cb_norm(T: LinMap, restarts: int = DEFAULT_RESTARTS, seed: int = 0, **kw) -> NormEstimate:
    """Completely bounded norm, computed at level ``max block size of the codomain``.

    Levels ``1..k`` are visited in order and each level is warm-started
    from the padded witness of the previous one, so the values are
    monotone in the level by construction.
    """
    k = T.codomain.max_block
    prev = None
    history = {}
    for level in range(1, k + 1):
        starts = () if prev is None else (_pad(prev.witness[0], level),)
        est = amplified_norm(T, level, restarts=restarts, seed=seed + 7919 * level,
                             starts=starts, **kw)
        if prev is not None and est.value < prev.value - WITNESS_TOL:
            raise AssertionError(f"level {level} estimate {est.value} below level {level - 1} "
                                 f"estimate {prev.value}")
        history[level] = est.value
        prev = est
    prev.history = history
    return prev


def bilinear_h_norm(B: BilMap, k: int, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                    max_iter: int = DEFAULT_MAX_ITER, tol: float = STALL_TOL,
                    backend: Optional[str] = None) -> NormEstimate:
    """Lower estimate of the cb-norm of ``B`` on the Haagerup tensor product at level ``k``.

    Maximises ``||[sum_p B(x_ip, y_pj)]_ij||`` over contractions ``X, Y`` in
    ``M_k(A)`` by alternating ascent in ``X`` and ``Y``.
    """
    k = _check_level(k)
    A, C = B.domain, B.codomain
    Bf = B.tensor.reshape(C.coord_dim, -1)
    best = None
    total_it = 0
    for i in range(restarts):
        if i == 0:
            X0 = Y0 = amplified_identity(A, k)
        else:
            rng = np.random.default_rng([seed, i])
            X0 = random_amplified_unitary(A, k, rng)
            Y0 = random_amplified_unitary(A, k, rng)
        X, Y, val, it, conv = _kernels.bilinear_ascent(Bf, A.offsets, A.dims, C.offsets, C.dims,
                                                       X0, Y0, max_iter, tol, backend=backend)
        total_it += it
        if best is None or val > best[2]:
            best = (X, Y, val, conv)
    X, Y, val, conv = best
    X, Y = _normalize(X, A), _normalize(Y, A)
    lower = bilinear_amplified_value(B, X, Y)
    return NormEstimate(lower=lower, value=max(val, lower), level=k, restarts=restarts,
                        converged=bool(conv), witness=(X, Y), iterations=total_it)


def cb_upper_bound(T: LinMap) -> float:
    """Crude but rigorous bound ``||T||_cb <= sum_t ||T(e_t)||``.

    Each coordinate functional is a compression ``x -> <x eta, xi>`` and
    hence completely contractive.
    """
    return float(sum(op_norm(T.codomain.from_coords(T.matrix[:, t]))
                     for t in range(T.domain.coord_dim)))


def bilinear_upper_bound(B: BilMap) -> float:
    """``sum_{t,u} ||B(e_t, e_u)||``, an upper bound for the Haagerup cb-norm."""
    C = B.codomain
    d = B.domain.coord_dim
    total = 0.0
    for t in range(d):
        for u in range(d):
            col = B.tensor[:, t, u]
            if np.any(col):
                total += op_norm(C.from_coords(col))
    return float(total)


def cb_distance_upper(T: LinMap, restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> float:
    """``||T||_cb ||T^-1||_cb`` from the estimates; bounds ``d_cb(A, B)`` from above.

    The two factors are ascent estimates, so the product is itself an
    estimate of the quantity whose exact value dominates ``d_cb``.
    """
    Tinv = T.inverse()
    return cb_norm(T, restarts, seed).value * cb_norm(Tinv, restarts, seed + 1).value


# ---------------------------------------------------------------------------
# Kadison-Kastler distance at a fixed representation

def _as_matrices(rep):
    mats = []
    for a in rep:
        if isinstance(a, AlgElement):
            if len(a.blocks) != 1:
                raise StructuralError("represented algebras must live in a single M_N")
            a = a.blocks[0]
        mats.append(np.asarray(a, dtype=complex))
    if not mats:
        raise StructuralError("empty basis")
    N = mats[0].shape
    if any(m.shape != N for m in mats) or N[0] != N[1]:
        raise StructuralError("basis matrices must share one square ambient M_N")
    return np.stack(mats)


def _orthonormal_span(mats):
    """Frobenius-orthonormal basis (as matrices) of the span of ``mats``."""
    V = mats.reshape(len(mats), -1).T
    u, s, _ = np.linalg.svd(V, full_matrices=False)
    rank = int((s > 1e-12 * s[0]).sum())
    N = mats.shape[1]
    return u[:, :rank].T.reshape(rank, N, N)


def _frobenius_project(a, onb):
    coeff = np.einsum("kij,ij->k", onb.conj(), a)
    return np.einsum("k,kij->ij", coeff, onb)


def _nearest_in_ball(a, onb):
    """Feasible points of ``Ball(span onb)`` close to ``a``; returns the best distance."""
    import cvxpy as cp

    cands = []
    p = _frobenius_project(a, onb)
    cands.append(p / max(1.0, np.linalg.norm(p, 2)))

    m, N, _ = onb.shape
    c_re = cp.Variable(m)
    c_im = cp.Variable(m)
    re = sum(c_re[j] * onb[j].real - c_im[j] * onb[j].imag for j in range(m))
    im = sum(c_re[j] * onb[j].imag + c_im[j] * onb[j].real for j in range(m))

    def embed(r, i):
        return cp.bmat([[r, -i], [i, r]])

    prob = cp.Problem(cp.Minimize(cp.sigma_max(embed(a.real - re, a.imag - im))),
                      [cp.sigma_max(embed(re, im)) <= 1])
    try:
        prob.solve(solver=cp.CLARABEL)
        if c_re.value is not None:
            b = np.einsum("k,kij->ij", c_re.value + 1j * c_im.value, onb)
            cands.append(b / max(1.0, np.linalg.norm(b, 2)))
    except cp.SolverError:
        pass
    return min(float(np.linalg.norm(a - b, 2)) for b in cands)


def _distance_lower(a, onb):
    """Certified lower bound on ``dist(a, span onb)`` by a trace-class functional vanishing on the span."""
    r = a - _frobenius_project(a, onb)
    if np.linalg.norm(r) < 1e-14:
        return 0.0
    u, s, vh = np.linalg.svd(r)
    best = 0.0
    for W0 in (np.outer(u[:, 0], vh[0]), u @ vh):
        W = W0 - _frobenius_project(W0, onb)
        tn = float(np.linalg.svd(W, compute_uv=False).sum())
        if tn > 0:
            best = max(best, float(np.real(np.vdot(W, a))) / tn)
    return max(best, 0.0)


def kk_distance_estimate(A_rep, B_rep, samples: int = 32, seed: int = 0):
    """Hausdorff distance between the unit balls of two subspaces of ``M_N``.

    Returns ``(lower, upper)``.  ``lower`` is certified: it is a proven
    lower bound on ``d(a, Ball(B))`` for a sampled ``a``.  ``upper`` is the
    largest distance, over the sampled unit-ball elements, to a feasible
    point of the other ball; it is exact for each sample up to solver
    accuracy but only covers the samples.
    """
    SA, SB = _as_matrices(A_rep), _as_matrices(B_rep)
    if SA.shape[1:] != SB.shape[1:]:
        raise StructuralError(f"ambient mismatch: M_{SA.shape[1]} vs M_{SB.shape[1]}")
    oA, oB = _orthonormal_span(SA), _orthonormal_span(SB)
    rng = np.random.default_rng(seed)
    lower = upper = 0.0
    for src, dst in ((oA, oB), (oB, oA)):
        pts = [m / np.linalg.norm(m, 2) for m in src]
        for _ in range(samples):
            c = rng.standard_normal(len(src)) + 1j * rng.standard_normal(len(src))
            a = np.einsum("k,kij->ij", c, src)
            pts.append(a / np.linalg.norm(a, 2))
        for a in pts:
            lower = max(lower, _distance_lower(a, dst))
            upper = max(upper, _nearest_in_ball(a, dst))
    return lower, max(lower, upper)
