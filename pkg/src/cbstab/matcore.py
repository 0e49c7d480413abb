"""Finite-dimensional von Neumann algebras ``M_{n_1} + ... + M_{n_r}``.

Elements are kept blockwise; the coordinate vector of an element is the
concatenation of its blocks flattened row-major (the matrix-unit basis).
Amplified elements of ``M_{k,r}(A)`` are stored as complex arrays of shape
``(k, r, coord_dim)`` and converted to honest block matrices with
:func:`assemble`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import NotInvertible, StructuralError

#: smallest singular value must exceed this multiple of ||x||
INVERTIBILITY_RTOL = 1e-10
ALG_TOL = 1e-9


@dataclass(frozen=True)
class BlockAlgebra:
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if not dims or any(n < 1 for n in dims):
            raise StructuralError(f"block sizes must be positive, got {self.dims!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def coord_dim(self) -> int:
        return sum(n * n for n in self.dims)

    @cached_property
    def offsets(self) -> tuple:
        out, o = [], 0
        for n in self.dims:
            out.append(o)
            o += n * n
        return tuple(out)

    @property
    def max_block(self) -> int:
        return max(self.dims)

    @cached_property
    def star_perm(self) -> np.ndarray:
        """Index permutation sending the coordinates of ``x`` to those of ``x^T``."""
        perm = np.empty(self.coord_dim, dtype=np.intp)
        for o, n in zip(self.offsets, self.dims):
            idx = np.arange(n * n).reshape(n, n)
            perm[o:o + n * n] = o + idx.T.reshape(-1)
        return perm

    def amplify(self, k: int) -> "BlockAlgebra":
        """``M_k(A)`` as a block algebra in its own right."""
        return BlockAlgebra(tuple(k * n for n in self.dims))

    def identity(self) -> "AlgElement":
        return AlgElement(self, [np.eye(n, dtype=complex) for n in self.dims])

    def zero(self) -> "AlgElement":
        return AlgElement(self, [np.zeros((n, n), dtype=complex) for n in self.dims])

    def from_coords(self, v) -> "AlgElement":
        v = np.asarray(v, dtype=complex)
        if v.shape != (self.coord_dim,):
            raise StructuralError(f"expected {self.coord_dim} coordinates, got shape {v.shape}")
        return AlgElement(self, [v[o:o + n * n].reshape(n, n)
                                 for o, n in zip(self.offsets, self.dims)])

    def basis(self, t: int) -> "AlgElement":
        """The ``t``-th matrix unit."""
        v = np.zeros(self.coord_dim, dtype=complex)
        v[t] = 1.0
        return self.from_coords(v)

    def element(self, blocks) -> "AlgElement":
        return AlgElement(self, blocks)


class AlgElement:
    """An element of a :class:`BlockAlgebra`; immutable after construction."""

    __slots__ = ("algebra", "blocks")

    def __init__(self, algebra: BlockAlgebra, blocks):
        blocks = [np.array(b, dtype=complex) for b in blocks]
        if len(blocks) != len(algebra.dims):
            raise StructuralError(
                f"{len(blocks)} blocks given for an algebra with {len(algebra.dims)} blocks")
        for b, n in zip(blocks, algebra.dims):
            if b.shape != (n, n):
                raise StructuralError(f"block of shape {b.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(b)):
                raise StructuralError("element has non-finite entries")
            b.setflags(write=False)
        self.algebra = algebra
        self.blocks = tuple(blocks)

    # -- arithmetic ---------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, AlgElement):
            return NotImplemented
        if other.algebra.dims != self.algebra.dims:
            raise StructuralError(f"algebras differ: {self.algebra.dims} vs {other.algebra.dims}")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return AlgElement(self.algebra, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return AlgElement(self.algebra, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __neg__(self):
        return AlgElement(self.algebra, [-a for a in self.blocks])

    def __mul__(self, c):
        if isinstance(c, AlgElement):
            return NotImplemented
        return AlgElement(self.algebra, [c * a for a in self.blocks])

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __matmul__(self, other):
        return mul(self, other)

    @property
    def H(self) -> "AlgElement":
        return AlgElement(self.algebra, [a.conj().T for a in self.blocks])

    adjoint = H

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([b.reshape(-1) for b in self.blocks])

    def norm(self) -> float:
        return op_norm(self)

    def inv(self) -> "AlgElement":
        smin = min_singular_value(self)
        if smin <= INVERTIBILITY_RTOL * max(op_norm(self), np.finfo(float).tiny):
            raise NotInvertible(f"smallest singular value {smin:.3e} is below threshold")
        return AlgElement(self.algebra, [np.linalg.inv(b) for b in self.blocks])

    def is_hermitian(self, tol=ALG_TOL) -> bool:
        return all(np.abs(b - b.conj().T).max() <= tol * max(1.0, np.abs(b).max())
                   for b in self.blocks)

    def __repr__(self):
        return f"AlgElement(dims={self.algebra.dims}, norm={op_norm(self):.6g})"

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dims": list(self.algebra.dims),
            "blocks": [[[float(z.real), float(z.imag)] for z in b.reshape(-1)]
                       for b in self.blocks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlgElement":
        alg = BlockAlgebra(tuple(d["dims"]))
        blocks = []
        for n, flat in zip(alg.dims, d["blocks"]):
            arr = np.asarray(flat, dtype=float)
            if arr.shape != (n * n, 2):
                raise StructuralError(f"block needs {n * n} [re, im] pairs")
            blocks.append((arr[:, 0] + 1j * arr[:, 1]).reshape(n, n))
        if len(blocks) != len(alg.dims):
            raise StructuralError("block count does not match dims")
        return cls(alg, blocks)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "AlgElement":
        return cls.from_dict(json.loads(s))


def save_element(x: AlgElement, path) -> None:
    with open(path, "w") as fh:
        json.dump(x.to_dict(), fh)


def load_element(path) -> AlgElement:
    with open(path) as fh:
        return AlgElement.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# basic operations

def mul(x: AlgElement, y: AlgElement) -> AlgElement:
    if x.algebra.dims != y.algebra.dims:
        raise StructuralError(f"cannot multiply elements of {x.algebra.dims} and {y.algebra.dims}")
    return AlgElement(x.algebra, [a @ b for a, b in zip(x.blocks, y.blocks)])


def op_norm(x: AlgElement) -> float:
    """C*-norm: the largest singular value over all blocks."""
    return max(float(np.linalg.norm(b, 2)) for b in x.blocks)


def min_singular_value(x: AlgElement) -> float:
    return min(float(np.linalg.svd(b, compute_uv=False)[-1]) for b in x.blocks)


def column_norm(x: AlgElement, y: AlgElement) -> float:
    """Norm of the column ``[x; y]``, i.e. ``||x*x + y*y||^(1/2)``."""
    return float(np.sqrt(op_norm(x.H @ x + y.H @ y)))


def row_norm(x: AlgElement, y: AlgElement) -> float:
    """Norm of the row ``[x  y]``, i.e. ``||xx* + yy*||^(1/2)``."""
    return float(np.sqrt(op_norm(x @ x.H + y @ y.H)))


def block2x2(a: AlgElement, b: AlgElement, c: AlgElement, d: AlgElement) -> AlgElement:
    """The element ``[[a, b], [c, d]]`` of ``M_2(A)``."""
    alg = a.algebra
    for z in (b, c, d):
        if z.algebra.dims != alg.dims:
            raise StructuralError("block2x2 entries live in different algebras")
    blocks = [np.block([[p, q], [r, s]])
              for p, q, r, s in zip(a.blocks, b.blocks, c.blocks, d.blocks)]
    return AlgElement(alg.amplify(2), blocks)


# ---------------------------------------------------------------------------
# polar decomposition and spectral calculus

@dataclass(frozen=True)
class PolarResult:
    unitary_part: AlgElement
    positive_part: AlgElement
    distance_to_unitary: float


def polar(x: AlgElement) -> PolarResult:
    """``x = u|x|`` with ``u`` unitary.

    ``distance_to_unitary`` is ``||x - u||`` computed from the singular
    values, which equals ``max(||x|| - 1, 1 - 1/||x^-1||)``.
    """
    scale = op_norm(x)
    us, ps, dist = [], [], 0.0
    for b in x.blocks:
        w, s, vh = np.linalg.svd(b)
        if s[-1] <= INVERTIBILITY_RTOL * max(scale, np.finfo(float).tiny):
            raise NotInvertible(f"polar: smallest singular value {s[-1]:.3e}")
        us.append(w @ vh)
        ps.append((vh.conj().T * s) @ vh)
        dist = max(dist, float(np.abs(s - 1.0).max()))
    return PolarResult(AlgElement(x.algebra, us), AlgElement(x.algebra, ps), dist)


def unitary_distance_formula(x: AlgElement) -> float:
    """Closed form ``max{||x|| - 1, 1 - 1/||x^-1||}`` for invertible ``x``."""
    return max(op_norm(x) - 1.0, 1.0 - min_singular_value(x))


def _random_hermitians(n: int, count: int, rng) -> np.ndarray:
    g = rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))
    h = 0.5 * (g + np.swapaxes(g.conj(), -1, -2))
    return h / np.linalg.norm(h, ord=2, axis=(-2, -1))[:, None, None]


def _cayley(h: np.ndarray) -> np.ndarray:
    """``(1 - ih)(1 + ih)^-1`` for a stack of Hermitian matrices; always unitary."""
    eye = np.eye(h.shape[-1])
    return np.linalg.solve(np.swapaxes(eye + 1j * h, -1, -2), np.swapaxes(eye - 1j * h, -1, -2)).swapaxes(-1, -2)


def unitary_distance_search(x: AlgElement, samples: int = 256, seed=0, rounds: int = 4,
                            batch: int = 32, scales=(1e-1, 1e-2, 1e-3, 1e-4, 1e-6)) -> float:
    """``min_u ||x - u||`` over unitaries by direct search.

    Per block: ``rounds`` of batched random moves ``u -> u C(s h)`` from the
    current best unitary (``C`` the Cayley transform, ``h`` a random unit
    Hermitian, ``s`` running over ``scales``), started at the polar part,
    plus ``samples`` Haar unitaries.  Every candidate is scored directly as
    ``||x - u||``, so the result can undercut a wrong closed form.
    """
    rng = _rng(seed)
    worst = 0.0
    for b in x.blocks:
        n = b.shape[0]
        w, _, vh = np.linalg.svd(b)
        best_u = w @ vh
        best = float(np.linalg.norm(b - best_u, 2))
        if samples:
            us = haar_unitaries(n, samples, rng)
            vals = np.linalg.norm(b[None] - us, ord=2, axis=(-2, -1))
            i = int(vals.argmin())
            if vals[i] < best:
                best, best_u = float(vals[i]), us[i]
        steps = np.repeat(np.asarray(scales, dtype=float), batch)
        for _ in range(rounds):
            us = best_u[None] @ _cayley(steps[:, None, None] * _random_hermitians(n, len(steps), rng))
            vals = np.linalg.norm(b[None] - us, ord=2, axis=(-2, -1))
            i = int(vals.argmin())
            if vals[i] < best:
                best, best_u = float(vals[i]), us[i]
        worst = max(worst, best)
    return worst


def spectral_projection(h: AlgElement, lam: float, tol: float = ALG_TOL) -> AlgElement:
    """``chi_[0, lam](h)`` for Hermitian ``h``."""
    if not h.is_hermitian(tol):
        raise StructuralError("spectral_projection needs a Hermitian element")
    if lam < 0:
        return h.algebra.zero()
    scale = max(1.0, op_norm(h))
    blocks = []
    for b in h.blocks:
        w, v = np.linalg.eigh(0.5 * (b + b.conj().T))
        keep = (w >= -tol * scale) & (w <= lam + tol * scale)
        vk = v[:, keep]
        blocks.append(vk @ vk.conj().T)
    return AlgElement(h.algebra, blocks)


def condition_C_margin(x: AlgElement, alpha: float, y: AlgElement) -> float:
    """Smaller of the two slacks in condition (C); nonnegative iff (C) holds."""
    ny2 = op_norm(y) ** 2
    col = op_norm(x.H @ x + y.H @ y)
    row = op_norm(x @ x.H + y @ y.H)
    return min(col, row) - (alpha + ny2)


def check_condition_C(x: AlgElement, alpha: float, y: AlgElement, tol: float = ALG_TOL) -> bool:
    if op_norm(x) > 1.0 + tol:
        raise ValueError("condition (C) is only meaningful for ||x|| <= 1")
    return condition_C_margin(x, alpha, y) >= -tol


def condition_C_margins_batch(x: np.ndarray, alpha: float, ys: np.ndarray) -> np.ndarray:
    """Vectorised margins for a single full matrix ``x`` and a stack ``ys`` of shape (s, n, n)."""
    def _norms(m):
        return np.linalg.norm(m, ord=2, axis=(-2, -1))

    xh = x.conj().T
    yh = np.swapaxes(ys.conj(), -1, -2)
    col = _norms(xh @ x + yh @ ys)
    row = _norms(x @ xh + ys @ yh)
    return np.minimum(col, row) - (alpha + _norms(ys) ** 2)


def find_violating_projection(x: AlgElement, alpha: float,
                              tol: float = ALG_TOL) -> Optional[AlgElement]:
    """Scan the spectral projections of ``x*x`` and ``xx*`` for a witness that (C) fails."""
    if op_norm(x) > 1.0 + tol:
        raise ValueError("condition (C) is only meaningful for ||x|| <= 1")
    for h in (x.H @ x, x @ x.H):
        levels = np.unique(np.concatenate(
            [np.linalg.eigvalsh(0.5 * (b + b.conj().T)) for b in h.blocks]))
        for lam in levels:
            p = spectral_projection(h, float(lam), tol)
            if op_norm(p) < 0.5:
                continue
            if not check_condition_C(x, alpha, p, tol):
                return p
    return None


# ---------------------------------------------------------------------------
# random elements

def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(n: int, rng) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_unitaries(n: int, count: int, rng) -> np.ndarray:
    """A ``(count, n, n)`` stack of independent Haar unitaries."""
    z = (rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


def random_unitary(algebra: BlockAlgebra, seed=None) -> AlgElement:
    """Haar-distributed unitary, independently in every block."""
    rng = _rng(seed)
    return AlgElement(algebra, [haar_unitary(n, rng) for n in algebra.dims])


def random_element(algebra: BlockAlgebra, seed=None) -> AlgElement:
    rng = _rng(seed)
    return AlgElement(algebra, [rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
                                for n in algebra.dims])


def random_contraction(algebra: BlockAlgebra, seed=None) -> AlgElement:
    rng = _rng(seed)
    x = random_element(algebra, rng)
    return x * (rng.uniform(0.0, 1.0) ** 0.25 / op_norm(x))


def random_projection(algebra: BlockAlgebra, seed=None, rank=None) -> AlgElement:
    """Orthogonal projection onto a random subspace of each block.

    ``rank`` may be an int (same rank in every block, clipped to the block
    size) or ``None`` for a uniformly random rank in each block.
    """
    rng = _rng(seed)
    blocks = []
    for n in algebra.dims:
        rk = int(rng.integers(0, n + 1)) if rank is None else min(int(rank), n)
        if rk == 0:
            blocks.append(np.zeros((n, n), dtype=complex))
            continue
        q = haar_unitary(n, rng)[:, :rk]
        blocks.append(q @ q.conj().T)
    return AlgElement(algebra, blocks)


def random_invertible(algebra: BlockAlgebra, seed=None, max_cond: float = 1e3) -> AlgElement:
    """Random element with singular values drawn in ``[1/max_cond, 1]`` (so ``||x|| <= 1``)."""
    rng = _rng(seed)
    blocks = []
    for n in algebra.dims:
        s = np.exp(rng.uniform(-np.log(max_cond), 0.0, size=n))
        blocks.append((haar_unitary(n, rng) * s) @ haar_unitary(n, rng))
    return AlgElement(algebra, blocks)


# ---------------------------------------------------------------------------
# amplified elements, stored as (k, r, coord_dim) coordinate arrays

def assemble(X: np.ndarray, algebra: BlockAlgebra) -> list:
    """Blocks of ``X in M_{k,r}(A)``: a list of ``(k n_i) x (r n_i)`` matrices."""
    k, r, _ = X.shape
    out = []
    for o, n in zip(algebra.offsets, algebra.dims):
        blk = X[:, :, o:o + n * n].reshape(k, r, n, n)
        out.append(blk.transpose(0, 2, 1, 3).reshape(k * n, r * n))
    return out


def disassemble(blocks, algebra: BlockAlgebra, k: int, r: int) -> np.ndarray:
    X = np.empty((k, r, algebra.coord_dim), dtype=complex)
    for o, n, m in zip(algebra.offsets, algebra.dims, blocks):
        X[:, :, o:o + n * n] = m.reshape(k, n, r, n).transpose(0, 2, 1, 3).reshape(k, r, n * n)
    return X


def amplified_norm_of(X: np.ndarray, algebra: BlockAlgebra) -> float:
    return max(float(np.linalg.norm(m, 2)) for m in assemble(X, algebra))


def amplified_identity(algebra: BlockAlgebra, k: int) -> np.ndarray:
    X = np.zeros((k, k, algebra.coord_dim), dtype=complex)
    one = algebra.identity().coords
    for a in range(k):
        X[a, a] = one
    return X


def random_amplified_unitary(algebra: BlockAlgebra, k: int, rng, r: Optional[int] = None) -> np.ndarray:
    """Polar part of a Gaussian element of ``M_{k,r}(A)``."""
    r = k if r is None else r
    blocks = []
    for n in algebra.dims:
        g = rng.standard_normal((k * n, r * n)) + 1j * rng.standard_normal((k * n, r * n))
        u, _, vh = np.linalg.svd(g, full_matrices=False)
        blocks.append(u @ vh)
    return disassemble(blocks, algebra, k, r)
