"""Hot loops of the amplified-norm ascent.

Two implementations of each kernel live here: a loop-based one compiled
with numba, and a vectorised pure-numpy one.  ``CBSTAB_DISABLE_NUMBA=1``
(or a missing numba) selects the numpy path.  Both take and return the
same arrays so they can be checked against each other.

Amplified elements are ``(k, r, d)`` complex arrays; block ``i`` of the
algebra occupies coordinates ``off[i] : off[i] + n_i**2``.
"""
import os

import numpy as np

_flag = os.environ.get("CBSTAB_DISABLE_NUMBA", "").strip().lower()
DISABLE_NUMBA = _flag not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not DISABLE_NUMBA
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# pure numpy

def _blocks_np(X, off, dims):
    k, r, _ = X.shape
    return [X[:, :, o:o + n * n].reshape(k, r, n, n).transpose(0, 2, 1, 3).reshape(k * n, r * n)
            for o, n in zip(off, dims)]


def _polar_into_np(G, off, dims):
    k, r, d = G.shape
    X = np.empty((k, r, d), dtype=np.complex128)
    for o, n, g in zip(off, dims, _blocks_np(G, off, dims)):
        u, _, vh = np.linalg.svd(g, full_matrices=False)
        X[:, :, o:o + n * n] = (u @ vh).reshape(k, n, r, n).transpose(0, 2, 1, 3).reshape(k, r, n * n)
    return X


def _top_pair_np(Y, off, dims):
    """Largest singular value over output blocks and the matching weight array.

    The weight ``W`` satisfies ``Re sum(W * Y) == value`` and is supported
    on the maximising block.
    """
    k, r, d = Y.shape
    best, W = -1.0, None
    for o, n, m in zip(off, dims, _blocks_np(Y, off, dims)):
        u, s, vh = np.linalg.svd(m)
        if s[0] > best:
            best = float(s[0])
            xi = u[:, 0].reshape(k, n)
            eta = vh[0, :].conj().reshape(r, n)
            w = np.einsum("ap,bq->abpq", xi.conj(), eta).reshape(k, r, n * n)
            W = np.zeros((k, r, d), dtype=np.complex128)
            W[:, :, o:o + n * n] = w
    return best, W


def linear_ascent_np(T, offA, dimsA, offB, dimsB, X, max_iter, tol):
    """Alternating ascent for ``||(id_k (x) T)(X)||`` over ``||X|| <= 1``.

    Returns ``(X, value, iterations, converged)`` where ``value`` is the
    norm of the image of the returned ``X``.
    """
    X = np.array(X, dtype=np.complex128)
    prev = -np.inf
    it = 0
    converged = False
    while True:
        val, W = _top_pair_np(X @ T.T, offB, dimsB)
        if val - prev <= tol * max(1.0, val):
            converged = True
            break
        if it >= max_iter:
            break
        prev = val
        C = W @ T
        X = _polar_into_np(C.conj(), offA, dimsA)
        it += 1
    return X, val, it, converged


def _bilinear_image_np(Bf, X, Y):
    k, r, dA = X.shape
    P = np.einsum("apt,pbu->abtu", X, Y).reshape(k * Y.shape[1], dA * dA)
    return (P @ Bf.T).reshape(k, Y.shape[1], Bf.shape[0])


def bilinear_ascent_np(Bf, offA, dimsA, offB, dimsB, X, Y, max_iter, tol):
    """Alternating ascent for the Haagerup amplification ``[sum_p B(x_ip, y_pj)]``.

    ``Bf`` is the tensor flattened to ``(dB, dA*dA)``.
    """
    X = np.array(X, dtype=np.complex128)
    Y = np.array(Y, dtype=np.complex128)
    k, r, dA = X.shape
    c = Y.shape[1]
    prev = -np.inf
    it = 0
    converged = False
    while True:
        val, W = _top_pair_np(_bilinear_image_np(Bf, X, Y), offB, dimsB)
        if val - prev <= tol * max(1.0, val):
            converged = True
            break
        if it >= max_iter:
            break
        prev = val
        V = (W.reshape(k * c, -1) @ Bf).reshape(k, c, dA, dA)
        X = _polar_into_np(np.einsum("abtu,pbu->apt", V, Y).conj(), offA, dimsA)
        _, W = _top_pair_np(_bilinear_image_np(Bf, X, Y), offB, dimsB)
        V = (W.reshape(k * c, -1) @ Bf).reshape(k, c, dA, dA)
        Y = _polar_into_np(np.einsum("abtu,apt->pbu", V, X).conj(), offA, dimsA)
        it += 1
    return X, Y, val, it, converged


# ---------------------------------------------------------------------------
# numba

def _define_numba_kernels():
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def assemble_block(X, o, n):
        k, r, _ = X.shape
        M = np.empty((k * n, r * n), dtype=np.complex128)
        for a in range(k):
            for b in range(r):
                for i in range(n):
                    for j in range(n):
                        M[a * n + i, b * n + j] = X[a, b, o + i * n + j]
        return M

    @njit
    def scatter_block(X, M, o, n):
        k, r, _ = X.shape
        for a in range(k):
            for b in range(r):
                for i in range(n):
                    for j in range(n):
                        X[a, b, o + i * n + j] = M[a * n + i, b * n + j]

    @njit
    def polar_into(G, off, dims):
        X = np.empty_like(G)
        for i in range(dims.shape[0]):
            g = assemble_block(G, off[i], dims[i])
            u, s, vh = np.linalg.svd(g, full_matrices=False)
            scatter_block(X, u @ vh, off[i], dims[i])
        return X

    @njit
    def top_pair(Y, off, dims):
        k, r, d = Y.shape
        best = -1.0
        W = np.zeros((k, r, d), dtype=np.complex128)
        for i in range(dims.shape[0]):
            o = off[i]
            n = dims[i]
            u, s, vh = np.linalg.svd(assemble_block(Y, o, n))
            if s[0] > best:
                best = s[0]
                W[:, :, :] = 0.0
                for a in range(k):
                    for b in range(r):
                        for p in range(n):
                            for q in range(n):
                                W[a, b, o + p * n + q] = np.conj(u[a * n + p, 0]) * np.conj(vh[0, b * n + q])
        return best, W

    @njit
    def linear_image(X, TT):
        k, r, dA = X.shape
        return np.dot(X.reshape(k * r, dA), TT).reshape(k, r, TT.shape[1])

    @njit
    def linear_ascent(T, offA, dimsA, offB, dimsB, X0, max_iter, tol):
        X = X0.copy()
        TT = np.ascontiguousarray(T.T)
        k, r, dA = X.shape
        prev = -np.inf
        it = 0
        converged = False
        val = 0.0
        while True:
            val, W = top_pair(linear_image(X, TT), offB, dimsB)
            if val - prev <= tol * max(1.0, val):
                converged = True
                break
            if it >= max_iter:
                break
            prev = val
            C = np.dot(W.reshape(k * r, W.shape[2]), T).reshape(k, r, dA)
            X = polar_into(np.conj(C), offA, dimsA)
            it += 1
        return X, val, it, converged

    @njit
    def bilinear_image(Bf, X, Y):
        k, r, dA = X.shape
        c = Y.shape[1]
        P = np.zeros((k * c, dA * dA), dtype=np.complex128)
        for a in range(k):
            for b in range(c):
                row = a * c + b
                for p in range(r):
                    for t in range(dA):
                        xv = X[a, p, t]
                        if xv == 0:
                            continue
                        for u in range(dA):
                            P[row, t * dA + u] += xv * Y[p, b, u]
        return np.dot(P, np.ascontiguousarray(Bf.T)).reshape(k, c, Bf.shape[0])

    @njit
    def grad_x(V, Y, dA):
        # C[a,p,t] = sum_{b,u} V[a,b,t,u] Y[p,b,u]
        k, c = V.shape[0], V.shape[1]
        r = Y.shape[0]
        C = np.zeros((k, r, dA), dtype=np.complex128)
        for a in range(k):
            for p in range(r):
                for b in range(c):
                    for t in range(dA):
                        acc = 0j
                        for u in range(dA):
                            acc += V[a, b, t, u] * Y[p, b, u]
                        C[a, p, t] += acc
        return C

    @njit
    def grad_y(V, X, dA):
        # C[p,b,u] = sum_{a,t} V[a,b,t,u] X[a,p,t]
        k, c = V.shape[0], V.shape[1]
        r = X.shape[1]
        C = np.zeros((r, c, dA), dtype=np.complex128)
        for p in range(r):
            for b in range(c):
                for a in range(k):
                    for t in range(dA):
                        xv = X[a, p, t]
                        if xv == 0:
                            continue
                        for u in range(dA):
                            C[p, b, u] += V[a, b, t, u] * xv
        return C

    @njit
    def bilinear_ascent(Bf, offA, dimsA, offB, dimsB, X0, Y0, max_iter, tol):
        X = X0.copy()
        Y = Y0.copy()
        k, r, dA = X.shape
        c = Y.shape[1]
        prev = -np.inf
        it = 0
        converged = False
        val = 0.0
        while True:
            val, W = top_pair(bilinear_image(Bf, X, Y), offB, dimsB)
            if val - prev <= tol * max(1.0, val):
                converged = True
                break
            if it >= max_iter:
                break
            prev = val
            V = np.dot(W.reshape(k * c, W.shape[2]), Bf).reshape(k, c, dA, dA)
            X = polar_into(np.conj(grad_x(V, Y, dA)), offA, dimsA)
            _, W = top_pair(bilinear_image(Bf, X, Y), offB, dimsB)
            V = np.dot(W.reshape(k * c, W.shape[2]), Bf).reshape(k, c, dA, dA)
            Y = polar_into(np.conj(grad_y(V, X, dA)), offA, dimsA)
            it += 1
        return X, Y, val, it, converged

    return linear_ascent, bilinear_ascent


if numba is not None:
    linear_ascent_nb, bilinear_ascent_nb = _define_numba_kernels()
else:  # pragma: no cover
    linear_ascent_nb = bilinear_ascent_nb = None


def _as_index(a):
    return np.ascontiguousarray(np.asarray(a, dtype=np.int64))


def linear_ascent(T, offA, dimsA, offB, dimsB, X0, max_iter=500, tol=1e-10, backend=None):
    backend = backend or BACKEND
    T = np.ascontiguousarray(T, dtype=np.complex128)
    X0 = np.ascontiguousarray(X0, dtype=np.complex128)
    if backend == "numba":
        return linear_ascent_nb(T, _as_index(offA), _as_index(dimsA), _as_index(offB),
                                _as_index(dimsB), X0, int(max_iter), float(tol))
    return linear_ascent_np(T, offA, dimsA, offB, dimsB, X0, max_iter, tol)


def bilinear_ascent(Bf, offA, dimsA, offB, dimsB, X0, Y0, max_iter=500, tol=1e-10, backend=None):
    backend = backend or BACKEND
    Bf = np.ascontiguousarray(Bf, dtype=np.complex128)
    X0 = np.ascontiguousarray(X0, dtype=np.complex128)
    Y0 = np.ascontiguousarray(Y0, dtype=np.complex128)
    if backend == "numba":
        return bilinear_ascent_nb(Bf, _as_index(offA), _as_index(dimsA), _as_index(offB),
                                  _as_index(dimsB), X0, Y0, int(max_iter), float(tol))
    return bilinear_ascent_np(Bf, offA, dimsA, offB, dimsB, X0, Y0, max_iter, tol)
