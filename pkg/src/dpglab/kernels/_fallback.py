"""NumPy implementations of the element condensation kernels.

``condense(G, B, t, F)`` takes the stacked element Gram matrices G
(nE, m, m), the element form matrices B flattened row-major into one
buffer (element e is m x t[e]), and the loads F (nE, m). It returns the
flattened local normal-equation blocks B^T G^-1 B (element e is
t[e] x t[e], exactly symmetric) and right-hand sides B^T G^-1 F.
"""
import numpy as np

from dpglab.kernels.errors import LocalFactorizationError


def _cholesky(G, elements):
    try:
        return np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        pass
    for i, g in zip(elements, G):
        for j in range(1, len(g) + 1):
            if np.linalg.eigvalsh(g[:j, :j])[0] <= 0.0:
                raise LocalFactorizationError(int(i), j - 1)
    raise LocalFactorizationError(int(elements[0]), 0)


def _forward(L, X):
    """Batched lower-triangular solve L Y = X for X of shape (ne, m) or (ne, m, t)."""
    Y = np.array(X, dtype=float, copy=True)
    scale = (-1,) + (1,) * (Y.ndim - 2)
    for i in range(L.shape[1]):
        if i:
            Y[:, i] -= np.einsum("ek,ek...->e...", L[:, i, :i], Y[:, :i])
        Y[:, i] /= L[:, i, i].reshape(scale)
    return Y


def condense(G, B, t, F):
    G = np.asarray(G, dtype=float)
    t = np.asarray(t, dtype=np.int64)
    ne, m, _ = G.shape
    boff = np.concatenate([[0], np.cumsum(m * t)])
    aoff = np.concatenate([[0], np.cumsum(t * t)])
    roff = np.concatenate([[0], np.cumsum(t)])
    A = np.empty(aoff[-1])
    r = np.empty(roff[-1])
    for te in np.unique(t):
        idx = np.flatnonzero(t == te)
        L = _cholesky(G[idx], idx)
        cols = boff[idx, None] + np.arange(m * te)
        Bk = B[cols].reshape(len(idx), m, te)
        Y = _forward(L, Bk)
        z = _forward(L, F[idx])
        Ak = np.einsum("eki,ekj->eij", Y, Y)
        upper = np.triu(np.ones((te, te), dtype=bool))
        Ak = np.where(upper, Ak, np.swapaxes(Ak, 1, 2))
        A[aoff[idx, None] + np.arange(te * te)] = Ak.reshape(len(idx), -1)
        r[roff[idx, None] + np.arange(te)] = np.einsum("eki,ek->ei", Y, z)
    return A, r


def dual_norms_sq(G, R):
    G = np.asarray(G, dtype=float)
    L = _cholesky(G, np.arange(len(G)))
    z = _forward(L, np.asarray(R, dtype=float))
    return np.einsum("ek,ek->e", z, z)
