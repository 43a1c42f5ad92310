"""Solvers for the symmetric positive definite normal equations."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from dpglab.dpg_core import GlobalSystem, TrialCoefficients

DIRECT_NNZ_LIMIT = 200_000


class SolverError(RuntimeError):
    pass


class FactorizationError(SolverError):
    """Direct factorization met a non-positive pivot: A is not SPD."""

    def __init__(self, index: int, pivot: float):
        self.index = index
        self.pivot = pivot
        super().__init__(
            f"non-positive pivot {pivot:.3e} at unknown {index}: the system matrix "
            "is not positive definite (assembly bug)"
        )


class ConvergenceError(SolverError):
    def __init__(self, history):
        self.history = list(history)
        last = self.history[-1] if self.history else float("nan")
        super().__init__(
            f"CG did not converge in {len(self.history)} iterations "
            f"(relative residual {last:.3e})"
        )


@dataclass(frozen=True)
class SolveOptions:
    method: str = "direct"  # direct | cg | auto
    tol: float = 1e-12
    max_iter: int | None = None  # default 20 N

    def __post_init__(self):
        if self.method not in ("direct", "cg", "auto"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not (0.0 < self.tol <= 1e-6):
            raise ValueError("tolerance must lie in (0, 1e-6]")


@dataclass(frozen=True)
class SolveReport:
    method: str
    iterations: int
    residual: float
    seconds: float
    history: tuple = ()


def _relative_residual(A, x, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / nb) if nb > 0 else float(np.linalg.norm(A @ x))


def solve_direct(A, b, refinement_steps=2):
    """Symmetric-mode sparse LU without off-diagonal pivoting.

    With a symmetric ordering and no row interchanges the diagonal of U
    holds the Cholesky pivots squared, so a non-positive entry proves A is
    not SPD and is reported with its (unpermuted) unknown index. A fixed
    number of iterative-refinement steps keeps the result deterministic.
    """
    A = sp.csc_matrix(A)
    lu = spla.splu(
        A,
        permc_spec="COLAMD",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise SolverError("sparse LU performed off-diagonal pivoting")
    d = lu.U.diagonal()
    bad = np.flatnonzero(~(d > 0.0))
    if bad.size:
        j = int(bad[0])
        index = int(np.flatnonzero(lu.perm_c == j)[0])
        raise FactorizationError(index, float(d[j]))
    x = lu.solve(b)
    for _ in range(refinement_steps):
        x = x + lu.solve(b - A @ x)
    return x


def solve_cg(A, b, tol, max_iter, replace_every=50):
    """Jacobi-preconditioned CG with periodic true-residual replacement.

    Returns (x, iterations, history of relative residual norms). Raises
    ConvergenceError carrying the history when max_iter is exhausted.
    """
    A = sp.csr_matrix(A)
    diag = A.diagonal()
    if np.any(diag <= 0):
        j = int(np.flatnonzero(diag <= 0)[0])
        raise FactorizationError(j, float(diag[j]))
    nb = np.linalg.norm(b)
    x = np.zeros_like(b)
    r = b.copy()
    z = r / diag
    d = z.copy()
    rz = r @ z
    history = []
    for it in range(1, max_iter + 1):
        Ad = A @ d
        alpha = rz / (d @ Ad)
        x += alpha * d
        if it % replace_every == 0:
            r = b - A @ x
        else:
            r -= alpha * Ad
        res = np.linalg.norm(r) / nb
        history.append(float(res))
        if res <= tol:
            true_res = np.linalg.norm(b - A @ x) / nb
            if true_res <= tol:
                return x, it, tuple(history)
            r = b - A @ x
        z = r / diag
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise ConvergenceError(history)


def solve(system: GlobalSystem, opts: SolveOptions | None = None):
    """Solve A x = rhs. Returns (TrialCoefficients, SolveReport)."""
    opts = opts or SolveOptions()
    A, b = system.matrix, system.rhs
    method = opts.method
    if method == "auto":
        method = "direct" if A.nnz <= DIRECT_NNZ_LIMIT else "cg"
    t0 = time.perf_counter()
    if not np.any(b):
        x, iters, hist = np.zeros_like(b), 0, ()
    elif method == "direct":
        x, iters, hist = solve_direct(A, b), 0, ()
    else:
        x, iters, hist = solve_cg(A, b, opts.tol, opts.max_iter or 20 * len(b))
    seconds = time.perf_counter() - t0
    res = _relative_residual(A, x, b)
    if method == "direct" and res > opts.tol:
        raise SolverError(f"direct solve residual {res:.3e} exceeds tolerance {opts.tol:.1e}")
    return TrialCoefficients(system.dofmap, x), SolveReport(method, iters, res, seconds, hist)
