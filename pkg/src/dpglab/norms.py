"""Error norms, trace norms, the U-norm and spectral stability diagnostics."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from dpglab import kernels
from dpglab.dpg_core import Config, DofMap, GlobalSystem, TrialCoefficients, assemble, reference_tables
from dpglab.mesh import Mesh
from dpglab.polybasis import EdgeBasis, RTBasis, edge_points, edge_quadrature, tri_quadrature

DENSE_DOF_LIMIT = 2500
SIGMA_NORM_MODES = ("surrogate", "oracle")


class DiagnosticsSizeError(ValueError):
    def __init__(self, n, limit):
        super().__init__(
            f"{n} unknowns exceed the dense eigensolver cap of {limit}; use a coarser mesh"
        )


class TraceRangeError(ValueError):
    """sigma-hat is not a normal trace of the Raviart-Thomas extension space."""


# ---------------------------------------------------------------- L2 errors


def _l2_error(coeffs, basis_eval, exact, mesh, degree):
    rule = tri_quadrature(degree)
    phi = basis_eval(rule.points)
    xq = mesh.map_points(rule.points)
    uh = coeffs @ phi
    ue = np.broadcast_to(exact(xq[..., 0], xq[..., 1]), uh.shape)
    det = 2.0 * mesh.areas
    return float(np.sqrt(np.einsum("e,eq,q->", det, (uh - ue) ** 2, rule.weights)))


def l2_error_u(phi: TrialCoefficients, u_exact, mesh: Mesh | None = None) -> float:
    """||u - u_h|| with degree 2p + 6 elementwise quadrature."""
    cfg = phi.dofmap.config
    mesh = mesh or phi.dofmap.mesh
    return _l2_error(phi.u, reference_tables(cfg).trial.eval, u_exact, mesh, 2 * cfg.p + 6)


def l2_error_sigma(phi: TrialCoefficients, grad_exact, mesh: Mesh | None = None) -> float:
    cfg = phi.dofmap.config
    mesh = mesh or phi.dofmap.mesh
    ev = reference_tables(cfg).trial.eval
    parts = [
        _l2_error(phi.sigma[:, a], ev, lambda x, y, a=a: grad_exact(x, y)[a], mesh, 2 * cfg.p + 6)
        for a in range(2)
    ]
    return float(np.hypot(*parts))


# ------------------------------------------------------- fractional norms


def _divided_differences(k, s):
    """(v_i(s_a) - v_i(s_b)) / (s_a - s_b), with v_i'(s_a) on the diagonal."""
    eb = EdgeBasis(k)
    v = eb.eval(s)
    dv = eb.deriv(s)
    diff = v[:, :, None] - v[:, None, :]
    ds = s[:, None] - s[None, :]
    np.fill_diagonal(ds, 1.0)
    D = diff / ds
    idx = np.arange(len(s))
    D[:, idx, idx] = dv
    return D


@lru_cache(maxsize=None)
def seminorm_gram(k: int) -> np.ndarray:
    """Gram of the H^1/2 double-integral seminorm for EdgeBasis(k) on a face.

    In two dimensions the seminorm is invariant under face scaling, so the
    reference-edge Gram applies to every face. Tensor Gauss quadrature is
    exact because the divided difference of a polynomial is a polynomial.
    """
    rule = edge_quadrature(max(2 * k, 1))
    s, w = rule.points, rule.weights
    D = _divided_differences(k, s)
    W = np.outer(w, w)
    return np.einsum("iab,ab,jab->ij", D, W, D)


def face_seminorm_sq(coeffs) -> float:
    c = np.asarray(coeffs, dtype=float)
    return float(c @ seminorm_gram(len(c) - 1) @ c)


def face_h12_norm(coeffs, face_length: float = 1.0, h_owner: float = 1.0) -> float:
    """Scaled face norm (h^-1 ||v||^2_L2(g) + |v|^2_1/2,g)^1/2.

    ``coeffs`` are EdgeBasis coefficients of v along the face.
    """
    c = np.asarray(coeffs, dtype=float)
    l2_sq = face_length * float(c @ c)
    return float(np.sqrt(l2_sq / h_owner + face_seminorm_sq(c)))


def face_h12_gram(k: int, face_length: float, h_owner: float) -> np.ndarray:
    return face_length / h_owner * np.eye(k + 1) + seminorm_gram(k)


def uhat_norm(phi: TrialCoefficients) -> float:
    mesh = phi.dofmap.mesh
    g0 = mesh.skeleton.g0
    total = 0.0
    for row, g in zip(phi.uhat, g0):
        face = mesh.faces[g]
        total += face_h12_norm(row, face.length, mesh.diameters[face.owner]) ** 2
    return float(np.sqrt(total))


# ----------------------------------------------- dual norm of sigma-hat


def _owner_h(mesh):
    return np.array([mesh.diameters[f.owner] for f in mesh.faces])


def sigma_hat_surrogate_gram(mesh: Mesh, config: Config) -> np.ndarray:
    """Diagonal weights h_K(g) |g| per sigma-hat coefficient."""
    lengths = np.array([f.length for f in mesh.faces])
    return np.repeat(_owner_h(mesh) * lengths, config.n_sigmahat)


class _RTExtension:
    """Minimal-norm Raviart-Thomas extension of sigma-hat, element by element."""

    def __init__(self, mesh: Mesh, p: int, k: int):
        if k < p:
            raise ValueError(f"RT degree {k} must be >= the sigma-hat degree {p}")
        self.mesh = mesh
        self.p = p
        self.k = k
        self.basis = RTBasis(k)
        rule = tri_quadrature(2 * k + 2)
        vals, div = self.basis.eval_div(rule.points)
        self._vals, self._div, self._w = vals, div, rule.weights
        self._erule = edge_quadrature(2 * k + 2)
        self._eb = EdgeBasis(k).eval(self._erule.points)

    def element_problem(self, e):
        """Gram G, constraint matrix C and the list of (face, rows) it constrains."""
        mesh = self.mesh
        J = mesh.jacobians[e]
        det = 2.0 * mesh.areas[e]
        JtJ = J.T @ J
        G = (
            np.einsum("iqa,ab,jqb,q->ij", self._vals, JtJ, self._vals, self._w)
            + np.einsum("iq,jq,q->ij", self._div, self._div, self._w)
        ) / det
        rows = []
        for inc in mesh.skeleton.incidence[e]:
            face = mesh.faces[inc.face]
            t0, t1 = {-1: (0.0, 1.0), 0: (0.0, 0.5), 1: (0.5, 1.0)}[inc.sub]
            s = self._erule.points
            t = t1 - s * (t1 - t0) if inc.reversed else t0 + s * (t1 - t0)
            vals, _ = self.basis.eval_div(edge_points(inc.edge, t))
            flux = vals @ (J.T @ np.asarray(face.normal)) / det
            rows.append((inc.face, (self._eb * self._erule.weights) @ flux.T))
        C = np.vstack([r for _, r in rows])
        return G, C, [f for f, _ in rows]

    def element_form(self, e):
        """Quadratic form Q with min ||tau||^2_div = d^T Q d, plus rank info."""
        G, C, faces = self.element_problem(e)
        U, S, Wt = np.linalg.svd(C)
        rank = int(np.sum(S > 1e-10 * S[0]))
        Ur, Sr, Wr = U[:, :rank], S[:rank], Wt[:rank].T
        Z = Wt[rank:].T
        pinv = Wr @ (Ur / Sr).T
        if Z.shape[1]:
            P = np.eye(G.shape[0]) - Z @ np.linalg.solve(Z.T @ G @ Z, Z.T @ G)
        else:
            P = np.eye(G.shape[0])
        X = P @ pinv
        return X.T @ G @ X, Ur, C.shape[0] - rank, faces

    def data(self, faces, sigmahat):
        k1 = self.k + 1
        d = np.zeros(len(faces) * k1)
        for i, g in enumerate(faces):
            d[i * k1 : i * k1 + self.p + 1] = sigmahat[g]
        return d

    def norm_sq(self, sigmahat) -> float:
        total = 0.0
        for e in range(self.mesh.n_elements):
            Q, Ur, defect, faces = self.element_form(e)
            d = self.data(faces, sigmahat)
            miss = d - Ur @ (Ur.T @ d)
            if np.linalg.norm(miss) > 1e-9 * max(1.0, np.linalg.norm(d)):
                raise TraceRangeError(
                    f"sigma-hat on the faces of element {e} is not the normal trace of an "
                    f"RT_{self.k} field (hanging-face mismatch {np.linalg.norm(miss):.2e})"
                )
            total += d @ Q @ d
        return float(total)

    def gram(self, dofmap: DofMap) -> np.ndarray:
        """Gram of the oracle norm on the sigma-hat block (conforming meshes only)."""
        nsh = self.p + 1
        nF = len(self.mesh.faces)
        M = np.zeros((nF * nsh, nF * nsh))
        k1 = self.k + 1
        for e in range(self.mesh.n_elements):
            Q, _, defect, faces = self.element_form(e)
            if defect:
                raise TraceRangeError(
                    f"element {e} has a hanging edge; the oracle sigma-hat norm is only "
                    "a quadratic form on its trace range"
                )
            sel = np.concatenate([i * k1 + np.arange(nsh) for i in range(len(faces))])
            idx = np.concatenate([g * nsh + np.arange(nsh) for g in faces])
            M[np.ix_(idx, idx)] += Q[np.ix_(sel, sel)]
        return M


def sigma_hat_dual_norm(phi: TrialCoefficients, mode: str = "surrogate", rt_degree: int | None = None) -> float:
    """||sigma-hat||_-1/2 by the scaled-L2 surrogate or the RT-extension oracle.

    The oracle minimizes ||tau||_div over RT_k fields (k = rt_degree,
    default p) whose normal traces equal sigma-hat on every face; it is an
    upper bound of the true infimum.
    """
    mesh, cfg = phi.dofmap.mesh, phi.dofmap.config
    if mode == "surrogate":
        w = sigma_hat_surrogate_gram(mesh, cfg)
        c = phi.sigmahat.ravel()
        return float(np.sqrt(np.sum(w * c * c)))
    if mode == "oracle":
        k = cfg.p if rt_degree is None else rt_degree
        return float(np.sqrt(_RTExtension(mesh, cfg.p, k).norm_sq(phi.sigmahat)))
    raise ValueError(f"unknown sigma-hat norm mode {mode!r}; choose from {SIGMA_NORM_MODES}")


# -------------------------------------------------------------- U-norm


@dataclass(frozen=True)
class UNormBreakdown:
    l2_u: float
    l2_sigma: float
    h_half_uhat: float
    dual_half_sigmahat: float
    mode: str

    @property
    def total(self) -> float:
        return float(
            np.sqrt(self.l2_u**2 + self.l2_sigma**2 + self.h_half_uhat**2 + self.dual_half_sigmahat**2)
        )


def u_norm(phi: TrialCoefficients, mode: str = "surrogate", rt_degree: int | None = None) -> UNormBreakdown:
    mesh = phi.dofmap.mesh
    det = 2.0 * mesh.areas
    l2_u = np.sqrt(np.sum(det[:, None] * phi.u**2))
    l2_s = np.sqrt(np.sum(det[:, None, None] * phi.sigma**2))
    return UNormBreakdown(
        float(l2_u), float(l2_s), uhat_norm(phi), sigma_hat_dual_norm(phi, mode, rt_degree), mode
    )


def u_norm_gram(dofmap: DofMap, mode: str = "surrogate", rt_degree: int | None = None) -> np.ndarray:
    """Dense Gram M_U of the discrete U-norm, block diagonal by field."""
    mesh, cfg = dofmap.mesh, dofmap.config
    M = np.zeros((dofmap.N, dofmap.N))
    det = 2.0 * mesh.areas
    diag = np.concatenate([np.repeat(det, cfg.n_u), np.repeat(det, 2 * cfg.n_u)])
    n = len(diag)
    M[np.arange(n), np.arange(n)] = diag
    for g in mesh.skeleton.g0:
        face = mesh.faces[g]
        o = dofmap.uhat_offsets[g]
        sl = slice(o, o + cfg.n_uhat)
        M[sl, sl] = face_h12_gram(cfg.p + 1, face.length, mesh.diameters[face.owner])
    sh = dofmap.sigmahat_slice
    if mode == "surrogate":
        idx = np.arange(sh.start, sh.stop)
        M[idx, idx] = sigma_hat_surrogate_gram(mesh, cfg)
    elif mode == "oracle":
        k = cfg.p if rt_degree is None else rt_degree
        M[sh, sh] = _RTExtension(mesh, cfg.p, k).gram(dofmap)
    else:
        raise ValueError(f"unknown sigma-hat norm mode {mode!r}; choose from {SIGMA_NORM_MODES}")
    return M


# ------------------------------------------------ spectral diagnostics


def _dense_system(mesh, config, system, max_dofs):
    if system is None:
        dofmap = DofMap(mesh, config)
        if dofmap.N > max_dofs:
            raise DiagnosticsSizeError(dofmap.N, max_dofs)
        system = assemble(mesh, config)
    if system.N > max_dofs:
        raise DiagnosticsSizeError(system.N, max_dofs)
    return system, system.matrix.toarray()


def infsup_u_estimate(
    mesh: Mesh, config: Config, system: GlobalSystem | None = None, max_dofs: int = DENSE_DOF_LIMIT
) -> float:
    """min over discrete phi with ||u|| = 1 of sup_psi b(phi, psi) / ||psi||_V.

    Since sup_psi b(phi, psi)/||psi||_V = (phi^T A phi)^1/2, minimizing
    over the non-u components leaves the Schur complement of A on the
    u-block, compared against the u mass matrix.
    """
    system, A = _dense_system(mesh, config, system, max_dofs)
    dm = system.dofmap
    iu = np.arange(dm.u_slice.start, dm.u_slice.stop)
    ic = np.arange(dm.u_slice.stop, dm.N)
    Acc = sla.cho_factor(A[np.ix_(ic, ic)], lower=True)
    Auc = A[np.ix_(iu, ic)]
    S = A[np.ix_(iu, iu)] - Auc @ sla.cho_solve(Acc, Auc.T)
    S = 0.5 * (S + S.T)
    Mu = np.diag(np.repeat(2.0 * mesh.areas, config.n_u))
    lam = sla.eigh(S, Mu, eigvals_only=True, subset_by_index=[0, 0])[0]
    return float(np.sqrt(max(lam, 0.0)))


def boundedness_estimate(
    mesh: Mesh,
    config: Config,
    mode: str = "surrogate",
    system: GlobalSystem | None = None,
    max_dofs: int = DENSE_DOF_LIMIT,
    rt_degree: int | None = None,
) -> float:
    """Largest generalized singular value of b on U_h x V^r: sqrt(lambda_max(A, M_U))."""
    system, A = _dense_system(mesh, config, system, max_dofs)
    M = u_norm_gram(system.dofmap, mode, rt_degree)
    n = system.N
    lam = sla.eigh(A, M, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0]
    return float(np.sqrt(lam))


def energy_residual(phi: TrialCoefficients, system: GlobalSystem) -> float:
    """(sum_K r_K^T G_K^-1 r_K)^1/2 with r_K = F_K - B_K phi|_K."""
    batch = system.elements
    R = np.array([F - B @ phi.values[d] for F, B, d in zip(batch.F, batch.B, batch.dofs)])
    return float(np.sqrt(np.sum(kernels.dual_norms_sq(np.ascontiguousarray(batch.G), R))))


@dataclass
class DiagReport:
    mesh: str
    p: int
    r: int
    infsup_u: float
    boundedness: float
    energy_residual: float
    sigma_norm_mode: str

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)
