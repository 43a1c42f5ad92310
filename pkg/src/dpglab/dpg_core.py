"""Trial DOF layout, element DPG forms and the condensed normal equations.

Trial space U_h = P_p(T) x P_p(T)^2 x P_{p+1}(G_0) x P_p(G); test space
V^r = P_r(T) x P_{p+2}(T)^2 with the broken H^1 x H(div) inner product.
Because V^r is broken, the trial-to-test map is element local and the
practical DPG system is A = sum_K B_K^T G_K^-1 B_K.

Element test vectors are ordered [v (dim P_r), tau_x, tau_y (dim P_{p+2}
each)]. Element trial columns are ordered [u, sigma_x, sigma_y] followed,
for each face on the element boundary in (edge, sub-face) order, by its
u-hat columns (interior faces only) and its sigma-hat columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from dpglab import kernels
from dpglab.mesh import Mesh
from dpglab.polybasis import EdgeBasis, TriBasis, edge_points, edge_quadrature, tri_dim, tri_quadrature

MAX_DEGREE = 6
_SUBRANGES = {-1: (0.0, 1.0), 0: (0.0, 0.5), 1: (0.5, 1.0)}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    """Trial degree ``p`` and scalar test degree ``r`` (default p + 2)."""

    p: int
    r: int | None = None

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or self.p < 0:
            raise ConfigError(f"trial degree p must be a nonnegative integer, got {self.p!r}")
        if self.p > MAX_DEGREE:
            raise ConfigError(f"trial degree p={self.p} exceeds the supported maximum {MAX_DEGREE}")
        if self.r is None:
            object.__setattr__(self, "r", self.p + 2)
        if self.r < self.p + 2:
            raise ConfigError(f"test degree r={self.r} must satisfy r >= p + 2 = {self.p + 2}")

    @property
    def vector_degree(self) -> int:
        return self.p + 2

    @property
    def n_u(self) -> int:
        return tri_dim(self.p)

    @property
    def n_uhat(self) -> int:
        return self.p + 2

    @property
    def n_sigmahat(self) -> int:
        return self.p + 1

    @property
    def n_v(self) -> int:
        return tri_dim(self.r)

    @property
    def n_tau(self) -> int:
        return tri_dim(self.p + 2)

    @property
    def m(self) -> int:
        """Local test dimension dim P_r + 2 dim P_{p+2}."""
        return self.n_v + 2 * self.n_tau

    @property
    def volume_quad_degree(self) -> int:
        return 2 * max(self.r, self.p + 2) + 2

    @property
    def face_quad_degree(self) -> int:
        return max(2 * (self.p + 2) + 2, self.r + self.p)


class DofMap:
    """Global numbering: all u blocks, all sigma blocks, u-hat on G_0, sigma-hat on G."""

    def __init__(self, mesh: Mesh, config: Config):
        self.mesh = mesh
        self.config = config
        ne = mesh.n_elements
        nu = config.n_u
        self.u_offsets = np.arange(ne, dtype=np.int64) * nu
        self.sigma_offsets = ne * nu + np.arange(ne, dtype=np.int64) * 2 * nu
        start = 3 * ne * nu
        self.uhat_offsets = np.full(len(mesh.faces), -1, dtype=np.int64)
        for g, face in enumerate(mesh.faces):
            if face.in_g0:
                self.uhat_offsets[g] = start
                start += config.n_uhat
        self.sigmahat_offsets = start + np.arange(len(mesh.faces), dtype=np.int64) * config.n_sigmahat
        self.N = int(start + len(mesh.faces) * config.n_sigmahat)
        self.n_u_total = ne * nu
        self.n_sigma_total = 2 * ne * nu
        self.uhat_start = 3 * ne * nu
        self.sigmahat_start = int(start)

    @property
    def u_slice(self) -> slice:
        return slice(0, self.n_u_total)

    @property
    def sigma_slice(self) -> slice:
        return slice(self.n_u_total, self.uhat_start)

    @property
    def uhat_slice(self) -> slice:
        return slice(self.uhat_start, self.sigmahat_start)

    @property
    def sigmahat_slice(self) -> slice:
        return slice(self.sigmahat_start, self.N)

    def element_dofs(self, k: int) -> np.ndarray:
        cfg = self.config
        nu = cfg.n_u
        parts = [
            self.u_offsets[k] + np.arange(nu),
            self.sigma_offsets[k] + np.arange(2 * nu),
        ]
        for inc in self.mesh.skeleton.incidence[k]:
            if self.uhat_offsets[inc.face] >= 0:
                parts.append(self.uhat_offsets[inc.face] + np.arange(cfg.n_uhat))
            parts.append(self.sigmahat_offsets[inc.face] + np.arange(cfg.n_sigmahat))
        return np.concatenate(parts)


@dataclass
class TrialCoefficients:
    """Coefficients of (u_h, sigma_h, uhat_h, sigmahat_h) laid out by a DofMap."""

    dofmap: DofMap
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.dofmap.N,):
            raise ValueError(f"expected {self.dofmap.N} coefficients, got {self.values.shape}")

    @classmethod
    def zeros(cls, dofmap: DofMap) -> "TrialCoefficients":
        return cls(dofmap, np.zeros(dofmap.N))

    @property
    def u(self) -> np.ndarray:
        """(nE, dim P_p) coefficients in the reference orthonormal basis."""
        return self.values[self.dofmap.u_slice].reshape(self.dofmap.mesh.n_elements, -1)

    @property
    def sigma(self) -> np.ndarray:
        """(nE, 2, dim P_p): x and y components."""
        return self.values[self.dofmap.sigma_slice].reshape(self.dofmap.mesh.n_elements, 2, -1)

    @property
    def uhat(self) -> np.ndarray:
        """(|G_0|, p + 2) coefficients in EdgeBasis(p + 1), faces in G_0 order."""
        return self.values[self.dofmap.uhat_slice].reshape(-1, self.dofmap.config.n_uhat)

    @property
    def sigmahat(self) -> np.ndarray:
        """(|G|, p + 1) coefficients in EdgeBasis(p)."""
        return self.values[self.dofmap.sigmahat_slice].reshape(-1, self.dofmap.config.n_sigmahat)


class ReferenceTables:
    """Reference-element integrals shared by every element for one Config."""

    def __init__(self, config: Config):
        p, r = config.p, config.r
        self.config = config
        self.test_scalar = TriBasis(r)
        self.test_vector = TriBasis(p + 2)
        self.trial = TriBasis(p)
        self.uhat_basis = EdgeBasis(p + 1)
        self.sigmahat_basis = EdgeBasis(p)
        self.vol_rule = tri_quadrature(config.volume_quad_degree)
        w = self.vol_rule.weights
        V, dV = self.test_scalar.eval_grad(self.vol_rule.points)
        T, dT = self.test_vector.eval_grad(self.vol_rule.points)
        U = self.trial.eval(self.vol_rule.points)
        self.V = V
        self.mass_v = (V * w) @ V.T
        self.stiff_v = np.einsum("iqb,q,jqc->bcij", dV, w, dV)
        self.mass_t = (T * w) @ T.T
        self.stiff_t = np.einsum("iqb,q,jqc->bcij", dT, w, dT)
        self.mass_ut = (U * w) @ T.T
        self.grad_v = np.einsum("iq,q,jqb->bij", U, w, dV)  # (u_i, d_b v_j)
        self.grad_t = np.einsum("iq,q,jqb->bij", U, w, dT)  # (u_i, d_b tau_j)
        self.face_rule = edge_quadrature(config.face_quad_degree)
        s, ws = self.face_rule.points, self.face_rule.weights
        Es = self.sigmahat_basis.eval(s)
        Eu = self.uhat_basis.eval(s)
        self.face_v = {}
        self.face_t = {}
        for e in range(3):
            for sub, (t0, t1) in _SUBRANGES.items():
                for rev in (False, True):
                    t = t1 - s * (t1 - t0) if rev else t0 + s * (t1 - t0)
                    pts = edge_points(e, t)
                    self.face_v[e, sub, rev] = (self.test_scalar.eval(pts) * ws) @ Es.T
                    self.face_t[e, sub, rev] = (self.test_vector.eval(pts) * ws) @ Eu.T


@lru_cache(maxsize=16)
def reference_tables(config: Config) -> ReferenceTables:
    return ReferenceTables(config)


def _geometry(mesh: Mesh, elements):
    J = mesh.jacobians[elements]
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv = np.linalg.inv(J)
    return det, Jinv


def _as_index(mesh, elements):
    if elements is None:
        return np.arange(mesh.n_elements)
    return np.atleast_1d(np.asarray(elements, dtype=np.int64))


def local_grams(mesh: Mesh, config: Config, elements=None) -> np.ndarray:
    """Stacked test Gram matrices G_K, shape (nK, m, m)."""
    ref = reference_tables(config)
    idx = _as_index(mesh, elements)
    det, Jinv = _geometry(mesh, idx)
    nv, nt = config.n_v, config.n_tau
    G = np.zeros((len(idx), config.m, config.m))
    C = np.einsum("ebi,eci->ebc", Jinv, Jinv)
    G[:, :nv, :nv] = det[:, None, None] * (
        ref.mass_v + np.einsum("ebc,bcij->eij", C, ref.stiff_v)
    )
    for a in range(2):
        ra = slice(nv + a * nt, nv + (a + 1) * nt)
        for a2 in range(2):
            rb = slice(nv + a2 * nt, nv + (a2 + 1) * nt)
            block = np.einsum("eb,ec,bcij->eij", Jinv[:, :, a], Jinv[:, :, a2], ref.stiff_t)
            if a == a2:
                block = block + ref.mass_t
            G[:, ra, rb] = det[:, None, None] * block
    return G


def _volume_b(mesh: Mesh, config: Config, idx) -> np.ndarray:
    ref = reference_tables(config)
    det, Jinv = _geometry(mesh, idx)
    nv, nt, nu = config.n_v, config.n_tau, config.n_u
    Bv = np.zeros((len(idx), config.m, 3 * nu))
    for a in range(2):
        cols = slice((1 + a) * nu, (2 + a) * nu)
        rows = slice(nv + a * nt, nv + (a + 1) * nt)
        # (sigma_a, d_a v)
        Bv[:, :nv, cols] = np.einsum("e,eb,bij->eji", det, Jinv[:, :, a], ref.grad_v)
        # (sigma_a, tau_a)
        Bv[:, rows, cols] = det[:, None, None] * ref.mass_ut.T
        # (u, d_a tau_a)
        Bv[:, rows, :nu] = np.einsum("e,eb,bij->eji", det, Jinv[:, :, a], ref.grad_t)
    return Bv


def _face_blocks(mesh: Mesh, config: Config, k: int, B: np.ndarray, col: int) -> int:
    """Write the jump-term columns of element k into B starting at ``col``."""
    ref = reference_tables(config)
    nv, nt = config.n_v, config.n_tau
    nuh, nsh = config.n_uhat, config.n_sigmahat
    for inc in mesh.skeleton.incidence[k]:
        face = mesh.faces[inc.face]
        key = (inc.edge, inc.sub, inc.reversed)
        scale = -inc.sign * face.length
        if face.in_g0:
            Et = ref.face_t[key]
            for a in range(2):
                B[nv + a * nt : nv + (a + 1) * nt, col : col + nuh] = scale * face.normal[a] * Et
            col += nuh
        B[:nv, col : col + nsh] = scale * ref.face_v[key]
        col += nsh
    return col


def local_b(mesh: Mesh, k: int, config: Config) -> np.ndarray:
    """Element form matrix B_K (m x t_K), columns ordered as DofMap.element_dofs(k)."""
    nu = config.n_u
    Bv = _volume_b(mesh, config, [k])[0]
    t = 3 * nu + sum(
        (config.n_uhat if mesh.faces[inc.face].in_g0 else 0) + config.n_sigmahat
        for inc in mesh.skeleton.incidence[k]
    )
    B = np.zeros((config.m, t))
    B[:, : 3 * nu] = Bv
    end = _face_blocks(mesh, config, k, B, 3 * nu)
    assert end == t
    return B


def local_gram(mesh: Mesh, k: int, config: Config) -> np.ndarray:
    return local_grams(mesh, config, [k])[0]


def local_loads(mesh: Mesh, config: Config, f, elements=None) -> np.ndarray:
    """Stacked loads F_K = (f, v)_K on the scalar test rows, zero on tau rows.

    ``f`` is a vectorized callable f(x, y) sampled at quadrature points only.
    """
    idx = _as_index(mesh, elements)
    F = np.zeros((len(idx), config.m))
    if f is None:
        return F
    ref = reference_tables(config)
    rule = ref.vol_rule
    det, _ = _geometry(mesh, idx)
    xq = mesh.map_points(rule.points)[idx]
    fq = np.broadcast_to(np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float), xq.shape[:2])
    F[:, : config.n_v] = det[:, None] * np.einsum("eq,q,iq->ei", fq, rule.weights, ref.V)
    return F


def local_load(mesh: Mesh, k: int, config: Config, f) -> np.ndarray:
    return local_loads(mesh, config, f, [k])[0]


@dataclass
class LocalSystem:
    G: np.ndarray
    B: np.ndarray
    F: np.ndarray
    dofs: np.ndarray
    _chol: tuple | None = field(default=None, repr=False)

    def cholesky(self):
        if self._chol is None:
            self._chol = sla.cho_factor(self.G, lower=True)
        return self._chol


def local_system(mesh: Mesh, k: int, config: Config, f=None, dofmap: DofMap | None = None) -> LocalSystem:
    dofmap = dofmap or DofMap(mesh, config)
    return LocalSystem(
        local_gram(mesh, k, config), local_b(mesh, k, config), local_load(mesh, k, config, f), dofmap.element_dofs(k)
    )


def optimal_test_coeffs(local: LocalSystem, phi_local) -> np.ndarray:
    """Element representation G_K^-1 B_K phi of the optimal test function."""
    return sla.cho_solve(local.cholesky(), local.B @ np.asarray(phi_local, dtype=float))


@dataclass
class ElementBatch:
    """Local systems of every element, kept for residual evaluation."""

    G: np.ndarray  # (nE, m, m)
    B: list  # m x t_K per element
    F: np.ndarray  # (nE, m)
    dofs: list

    def __getitem__(self, k) -> LocalSystem:
        return LocalSystem(self.G[k], self.B[k], self.F[k], self.dofs[k])


@dataclass
class GlobalSystem:
    """Condensed normal equations A x = rhs with A symmetric by construction."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    elements: ElementBatch

    @property
    def N(self) -> int:
        return self.dofmap.N


def element_batch(mesh: Mesh, config: Config, f=None, dofmap: DofMap | None = None) -> ElementBatch:
    dofmap = dofmap or DofMap(mesh, config)
    idx = np.arange(mesh.n_elements)
    G = local_grams(mesh, config, idx)
    F = local_loads(mesh, config, f, idx)
    Bv = _volume_b(mesh, config, idx)
    nu3 = 3 * config.n_u
    Bs, dofs = [], []
    for k in idx:
        d = dofmap.element_dofs(k)
        B = np.zeros((config.m, len(d)))
        B[:, :nu3] = Bv[k]
        _face_blocks(mesh, config, k, B, nu3)
        Bs.append(B)
        dofs.append(d)
    return ElementBatch(G, Bs, F, dofs)


def assemble(mesh: Mesh, config: Config, f=None) -> GlobalSystem:
    """Assemble A = sum B_K^T G_K^-1 B_K and rhs = sum B_K^T G_K^-1 F_K.

    Raises kernels.LocalFactorizationError naming the element when a local
    Gram matrix fails to factor.
    """
    dofmap = DofMap(mesh, config)
    batch = element_batch(mesh, config, f, dofmap)
    t = np.array([len(d) for d in batch.dofs], dtype=np.int64)
    Bflat = np.concatenate([B.ravel() for B in batch.B])
    Aflat, rflat = kernels.condense(
        np.ascontiguousarray(batch.G), Bflat, t, np.ascontiguousarray(batch.F)
    )
    rows = np.concatenate([np.repeat(d, len(d)) for d in batch.dofs])
    cols = np.concatenate([np.tile(d, len(d)) for d in batch.dofs])
    # accumulate the upper triangle only, then mirror: A == A.T bitwise
    keep = rows <= cols
    upper = sp.coo_matrix((Aflat[keep], (rows[keep], cols[keep])), shape=(dofmap.N, dofmap.N)).tocsr()
    A = (upper + sp.triu(upper, k=1).T).tocsr()
    A.sort_indices()
    rhs = np.zeros(dofmap.N)
    np.add.at(rhs, np.concatenate(batch.dofs), rflat)
    return GlobalSystem(A, rhs, dofmap, batch)


def project_solution(mesh: Mesh, config: Config, u, grad_u, dofmap: DofMap | None = None) -> TrialCoefficients:
    """L2 projection of an exact solution onto U_h.

    u, sigma = grad u are projected elementwise; u-hat is the face-wise
    projection of the trace of u on G_0 and sigma-hat of grad u . n on G.
    ``u(x, y)`` and ``grad_u(x, y) -> (ux, uy)`` must be vectorized.
    """
    dofmap = dofmap or DofMap(mesh, config)
    ref = reference_tables(config)
    rule = tri_quadrature(2 * config.p + 8)
    phi = ref.trial.eval(rule.points)
    xq = mesh.map_points(rule.points)
    x, y = xq[..., 0], xq[..., 1]
    out = np.zeros(dofmap.N)
    cu = np.einsum("eq,q,iq->ei", np.broadcast_to(u(x, y), x.shape), rule.weights, phi)
    gx, gy = grad_u(x, y)
    cs = np.stack(
        [np.einsum("eq,q,iq->ei", np.broadcast_to(g, x.shape), rule.weights, phi) for g in (gx, gy)],
        axis=1,
    )
    out[dofmap.u_slice] = cu.ravel()
    out[dofmap.sigma_slice] = cs.ravel()
    erule = edge_quadrature(2 * config.p + 10)
    Eu = ref.uhat_basis.eval(erule.points)
    Es = ref.sigmahat_basis.eval(erule.points)
    V = mesh.vertices
    for g, face in enumerate(mesh.faces):
        a, b = V[face.vertices[0]], V[face.vertices[1]]
        pts = a + erule.points[:, None] * (b - a)
        if face.in_g0:
            vals = np.broadcast_to(u(pts[:, 0], pts[:, 1]), erule.points.shape)
            out[dofmap.uhat_offsets[g] : dofmap.uhat_offsets[g] + config.n_uhat] = (Eu * erule.weights) @ vals
        gx, gy = grad_u(pts[:, 0], pts[:, 1])
        flux = np.broadcast_to(gx, erule.points.shape) * face.normal[0] + np.broadcast_to(gy, erule.points.shape) * face.normal[1]
        out[dofmap.sigmahat_offsets[g] : dofmap.sigmahat_offsets[g] + config.n_sigmahat] = (Es * erule.weights) @ flux
    return TrialCoefficients(dofmap, out)
