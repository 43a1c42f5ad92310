"""Independent physical-space evaluations used as test oracles.

Everything here works from physical coordinates: faces are located on
element boundaries geometrically, orientation signs come from the element
centroid, and test/trial functions are evaluated by pulling physical points
back through the inverse affine map. None of the reference tables,
incidence lists or sub-face parametrizations of dpglab.dpg_core are used.
"""
import numpy as np

from dpglab.dpg_core import DofMap, element_batch
from dpglab.polybasis import EdgeBasis, TriBasis, edge_quadrature, tri_quadrature


class ElementOracle:
    def __init__(self, mesh, k, config):
        self.mesh, self.k, self.config = mesh, k, config
        X = mesh.vertices[mesh.elements[k]]
        self.X = X
        self.x0 = X[0]
        self.J = np.column_stack([X[1] - X[0], X[2] - X[0]])
        self.Jinv = np.linalg.inv(self.J)
        self.det = abs(np.linalg.det(self.J))
        self.centroid = X.mean(axis=0)
        self.vb = TriBasis(config.r)
        self.tb = TriBasis(config.p + 2)
        self.ub = TriBasis(config.p)

    def pull(self, x):
        return (x - self.x0) @ self.Jinv.T

    def scalar_test(self, x):
        v, g = self.vb.eval_grad(self.pull(x))
        return v, g @ self.Jinv  # physical gradient by the chain rule

    def vector_test(self, x):
        """Values (m_tau, n, 2) and divergences (m_tau, n) of [tau_x..., tau_y...]."""
        t, g = self.tb.eval_grad(self.pull(x))
        g = g @ self.Jinv
        nt, n = t.shape
        vals = np.zeros((2 * nt, n, 2))
        vals[:nt, :, 0] = t
        vals[nt:, :, 1] = t
        div = np.concatenate([g[:, :, 0], g[:, :, 1]])
        return vals, div

    def volume_points(self):
        rule = tri_quadrature(self.config.volume_quad_degree + 2)
        return self.x0 + rule.points @ self.J.T, rule.weights * self.det

    def gram(self):
        x, w = self.volume_points()
        v, gv = self.scalar_test(x)
        tv, dv = self.vector_test(x)
        nv = len(v)
        m = nv + len(tv)
        G = np.zeros((m, m))
        G[:nv, :nv] = (v * w) @ v.T + np.einsum("iqa,q,jqa->ij", gv, w, gv)
        G[nv:, nv:] = np.einsum("iqa,q,jqa->ij", tv, w, tv) + (dv * w) @ dv.T
        return G

    def faces_on_boundary(self):
        """(face id, sign) for every face of G lying on this element's boundary."""
        out = []
        V = self.mesh.vertices
        for g, face in enumerate(self.mesh.faces):
            a, b = V[face.vertices[0]], V[face.vertices[1]]
            for e in range(3):
                p, q = self.X[e], self.X[(e + 1) % 3]
                d = q - p
                L2 = d @ d
                ok = True
                for y in (a, b):
                    r = y - p
                    cross = d[0] * r[1] - d[1] * r[0]
                    t = (r @ d) / L2
                    if abs(cross) > 1e-12 * L2 or t < -1e-12 or t > 1 + 1e-12:
                        ok = False
                if ok:
                    mid = 0.5 * (a + b)
                    sign = 1.0 if np.dot(face.normal, mid - self.centroid) > 0 else -1.0
                    out.append((g, sign))
                    break
        return out

    def b_columns(self, dofmap: DofMap):
        """B_K as {global dof: column of length m} by direct quadrature."""
        cfg = self.config
        x, w = self.volume_points()
        v, gv = self.scalar_test(x)
        tv, dv = self.vector_test(x)
        u = self.ub.eval(self.pull(x))
        nv, m = len(v), len(v) + len(tv)
        cols = {}
        nu = cfg.n_u
        for i in range(nu):
            col = np.zeros(m)
            col[nv:] = (dv * w) @ u[i]  # (u, div tau)
            cols[dofmap.u_offsets[self.k] + i] = col
            for a in range(2):
                col = np.zeros(m)
                col[:nv] = (gv[:, :, a] * w) @ u[i]  # (sigma, grad v)
                col[nv:] = (tv[:, :, a] * w) @ u[i]  # (sigma, tau)
                cols[dofmap.sigma_offsets[self.k] + a * nu + i] = col
        V = self.mesh.vertices
        rule = edge_quadrature(cfg.face_quad_degree + 2)
        eu, es = EdgeBasis(cfg.p + 1), EdgeBasis(cfg.p)
        for g, sign in self.faces_on_boundary():
            face = self.mesh.faces[g]
            a, b = V[face.vertices[0]], V[face.vertices[1]]
            xs = a + rule.points[:, None] * (b - a)
            ws = rule.weights * face.length
            vf, _ = self.scalar_test(xs)
            tf, _ = self.vector_test(xs)
            tn = tf @ np.asarray(face.normal)
            if face.in_g0:
                for j, ej in enumerate(eu.eval(rule.points)):
                    col = np.zeros(m)
                    col[nv:] = -sign * (tn * ws) @ ej
                    cols[dofmap.uhat_offsets[g] + j] = col
            for j, ej in enumerate(es.eval(rule.points)):
                col = np.zeros(m)
                col[:nv] = -sign * (vf * ws) @ ej
                cols[dofmap.sigmahat_offsets[g] + j] = col
        return cols

    def b_matrix(self, dofmap, dofs):
        cols = self.b_columns(dofmap)
        assert set(cols) == set(int(d) for d in dofs)
        return np.column_stack([cols[int(d)] for d in dofs])

    def load(self, f):
        x, w = self.volume_points()
        v, _ = self.scalar_test(x)
        F = np.zeros(len(v) + 2 * self.tb.dim)
        F[: len(v)] = (v * w) @ f(x[:, 0], x[:, 1])
        return F


def project_scalar(mesh, basis, fn, degree=12):
    """Coefficients (nE, dim) of fn in the orthonormal reference basis on each element."""
    rule = tri_quadrature(degree)
    phi = basis.eval(rule.points)
    xq = mesh.map_points(rule.points)
    vals = np.broadcast_to(fn(xq[..., 0], xq[..., 1]), xq.shape[:2])
    return np.einsum("eq,q,iq->ei", vals, rule.weights, phi)


def element_test_coeffs(mesh, cfg, v=None, tau=None):
    """Per element test vectors of global functions v and tau = (tx, ty)."""
    out = np.zeros((mesh.n_elements, cfg.m))
    if v is not None:
        out[:, : cfg.n_v] = project_scalar(mesh, TriBasis(cfg.r), v)
    if tau is not None:
        tb = TriBasis(cfg.vector_degree)
        out[:, cfg.n_v : cfg.n_v + cfg.n_tau] = project_scalar(mesh, tb, tau[0])
        out[:, cfg.n_v + cfg.n_tau :] = project_scalar(mesh, tb, tau[1])
    return out


def accumulated_form(mesh, cfg, psi):
    """Global vector b(phi_j, psi) over all trial basis functions phi_j."""
    dm = DofMap(mesh, cfg)
    batch = element_batch(mesh, cfg, None, dm)
    acc = np.zeros(dm.N)
    for k in range(mesh.n_elements):
        np.add.at(acc, batch.dofs[k], psi[k] @ batch.B[k])
    return dm, acc


def hat_n2(x, y):
    """Continuous piecewise linear hat at (0.5, 0.5) on the two-by-two criss-cross-free mesh."""
    x, y = np.asarray(x) * 2 - 1, np.asarray(y) * 2 - 1
    val = np.where(x * y >= 0, 1 - np.maximum(np.abs(x), np.abs(y)), 1 - np.abs(x) - np.abs(y))
    return np.maximum(val, 0.0)
