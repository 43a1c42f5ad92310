"""Triangular meshes with 1-irregular hanging nodes and the face cover G.

Elements are counterclockwise vertex triples. Local edge ``e`` of an
element runs from its local vertex ``e`` to vertex ``(e + 1) % 3``.
The skeleton is covered by non-overlapping faces, each of which is an
entire edge of its owner element:

* conforming interior faces are owned by the adjacent element of smaller id;
* a coarse edge carrying a hanging node is covered by its two halves, each
  owned by the fine element that has it as an entire edge;
* face normals point out of the domain on the boundary and from the
  lower-id to the higher-id element in the interior.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

BOUNDARY = "boundary"
CONFORMING = "conforming"
HANGING = "hanging"

_KEY_DIGITS = 12


class MeshError(ValueError):
    """Mesh is inconsistent or uses an unsupported hanging-node pattern."""


@dataclass(frozen=True)
class Face:
    vertices: tuple[int, int]  # ordered along the owner's counterclockwise boundary
    owner: int
    owner_edge: int
    kind: str
    neighbor: int | None
    subface: int | None  # which half of the coarse neighbor's edge (hanging only)
    normal: tuple[float, float]
    length: float

    @property
    def in_g0(self) -> bool:
        return self.kind != BOUNDARY


class Incidence(NamedTuple):
    """A face lying on local edge ``edge`` of an element.

    ``sub`` is -1 when the face is the whole edge, otherwise 0/1 for the
    half starting at the edge's first/second vertex. ``reversed`` is True
    when the face parametrization runs against the edge direction.
    ``sign`` is +1 when the face normal points out of the element.
    """

    face: int
    edge: int
    sub: int
    reversed: bool
    sign: float


class Skeleton(NamedTuple):
    faces: list[Face]
    incidence: list[list[Incidence]]

    @property
    def g0(self) -> np.ndarray:
        return np.array([i for i, f in enumerate(self.faces) if f.in_g0], dtype=np.int64)


def _key(xy) -> tuple[float, float]:
    return (round(float(xy[0]), _KEY_DIGITS) + 0.0, round(float(xy[1]), _KEY_DIGITS) + 0.0)


class Mesh:
    """Immutable triangulation; the skeleton is extracted on construction."""

    def __init__(self, vertices, elements, levels=None):
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        elements = np.array(elements, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        if elements.size and (elements.min() < 0 or elements.max() >= len(vertices)):
            raise MeshError("element references a missing vertex")
        if levels is None:
            levels = np.zeros(len(elements), dtype=np.int64)
        levels = np.array(levels, dtype=np.int64).reshape(-1)
        if len(levels) != len(elements):
            raise MeshError("one level per element required")
        area2 = _signed_area2(vertices, elements)
        if np.any(area2 == 0.0):
            raise MeshError(f"degenerate element {int(np.flatnonzero(area2 == 0.0)[0])}")
        flip = area2 < 0
        elements[flip] = elements[flip][:, [0, 2, 1]]
        for arr in (vertices, elements, levels):
            arr.setflags(write=False)
        self.vertices = vertices
        self.elements = elements
        self.levels = levels
        self.skeleton = extract_skeleton(self)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def faces(self) -> list[Face]:
        return self.skeleton.faces

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * _signed_area2(self.vertices, self.elements)

    @cached_property
    def diameters(self) -> np.ndarray:
        x = self.vertices[self.elements]
        edges = x[:, [1, 2, 0]] - x
        return np.sqrt((edges**2).sum(axis=2)).max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map Jacobians J = [x1 - x0, x2 - x0], shape (nE, 2, 2)."""
        x = self.vertices[self.elements]
        return np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)

    def map_points(self, ref_pts) -> np.ndarray:
        """Physical coordinates of reference points on every element, (nE, npts, 2)."""
        x0 = self.vertices[self.elements[:, 0]]
        return x0[:, None, :] + np.einsum("eij,qj->eqi", self.jacobians, ref_pts)

    def adjacent_pairs(self) -> list[tuple[int, int]]:
        return [(f.owner, f.neighbor) for f in self.faces if f.neighbor is not None]

    @property
    def n_hanging_faces(self) -> int:
        return sum(f.kind == HANGING for f in self.faces)

    def __repr__(self):
        return (
            f"Mesh(vertices={len(self.vertices)}, elements={self.n_elements}, "
            f"faces={len(self.faces)}, hanging={self.n_hanging_faces})"
        )


def _signed_area2(vertices, elements):
    x = vertices[elements]
    d1 = x[:, 1] - x[:, 0]
    d2 = x[:, 2] - x[:, 0]
    return d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]


def build_unit_square(n: int) -> Mesh:
    """n x n squares on [0, 1]^2, each split along its (0,0)-(1,1) diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    elements = []
    for j in range(n):
        for i in range(n):
            elements.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            elements.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return Mesh(vertices, elements)


def extract_skeleton(mesh: Mesh) -> Skeleton:
    """Build the face cover G with owners, normals and element incidences.

    Raises MeshError for configurations other than conforming edges and
    single hanging nodes at edge midpoints.
    """
    V = mesh.vertices
    E = mesh.elements
    lookup = {_key(x): i for i, x in enumerate(V)}
    edge_map: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for k, tri in enumerate(E):
        for e in range(3):
            a, b = int(tri[e]), int(tri[(e + 1) % 3])
            edge_map.setdefault((min(a, b), max(a, b)), []).append((k, e))

    def edge_of(key):
        owners = edge_map.get((min(key), max(key)))
        return owners[0] if owners is not None and len(owners) == 1 else None

    records = []  # (owner, owner_edge, kind, neighbor, subface, nb_edge)
    sub_edges = set()
    coarse = []
    for key, owners in edge_map.items():
        if len(owners) > 2:
            raise MeshError(f"edge {key} shared by {len(owners)} elements")
        if len(owners) == 2:
            (k1, e1), (k2, e2) = sorted(owners)
            records.append((k1, e1, CONFORMING, k2, None, e2))
            continue
        k, e = owners[0]
        a, b = int(E[k, e]), int(E[k, (e + 1) % 3])
        m = lookup.get(_key(0.5 * (V[a] + V[b])))
        if m is not None:
            halves = [edge_of((a, m)), edge_of((m, b))]
            if None in halves:
                raise MeshError(
                    f"unsupported hanging pattern on edge {key} of element {k}: "
                    "mesh is not 1-irregular"
                )
            coarse.append((k, e, a, b, m, halves))
            sub_edges.add((min(a, m), max(a, m)))
            sub_edges.add((min(m, b), max(m, b)))
    for k, e, a, b, m, halves in coarse:
        for pos, (fk, fe) in enumerate(halves):
            records.append((fk, fe, HANGING, k, pos, e))

    boundary = []
    for key, owners in edge_map.items():
        if len(owners) == 1 and key not in sub_edges:
            k, e = owners[0]
            a, b = int(E[k, e]), int(E[k, (e + 1) % 3])
            if lookup.get(_key(0.5 * (V[a] + V[b]))) is not None:
                continue  # coarse edge, covered by its halves
            boundary.append((k, e))
    _check_boundary(mesh, boundary)
    for k, e in boundary:
        records.append((k, e, BOUNDARY, None, None, None))

    records.sort(key=lambda r: (r[0], r[1]))
    faces: list[Face] = []
    incidence: list[list[Incidence]] = [[] for _ in range(len(E))]
    for owner, oe, kind, nb, sub, nbe in records:
        a, b = int(E[owner, oe]), int(E[owner, (oe + 1) % 3])
        t = V[b] - V[a]
        length = float(np.hypot(t[0], t[1]))
        out = np.array([t[1], -t[0]]) / length
        owner_sign = 1.0 if (nb is None or owner < nb) else -1.0
        normal = owner_sign * out
        fid = len(faces)
        faces.append(
            Face((a, b), owner, oe, kind, nb, sub, (float(normal[0]), float(normal[1])), length)
        )
        incidence[owner].append(Incidence(fid, oe, -1, False, owner_sign))
        if nb is None:
            continue
        if abs(int(mesh.levels[owner]) - int(mesh.levels[nb])) > 1:
            raise MeshError(f"elements {owner} and {nb} differ by more than one level")
        ca, cb = int(E[nb, nbe]), int(E[nb, (nbe + 1) % 3])
        reversed_ = float(np.dot(t, V[cb] - V[ca])) < 0
        if kind == CONFORMING:
            incidence[nb].append(Incidence(fid, nbe, -1, reversed_, -owner_sign))
        else:
            incidence[nb].append(Incidence(fid, nbe, sub, reversed_, -owner_sign))
    for inc in incidence:
        inc.sort(key=lambda i: (i.edge, i.sub))
    return Skeleton(faces, incidence)


def _check_boundary(mesh: Mesh, boundary):
    """Boundary edges must have no element on their outer side."""
    if not boundary:
        return
    V, E = mesh.vertices, mesh.elements
    k = np.array([b[0] for b in boundary])
    e = np.array([b[1] for b in boundary])
    a = V[E[k, e]]
    b = V[E[k, (e + 1) % 3]]
    t = b - a
    length = np.hypot(t[:, 0], t[:, 1])
    out = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    probe = 0.5 * (a + b) + 1e-6 * length[:, None] * out
    x = V[E]
    # barycentric test of every probe against every element
    d1 = x[:, 1] - x[:, 0]
    d2 = x[:, 2] - x[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    for chunk in np.array_split(np.arange(len(probe)), max(1, len(probe) // 256)):
        r = probe[chunk, None, :] - x[None, :, 0, :]
        l1 = (r[..., 0] * d2[None, :, 1] - r[..., 1] * d2[None, :, 0]) / det
        l2 = (d1[None, :, 0] * r[..., 1] - d1[None, :, 1] * r[..., 0]) / det
        inside = (l1 > 0) & (l2 > 0) & (l1 + l2 < 1)
        if inside.any():
            i = int(np.argwhere(inside)[0, 0])
            raise MeshError(
                f"edge {e[chunk[i]]} of element {k[chunk[i]]} has no matching neighbor: "
                "unsupported hanging pattern"
            )


def refine(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """Red-refine the marked elements and close the mesh to 1-irregularity.

    Children of element (v0, v1, v2) with edge midpoints m01, m12, m20 are
    (v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20), inserted
    in place of the parent so element numbering is deterministic.
    """
    marked = set(int(i) for i in marked)
    if any(i < 0 or i >= mesh.n_elements for i in marked):
        raise ValueError("marked element id out of range")
    if not marked:
        return mesh
    verts = [tuple(x) for x in mesh.vertices]
    lookup = {_key(x): i for i, x in enumerate(mesh.vertices)}

    def midpoint(a, b):
        xy = (0.5 * (verts[a][0] + verts[b][0]), 0.5 * (verts[a][1] + verts[b][1]))
        key = _key(xy)
        if key not in lookup:
            lookup[key] = len(verts)
            verts.append(xy)
        return lookup[key]

    def has_vertex_at(a, b, t):
        xa, xb = verts[a], verts[b]
        return _key(((1 - t) * xa[0] + t * xb[0], (1 - t) * xa[1] + t * xb[1])) in lookup

    elems = [(tuple(int(v) for v in tri), int(lev)) for tri, lev in zip(mesh.elements, mesh.levels)]
    to_refine = marked
    while to_refine:
        new = []
        for i, ((v0, v1, v2), lev) in enumerate(elems):
            if i not in to_refine:
                new.append(((v0, v1, v2), lev))
                continue
            m01, m12, m20 = midpoint(v0, v1), midpoint(v1, v2), midpoint(v2, v0)
            new.extend(
                [
                    ((v0, m01, m20), lev + 1),
                    ((m01, v1, m12), lev + 1),
                    ((m20, m12, v2), lev + 1),
                    ((m01, m12, m20), lev + 1),
                ]
            )
        elems = new
        to_refine = set()
        for i, (tri, _) in enumerate(elems):
            for e in range(3):
                a, b = tri[e], tri[(e + 1) % 3]
                if has_vertex_at(a, b, 0.25) or has_vertex_at(a, b, 0.75):
                    to_refine.add(i)
                    break
    return Mesh(np.array(verts), [t for t, _ in elems], [lev for _, lev in elems])


def refine_uniform(mesh: Mesh) -> Mesh:
    return refine(mesh, range(mesh.n_elements))


def write_mesh(mesh: Mesh, path) -> None:
    lines = ["dpgmesh 1", str(len(mesh.vertices))]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.n_elements))
    lines += [f"{a} {b} {c} {lev}" for (a, b, c), lev in zip(mesh.elements.tolist(), mesh.levels.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    tokens = Path(path).read_text().split("\n")
    lines = [ln.strip() for ln in tokens if ln.strip()]
    if not lines or lines[0] != "dpgmesh 1":
        raise MeshError(f"{path}: missing 'dpgmesh 1' header")
    try:
        nv = int(lines[1])
        verts = [tuple(map(float, ln.split())) for ln in lines[2 : 2 + nv]]
        ne = int(lines[2 + nv])
        rows = [tuple(map(int, ln.split())) for ln in lines[3 + nv : 3 + nv + ne]]
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file") from exc
    if len(verts) != nv or len(rows) != ne or any(len(r) != 4 for r in rows):
        raise MeshError(f"{path}: malformed mesh file")
    return Mesh(verts, [r[:3] for r in rows], [r[3] for r in rows])
