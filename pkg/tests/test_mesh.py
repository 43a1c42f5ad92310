import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpglab.mesh import (
    BOUNDARY,
    CONFORMING,
    HANGING,
    Mesh,
    MeshError,
    build_unit_square,
    read_mesh,
    refine,
    refine_uniform,
    write_mesh,
)


def edge_set(mesh):
    """Distinct element edges, each as a sorted vertex pair."""
    return {tuple(sorted((int(t[e]), int(t[(e + 1) % 3])))) for t in mesh.elements for e in range(3)}


def skeleton_length(mesh):
    # perimeter identity: interior length is counted twice in the element perimeters
    V = mesh.vertices
    perim = sum(np.linalg.norm(V[t[e]] - V[t[(e + 1) % 3]]) for t in mesh.elements for e in range(3))
    return (perim + 4.0) / 2.0


def check_invariants(mesh):
    V = mesh.vertices
    faces = mesh.faces
    # cover / no overlap
    total = sum(f.length for f in faces)
    assert abs(total - skeleton_length(mesh)) <= 1e-12 * total
    assert abs(sum(f.length for f in faces if f.kind == BOUNDARY) - 4.0) < 1e-12
    for f in faces:
        a, b = f.vertices
        tri = [int(v) for v in mesh.elements[f.owner]]
        # entire face of its owner
        assert (tri[f.owner_edge], tri[(f.owner_edge + 1) % 3]) == (a, b)
        n = np.asarray(f.normal)
        assert abs(np.linalg.norm(n) - 1) < 1e-14
        assert abs(n @ (V[b] - V[a])) < 1e-12
        c_owner = V[mesh.elements[f.owner]].mean(axis=0)
        outward = n @ (0.5 * (V[a] + V[b]) - c_owner) > 0
        if f.kind == BOUNDARY:
            assert outward and not f.in_g0
        else:
            assert f.in_g0
            assert outward == (f.owner < f.neighbor)
        if f.kind == CONFORMING:
            assert f.owner < f.neighbor
        if f.kind == HANGING:
            assert mesh.levels[f.owner] == mesh.levels[f.neighbor] + 1
            assert mesh.diameters[f.neighbor] > mesh.diameters[f.owner]
    # every element edge is one face or the union of two
    for k, inc in enumerate(mesh.skeleton.incidence):
        per_edge = {}
        for i in inc:
            per_edge.setdefault(i.edge, []).append(i)
        assert sorted(per_edge) == [0, 1, 2]
        for e, items in per_edge.items():
            assert len(items) in (1, 2)
            p, q = V[mesh.elements[k][e]], V[mesh.elements[k][(e + 1) % 3]]
            assert abs(sum(faces[i.face].length for i in items) - np.linalg.norm(q - p)) < 1e-12
    for a, b in mesh.adjacent_pairs():
        ratio = mesh.diameters[a] / mesh.diameters[b]
        assert max(ratio, 1 / ratio) <= 2 + 1e-12


def test_unit_square_counts():
    m1 = build_unit_square(1)
    assert m1.n_elements == 2 and len(m1.faces) == 5 and len(m1.skeleton.g0) == 1
    assert sum(f.kind == BOUNDARY for f in m1.faces) == 4
    m2 = build_unit_square(2)
    assert m2.n_elements == 8 and len(edge_set(m2)) == 16 and len(m2.faces) == 16
    assert len(m2.skeleton.g0) == 8
    assert all(f.kind in (BOUNDARY, CONFORMING) for f in m2.faces)
    assert np.all(m2.levels == 0)


def test_boundary_normals_are_axis_vectors():
    V = build_unit_square(3).vertices
    for f in build_unit_square(3).faces:
        if f.kind != BOUNDARY:
            continue
        mid = 0.5 * (V[f.vertices[0]] + V[f.vertices[1]])
        expected = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}
        side = 0 if mid[1] == 0 else 1 if mid[0] == 1 else 2 if mid[1] == 1 else 3
        assert np.allclose(f.normal, expected[side], atol=1e-15)


def test_refine_cases():
    base = build_unit_square(1)
    assert refine(base, []) is base
    full = refine(base, [0, 1])
    assert full.n_elements == 8 and full.n_hanging_faces == 0
    one = refine(base, [0])
    assert one.n_elements == 5
    hanging = [f for f in one.faces if f.kind == HANGING]
    assert len(hanging) == 2
    coarse = hanging[0].neighbor
    assert all(f.neighbor == coarse for f in hanging)
    assert sorted(f.subface for f in hanging) == [0, 1]
    assert sum(f.length for f in hanging) == pytest.approx(np.sqrt(2), rel=1e-14)
    check_invariants(one)


def test_children_tile_parent():
    base = build_unit_square(2)
    fine = refine(base, [3])
    assert fine.areas.sum() == pytest.approx(base.areas.sum(), rel=1e-12)
    # children sit where the parent was
    assert np.allclose(fine.areas[3:7].sum(), base.areas[3], rtol=1e-12)


def test_invariants_on_fixtures(any_mesh):
    check_invariants(any_mesh)


def test_closure_keeps_one_irregular():
    m = build_unit_square(2)
    for _ in range(4):
        m = refine(m, [0])
        check_invariants(m)
    assert m.levels.max() == 4


@settings(max_examples=20, deadline=None)
@given(st.lists(st.lists(st.integers(0, 10_000), min_size=1, max_size=4), min_size=1, max_size=3))
def test_random_refinements(rounds):
    m = build_unit_square(2)
    for picks in rounds:
        m = refine(m, {i % m.n_elements for i in picks})
    check_invariants(m)


def test_orientation_fixed_on_construction():
    m = Mesh([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]])
    assert list(m.elements[0]) == [0, 2, 1]
    with pytest.raises(MeshError):
        Mesh([[0, 0], [1, 1], [2, 2]], [[0, 1, 2]])
    with pytest.raises(MeshError):
        Mesh([[0, 0], [1, 0]], [[0, 1, 2]])
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0


def test_io_round_trip(tmp_path, hanging_mesh):
    path = tmp_path / "m.txt"
    write_mesh(hanging_mesh, path)
    assert path.read_text().startswith("dpgmesh 1\n")
    back = read_mesh(path)
    assert np.array_equal(back.vertices, hanging_mesh.vertices)
    assert np.array_equal(back.elements, hanging_mesh.elements)
    assert np.array_equal(back.levels, hanging_mesh.levels)
    assert back.faces == hanging_mesh.faces


def test_malformed_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("dpgmesh 2\n0\n0\n")
    with pytest.raises(MeshError):
        read_mesh(path)
    path.write_text("dpgmesh 1\n3\n0 0\n1 0\n")
    with pytest.raises(MeshError):
        read_mesh(path)


def test_two_irregular_input_rejected(tmp_path):
    # split the diagonal twice on one side only, bypassing the closure
    one = refine(build_unit_square(1), [0])
    verts = [tuple(v) for v in one.vertices]
    elems = [tuple(int(v) for v in t) for t in one.elements]
    lookup = {v: i for i, v in enumerate(verts)}

    def mid(a, b):
        xy = tuple(0.5 * (np.array(verts[a]) + np.array(verts[b])))
        if xy not in lookup:
            lookup[xy] = len(verts)
            verts.append(xy)
        return lookup[xy]

    coarse = next(f.neighbor for f in one.faces if f.kind == HANGING)
    fine_owner = next(f.owner for f in one.faces if f.kind == HANGING)
    v0, v1, v2 = elems[fine_owner]
    m01, m12, m20 = mid(v0, v1), mid(v1, v2), mid(v2, v0)
    elems[fine_owner : fine_owner + 1] = [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]
    path = tmp_path / "two_irregular.txt"
    lines = ["dpgmesh 1", str(len(verts))] + [f"{x!r} {y!r}" for x, y in verts]
    lines += [str(len(elems))] + [f"{a} {b} {c} 0" for a, b, c in elems]
    path.write_text("\n".join(lines) + "\n")
    assert coarse not in range(fine_owner, fine_owner + 4)
    with pytest.raises(MeshError):
        read_mesh(path)


def test_uniform_refinement_halves_h():
    m = build_unit_square(2)
    f = refine_uniform(m)
    assert f.h_max == pytest.approx(m.h_max / 2, rel=1e-14)
    assert f.n_elements == 4 * m.n_elements and f.n_hanging_faces == 0
