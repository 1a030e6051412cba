import itertools
import json

import numpy as np
import pytest

from z2harmonic.cover import (
    SOLIDS,
    build_cover_spec,
    build_sign_cocycle,
    check_compatibility,
    cover_face_adjacency,
    deck_lift,
    equivariant_sector_dimension_check,
    find_face_sign_labeling,
    free_graph,
    group_closure,
    holonomy_report,
    lift_group_action,
    lift_rotation,
    reroute_cuts,
    solve_gauge,
    verify_labeling,
    write_cover_json,
)
from z2harmonic.groups import clockwise_rotation, rotation_order_about, symmetry_rotations
from z2harmonic.mesh import build_mesh
from z2harmonic.polyhedra import TETRAHEDRON

POLYHEDRA = [s for s in SOLIDS if s != "two-points"]


def test_tetrahedron_spec():
    spec = build_cover_spec("tetrahedron")
    assert spec.n_branch == 4
    np.testing.assert_array_equal(spec.branch_points[0], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(spec.branch_points, TETRAHEDRON, atol=1e-15)
    G = spec.branch_points @ spec.branch_points.T
    np.testing.assert_allclose(G[~np.eye(4, dtype=bool)], -1 / 3, atol=1e-14)


def test_antipodal_pair():
    spec = build_cover_spec("two-points", np.pi)
    np.testing.assert_allclose(spec.branch_points, [[0, 0, 1], [0, 0, -1]], atol=1e-15)
    assert spec.is_antipodal
    assert build_cover_spec("two-points").is_antipodal


def test_cube_dot_products():
    # brute force over all vertex pairs of the cube inscribed in the sphere
    corners = np.array(list(itertools.product((-1, 1), repeat=3))) / np.sqrt(3)
    expected = sorted(np.round(corners @ corners.T, 12).ravel())
    P = build_cover_spec("cube-vertices").branch_points
    assert len(P) == 8
    assert sorted(np.round(P @ P.T, 12).ravel()) == expected
    assert set(np.round(P @ P.T, 12).ravel()) == {1.0, -1.0, round(1 / 3, 12), round(-1 / 3, 12)}


@pytest.mark.parametrize("solid", SOLIDS)
def test_spec_invariants(solid):
    spec = build_cover_spec(solid)
    spec.validate()
    np.testing.assert_allclose(np.linalg.norm(spec.branch_points, axis=1), 1.0, atol=1e-12)
    assert spec.n_branch in (2, 4, 8, 12, 20)


def test_branch_counts():
    counts = {s: build_cover_spec(s).n_branch for s in SOLIDS}
    assert counts == {"tetrahedron": 4, "cube-vertices": 8, "icosahedron-vertices": 12,
                      "icosahedron-face-midpoints": 20, "two-points": 2}


def test_cuts_deterministic_and_disjoint():
    a = build_cover_spec("cube-vertices").cuts
    b = build_cover_spec("cube-vertices").cuts
    assert a == b
    assert a == ((0, 5), (1, 4), (2, 7), (3, 6))
    assert build_cover_spec("tetrahedron").cuts == ((0, 1), (2, 3))


def test_unsupported_solid():
    with pytest.raises(ValueError):
        build_cover_spec("dodecahedron")
    with pytest.raises(ValueError):
        build_cover_spec("two-points", 0.0)
    with pytest.raises(ValueError):
        build_cover_spec("two-points", 4.0)


@pytest.mark.parametrize("solid", ["tetrahedron", "icosahedron-vertices"])
def test_holonomy_level0(solid):
    spec = build_cover_spec(solid)
    mesh = build_mesh(spec, 0)
    rep = holonomy_report(mesh, build_sign_cocycle(spec, mesh))
    assert rep["ok"]
    assert rep["branch_holonomy"] == [-1] * spec.n_branch


@pytest.mark.parametrize("solid", SOLIDS)
@pytest.mark.parametrize("level", [1, 3])
def test_holonomy_exhaustive(solid, level, mesh_case):
    spec, mesh, cocycle = mesh_case(solid, level)
    rep = holonomy_report(mesh, cocycle)
    assert rep["ok"]
    assert rep["branch_holonomy"] == [-1] * spec.n_branch
    assert rep["face_failures"] == []
    assert rep["nonbranch_vertex_failures"] == []


def test_two_point_pole_and_equator(mesh_case):
    spec, mesh, c = mesh_case("two-points", 3)
    for p in mesh.branch:
        assert c.cycle_product(mesh.fan(p)) == -1
    eq = np.flatnonzero(np.abs(mesh.vertices[mesh.triangles].mean(axis=1)[:, 2]) < 0.05)
    assert len(eq) > 0
    for t in mesh.triangles[eq]:
        assert c.cycle_product(list(t)) == 1


def test_cube_face_product(mesh_case):
    spec, mesh, c = mesh_case("cube-vertices", 2)
    # every edge sign appears twice in the product over all faces
    total = np.prod([c.cycle_product(list(t)) for t in mesh.triangles])
    assert total == 1
    links = np.prod([c.cycle_product(mesh.fan(v)) for v in range(mesh.n_vertices)])
    assert links == 1  # eight branch points, even


def test_cocycle_symmetric(mesh_case):
    spec, mesh, c = mesh_case("tetrahedron", 2)
    E = mesh.edges
    np.testing.assert_array_equal(c.sign(E[:, 0], E[:, 1]), c.sign(E[:, 1], E[:, 0]))
    assert set(np.unique(c.signs)) <= {-1, 1}


@pytest.mark.parametrize("solid", SOLIDS)
def test_gauge_invariance(solid, mesh_case):
    spec, mesh, c1 = mesh_case(solid, 2)
    c2 = build_sign_cocycle(spec, mesh, reroute_cuts(spec, mesh))
    assert not np.array_equal(c1.signs, c2.signs)
    s = solve_gauge(mesh, c1, c2)
    # edges into branch vertices carry no Dirichlet data and are not constrained
    e = mesh.edges
    keep = ~(mesh.is_branch[e[:, 0]] | mesh.is_branch[e[:, 1]])
    np.testing.assert_array_equal(c1.gauge(s).signs[keep], c2.signs[keep])


def test_deck_element(mesh_case):
    spec, mesh, c = mesh_case("tetrahedron", 2)
    lifts = lift_group_action(spec, mesh, c)
    deck = lifts[0]
    np.testing.assert_array_equal(deck.permutation, np.arange(mesh.n_vertices))
    assert np.all(deck.vertex_sign == -1)
    assert check_compatibility(mesh, c, deck)


@pytest.mark.parametrize("solid", SOLIDS)
def test_lift_relations(solid, mesh_case):
    spec, mesh, c = mesh_case(solid, 2)
    lifts = lift_group_action(spec, mesh, c)
    free = mesh.free
    deck = deck_lift(mesh.n_vertices)
    assert len(lifts) > 1
    for L in lifts[1:]:
        assert check_compatibility(mesh, c, L)
        m = L.order
        assert L.power(m).equals(deck, free)
        assert np.array_equal(L.power(2 * m).vertex_sign[free], np.ones(len(free)))
        np.testing.assert_array_equal(L.power(2 * m).permutation, np.arange(mesh.n_vertices))


def test_tetrahedron_fourth_power(mesh_case):
    spec, mesh, c = mesh_case("tetrahedron", 2)
    L = lift_group_action(spec, mesh, c)[1]
    a1 = lift_rotation(mesh, c, clockwise_rotation(spec.branch_points[0], 3))
    L4 = L.power(4)
    np.testing.assert_array_equal(L4.permutation, a1.permutation)
    # the "+" lift of a_1 is the one whose cube is the identity
    assert np.all(L4.power(3).vertex_sign[mesh.free] == 1)
    assert L4.equals(L.compose(deck_lift(mesh.n_vertices)), mesh.free)


def test_icosahedron_order_ten(mesh_case):
    spec, mesh, c = mesh_case("icosahedron-vertices", 1)
    lifts = lift_group_action(spec, mesh, c)
    free = mesh.free
    L = lifts[1]
    assert L.order == 5
    assert L.power(5).equals(lifts[0], free)
    powers = [L.power(k) for k in range(1, 11)]
    ident = powers[-1]
    assert np.all(ident.vertex_sign[free] == 1)
    assert all(not p.equals(ident, free) for p in powers[:-1])


@pytest.mark.parametrize("solid,order", [("tetrahedron", 24), ("cube-vertices", 24),
                                         ("icosahedron-vertices", 120), ("two-points", 6)])
def test_group_closure_order(solid, order, mesh_case):
    spec, mesh, c = mesh_case(solid, 1)
    elems, chars = group_closure(lift_group_action(spec, mesh, c), mesh.free)
    assert len(elems) == order
    assert set(chars.tolist()) == {-1, 1}


def test_rotation_groups():
    assert len(symmetry_rotations(build_cover_spec("tetrahedron").branch_points)) == 12
    assert len(symmetry_rotations(build_cover_spec("cube-vertices").branch_points)) == 24
    assert len(symmetry_rotations(build_cover_spec("icosahedron-vertices").branch_points)) == 60
    spec = build_cover_spec("icosahedron-vertices")
    R = symmetry_rotations(spec.branch_points)
    assert rotation_order_about(R, spec.branch_points[0]) == 5


def test_lift_needs_invariant_mesh(mesh_case):
    spec, mesh, c = mesh_case("tetrahedron", 1)
    bad = clockwise_rotation([1.0, 0.3, 0.2], 7)
    with pytest.raises(ValueError):
        lift_rotation(mesh, c, bad)


def test_free_graph_connected(mesh_case):
    from scipy.sparse import csgraph

    spec, mesh, c = mesh_case("cube-vertices", 2)
    n, _ = csgraph.connected_components(free_graph(mesh)[mesh.free][:, mesh.free])
    assert n == 1


@pytest.mark.parametrize("solid,count", [("tetrahedron", 8), ("cube-vertices", 12), ("icosahedron-vertices", 40),
                                         ("icosahedron-face-midpoints", 24)])
def test_labeling(solid, count):
    spec = build_cover_spec(solid)
    lab = find_face_sign_labeling(spec)
    assert lab.sign.size == count
    assert verify_labeling(spec, lab)
    assert lab.n_components == 1
    assert lab.sign[0, 0] == 1
    np.testing.assert_array_equal(lab.sign[:, 0], -lab.sign[:, 1])


def test_cube_labeling_unique():
    # brute force over all 2^12 sign patterns of the cover squares
    spec = build_cover_spec("cube-vertices")
    pairs = cover_face_adjacency(spec)
    good = []
    for bits in itertools.product((-1, 1), repeat=12):
        s = np.array(bits).reshape(6, 2)
        if np.all(s[:, 0] == -s[:, 1]) and all(s[u] != s[v] for u, v in pairs):
            good.append(s)
    assert len(good) == 2
    lab = find_face_sign_labeling(spec)
    assert any(np.array_equal(g, lab.sign) for g in good)
    np.testing.assert_array_equal(good[0], -good[1])


def test_tetrahedron_labeling_pattern():
    # each face and each of its three neighbours carry opposite signs on one sheet
    spec = build_cover_spec("tetrahedron")
    lab = find_face_sign_labeling(spec)
    assert sorted(lab.sign.ravel().tolist()) == [-1] * 4 + [1] * 4


def test_labeling_needs_polyhedron():
    with pytest.raises(ValueError):
        find_face_sign_labeling(build_cover_spec("two-points"))


@pytest.mark.parametrize("solid", POLYHEDRA)
def test_sector_smoke(solid, mesh_case):
    spec, mesh, c = mesh_case(solid, 3)
    lab = find_face_sign_labeling(spec)
    lifts = lift_group_action(spec, mesh, c)
    assert equivariant_sector_dimension_check(lab, lifts, mesh)
    assert not equivariant_sector_dimension_check(lab.flipped(1), lifts, mesh)


def test_cover_json(tmp_path, mesh_case):
    spec, mesh, c = mesh_case("tetrahedron", 1)
    path = tmp_path / "cover.json"
    write_cover_json(spec, path, c)
    doc = json.loads(path.read_text())
    assert doc["schema"] == 1
    assert len(doc["cover"]["branch_points"]) == 4
    assert doc["cover"]["cuts"] == [[0, 1], [2, 3]]
    assert len(doc["cocycle"]["edges"]) == len(mesh.edges)
    assert {row[2] for row in doc["cocycle"]["edges"]} == {-1, 1}
