import numpy as np
import pytest
from scipy import sparse
from scipy.optimize import brentq
from scipy.special import jv

from z2harmonic.cover import (
    SignCocycle,
    build_sign_cocycle,
    find_face_sign_labeling,
    group_closure,
    labeling_section,
    lift_group_action,
    reroute_cuts,
)
from z2harmonic.mesh import SphereMesh
from z2harmonic.spectral import (
    SectorProjector,
    annulus_inequality_check,
    assemble,
    mobius_circle_eigenvalue,
    mobius_circle_exact,
    rayleigh_quotient,
    sector_projector,
    solve_lowest,
    write_coo,
)


def untwisted(mesh):
    """Same triangulation with no branch points and the trivial cocycle."""
    plain = SphereMesh(mesh.vertices, mesh.triangles, mesh.level, mesh.symmetric_under, mesh.rotations,
                       np.zeros(0, dtype=np.int64), mesh.base_owner)
    return plain, SignCocycle(plain.edges, np.ones(len(plain.edges), dtype=np.int8), plain.n_vertices)


def sector(mesh_case, solid, level):
    spec, mesh, c = mesh_case(solid, level)
    ops = assemble(mesh, c)
    lifts = lift_group_action(spec, mesh, c)
    return spec, mesh, c, ops, lifts, sector_projector(lifts, mesh.free)


def test_stiffness_symmetric_psd(mesh_case):
    _, mesh, c = mesh_case("tetrahedron", 3)
    ops = assemble(mesh, c)
    K = ops.K.toarray()
    np.testing.assert_array_equal(K, K.T)
    X = np.random.default_rng(0).standard_normal((K.shape[0], 1000))
    assert np.einsum("ij,ij->j", X, K @ X).min() >= 0


def test_dimension_mismatch(mesh_case):
    _, mesh, c = mesh_case("tetrahedron", 2)
    _, other, _ = mesh_case("tetrahedron", 3)
    with pytest.raises(ValueError):
        assemble(other, c)


def test_untwisted_constants(mesh_case):
    _, mesh, _ = mesh_case("icosahedron-vertices", 3)
    plain, c = untwisted(mesh)
    res = solve_lowest(assemble(plain, c), count=4)
    assert abs(res.eigenvalue) < 1e-9
    f = res.section
    np.testing.assert_allclose(f, f.mean(), rtol=1e-8)
    # degree-1 spherical harmonics: l(l+1) = 2, threefold
    np.testing.assert_allclose(res.eigenvalues[1:], 2.0, rtol=5e-3)


def test_mobius_circle():
    lam = mobius_circle_eigenvalue(10_000)
    assert lam == pytest.approx(0.25, rel=5e-3)
    assert lam == pytest.approx(mobius_circle_exact(10_000), rel=1e-10)
    assert mobius_circle_eigenvalue(64) == pytest.approx(mobius_circle_exact(64), rel=1e-10)


def test_projector_identities(mesh_case):
    spec, mesh, c, ops, lifts, P = sector(mesh_case, "tetrahedron", 3)
    D = P.dense()
    np.testing.assert_allclose(D @ D, D, atol=1e-12)
    K, M = ops.K.toarray(), ops.M.toarray()
    assert np.linalg.norm(D @ K - K @ D) / np.linalg.norm(K) < 1e-10
    assert np.linalg.norm(D @ M - M @ D) / np.linalg.norm(M) < 1e-10


@pytest.mark.parametrize("solid", ["cube-vertices", "icosahedron-vertices", "two-points"])
def test_projector_commutes(solid, mesh_case):
    spec, mesh, c, ops, lifts, P = sector(mesh_case, solid, 3)
    X = np.random.default_rng(1).standard_normal((len(mesh.free), 4))
    lhs, rhs = P(ops.K @ X), ops.K @ P(X)
    assert np.linalg.norm(lhs - rhs) / np.linalg.norm(ops.K @ X) < 1e-10


def test_labeling_section_fixed(mesh_case):
    spec, mesh, c, ops, lifts, P = sector(mesh_case, "tetrahedron", 3)
    x = labeling_section(find_face_sign_labeling(spec), mesh)[mesh.free]
    np.testing.assert_allclose(P(x), x, atol=1e-12)


def test_other_sectors_project_to_zero(mesh_case):
    spec, mesh, c, ops, lifts, P = sector(mesh_case, "tetrahedron", 3)
    elems, _ = group_closure(lifts, mesh.free)
    y = np.random.default_rng(2).standard_normal(mesh.n_vertices)
    y[mesh.branch] = 0
    # the deck element acts as -1, so the trivial-character average vanishes
    even = sum(g.apply(y) for g in elems)
    assert np.linalg.norm(even) < 1e-12 * np.linalg.norm(y)
    # unconstrained eigenvectors below the sector minimum lie in other sectors
    E0 = solve_lowest(ops, P).eigenvalue
    res = solve_lowest(ops, count=6)
    low = res.eigenvalues < E0 - 1e-6
    assert low.sum() >= 3
    for f in res.sections[:, low].T:
        x = f[mesh.free]
        assert np.linalg.norm(P(x)) < 1e-8 * np.linalg.norm(x)


def test_character_inconsistency(mesh_case):
    spec, mesh, c = mesh_case("tetrahedron", 2)
    lifts = lift_group_action(spec, mesh, c)
    lifts[1].vertex_sign = -lifts[1].vertex_sign  # now its cube is the identity
    with pytest.raises(ValueError, match="character"):
        sector_projector(lifts, mesh.free)


def test_two_point_eigenvalue(solve_case):
    res = solve_case("two-points", 5, "t-star").result
    assert res.eigenvalue == pytest.approx(0.75, rel=1e-2)
    assert res.residual < 1e-9


def test_untwisted_zero(mesh_case):
    _, mesh, _ = mesh_case("two-points", 4)
    plain, c = untwisted(mesh)
    assert abs(solve_lowest(assemble(plain, c)).eigenvalue) < 1e-9


def test_tetrahedron_stable(solve_case):
    e5 = solve_case("tetrahedron", 5, "t0").result.eigenvalue
    e6 = solve_case("tetrahedron", 6, "t0").result.eigenvalue
    assert e6 > 0
    assert abs(e5 - e6) / e6 < 1e-2


def test_result_invariants(solve_case):
    case = solve_case("tetrahedron", 5, "t0")
    res = case.result
    f = res.section
    assert np.all(f[case.mesh.branch] == 0)
    assert np.sum(case.tables.vertex_area * f**2) == pytest.approx(1.0, rel=1e-12)
    assert rayleigh_quotient(case.ops, f) == pytest.approx(res.eigenvalue, rel=1e-9)
    assert res.residual < 1e-9
    np.testing.assert_allclose(case.projector(f[case.mesh.free]), f[case.mesh.free], atol=1e-10)


def test_large_pencil_path(mesh_case):
    # above the dense limit the shift-invert Lanczos path runs
    _, mesh, c = mesh_case("two-points", 5)
    res = solve_lowest(assemble(mesh, c), seed=3)
    assert res.iterations > 1
    assert res.eigenvalue == pytest.approx(0.7553962, rel=1e-6)


def test_seed_determinism(mesh_case):
    _, mesh, c = mesh_case("two-points", 4)
    ops = assemble(mesh, c)
    a, b = solve_lowest(ops, seed=5), solve_lowest(ops, seed=5)
    np.testing.assert_array_equal(a.section, b.section)


@pytest.mark.parametrize("solid", ["tetrahedron", "two-points"])
def test_gauge_invariant_spectrum(solid, mesh_case):
    spec, mesh, c1 = mesh_case(solid, 4)
    c2 = build_sign_cocycle(spec, mesh, reroute_cuts(spec, mesh))
    w1 = solve_lowest(assemble(mesh, c1), count=3).eigenvalues
    w2 = solve_lowest(assemble(mesh, c2), count=3).eigenvalues
    np.testing.assert_allclose(w1, w2, rtol=1e-10)


def test_bad_inputs(mesh_case):
    _, mesh, c = mesh_case("tetrahedron", 2)
    ops = assemble(mesh, c)
    with pytest.raises(ValueError):
        solve_lowest(ops, tol=0)
    empty = SectorProjector(sparse.csc_matrix((len(mesh.free), 0)), 1, 0)
    with pytest.raises(ValueError, match="empty"):
        solve_lowest(ops, empty)


def _bessel_zero(nu):
    return brentq(lambda x: jv(nu, x), nu + 0.5, nu + 4.5)


@pytest.mark.parametrize("N", [None, 1, 2])
def test_annulus_two_point(N, mesh_case):
    _, mesh, c = mesh_case("two-points", 5)
    rho = 0.3
    ratio = annulus_inequality_check(mesh, c, 0, 0.0, rho, N)
    n = N or 0
    assert ratio <= 4 * rho**2 / (2 * n + 1) ** 2 * 1.1
    # flat-disc oracle: Dirichlet eigenvalue (j/rho)^2, j the first zero of J_{n+1/2}
    assert ratio == pytest.approx(rho**2 / _bessel_zero(n + 0.5) ** 2, rel=0.15)


def test_annulus_with_hole(mesh_case):
    _, mesh, c = mesh_case("tetrahedron", 5)
    full = annulus_inequality_check(mesh, c, 0, 0.0, 0.4)
    ring = annulus_inequality_check(mesh, c, 0, 0.1, 0.4)
    assert ring < full <= 4 * 0.4**2 * 1.1


def test_annulus_errors(mesh_case):
    _, mesh, c = mesh_case("two-points", 3)
    plain, c0 = untwisted(mesh)
    plain.branch = mesh.branch  # same centre, but with the trivial cocycle
    with pytest.raises(ValueError, match="untwisted"):
        annulus_inequality_check(plain, c0, 0, 0.0, 0.3)
    _, tm, tc = mesh_case("tetrahedron", 3)
    with pytest.raises(ValueError, match="another branch point"):
        annulus_inequality_check(tm, tc, 0, 0.0, 2.0)
    with pytest.raises(ValueError):
        annulus_inequality_check(tm, tc, 10, 0.0, 0.2)


def test_coo_export(tmp_path, mesh_case):
    _, mesh, c = mesh_case("tetrahedron", 1)
    K = assemble(mesh, c).K
    path = tmp_path / "K.txt"
    write_coo(K, path)
    lines = path.read_text().splitlines()
    n, m, nnz = map(int, lines[0][1:].split())
    data = np.loadtxt(lines[1:])
    A = sparse.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))
    assert nnz == K.nnz
    np.testing.assert_array_equal(A.toarray(), K.toarray())
