"""Combinatorics of the real line bundle over S^2 minus a symmetric branch set.

The bundle is encoded as a +-1 cocycle on mesh edges, its sections as
cocycle-twisted vertex functions.  This module also lifts the rotation
group to the bundle and finds the alternating face labelings of the
branched double cover.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .groups import clockwise_rotation, permutation_of, rotation_order_about, symmetry_rotations
from .polyhedra import (
    TETRAHEDRON,
    capped_antiprism,
    hull_faces,
    icosahedron_vertices,
    triangulate_faces,
    two_point_warp,
)

SOLIDS = (
    "tetrahedron",
    "cube-vertices",
    "icosahedron-vertices",
    "icosahedron-face-midpoints",
    "two-points",
)
GROUP_OF = {
    "tetrahedron": "tetrahedral",
    "cube-vertices": "octahedral",
    "icosahedron-vertices": "icosahedral",
    "icosahedron-face-midpoints": "icosahedral",
    "two-points": "axial",
}


@dataclass(eq=False)
class BranchedCoverSpec:
    """Branch set, cut system and base triangulation for one cover.

    The branch points are the first ``n_branch`` base vertices.  ``faces``
    lists the polygons of the base polyhedron (None for two points) and
    ``face_of_triangle`` maps each base triangle to its polygon.
    """

    solid: str
    branch_points: np.ndarray
    cuts: tuple
    group_name: str
    base_vertices: np.ndarray
    base_triangles: np.ndarray
    faces: list | None = None
    face_of_triangle: np.ndarray | None = None
    angle: float | None = None
    lift_order: int | None = None  # rotation order of the generators when not the full stabilizer
    unwarped_base_vertices: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_branch(self) -> int:
        return len(self.branch_points)

    @property
    def is_antipodal(self) -> bool:
        return self.solid != "two-points" or abs(self.angle - np.pi) < 1e-15

    def rotations(self) -> np.ndarray:
        """Rotation group acting on the base mesh (identity only for a skewed pair)."""
        if not self.is_antipodal:
            return np.eye(3)[None]
        return symmetry_rotations(self.base_vertices)

    def validate(self) -> None:
        n = self.n_branch
        if n % 2 or n not in (2, 4, 8, 12, 20):
            raise ValueError(f"unexpected branch count {n}")
        if np.max(np.abs(np.linalg.norm(self.branch_points, axis=1) - 1.0)) > 1e-12:
            raise ValueError("branch points must lie on the unit sphere")
        ends = [v for c in self.cuts for v in (c[0], c[-1])]
        if sorted(ends) != list(range(n)):
            raise ValueError("every branch point must end exactly one cut")
        seen = set()
        for c in self.cuts:
            if c[0] == c[-1]:
                raise ValueError("cut joins a branch point to itself")
            for a, b in zip(c[:-1], c[1:]):
                e = (min(a, b), max(a, b))
                if e in seen:
                    raise ValueError(f"cuts share the edge {e}")
                seen.add(e)

    def to_dict(self) -> dict:
        return {
            "solid": self.solid,
            "angle": self.angle,
            "group": self.group_name,
            "branch_points": np.round(self.branch_points, 15).tolist(),
            "cuts": [list(map(int, c)) for c in self.cuts],
        }


def _edge_adjacency(n, triangles):
    tri = np.asarray(triangles)
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    A = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    A = ((A + A.T) > 0).astype(np.int8)
    return [sorted(A.indices[A.indptr[i] : A.indptr[i + 1]].tolist()) for i in range(n)]


def _shortest_path(adj, a, b, blocked):
    prev = {a: None}
    queue = deque([a])
    while queue:
        v = queue.popleft()
        if v == b:
            break
        for w in adj[v]:
            if w not in prev and (w == b or w not in blocked):
                prev[w] = v
                queue.append(w)
    if b not in prev:
        return None
    path = [b]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def choose_cuts(n_branch, adjacency):
    """Lexicographically first pairing whose BFS paths are vertex-disjoint.

    Paths avoid other branch points and previously chosen paths; ties are
    broken by neighbour index, so the result is deterministic.
    """
    branch = set(range(n_branch))

    def search(unmatched, used):
        if not unmatched:
            return []
        a = unmatched[0]
        for b in unmatched[1:]:
            blocked = (branch - {a, b}) | used
            path = _shortest_path(adjacency, a, b, blocked)
            if path is None:
                continue
            rest = search([v for v in unmatched if v not in (a, b)], used | set(path))
            if rest is not None:
                return [tuple(path)] + rest
        return None

    cuts = search(list(range(n_branch)), set())
    if cuts is None:
        raise ValueError("no vertex-disjoint cut system exists for this branch set")
    return tuple(cuts)


def _polyhedral(points, solid):
    faces = hull_faces(points)
    V, T, owner = triangulate_faces(points, faces)
    n = len(points)
    # polygon edges only: cuts run along edges of the polyhedron
    adj = [set() for _ in range(n)]
    for f in faces:
        for a, b in zip(f, f[1:] + f[:1]):
            adj[a].add(b)
            adj[b].add(a)
    cuts = choose_cuts(n, [sorted(s) for s in adj])
    return BranchedCoverSpec(
        solid=solid,
        branch_points=V[:n].copy(),
        cuts=cuts,
        group_name=GROUP_OF[solid],
        base_vertices=V,
        base_triangles=T,
        faces=faces,
        face_of_triangle=owner,
    )


def build_cover_spec(solid: str, angle: float | None = None) -> BranchedCoverSpec:
    """Cover data for one of the supported branch sets.

    ``angle`` is the angular separation of the pair for ``"two-points"``
    (default pi, the antipodal pair).
    """
    solid = solid.lower().replace("_", "-")
    if solid not in SOLIDS:
        raise ValueError(f"unsupported solid {solid!r}; choose from {', '.join(SOLIDS)}")
    if solid == "tetrahedron":
        spec = _polyhedral(TETRAHEDRON.copy(), solid)
    elif solid == "cube-vertices":
        spec = _polyhedral(np.vstack([TETRAHEDRON, -TETRAHEDRON]), solid)
    elif solid == "icosahedron-vertices":
        spec = _polyhedral(icosahedron_vertices(), solid)
    elif solid == "icosahedron-face-midpoints":
        ico = icosahedron_vertices()
        centres = np.array([ico[f].mean(axis=0) for f in hull_faces(ico)])
        spec = _polyhedral(centres / np.linalg.norm(centres, axis=1)[:, None], solid)
    else:
        angle = np.pi if angle is None else float(angle)
        if not 0.0 < angle <= np.pi:
            raise ValueError("two-point angle must lie in (0, pi]")
        V0, T = capped_antiprism()
        V = two_point_warp(V0, angle)
        V[1] = [np.sin(angle), 0.0, np.cos(angle)] if angle < np.pi else [0.0, 0.0, -1.0]
        spec = BranchedCoverSpec(
            solid=solid,
            branch_points=V[:2].copy(),
            cuts=choose_cuts(2, _edge_adjacency(len(V0), T)),
            lift_order=3,
            group_name="axial",
            base_vertices=V,
            base_triangles=T,
            angle=angle,
            unwarped_base_vertices=V0,
        )
    spec.validate()
    return spec


# ---------------------------------------------------------------- cocycle


@dataclass(eq=False)
class SignCocycle:
    """+-1 per unoriented mesh edge (``mesh.edges`` order); symmetric by construction."""

    edges: np.ndarray
    signs: np.ndarray
    n_vertices: int

    def __post_init__(self):
        self._keys = self.edges[:, 0] * self.n_vertices + self.edges[:, 1]

    def sign(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        key = np.minimum(i, j) * self.n_vertices + np.maximum(i, j)
        pos = np.searchsorted(self._keys, key)
        if np.any(pos >= len(self._keys)) or np.any(self._keys[np.minimum(pos, len(self._keys) - 1)] != key):
            raise KeyError("pair is not a mesh edge")
        return self.signs[pos]

    def gauge(self, s) -> "SignCocycle":
        """Cocycle of the bundle after the vertex sign change ``s``."""
        s = np.asarray(s)
        return SignCocycle(self.edges, (self.signs * s[self.edges[:, 0]] * s[self.edges[:, 1]]).astype(np.int8), self.n_vertices)

    def cycle_product(self, cycle) -> int:
        c = list(cycle)
        return int(np.prod(self.sign(c, c[1:] + c[:1])))

    def to_dict(self) -> dict:
        rows = np.column_stack([self.edges, self.signs]).tolist()
        return {"n_vertices": int(self.n_vertices), "edges": rows}


def build_sign_cocycle(spec: BranchedCoverSpec, mesh, cuts=None) -> SignCocycle:
    """Cocycle that is -1 on the edges leaving each cut path to its left.

    ``cuts`` defaults to the cover's cut system refined onto ``mesh``; an
    explicit list of mesh vertex paths can be given to re-route them.
    A path with no interior vertex (coarsest meshes) flips its own edge.
    """
    if cuts is None:
        try:
            cuts = [mesh.refine_path(c) for c in spec.cuts]
        except ValueError as exc:
            raise ValueError(f"cut path not realizable on mesh: {exc}") from None
    signs = np.ones(len(mesh.edges), dtype=np.int8)
    for path in cuts:
        idx = mesh.edge_index(path[:-1], path[1:])
        if np.any(idx < 0):
            raise ValueError("cut path is not an edge path of the mesh")
        if len(path) == 2:
            signs[idx] *= -1
            continue
        for p, w, q in zip(path[:-2], path[1:-1], path[2:]):
            ring = mesh.fan(w)
            k = ring.index(q)
            ring = ring[k:] + ring[:k]
            left = ring[1 : ring.index(p)]
            signs[mesh.edge_index(np.full(len(left), w), left)] *= -1
    return SignCocycle(mesh.edges.copy(), signs, mesh.n_vertices)


def holonomy_report(mesh, cocycle: SignCocycle) -> dict:
    """Link products at every vertex and face products away from the branch set.

    Links of vertices adjacent to a branch point pass through it and are
    left out of the non-branch check.
    """
    branch = [cocycle.cycle_product(mesh.fan(int(b))) for b in mesh.branch]
    near = np.zeros(mesh.n_vertices, dtype=bool)
    for b in mesh.branch:
        near[mesh.fan(int(b))] = True
    bad_vertices = [int(v) for v in mesh.free if not near[v] and cocycle.cycle_product(mesh.fan(int(v))) != 1]
    T = mesh.triangles
    off = ~np.any(mesh.is_branch[T], axis=1)
    prod = cocycle.sign(T[:, 0], T[:, 1]) * cocycle.sign(T[:, 1], T[:, 2]) * cocycle.sign(T[:, 2], T[:, 0])
    bad_faces = np.flatnonzero(off & (prod != 1)).tolist()
    return {
        "branch_holonomy": branch,
        "nonbranch_vertex_failures": bad_vertices,
        "face_failures": bad_faces,
        "ok": all(h == -1 for h in branch) and not bad_vertices and not bad_faces,
    }


def free_graph(mesh, cocycle: SignCocycle | None = None):
    """Sparse adjacency between non-branch vertices (edge signs as data if given)."""
    e = mesh.edges
    keep = ~(mesh.is_branch[e[:, 0]] | mesh.is_branch[e[:, 1]])
    data = np.ones(keep.sum()) if cocycle is None else cocycle.signs[keep].astype(float)
    n = mesh.n_vertices
    A = sparse.coo_matrix((data, (e[keep, 0], e[keep, 1])), shape=(n, n))
    return (A + A.T).tocsr()


def _tree(mesh, root):
    A = free_graph(mesh)
    order, pred = csgraph.breadth_first_order(A, root, directed=False, return_predecessors=True)
    if len(order) != len(mesh.free):
        raise ValueError("non-branch vertices are disconnected; refine the mesh")
    return order, pred


def solve_gauge(mesh, c1: SignCocycle, c2: SignCocycle) -> np.ndarray:
    """Vertex signs s with c2_ij = s_i s_j c1_ij on non-branch edges; raises if none."""
    root = int(mesh.free[0])
    order, pred = _tree(mesh, root)
    s = np.ones(mesh.n_vertices, dtype=np.int8)
    t = c1.signs * c2.signs
    for v in order[1:]:
        u = pred[v]
        s[v] = s[u] * t[mesh.edge_index(u, v)]
    e = mesh.edges
    keep = ~(mesh.is_branch[e[:, 0]] | mesh.is_branch[e[:, 1]])
    if np.any((s[e[keep, 0]] * s[e[keep, 1]] * t[keep]) != 1):
        raise ValueError("cocycles are not gauge equivalent")
    return s


def reroute_cuts(spec: BranchedCoverSpec, mesh, which: int = 0):
    """Refined cuts with cut ``which`` replaced by a path avoiding its original interior."""
    cuts = [mesh.refine_path(c) for c in spec.cuts]
    adj = [mesh.fan(v) for v in range(mesh.n_vertices)]
    a, b = cuts[which][0], cuts[which][-1]
    blocked = set(mesh.branch.tolist()) - {a, b}
    for k, c in enumerate(cuts):
        blocked |= set(c if k != which else c[1:-1])
    if len(cuts[which]) == 2:
        raise ValueError("mesh too coarse to re-route a cut")
    path = _shortest_path([sorted(x) for x in adj], a, b, blocked)
    if path is None:
        raise ValueError("no alternative route for the cut")
    cuts[which] = path
    return cuts


# ---------------------------------------------------------------- lifted group


@dataclass(eq=False)
class LiftedSymmetry:
    """Signed vertex permutation: (g f)[perm[i]] = vertex_sign[i] * f[i]."""

    permutation: np.ndarray
    vertex_sign: np.ndarray
    label: str = ""
    rotation: np.ndarray | None = None

    def apply(self, f):
        f = np.asarray(f)
        out = np.empty_like(f)
        s = self.vertex_sign if f.ndim == 1 else self.vertex_sign[:, None]
        out[self.permutation] = s * f
        return out

    def compose(self, other: "LiftedSymmetry", label: str = "") -> "LiftedSymmetry":
        """``self`` after ``other``."""
        R = None
        if self.rotation is not None and other.rotation is not None:
            R = self.rotation @ other.rotation
        return LiftedSymmetry(
            self.permutation[other.permutation],
            (self.vertex_sign[other.permutation] * other.vertex_sign).astype(np.int8),
            label,
            R,
        )

    def power(self, k: int) -> "LiftedSymmetry":
        out = identity_lift(len(self.permutation))
        for _ in range(k):
            out = self.compose(out)
        out.label = f"({self.label})^{k}"
        return out

    def key(self, free) -> bytes:
        return self.permutation.tobytes() + self.vertex_sign[free].tobytes()

    def equals(self, other: "LiftedSymmetry", free) -> bool:
        return np.array_equal(self.permutation, other.permutation) and np.array_equal(
            self.vertex_sign[free], other.vertex_sign[free]
        )

    def matrix(self):
        n = len(self.permutation)
        return sparse.csr_matrix((self.vertex_sign.astype(float), (self.permutation, np.arange(n))), shape=(n, n))


def identity_lift(n) -> LiftedSymmetry:
    return LiftedSymmetry(np.arange(n), np.ones(n, dtype=np.int8), "(1, id)", np.eye(3))


def deck_lift(n) -> LiftedSymmetry:
    return LiftedSymmetry(np.arange(n), -np.ones(n, dtype=np.int8), "(-1, id)", np.eye(3))


def check_compatibility(mesh, cocycle: SignCocycle, lift: LiftedSymmetry) -> bool:
    """s_i s_j sigma(pi i, pi j) == sigma_ij on every non-branch edge."""
    e = mesh.edges
    keep = ~(mesh.is_branch[e[:, 0]] | mesh.is_branch[e[:, 1]])
    i, j = e[keep, 0], e[keep, 1]
    s = lift.vertex_sign
    lhs = s[i] * s[j] * cocycle.sign(lift.permutation[i], lift.permutation[j])
    return bool(np.all(lhs == cocycle.signs[keep]))


def lift_rotation(mesh, cocycle: SignCocycle, R, label: str = "") -> LiftedSymmetry:
    """Lift a mesh rotation to the bundle by transport along a BFS tree.

    The first non-branch vertex is the base vertex with sign +1.
    """
    try:
        perm = permutation_of(R, mesh.vertices)
    except ValueError as exc:
        raise ValueError(f"mesh is not invariant under the rotation: {exc}") from None
    if not np.array_equal(np.sort(perm[mesh.branch]), np.sort(mesh.branch)):
        raise ValueError("rotation does not preserve the branch set")
    root = int(mesh.free[0])
    order, pred = _tree(mesh, root)
    child = order[1:]
    parent = pred[child]
    t = cocycle.sign(parent, child) * cocycle.sign(perm[parent], perm[child])
    step = dict(zip(child.tolist(), t.tolist()))
    s = np.ones(mesh.n_vertices, dtype=np.int8)
    for v, u in zip(child.tolist(), parent.tolist()):
        s[v] = s[u] * step[v]
    lift = LiftedSymmetry(perm, s, label, np.asarray(R))
    if not check_compatibility(mesh, cocycle, lift):
        raise ValueError("sign transport is inconsistent; the cocycle is not invariant")
    return lift


def lift_group_action(spec: BranchedCoverSpec, mesh, cocycle: SignCocycle) -> list[LiftedSymmetry]:
    """The deck element followed by the generators (-1, a_p), one per branch point.

    a_p is the clockwise rotation about p of the order of its stabilizer.
    Each lift is normalized so that its order(a_p)-th power is the deck
    element.  Branch points with trivial stabilizer contribute nothing.
    """
    n = mesh.n_vertices
    free = mesh.free
    deck = deck_lift(n)
    out = [deck]
    for b, p in enumerate(spec.branch_points):
        m = rotation_order_about(mesh.rotations, p)
        if m > 1 and spec.lift_order is not None:
            if m % spec.lift_order:
                raise ValueError("lift order does not divide the stabilizer order")
            m = spec.lift_order
        if m == 1:
            continue
        R = clockwise_rotation(p, m)
        L = lift_rotation(mesh, cocycle, R, label=f"(-1, a_{b + 1})")
        Lm = L.power(m)
        if not np.array_equal(Lm.permutation, np.arange(n)):
            raise ValueError("rotation power is not the identity on vertices")
        sig = np.unique(Lm.vertex_sign[free])
        if len(sig) != 1:
            raise ValueError("lift power is not a multiple of the identity")
        if sig[0] == 1:
            if m % 2 == 0:
                raise ValueError(f"cannot normalize the lift at branch point {b}: even order {m}")
            L.vertex_sign = (-L.vertex_sign).astype(np.int8)
        L.order = m
        out.append(L)
    return out


def group_closure(lifts: list[LiftedSymmetry], free, max_size: int = 1000):
    """All products of the lifts, each paired with its character value.

    The character is -1 on every given lift (including the deck element,
    for which this is forced).  Returns (elements, characters).
    """
    n = len(lifts[0].permutation)
    e = identity_lift(n)
    elems = [e]
    chars = [1]
    index = {e.key(free): 0}
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for g in lifts:
            h = g.compose(elems[k])
            key = h.key(free)
            c = -chars[k]
            if key in index:
                if chars[index[key]] != c:
                    raise ValueError("generators do not extend to a character")
                continue
            if len(elems) >= max_size:
                raise ValueError("group closure exceeded the size cap")
            index[key] = len(elems)
            elems.append(h)
            chars.append(c)
            queue.append(len(elems) - 1)
    return elems, np.array(chars)


# ---------------------------------------------------------------- face labeling


@dataclass(eq=False)
class FaceSignLabeling:
    """Sign per (polyhedron face, sheet); column 0 is the sheet seen by the gauge."""

    faces: list
    sign: np.ndarray
    face_of_triangle: np.ndarray
    n_components: int = 1

    def flipped(self, face: int, sheet: int = 0) -> "FaceSignLabeling":
        s = self.sign.copy()
        s[face, sheet] *= -1
        return FaceSignLabeling(self.faces, s, self.face_of_triangle, self.n_components)


def cover_face_adjacency(spec: BranchedCoverSpec):
    """Edges of the adjacency graph of cover faces (face, sheet), sheets 0/1.

    Crossing a cut edge of the polyhedron swaps sheets.
    """
    cut_edges = {tuple(sorted(c)) for c in spec.cuts if len(c) == 2}
    if len(cut_edges) != len(spec.cuts):
        raise ValueError("face labeling needs cuts along single polyhedron edges")
    where: dict[tuple, list[int]] = {}
    for fi, f in enumerate(spec.faces):
        for a, b in zip(f, f[1:] + f[:1]):
            where.setdefault((min(a, b), max(a, b)), []).append(fi)
    pairs = []
    for e, fs in sorted(where.items()):
        f, g = fs
        swap = int(e in cut_edges)
        for s in (0, 1):
            pairs.append(((f, s), (g, s ^ swap)))
    return pairs


def find_face_sign_labeling(spec: BranchedCoverSpec) -> FaceSignLabeling:
    """Two-colouring of the cover faces seeded with (face 0, sheet 0) = +1."""
    if spec.faces is None:
        raise ValueError("face labeling is defined for the polyhedral covers only")
    nf = len(spec.faces)
    pairs = cover_face_adjacency(spec)
    nbrs: dict[tuple, list] = {}
    for u, v in pairs:
        nbrs.setdefault(u, []).append(v)
        nbrs.setdefault(v, []).append(u)
    sign = np.zeros((nf, 2), dtype=np.int8)
    components = 0
    for seed in [(f, s) for f in range(nf) for s in (0, 1)]:
        if sign[seed]:
            continue
        components += 1
        sign[seed] = 1
        queue = deque([seed])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if sign[v] == 0:
                    sign[v] = -sign[u]
                    queue.append(v)
                elif sign[v] == sign[u]:
                    raise ValueError("cover face graph is not bipartite; no labeling exists")
    lab = FaceSignLabeling(list(spec.faces), sign, spec.face_of_triangle, components)
    if not verify_labeling(spec, lab):
        raise ValueError("labeling gives equal signs to the two sheets of a face")
    return lab


def verify_labeling(spec: BranchedCoverSpec, labeling: FaceSignLabeling) -> bool:
    """Exhaustive check: adjacent cover faces differ and sheets over a face differ."""
    for u, v in cover_face_adjacency(spec):
        if labeling.sign[u] == labeling.sign[v]:
            return False
    return bool(np.all(labeling.sign[:, 0] == -labeling.sign[:, 1]))


def labeling_section(labeling: FaceSignLabeling, mesh) -> np.ndarray:
    """Step section: the sheet-0 label at vertices interior to a polyhedron face, 0 elsewhere."""
    face = labeling.face_of_triangle[mesh.base_owner]
    x = np.zeros(mesh.n_vertices)
    T = mesh.triangles
    lo = np.full(mesh.n_vertices, len(labeling.faces))
    hi = np.full(mesh.n_vertices, -1)
    for k in range(3):
        np.minimum.at(lo, T[:, k], face)
        np.maximum.at(hi, T[:, k], face)
    inside = (lo == hi) & ~mesh.is_branch
    x[inside] = labeling.sign[lo[inside], 0]
    return x


def equivariant_sector_dimension_check(labeling: FaceSignLabeling, lifts, mesh) -> bool:
    """True iff the labeling's step section is negated by every generator (-1, a_p)."""
    x = labeling_section(labeling, mesh)
    if not np.any(x):
        return False
    gens = [g for g in lifts if not np.array_equal(g.permutation, np.arange(len(g.permutation)))]
    return all(np.array_equal(g.apply(x), -x) for g in gens)


def write_cover_json(spec: BranchedCoverSpec, path, cocycle: SignCocycle | None = None) -> None:
    doc = {"schema": 1, "cover": spec.to_dict()}
    if cocycle is not None:
        doc["cocycle"] = cocycle.to_dict()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
