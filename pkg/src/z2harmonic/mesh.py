"""Symmetric geodesic triangulations of the unit sphere and their geometric tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .groups import permutation_of
from .polyhedra import two_point_warp

MAX_LEVEL = 8


@dataclass(eq=False)
class SphereMesh:
    """Triangulation of S^2 refining the base mesh of a cover spec.

    Vertex indices of coarser levels are preserved, so the first
    ``len(branch)`` vertices are always the branch points.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: int
    symmetric_under: str
    rotations: np.ndarray
    branch: np.ndarray
    base_owner: np.ndarray
    _midpoints: list = field(default_factory=list, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def edges(self) -> np.ndarray:
        tri = self.triangles
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def edge_keys(self) -> np.ndarray:
        return self.edges[:, 0] * self.n_vertices + self.edges[:, 1]

    def edge_index(self, i, j) -> np.ndarray:
        """Positions in :attr:`edges` of the (unordered) pairs (i, j); -1 if absent."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        key = np.minimum(i, j) * self.n_vertices + np.maximum(i, j)
        pos = np.searchsorted(self.edge_keys, key)
        pos = np.clip(pos, 0, len(self.edge_keys) - 1)
        return np.where(self.edge_keys[pos] == key, pos, -1)

    @cached_property
    def is_branch(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.branch] = True
        return mask

    @cached_property
    def free(self) -> np.ndarray:
        """Indices of non-branch vertices (the unknowns of the twisted problem)."""
        return np.flatnonzero(~self.is_branch)

    @cached_property
    def _vertex_triangles(self):
        F = len(self.triangles)
        vt = self.triangles.ravel()
        order = np.argsort(vt, kind="stable")
        counts = np.bincount(vt, minlength=self.n_vertices)
        ptr = np.concatenate([[0], np.cumsum(counts)])
        return ptr, (order // 3).astype(np.int64)

    def triangles_at(self, v: int) -> np.ndarray:
        ptr, tri_ids = self._vertex_triangles
        return tri_ids[ptr[v] : ptr[v + 1]]

    def fan(self, v: int) -> list[int]:
        """Neighbours of ``v`` in counter-clockwise order (seen from outside)."""
        nxt = {}
        for t in self.triangles_at(v):
            a, b, c = self.triangles[t]
            if a == v:
                nxt[b] = c
            elif b == v:
                nxt[c] = a
            else:
                nxt[a] = b
        start = min(nxt)
        ring = [start]
        while True:
            w = nxt[ring[-1]]
            if w == start:
                break
            ring.append(w)
        if len(ring) != len(nxt):
            raise ValueError(f"vertex {v} has a non-manifold neighbourhood")
        return [int(w) for w in ring]

    def refine_path(self, path) -> list[int]:
        """Map a vertex path of the base mesh onto the edge path of this level."""
        out = [int(v) for v in path]
        for edges, mids in self._midpoints:
            keys = edges[:, 0] * (edges.max() + 1) + edges[:, 1]
            new = [out[0]]
            for a, b in zip(out[:-1], out[1:]):
                lo, hi = min(a, b), max(a, b)
                k = np.searchsorted(keys, lo * (edges.max() + 1) + hi)
                if k >= len(keys) or keys[k] != lo * (edges.max() + 1) + hi:
                    raise ValueError(f"({a}, {b}) is not an edge of the coarser mesh")
                new += [int(mids[k]), b]
            out = new
        return out

    @cached_property
    def mean_edge_length(self) -> float:
        e = self.edges
        return float(np.mean(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))

    def local_edge_length(self, p, radius: float) -> float:
        """Mean length of edges with both ends within geodesic ``radius`` of ``p``."""
        e = self.edges
        ang = np.arccos(np.clip(self.vertices @ np.asarray(p), -1.0, 1.0))
        inside = (ang[e[:, 0]] <= radius) & (ang[e[:, 1]] <= radius)
        if not inside.any():
            return self.mean_edge_length
        d = self.vertices[e[inside, 0]] - self.vertices[e[inside, 1]]
        return float(np.mean(np.linalg.norm(d, axis=1)))

    @cached_property
    def kdtree(self) -> cKDTree:
        return cKDTree(self.vertices)

    @cached_property
    def _triangle_inverse(self) -> np.ndarray:
        A = np.transpose(self.vertices[self.triangles], (0, 2, 1))
        return np.linalg.inv(A)

    def locate(self, y, eps: float = 1e-10):
        """Triangle hit by the ray through each point ``y`` and its barycentric weights."""
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        _, near = self.kdtree.query(Y, k=6)
        tri = np.empty(len(Y), dtype=np.int64)
        bary = np.empty((len(Y), 3))
        for q, (x, cand_v) in enumerate(zip(Y, near)):
            cand = np.unique(np.concatenate([self.triangles_at(v) for v in cand_v]))
            lam = self._triangle_inverse[cand] @ x
            ok = np.all(lam >= -eps, axis=1) & (lam.sum(axis=1) > 0)
            if not ok.any():
                raise ValueError(f"could not locate point {x} on the mesh")
            k = np.flatnonzero(ok)[0]
            tri[q] = cand[k]
            bary[q] = lam[k] / lam[k].sum()
        return tri, bary

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + len(self.triangles)

    def min_angle_deg(self) -> float:
        V, T = self.vertices, self.triangles
        worst = np.inf
        for k in range(3):
            a, b, c = V[T[:, k]], V[T[:, (k + 1) % 3]], V[T[:, (k + 2) % 3]]
            u, w = b - a, c - a
            cosang = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            worst = min(worst, float(np.degrees(np.arccos(np.clip(cosang, -1, 1))).min()))
        return worst


def _subdivide(V, T):
    nv = len(V)
    e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    e.sort(axis=1)
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = nv + np.arange(len(edges))
    F = len(T)
    m01, m12, m20 = mids[inv[:F]], mids[inv[F : 2 * F]], mids[inv[2 * F :]]
    P = 0.5 * (V[edges[:, 0]] + V[edges[:, 1]])
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    T2 = np.stack(
        [
            np.stack([a, m01, m20], 1),
            np.stack([m01, b, m12], 1),
            np.stack([m20, m12, c], 1),
            np.stack([m01, m12, m20], 1),
        ],
        axis=1,
    ).reshape(-1, 3)
    return np.vstack([V, P]), T2, edges, mids


def _snap(V, rotations, tol):
    """Average each vertex over its group orbit so the invariance is exact."""
    if len(rotations) <= 1:
        return V, 0.0
    acc = np.zeros_like(V)
    worst = 0.0
    tree = cKDTree(V)
    for R in rotations:
        d, perm = tree.query(V @ R.T)
        worst = max(worst, float(d.max()))
        acc += V[perm] @ R  # R^T applied to the image of each vertex
    if worst > tol:
        raise ValueError(f"mesh is not invariant under its group (mismatch {worst:.3e})")
    acc /= np.linalg.norm(acc, axis=1)[:, None]
    return acc, worst


def build_mesh(spec, level: int) -> SphereMesh:
    """Midpoint 4-to-1 subdivision of the cover's base mesh, projected to S^2.

    Subdivision runs on the flat base triangles and the vertices are projected
    once at the end, so vertex positions are a smooth function of the flat
    position inside each base triangle.  Repeated projection after every
    level instead leaves creases along all coarser edges.
    """
    if not isinstance(level, (int, np.integer)) or not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be an integer in [0, {MAX_LEVEL}], got {level!r}")
    antipodal = spec.solid != "two-points" or abs(spec.angle - np.pi) < 1e-15
    V = np.array(spec.base_vertices if antipodal else spec.unwarped_base_vertices, dtype=float)
    T = np.array(spec.base_triangles, dtype=np.int64)
    owner = np.arange(len(T))
    mids = []
    for _ in range(level):
        V, T, edges, m = _subdivide(V, T)
        owner = np.repeat(owner, 4)
        mids.append((edges, m))
    V = V / np.linalg.norm(V, axis=1)[:, None]
    rotations = spec.rotations()
    V, _ = _snap(V, rotations, tol=1e-9)
    if not antipodal:
        V = two_point_warp(V, spec.angle)
    return SphereMesh(
        vertices=V,
        triangles=T,
        level=int(level),
        symmetric_under=spec.group_name,
        rotations=rotations,
        branch=np.arange(spec.n_branch),
        base_owner=owner,
        _midpoints=mids,
    )


@dataclass(eq=False)
class GeometricTables:
    cot_weight: np.ndarray  # per edge of mesh.edges, (cot a + cot b) / 2
    vertex_area: np.ndarray  # lumped barycentric areas
    triangle_area: np.ndarray
    branch_distance: np.ndarray  # (V, n_branch) geodesic distances

    @property
    def total_area(self) -> float:
        return float(self.triangle_area.sum())


def geometric_tables(mesh: SphereMesh, branch_points=None) -> GeometricTables:
    V, T = mesh.vertices, mesh.triangles
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    if area.min() < 1e-14:
        raise ValueError(f"degenerate triangle (area {area.min():.3e})")
    w = np.zeros(len(mesh.edges))
    for k in range(3):
        o = V[T[:, k]]
        p = V[T[:, (k + 1) % 3]]
        q = V[T[:, (k + 2) % 3]]
        u, v = p - o, q - o
        cot = np.einsum("ij,ij->i", u, v) / np.linalg.norm(np.cross(u, v), axis=1)
        idx = mesh.edge_index(T[:, (k + 1) % 3], T[:, (k + 2) % 3])
        np.add.at(w, idx, 0.5 * cot)
    varea = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(varea, T[:, k], area / 3.0)
    P = V[mesh.branch] if branch_points is None else np.asarray(branch_points)
    dist = np.arccos(np.clip(V @ P.T, -1.0, 1.0))
    return GeometricTables(w, varea, area, dist)


def check_symmetry(mesh: SphereMesh, tol: float = 1e-12) -> float:
    """Largest distance between R v and its matched vertex over the group."""
    worst = 0.0
    for R in mesh.rotations:
        d, _ = mesh.kdtree.query(mesh.vertices @ R.T)
        worst = max(worst, float(d.max()))
    if worst > tol:
        raise ValueError(f"group maps vertices off the mesh (error {worst:.3e})")
    return worst


def vertex_permutations(mesh: SphereMesh) -> np.ndarray:
    return np.array([permutation_of(R, mesh.vertices) for R in mesh.rotations])


def write_polygon_mesh(mesh: SphereMesh, path) -> None:
    """ASCII export: header lines, ``v x y z`` lines, ``f i j k`` lines (0-based)."""
    with open(path, "w") as fh:
        fh.write("# z2harmonic sphere mesh, 0-based vertex indices\n")
        fh.write(f"# level {mesh.level} group {mesh.symmetric_under}\n")
        fh.write(f"# vertices {mesh.n_vertices} faces {len(mesh.triangles)}\n")
        for x in mesh.vertices:
            fh.write(f"v {x[0]:.15e} {x[1]:.15e} {x[2]:.15e}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0]} {t[1]} {t[2]}\n")


def read_polygon_mesh(path):
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("v "):
                verts.append([float(s) for s in line.split()[1:4]])
            elif line.startswith("f "):
                faces.append([int(s) for s in line.split()[1:4]])
    return np.array(verts), np.array(faces, dtype=np.int64)


def write_vertex_fields(mesh: SphereMesh, fields: dict, path) -> None:
    """Sidecar CSV: vertex, x, y, z, is_branch, then one column per named field."""
    names = list(fields)
    cols = [np.asarray(fields[k], dtype=float) for k in names]
    for c in cols:
        if c.shape != (mesh.n_vertices,):
            raise ValueError("field length does not match the vertex count")
    with open(path, "w") as fh:
        fh.write(",".join(["vertex", "x", "y", "z", "is_branch", *names]) + "\n")
        br = mesh.is_branch
        for i, x in enumerate(mesh.vertices):
            vals = [f"{c[i]:.12e}" for c in cols]
            fh.write(f"{i},{x[0]:.15e},{x[1]:.15e},{x[2]:.15e},{int(br[i])}," + ",".join(vals) + "\n")
