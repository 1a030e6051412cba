"""Base polyhedra whose vertices are the branch sets, and their triangulations."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

SQ2 = np.sqrt(2.0)
SQ3 = np.sqrt(3.0)

# p1..p4 in the order used throughout: first point at the north pole.
TETRAHEDRON = np.array(
    [
        [0.0, 0.0, 1.0],
        [-SQ2 / 3.0, SQ2 / SQ3, -1.0 / 3.0],
        [-SQ2 / 3.0, -SQ2 / SQ3, -1.0 / 3.0],
        [2.0 * SQ2 / 3.0, 0.0, -1.0 / 3.0],
    ]
)


def icosahedron_vertices() -> np.ndarray:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    pts = []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            pts += [(0.0, s1, s2 * phi), (s1, s2 * phi, 0.0), (s2 * phi, 0.0, s1)]
    pts = np.array(pts)
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def orient_outward(vertices, triangles) -> np.ndarray:
    """Reorder each triangle so its normal points away from the origin."""
    tri = np.array(triangles, dtype=np.int64)
    a, b, c = (vertices[tri[:, k]] for k in range(3))
    flip = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def hull_faces(points, tol: float = 1e-9) -> list[list[int]]:
    """Polygonal faces of the convex hull, merged across coplanar facets.

    Each face is listed counter-clockwise seen from outside.
    """
    hull = ConvexHull(points)
    groups: dict[tuple, set] = {}
    keys: list[np.ndarray] = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        for k, key in enumerate(keys):
            if np.linalg.norm(key - eq) < 1e-7:
                groups[k].update(simplex.tolist())
                break
        else:
            keys.append(eq)
            groups[len(keys) - 1] = set(simplex.tolist())
    faces = []
    for k in range(len(keys)):
        n = keys[k][:3]
        idx = sorted(groups[k])
        c = points[idx].mean(axis=0)
        e1 = points[idx[0]] - c
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        ang = [np.arctan2((points[i] - c) @ e2, (points[i] - c) @ e1) for i in idx]
        order = [idx[j] for j in np.argsort(ang)]
        # rotate so the smallest index leads; keeps listings deterministic
        m = order.index(min(order))
        faces.append(order[m:] + order[:m])
    faces.sort()
    return faces


def triangulate_faces(points, faces):
    """Triangulate polygonal faces, adding a projected centre for non-triangles.

    Returns (vertices, triangles, face_of_triangle).
    """
    verts = [np.asarray(p, dtype=float) for p in points]
    tris, owner = [], []
    for fi, face in enumerate(faces):
        if len(face) == 3:
            tris.append(list(face))
            owner.append(fi)
            continue
        c = np.mean([points[i] for i in face], axis=0)
        verts.append(c / np.linalg.norm(c))
        ci = len(verts) - 1
        for a, b in zip(face, face[1:] + face[:1]):
            tris.append([ci, a, b])
            owner.append(fi)
    V = np.array(verts)
    return V, orient_outward(V, tris), np.array(owner, dtype=np.int64)


def capped_antiprism(k: int = 6, z0: float = 2 * SQ3 - 3):
    """Poles plus two staggered rings of k vertices at heights +-z0.

    The default height maximizes the smallest angle of the base triangulation
    for k = 6.  Vertex order: north pole, south pole, upper ring, lower ring.
    """
    s = np.sqrt(1 - z0 * z0)
    t = 2 * np.pi * np.arange(k) / k
    up = np.column_stack([s * np.cos(t), s * np.sin(t), np.full(k, z0)])
    dn = np.column_stack([s * np.cos(t + np.pi / k), s * np.sin(t + np.pi / k), np.full(k, -z0)])
    V = np.vstack([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], up, dn])
    tris = []
    for i in range(k):
        a, b = 2 + i, 2 + (i + 1) % k
        c, d = 2 + k + i, 2 + k + (i + 1) % k
        tris += [[0, a, b], [1, d, c], [a, c, b], [b, c, d]]
    return V, orient_outward(V, tris)


def two_point_warp(vertices, angle: float) -> np.ndarray:
    """Conformal map of the sphere fixing the north pole and sending the south pole
    to (sin angle, 0, cos angle).

    Acts on the stereographic coordinate u = (x1 + i x2)/(1 + x3) by the
    Moebius map u -> u t / (t + u) with t = tan(angle/2).
    """
    V = np.asarray(vertices, dtype=float)
    if abs(angle - np.pi) < 1e-15:
        return V.copy()
    t = np.tan(angle / 2.0)
    out = np.empty_like(V)
    for i, x in enumerate(V):
        if 1.0 + x[2] < 1e-14:
            w = complex(t, 0.0)
        else:
            u = complex(x[0], x[1]) / (1.0 + x[2])
            w = u * t / (t + u)
        r2 = abs(w) ** 2
        out[i] = [2 * w.real / (1 + r2), 2 * w.imag / (1 + r2), (1 - r2) / (1 + r2)]
    return out
