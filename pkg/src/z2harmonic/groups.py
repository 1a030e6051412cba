"""Finite rotation groups of point configurations on the unit sphere."""

from __future__ import annotations

import itertools

import numpy as np


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Right-handed rotation by ``angle`` about ``axis`` (Rodrigues formula)."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    K = np.array([[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def clockwise_rotation(p, order: int) -> np.ndarray:
    """Rotation by 2*pi/order, clockwise when viewed from outside the sphere at ``p``.

    Clockwise as seen looking from beyond ``p`` toward the origin is the
    negative right-handed sense about the oriented axis 0 -> p.
    """
    return rotation_matrix(p, -2.0 * np.pi / order)


def _maps_set_to_itself(R, points, tol):
    img = points @ R.T
    d = np.linalg.norm(img[:, None, :] - points[None, :, :], axis=-1)
    return bool(np.all(d.min(axis=1) < tol))


def _frame(a, b):
    e1 = a / np.linalg.norm(a)
    e2 = b - (b @ e1) * e1
    e2 /= np.linalg.norm(e2)
    return np.column_stack([e1, e2, np.cross(e1, e2)])


def symmetry_rotations(points, tol: float = 1e-9) -> np.ndarray:
    """All proper rotations mapping the finite point set to itself.

    Returns an array of shape (g, 3, 3) with the identity first and the
    remaining elements in a deterministic order.  The set must contain two
    non-collinear points.
    """
    pts = np.asarray(points, dtype=float)
    x0 = pts[0]
    x1 = None
    for q in pts[1:]:
        if np.linalg.norm(np.cross(x0, q)) > 1e-6:
            x1 = q
            break
    if x1 is None:
        raise ValueError("point set is collinear; its rotation group is infinite")
    F0 = _frame(x0, x1)
    c01 = x0 @ x1
    found = []
    for y0, y1 in itertools.permutations(range(len(pts)), 2):
        a, b = pts[y0], pts[y1]
        if abs(a @ b - c01) > 1e-7 or abs(np.linalg.norm(a) - np.linalg.norm(x0)) > 1e-7:
            continue
        R = _frame(a, b) @ F0.T
        if _maps_set_to_itself(R, pts, tol):
            if not any(np.allclose(R, S, atol=1e-9) for S in found):
                found.append(R)
    found.sort(key=lambda R: (not np.allclose(R, np.eye(3)), tuple(np.round(R.ravel(), 9))))
    return np.array(found)


def rotation_order_about(rotations, p, tol: float = 1e-9) -> int:
    """Order of the stabilizer of the direction ``p`` within ``rotations``."""
    p = np.asarray(p, dtype=float)
    return int(sum(np.linalg.norm(R @ p - p) < tol for R in rotations))


def permutation_of(R, points, tol: float = 1e-9) -> np.ndarray:
    """Index permutation ``perm`` with ``R @ points[i] == points[perm[i]]``."""
    from scipy.spatial import cKDTree

    pts = np.asarray(points, dtype=float)
    d, idx = cKDTree(pts).query(pts @ np.asarray(R).T)
    if np.max(d) > tol or len(set(idx.tolist())) != len(pts):
        raise ValueError(f"rotation does not preserve the point set (max mismatch {np.max(d):.3e})")
    return idx.astype(np.int64)
