"""Stereographic charts, rotation generators acting on the chart coordinate, and the
bilinear relations among leading coefficients at the branch points."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .groups import rotation_matrix

SOUTH_TOL = 1e-9
RANK_RTOL = 1e-8


def stereographic(p) -> complex:
    """u = (x1 + i x2) / (1 + x3), projection from the south pole."""
    p = np.asarray(p, dtype=float)
    if 1.0 + p[2] < SOUTH_TOL:
        raise ValueError("stereographic coordinate undefined at the south pole")
    return complex(p[0], p[1]) / (1.0 + p[2])


def inverse_stereographic(u: complex) -> np.ndarray:
    r2 = abs(u) ** 2
    return np.array([2 * u.real, 2 * u.imag, 1 - r2]) / (1 + r2)


@dataclass(frozen=True)
class ChartFrame:
    """Chart z = 2 (u - u_p) / (1 + |u_p|^2) at p and the values L_a z at p."""

    point: tuple
    u: complex
    scale: float
    L: tuple  # (L1 z, L2 z, L3 z) at p
    e1: tuple
    e2: tuple

    def null_defect(self) -> float:
        return abs(sum(c * c for c in self.L))


def tangent_frame(p, rotation=None):
    """Unit tangent vectors (e1, e2) at p along the real and imaginary u directions.

    With a global ``rotation`` R the frame is R^T applied to the frame at R p,
    which lets a chart be used near the south pole.
    """
    p = np.asarray(p, dtype=float)
    if rotation is not None:
        R = np.asarray(rotation)
        e1, e2 = tangent_frame(R @ p)
        return R.T @ e1, R.T @ e2
    u = stereographic(p)
    a, b = u.real, u.imag
    s = 1 + a * a + b * b
    # derivatives of the inverse projection, rescaled to unit length
    da = np.array([2 * s - 4 * a * a, -4 * a * b, -4 * a]) / s**2
    db = np.array([-4 * a * b, 2 * s - 4 * b * b, -4 * b]) / s**2
    return da * s / 2, db * s / 2


def chart_frame(p) -> ChartFrame:
    """Frame data at p with L_a z from the closed formulas."""
    p = np.asarray(p, dtype=float)
    u = stereographic(p)
    s = 1 + abs(u) ** 2
    L = (-1j * (1 - u * u) / s, (1 + u * u) / s, 2j * u / s)
    e1, e2 = tangent_frame(p)
    return ChartFrame(tuple(p), u, 2.0 / s, L, tuple(e1), tuple(e2))


def generator_values(p, rotation=None) -> np.ndarray:
    """L_a z at p computed geometrically as dz(e_a x p) = <e_a x p, e1> + i <e_a x p, e2>."""
    p = np.asarray(p, dtype=float)
    e1, e2 = tangent_frame(p, rotation)
    out = np.empty(3, dtype=complex)
    for a in range(3):
        v = np.cross(np.eye(3)[a], p)
        out[a] = v @ e1 + 1j * (v @ e2)
    return out


def _values(points, rotation=None):
    if rotation is None:
        return np.array([chart_frame(p).L for p in points], dtype=complex)
    return np.array([generator_values(p, rotation) for p in points])


def bilinear_tensor(points, coeffs, m: int = 1, rotation=None) -> np.ndarray:
    """T_{a1..a(2m+1)} = sum_p a_p^2 prod_j (L_aj z)(p), as a complex array."""
    Lz = _values(points, rotation)
    a2 = np.asarray(coeffs, dtype=complex) ** 2
    T = np.zeros((3,) * (2 * m + 1), dtype=complex)
    for idx in itertools.product(range(3), repeat=2 * m + 1):
        T[idx] = np.sum(a2 * np.prod(Lz[:, list(idx)], axis=1))
    return T


def bilinear_sum(points, coeffs, multi_index, exponents=None, rotation=None) -> float:
    """Real part of sum_p a_p^2 prod_j (L_{a_j} z)(p); indices in {1, 2, 3}.

    The relation applies when every point has the same k = (len - 1) / 2.
    """
    idx = [int(a) - 1 for a in multi_index]
    if len(idx) % 2 == 0 or any(a not in (0, 1, 2) for a in idx):
        raise ValueError("multi_index must have odd length with entries in {1, 2, 3}")
    if exponents is not None:
        k = (len(idx) - 1) // 2
        if any(int(round(e)) != k for e in exponents):
            raise ValueError("relation needs every branch point to have k equal to (len - 1)/2")
    Lz = _values(points, rotation)
    a2 = np.asarray(coeffs, dtype=complex) ** 2
    return float(np.sum(a2 * np.prod(Lz[:, idx], axis=1)).real)


def constraint_matrix(points, m: int = 1, rotation=None):
    """Real linear system on (Re a_p^2, Im a_p^2)_p from every (2m+1)-index.

    Returns (matrix, list of index tuples); each row is Re(sum a_p^2 P_p) = 0.
    """
    Lz = _values(points, rotation)
    rows, labels = [], []
    for idx in itertools.product(range(3), repeat=2 * m + 1):
        P = np.prod(Lz[:, list(idx)], axis=1)
        rows.append(np.column_stack([P.real, -P.imag]).ravel())
        labels.append(tuple(a + 1 for a in idx))
    return np.array(rows), labels


def numerical_rank(A, rtol: float = RANK_RTOL):
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rtol * s[0])), s


def two_point_obstruction(q, m: int = 1):
    """Constraint matrix and rank for the pair {north pole, q}.

    q is first rotated about the polar axis onto the u > 0 real axis.
    Rank 4 forces a_0 = a_1 = 0.
    """
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    if abs(abs(q[2]) - 1.0) < 1e-12:
        raise ValueError("q must not be a pole")
    phi = np.arctan2(q[1], q[0])
    q = rotation_matrix([0, 0, 1], -phi) @ q
    A, labels = constraint_matrix([np.array([0.0, 0.0, 1.0]), q], m)
    rank, sv = numerical_rank(A)
    return {"matrix": A, "labels": labels, "rank": rank, "singular_values": sv, "u": stereographic(q).real}


def tetrahedral_pattern_check(coeffs, ratio_tol: float = 1.05) -> dict:
    """Equal-norm test for the four tetrahedral coefficients plus the a_p^2 sign pattern."""
    a = np.asarray(coeffs, dtype=complex)
    if a.shape != (4,) or np.any(~np.isfinite(a)):
        raise ValueError("need four finite coefficients")
    mags = np.abs(a)
    if mags.min() == 0:
        raise ValueError("a coefficient vanishes")
    sq = a**2
    ratio = float(mags.max() / mags.min())
    real_sign = np.sign(np.round(sq.real / mags**2, 6)).astype(int).tolist()
    return {
        "norm_ratio": ratio,
        "passed": ratio < ratio_tol,
        "sign_re_a2": real_sign,
        "sign_im_a2": np.sign(np.round(sq.imag / mags**2, 6)).astype(int).tolist(),
        "one_negative_three_positive": sorted(real_sign) == [-1, 1, 1, 1],
    }


def frame_rotation_angle(p, e1, e2, f1) -> float:
    """Angle phi with f1 = cos(phi) e1 + sin(phi) e2."""
    return float(np.arctan2(np.dot(f1, e2), np.dot(f1, e1)))


def transport_coefficients(points, coeffs, Q, k: int):
    """Leading coefficients of the rotated field f(Q^T x) at the rotated points.

    The chart at Q p is the pushed-forward chart turned by phi (z' = e^{i phi} z),
    so a picks up the phase exp(-i (k + 1/2) phi).
    """
    Q = np.asarray(Q)
    new_pts, new_a = [], []
    for p, a in zip(points, coeffs):
        e1, e2 = tangent_frame(p)
        qp = Q @ p
        f1, f2 = tangent_frame(qp)
        phi = frame_rotation_angle(qp, f1, f2, Q @ e1)
        new_pts.append(qp)
        new_a.append(a * np.exp(-1j * (k + 0.5) * phi))
    return np.array(new_pts), np.array(new_a)


def constraint_report(points, coeffs, m: int = 1, tol: float | None = None, rotation=None) -> dict:
    """Per-relation values of the bilinear sums with a common normalization.

    ``rotation`` must be the chart rotation the coefficients were measured in.
    """
    Lz = _values(points, rotation)
    norm = float(np.sum(np.abs(coeffs) ** 2) * np.abs(Lz).max() ** (2 * m + 1))
    tol = 0.05 if tol is None else tol
    rel = []
    for idx in itertools.product((1, 2, 3), repeat=2 * m + 1):
        v = bilinear_sum(points, coeffs, idx, rotation=rotation)
        rel.append({"index": list(idx), "value": v, "relative": abs(v) / norm, "passed": abs(v) / norm < tol})
    return {"normalization": norm, "tolerance": tol, "relations": rel, "passed": all(r["passed"] for r in rel)}


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
