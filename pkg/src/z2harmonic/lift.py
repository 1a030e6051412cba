"""Homogeneous extension of a sphere eigensection to R^3: the potential
|x|^alpha f(x/|x|), its differential, the associated spinor, and pointwise
harmonicity / Dirac residuals by finite differences."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph

from .cover import free_graph

SIGMA = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


def compute_alpha(E: float) -> float:
    """Positive root of alpha (alpha + 1) = E."""
    if E < 0:
        raise ValueError("E must be nonnegative")
    return 0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * E))


def literal_alpha(E: float) -> float:
    """The alternative root formula (1 + sqrt(1 + 4E)) / 2, which equals compute_alpha(E) + 1."""
    return 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * E))


def dirac_matrix(g) -> np.ndarray:
    """Symbol of the flat Dirac operator applied to a gradient g: [[i g3, i g1 + g2], [i g1 - g2, -i g3]]."""
    g1, g2, g3 = g
    return np.array([[1j * g3, 1j * g1 + g2], [1j * g1 - g2, -1j * g3]])


def _monomials(degree):
    return [(i, d - i) for d in range(degree + 1) for i in range(d, -1, -1)]


def _tangent_basis(y):
    a = np.array([1.0, 0.0, 0.0]) if abs(y[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(y, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(y, t1)


@dataclass(eq=False)
class LocalFit:
    """Polynomial in gnomonic coordinates about y representing one branch of f."""

    y: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    coef: np.ndarray
    powers: list

    def __call__(self, Y):
        Y = np.atleast_2d(Y)
        w = Y / (Y @ self.y)[:, None]
        s, t = w @ self.t1, w @ self.t2
        return sum(c * s**i * t**j for c, (i, j) in zip(self.coef, self.powers))


@dataclass(eq=False)
class HomogeneousLift:
    """Evaluator for Phi(x) = |x|^alpha f(x/|x|) built from a mesh eigensection.

    The sign of the double-valued f is fixed by transport along a BFS tree
    from ``root`` (the path choice); norms of v and s do not depend on it.
    """

    alpha: float
    E: float
    mesh: object
    cocycle: object
    section: np.ndarray
    root: int | None = None
    degree: int = 4
    n_neighbors: int = 30
    s0: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0], dtype=complex))
    factor: complex = 1.0

    def __post_init__(self):
        mesh = self.mesh
        root = int(mesh.free[0]) if self.root is None else int(self.root)
        A = free_graph(mesh)
        order, pred = csgraph.breadth_first_order(A, root, directed=False, return_predecessors=True)
        G = np.zeros(mesh.n_vertices)
        G[root] = 1.0
        child = order[1:]
        par = pred[child]
        step = self.cocycle.sign(par, child)
        for v, u, s in zip(child.tolist(), par.tolist(), step.tolist()):
            G[v] = G[u] * s
        self._G = G
        self._powers = _monomials(self.degree)
        self.s0 = np.asarray(self.s0, dtype=complex)

    def min_branch_distance(self, x) -> float:
        y = np.asarray(x) / np.linalg.norm(x)
        P = self.mesh.vertices[self.mesh.branch]
        return float(np.arccos(np.clip(P @ y, -1, 1)).min())

    def local_fit(self, y) -> LocalFit:
        mesh = self.mesh
        y = np.asarray(y, dtype=float)
        y = y / np.linalg.norm(y)
        h = mesh.mean_edge_length
        if self.min_branch_distance(y) <= 3 * h:
            raise ValueError("point too close to the ray set")
        _, idx = mesh.kdtree.query(y, k=self.n_neighbors)
        idx = [int(i) for i in idx if not mesh.is_branch[i]]
        v0 = idx[0]
        inpatch = set(idx)
        g = {v0: self._G[v0]}
        queue = deque([v0])
        while queue:
            a = queue.popleft()
            for b in mesh.fan(a):
                if b in inpatch and b not in g:
                    g[b] = g[a] * self.cocycle.sign(a, b)
                    queue.append(b)
        verts = np.array(sorted(g))
        vals = np.array([g[v] for v in verts]) * self.section[verts]
        t1, t2 = _tangent_basis(y)
        X = mesh.vertices[verts]
        w = X / (X @ y)[:, None]
        s, t = w @ t1, w @ t2
        A = np.column_stack([s**i * t**j for i, j in self._powers])
        # scale columns for conditioning
        scale = np.abs(A).max(axis=0)
        coef, *_ = np.linalg.lstsq(A / scale, vals, rcond=None)
        return LocalFit(y, t1, t2, coef / scale, self._powers)

    def potential_from_fit(self, fit: LocalFit, X) -> np.ndarray:
        X = np.atleast_2d(X)
        r = np.linalg.norm(X, axis=1)
        return np.real(self.factor) * r**self.alpha * fit(X / r[:, None])

    def potential(self, x) -> float:
        fit = self.local_fit(x)
        return float(self.potential_from_fit(fit, x)[0])

    def derivatives(self, x, h_rel: float = 1e-4):
        """(Phi, gradient, Hessian) at x by centred differences of Phi, step h_rel |x|."""
        x = np.asarray(x, dtype=float)
        fit = self.local_fit(x)
        h = h_rel * np.linalg.norm(x)
        I = np.eye(3) * h
        pts = [x]
        for i in range(3):
            pts += [x + I[i], x - I[i]]
        for i in range(3):
            for j in range(i + 1, 3):
                pts += [x + I[i] + I[j], x + I[i] - I[j], x - I[i] + I[j], x - I[i] - I[j]]
        F = self.potential_from_fit(fit, np.array(pts))
        f0 = F[0]
        grad = np.array([(F[1 + 2 * i] - F[2 + 2 * i]) / (2 * h) for i in range(3)])
        H = np.zeros((3, 3))
        for i in range(3):
            H[i, i] = (F[1 + 2 * i] - 2 * f0 + F[2 + 2 * i]) / h**2
        k = 7
        for i in range(3):
            for j in range(i + 1, 3):
                pp, pm, mp, mm = F[k : k + 4]
                H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * h * h)
                k += 4
        return f0, grad, H


def evaluate_lift(lift: HomogeneousLift, x):
    """(potential, v = dPhi, s = D(Phi s0)) at x in R^3."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if not 0.2 < r < 5:
        raise ValueError("|x| must lie in (0.2, 5)")
    phi, g, _ = lift.derivatives(x)
    s = dirac_matrix(g) @ lift.s0
    return phi, g, s


def pointwise_residuals(lift: HomogeneousLift, x) -> dict:
    """Relative residuals of d v, d*v and D s at x.

    v = grad Phi, so its Jacobian is the Hessian H; curl and divergence are
    its antisymmetric part and trace.  D s = -(sum_jk sigma_j sigma_k H_jk) s0.
    """
    _, g, H = lift.derivatives(np.asarray(x, dtype=float))
    nH = np.linalg.norm(H)
    curl = np.linalg.norm(H - H.T) / nH
    div = abs(np.trace(H)) / nH
    Ds = -np.einsum("jab,kbc,jk->ac", SIGMA, SIGMA, H) @ lift.s0
    ds_norm = nH * np.linalg.norm(lift.s0)
    return {"curl": float(curl), "div": float(div), "dirac": float(np.linalg.norm(Ds) / ds_norm),
            "v_norm": float(np.linalg.norm(g))}


def sample_points(lift: HomogeneousLift, count: int, seed: int, r_range=(0.5, 2.0)):
    """Deterministic points with |x| in r_range, kept away from the ray set."""
    rng = np.random.default_rng(seed)
    h = lift.mesh.mean_edge_length
    out = []
    while len(out) < count:
        y = rng.standard_normal(3)
        y /= np.linalg.norm(y)
        if lift.min_branch_distance(y) <= 4 * h:
            continue
        out.append(y * rng.uniform(*r_range))
    return np.array(out)


def verify_harmonic(lift: HomogeneousLift, sample_count: int = 20, seed: int = 0) -> dict:
    pts = sample_points(lift, sample_count, seed)
    res = [pointwise_residuals(lift, x) for x in pts]
    return {
        "max_curl": max(r["curl"] for r in res),
        "max_div": max(r["div"] for r in res),
        "max_dirac": max(r["dirac"] for r in res),
        "samples": int(sample_count),
        "seed": int(seed),
        "alpha": float(lift.alpha),
    }


def sqrt_model_deviation(lift: HomogeneousLift, points) -> float:
    """Distance of v from the model Re(b sqrt(w) dw), w = x1 + i x2, for an axial pair.

    v1 - i v2 = b sqrt(w) and v3 = 0 in the model, so b^2 = (v1 - i v2)^2 / w is
    single valued; returns max relative spread of b^2 (and of v3) about the
    median, which aligns scale and phase in one step.
    """
    B, V3, N = [], [], []
    for x in np.atleast_2d(points):
        _, v, _ = lift.derivatives(x)
        w = x[0] + 1j * x[1]
        B.append((v[0] - 1j * v[1]) ** 2 / w)
        V3.append(v[2])
        N.append(np.linalg.norm(v))
    B = np.array(B)
    b = np.median(B.real) + 1j * np.median(B.imag)
    dev = np.abs(B / b - 1)
    return float(max(dev.max(), (np.abs(V3) / np.array(N)).max()))


def homogeneity_defect(lift: HomogeneousLift, x, lam: float) -> float:
    x = np.asarray(x, dtype=float)
    fit = lift.local_fit(x)
    a, b = lift.potential_from_fit(fit, np.array([x, lam * x]))
    return float(abs(b - lam**lift.alpha * a) / abs(lam**lift.alpha * a))


def write_point_cloud(lift: HomogeneousLift, points, path) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,z,potential,v1,v2,v3,re_s1,im_s1,re_s2,im_s2\n")
        for x in points:
            phi, v, s = evaluate_lift(lift, x)
            vals = [*x, phi, *v, s[0].real, s[0].imag, s[1].real, s[1].imag]
            fh.write(",".join(f"{t:.12e}" for t in vals) + "\n")
