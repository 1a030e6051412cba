"""Circle Fourier modes of twisted sections around branch points, vanishing
exponents, and leading coefficients in the stereographic chart."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .appendix import tangent_frame
from .groups import rotation_matrix
from .radial import frobenius_series

MIN_EDGES = 3
NOISE_FLOOR = 1e-10


def chart_rotation(points):
    """Global rotation used for charts when a branch point sits at the south pole (else None)."""
    pts = np.asarray(points)
    if np.all(1 + pts[:, 2] > 1e-6):
        return None
    R = rotation_matrix([1.0, 0.0, 0.0], 0.5)
    assert np.all(1 + (pts @ R.T)[:, 2] > 1e-3)
    return R


def polar_coordinates(Y, p, frame):
    """Geodesic radius and angle (measured from e1 toward e2) of points about p."""
    e1, e2 = frame
    Y = np.atleast_2d(Y)
    c = np.clip(Y @ p, -1.0, 1.0)
    r = np.arccos(c)
    theta = np.mod(np.arctan2(Y @ e2, Y @ e1), 2 * np.pi)
    # points on the slit ray belong to theta = 0, not to 2 pi - eps
    theta[theta > 2 * np.pi - 1e-12] = 0.0
    return r, theta


def circle_points(p, r, theta, frame):
    e1, e2 = frame
    th = np.asarray(theta)[:, None]
    return np.cos(r) * np.asarray(p)[None, :] + np.sin(r) * (np.cos(th) * e1 + np.sin(th) * e2)


def local_gauge(mesh, cocycle, p: int, radius: float, vertices=None, frame=None, rotation=None):
    """Signs g on vertices near branch vertex p making g*f continuous off the slit theta = 0.

    Returns (g, theta) for ``vertices`` (default: all non-branch vertices within
    ``radius`` plus two rings).  Edges across the slit must see a sign flip;
    this is the antiperiodicity of the transported branch and is asserted.
    """
    P = mesh.vertices[p]
    if frame is None:
        frame = tangent_frame(P, rotation)
    h = mesh.local_edge_length(P, radius)
    r_all, th_all = polar_coordinates(mesh.vertices, P, frame)
    region = (r_all < radius + 3 * h) & ~mesh.is_branch
    e = mesh.edges
    sel = region[e[:, 0]] & region[e[:, 1]]
    i, j = e[sel, 0], e[sel, 1]
    X = np.sin(r_all) * np.cos(th_all)
    Yv = np.sin(r_all) * np.sin(th_all)
    up_i, up_j = Yv[i] >= 0, Yv[j] >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = X[i] - Yv[i] * (X[j] - X[i]) / (Yv[j] - Yv[i])
    cross = (up_i != up_j) & (xint > 0)
    sig = cocycle.signs[sel]
    nbr: dict[int, list] = {}
    for a, b, s, c in zip(i.tolist(), j.tolist(), sig.tolist(), cross.tolist()):
        nbr.setdefault(a, []).append((b, s, c))
        nbr.setdefault(b, []).append((a, s, c))
    g = np.zeros(mesh.n_vertices, dtype=np.int8)
    for root in sorted(nbr):
        if g[root]:
            continue
        g[root] = 1
        queue = deque([root])
        while queue:
            a = queue.popleft()
            for b, s, c in nbr[a]:
                if not c and g[b] == 0:
                    g[b] = g[a] * s
                    queue.append(b)
    prod = g[i].astype(int) * g[j] * sig
    if np.any(prod[~cross] != 1) or np.any(prod[cross] != -1):
        raise ValueError("sign transport around the branch point is inconsistent (not antiperiodic)")
    if vertices is None:
        vertices = np.flatnonzero(region)
    vertices = np.asarray(vertices)
    if np.any(g[vertices] == 0):
        raise ValueError("gauge region does not cover the requested vertices")
    return g[vertices].astype(float), th_all[vertices]


@dataclass(eq=False)
class CircleSampler:
    """Evaluates the continuous branch of a twisted section on circles about p."""

    mesh: object
    cocycle: object
    p: int
    radius: float
    frame: tuple
    g: np.ndarray
    theta_v: np.ndarray

    @classmethod
    def build(cls, mesh, cocycle, p, radius, rotation=None):
        P = mesh.vertices[p]
        frame = tangent_frame(P, rotation)
        g, th = local_gauge(mesh, cocycle, p, radius, frame=frame)
        gfull = np.zeros(mesh.n_vertices)
        tfull = np.zeros(mesh.n_vertices)
        h = mesh.local_edge_length(P, radius)
        r_all, _ = polar_coordinates(mesh.vertices, P, frame)
        region = np.flatnonzero((r_all < radius + 3 * h) & ~mesh.is_branch)
        gfull[region] = g
        tfull[region] = th
        return cls(mesh, cocycle, p, radius, frame, gfull, tfull)

    def _branch_weights(self, tri, theta):
        verts = self.mesh.triangles[tri]
        g = self.g[verts].copy()
        if np.any(self.mesh.is_branch[verts]):
            raise ValueError("sample triangle touches a branch point; radius too small")
        if np.any(g == 0):
            raise ValueError("sample outside the gauge region")
        tv = self.theta_v[verts]
        straddle = (tv.max(axis=1) - tv.min(axis=1)) > np.pi
        for q in np.flatnonzero(straddle):
            wrong = tv[q] > np.pi if theta[q] < np.pi else tv[q] < np.pi
            g[q, wrong] *= -1
        return verts, g

    def sample(self, f, r, theta):
        P = self.mesh.vertices[self.p]
        Y = circle_points(P, r, theta, self.frame)
        tri, bary = self.mesh.locate(Y)
        verts, g = self._branch_weights(tri, theta)
        return np.einsum("qk,qk->q", bary * g, np.asarray(f)[verts])

    def gradient_norm(self, f, r, theta):
        """|grad| of the piecewise-linear branch in the triangles hit by the circle."""
        P = self.mesh.vertices[self.p]
        Y = circle_points(P, r, theta, self.frame)
        tri, _ = self.mesh.locate(Y)
        verts, g = self._branch_weights(tri, theta)
        X = self.mesh.vertices[verts]
        phi = g * np.asarray(f)[verts]
        u = X[:, 1] - X[:, 0]
        v = X[:, 2] - X[:, 0]
        # gradient of the linear interpolant: g.u = d1, g.v = d2, g in span(u, v)
        uu = np.einsum("ij,ij->i", u, u)
        uv = np.einsum("ij,ij->i", u, v)
        vv = np.einsum("ij,ij->i", v, v)
        d1 = phi[:, 1] - phi[:, 0]
        d2 = phi[:, 2] - phi[:, 0]
        det = uu * vv - uv * uv
        alpha = (vv * d1 - uv * d2) / det
        beta = (uu * d2 - uv * d1) / det
        grad = alpha[:, None] * u + beta[:, None] * v
        return np.linalg.norm(grad, axis=1)


def sample_count(n_max: int) -> int:
    return 8 * (n_max + 1)


def mode_indices(n_max: int) -> np.ndarray:
    return np.arange(-n_max, n_max + 1)


def fourier_modes(values, n_max: int) -> np.ndarray:
    """c_n = mean_j f(theta_j) exp(-i (n + 1/2) theta_j) for n = -n_max..n_max."""
    N = len(values)
    theta = 2 * np.pi * np.arange(N) / N
    n = mode_indices(n_max)
    return np.exp(-1j * np.outer(n + 0.5, theta)) @ np.asarray(values) / N


def circle_modes(section, mesh, cocycle, p: int, r: float, n_max: int = 6, rotation=None, sampler=None):
    """Half-integer circle modes {n + 1/2: c} of the section on the geodesic circle of radius r."""
    h = mesh.local_edge_length(mesh.vertices[p], r)
    if r < MIN_EDGES * h * (1 - 1e-9):
        raise ValueError(f"radius {r:.4g} is below {MIN_EDGES} edge lengths ({MIN_EDGES * h:.4g})")
    if sampler is None:
        sampler = CircleSampler.build(mesh, cocycle, p, r, rotation)
    N = sample_count(n_max)
    theta = 2 * np.pi * np.arange(N) / N
    c = fourier_modes(sampler.sample(section, r, theta), n_max)
    return {float(n + 0.5): complex(v) for n, v in zip(mode_indices(n_max), c)}


def allowed_residues(m: int) -> set:
    """Residues of n mod m with exp((2n+1) pi i / m) = -1, i.e. 2n + 1 = m (mod 2m)."""
    if m not in (3, 5):
        raise ValueError("rotation order must be 3 or 5")
    return {r for r in range(m) if (2 * r + 1) % (2 * m) == m}


def out_of_residue_fraction(coeffs: dict, m: int) -> float:
    allowed = allowed_residues(m)
    tot = sum(abs(c) ** 2 for c in coeffs.values())
    bad = sum(abs(c) ** 2 for k, c in coeffs.items() if int(round(k - 0.5)) % m not in allowed)
    return float(bad / tot)


def default_radii(mesh, p: int, count: int = 6, fraction: float = 0.95 / 4):
    """r_j = r0 2^(-j/2) with r0 a fixed fraction of the distance to the nearest other
    branch point; radii under three local edge lengths are dropped."""
    P = mesh.vertices[p]
    others = mesh.vertices[[b for b in mesh.branch if b != p]]
    sep = float(np.arccos(np.clip(others @ P, -1, 1)).min())
    r0 = fraction * sep
    radii = r0 * 2.0 ** (-np.arange(count) / 2.0)
    h = mesh.local_edge_length(P, r0)
    return radii[radii >= MIN_EDGES * h]


def fit_exponent(radii, amplitudes, curvature: bool = True):
    """Least-squares fit log A = log C + nu log r_s (+ beta r_s^2), r_s = tan(r/2).

    Returns (nu, plain log-log slope, rms residual).
    """
    r = np.asarray(radii, dtype=float)
    A = np.asarray(amplitudes, dtype=float)
    if len(r) < 4:
        raise ValueError("need at least four radii")
    if r.max() / r.min() < 2 - 1e-9:
        raise ValueError("radii must span at least a factor of two")
    if np.any(A < NOISE_FLOOR):
        raise ValueError("mode amplitude below the noise floor")
    rs = np.tan(r / 2)
    y = np.log(A)
    plain = np.polyfit(np.log(rs), y, 1)[0]
    cols = [np.ones_like(rs), np.log(rs)] + ([rs**2] if curvature else [])
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return float(coef[1]), float(plain), resid


@dataclass(eq=False)
class LocalExpansion:
    point: np.ndarray
    index: int
    radii: np.ndarray
    modes: np.ndarray  # half-integers n + 1/2
    coeffs: np.ndarray  # (len(radii), len(modes)) complex
    dominant_mode: int
    fitted_exponent: float
    plain_slope: float
    fit_residual: float
    leading_coeff: complex
    differential_exponent: float | None = None
    gradient_means: np.ndarray | None = None
    frame: str = ""
    extra: dict = field(default_factory=dict)

    def mode_track(self, n: int | None = None) -> np.ndarray:
        n = self.dominant_mode if n is None else n
        return np.abs(self.coeffs[:, list(self.modes).index(n + 0.5)])

    def out_of_residue_fraction(self, m: int) -> np.ndarray:
        return np.array([out_of_residue_fraction(dict(zip(self.modes, row)), m) for row in self.coeffs])

    def summary(self) -> dict:
        return {
            "index": int(self.index),
            "point": [round(float(x), 12) for x in self.point],
            "radii": [round(float(x), 12) for x in self.radii],
            "dominant_mode": int(self.dominant_mode),
            "fitted_exponent": float(self.fitted_exponent),
            "plain_slope": float(self.plain_slope),
            "fit_residual": float(self.fit_residual),
            "differential_exponent": None if self.differential_exponent is None else float(self.differential_exponent),
            "leading_coeff": [float(self.leading_coeff.real), float(self.leading_coeff.imag)],
            "frame": self.frame,
        }


def leading_coefficient(c, n: int, r_geo: float, E: float | None = None) -> complex:
    """a with f ~ Re(a z^nu): c = (a/2) (2 r_s)^nu (1 + u_n(r_s)) at the chart radius r_s."""
    nu = abs(n + 0.5)
    rs = np.tan(r_geo / 2)
    corr = 1.0
    if E is not None:
        ser = frobenius_series(n, E, 20)
        corr = float(np.sum(ser * rs ** (2 * np.arange(len(ser)))))
    return complex(2 * c / ((2 * rs) ** nu * corr))


def local_expansion(section, mesh, cocycle, p: int, radii=None, n_max: int = 6, E: float | None = None,
                    rotation=None, gradient: bool = True) -> LocalExpansion:
    """Modes on each radius, dominant mode, exponents and the leading coefficient a_p."""
    if radii is None:
        radii = default_radii(mesh, p)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    sampler = CircleSampler.build(mesh, cocycle, p, float(radii.max()), rotation)
    N = sample_count(n_max)
    theta = 2 * np.pi * np.arange(N) / N
    rows, grads = [], []
    for r in radii:
        h = mesh.local_edge_length(mesh.vertices[p], r)
        if r < MIN_EDGES * h * (1 - 1e-9):
            raise ValueError(f"radius {r:.4g} is below {MIN_EDGES} edge lengths")
        rows.append(fourier_modes(sampler.sample(section, r, theta), n_max))
        if gradient:
            grads.append(sampler.gradient_norm(section, r, theta).mean())
    C = np.array(rows)
    modes = mode_indices(n_max) + 0.5
    pos = modes > 0
    dom = int(np.argmax(np.mean(np.abs(C[:, pos]), axis=0)))
    n_dom = int(round(modes[pos][dom] - 0.5))
    track = np.abs(C[:, list(modes).index(n_dom + 0.5)])
    nu, slope, res = fit_exponent(radii, track)
    a = leading_coefficient(C[-1, list(modes).index(n_dom + 0.5)], n_dom, radii[-1], E)
    dexp = None
    if gradient:
        dexp = fit_exponent(radii, grads)[0]
    frame = "tangent frame of the stereographic chart" + ("" if rotation is None else " after a global rotation")
    return LocalExpansion(
        point=mesh.vertices[p].copy(), index=p, radii=radii, modes=modes, coeffs=C, dominant_mode=n_dom,
        fitted_exponent=nu, plain_slope=slope, fit_residual=res, leading_coeff=a, differential_exponent=dexp,
        gradient_means=np.array(grads) if gradient else None, frame=frame,
    )


def differential_exponent(section, mesh, cocycle, p: int, radii, rotation=None) -> float:
    """Decay exponent of the circle-averaged gradient magnitude."""
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    sampler = CircleSampler.build(mesh, cocycle, p, float(radii.max()), rotation)
    theta = 2 * np.pi * np.arange(64) / 64
    g = [sampler.gradient_norm(section, r, theta).mean() for r in radii]
    return fit_exponent(radii, g)[0]


def write_modes_csv(expansions, path) -> None:
    with open(path, "w") as fh:
        fh.write("branch_index,radius,mode,re,im\n")
        for ex in expansions:
            for r, row in zip(ex.radii, ex.coeffs):
                for m, c in zip(ex.modes, row):
                    fh.write(f"{ex.index},{r:.12e},{m:.1f},{c.real:.12e},{c.imag:.12e}\n")


def write_summary_json(expansions, path, extra=None) -> None:
    doc = {"schema": 1, "branch_points": [ex.summary() for ex in expansions]}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
