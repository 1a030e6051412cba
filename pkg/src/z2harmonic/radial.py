"""Radial Fourier-mode equation on the stereographic disk and its regular solutions.

The n-th circle mode a(r) of a twisted eigensection with eigenvalue E obeys

    -r d/dr (r da/dr) + (n + 1/2)^2 a = E 4 r^2 / (1 + r^2)^2 a,

whose regular solution is r^nu (1 + u(r)) with nu = |n + 1/2| and u even, u(0) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp


def mode_exponent(n: int) -> float:
    return abs(n + 0.5)


def frobenius_series(n: int, E: float, order: int) -> np.ndarray:
    """Coefficients c_0..c_order with a(r) = sum_j c_j r^(nu + 2j), c_0 = 1."""
    if order > 40:
        raise ValueError("order must be at most 40")
    nu = mode_exponent(n)
    c = np.zeros(order + 1)
    c[0] = 1.0
    for J in range(1, order + 1):
        # 4r^2/(1+r^2)^2 = 4 sum_i (-1)^i (i+1) r^(2i+2)
        s = sum((-1) ** (J - 1 - j) * (J - j) * c[j] for j in range(J))
        denom = J * (nu + J)
        assert denom != 0  # indicial roots differ by an odd integer: no resonance
        c[J] = -E * s / denom
    return c


def series_value(c, n, r, derivative: bool = False):
    """a(r) from the series, or r da/dr when ``derivative``."""
    nu = mode_exponent(n)
    r = np.asarray(r, dtype=float)
    p = nu + 2 * np.arange(len(c))
    terms = c[:, None] * r[None, :] ** p[:, None] if r.ndim else c * r**p
    if derivative:
        terms = terms * (p[:, None] if r.ndim else p)
    return terms.sum(axis=0)


def closed_form(k: int, r, deriv: int = 0):
    """(2r/(1+r^2))^(k+1/2) and its first two r-derivatives (E = (k+1/2)(k+3/2))."""
    nu = k + 0.5
    r = np.asarray(r, dtype=float)
    a = (2 * r / (1 + r * r)) ** nu
    if deriv == 0:
        return a
    h = nu * (1 - r * r) / (r * (1 + r * r))
    if deriv == 1:
        return a * h
    q = r + r**3
    dh = nu * ((-2 * r) * q - (1 - r * r) * (1 + 3 * r * r)) / q**2
    return a * (h * h + dh)


def ode_residual(n: int, E: float, r, a, da, d2a):
    """-r (r a')' + nu^2 a - E 4r^2/(1+r^2)^2 a, from values and derivatives in r."""
    nu = mode_exponent(n)
    return -r * da - r * r * d2a + nu * nu * a - E * 4 * r * r / (1 + r * r) ** 2 * a


@dataclass(eq=False)
class RadialProfile:
    n: int
    E: float
    r: np.ndarray
    a: np.ndarray
    frobenius_coeffs: np.ndarray
    solution: object = None

    def __call__(self, r):
        """Profile at stereographic radii r (r0 <= r <= r_max)."""
        t = np.log(np.asarray(r, dtype=float))
        return self.solution.sol(t)[0]


def _rhs(E, nu):
    def f(t, y):
        r2 = np.exp(2 * t)
        return [y[1], (nu * nu - E * 4 * r2 / (1 + r2) ** 2) * y[0]]

    return f


def integrate_radial(n: int, E: float, r_max: float = 1.0, r0: float = 1e-3, order: int = 20,
                     rtol: float = 1e-12, atol: float | None = None, n_samples: int = 200,
                     initial=None) -> RadialProfile:
    """Integrate in t = log r from r0 with series initial data (normalized a / r^nu -> 1)."""
    if r_max > 1.5:
        raise ValueError("r_max must be at most 1.5")
    nu = mode_exponent(n)
    c = frobenius_series(n, E, order)
    if initial is None:
        y0 = [float(series_value(c, n, r0)), float(series_value(c, n, r0, derivative=True))]
    else:
        y0 = list(initial)
    t0, t1 = np.log(r0), np.log(r_max)
    if atol is None:
        # the regular solution is tiny at r0; scale the absolute tolerance with it
        atol = 1e-3 * rtol * max(abs(y0[0]), abs(y0[1]), 1e-300)
    sol = solve_ivp(_rhs(E, nu), (t0, t1), y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"radial integration failed: {sol.message}")
    r = np.geomspace(r0, r_max, n_samples)
    return RadialProfile(n, E, r, sol.sol(np.log(r))[0], c, sol)


def wronskian(p1: RadialProfile, p2: RadialProfile, r) -> np.ndarray:
    """a1 (r a2') - a2 (r a1'); constant for solutions of the same equation."""
    t = np.log(np.asarray(r, dtype=float))
    y1 = p1.solution.sol(t)
    y2 = p2.solution.sol(t)
    return y1[0] * y2[1] - y2[0] * y1[1]


def compare_profiles(profile: RadialProfile, radii_geodesic, amplitudes) -> float:
    """Max relative deviation after the best scalar fit; radii are geodesic.

    Geodesic radius r converts to the stereographic one by tan(r / 2).
    """
    rg = np.asarray(radii_geodesic, dtype=float)
    m = np.asarray(amplitudes, dtype=float)
    rs = np.tan(rg / 2)
    ok = (rs >= profile.r[0]) & (rs <= profile.r[-1])
    if not ok.any():
        raise ValueError("no overlapping radii")
    a = profile(rs[ok])
    m = m[ok]
    s = (a @ m) / (a @ a)
    return float(np.max(np.abs(s * a - m) / np.abs(m)))


def write_profile_csv(profile: RadialProfile, path) -> None:
    with open(path, "w") as fh:
        fh.write("r,a\n")
        for r, a in zip(profile.r, profile.a):
            fh.write(f"{r:.12e},{a:.12e}\n")
