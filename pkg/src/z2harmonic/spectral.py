"""Twisted cotangent Laplacian, the symmetric sector, and lowest eigenpairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .cover import SignCocycle, group_closure
from .mesh import GeometricTables, geometric_tables

DENSE_LIMIT = 3000


@dataclass(eq=False)
class TwistedOperators:
    """Stiffness K and lumped mass M restricted to the non-branch vertices."""

    K: sparse.csr_matrix
    M: sparse.csr_matrix
    free: np.ndarray
    n_vertices: int
    tables: GeometricTables

    def extend(self, x) -> np.ndarray:
        """Full vertex vector from free values (branch vertices get 0)."""
        out = np.zeros(self.n_vertices) if x.ndim == 1 else np.zeros((self.n_vertices, x.shape[1]))
        out[self.free] = x
        return out


def assemble(mesh, cocycle: SignCocycle, tables: GeometricTables | None = None) -> TwistedOperators:
    """K_ij = -w_ij sigma_ij, K_ii = sum_j w_ij; M = diag(lumped area); Dirichlet at branch vertices."""
    if cocycle.n_vertices != mesh.n_vertices or len(cocycle.signs) != len(mesh.edges):
        raise ValueError("cocycle does not live on this mesh")
    if tables is None:
        tables = geometric_tables(mesh)
    n = mesh.n_vertices
    e = mesh.edges
    w = tables.cot_weight
    off = -w * cocycle.signs
    rows = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0], e[:, 0], e[:, 1]])
    vals = np.concatenate([off, off, w, w])
    K = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    free = mesh.free
    K = K[free][:, free].tocsr()
    K = ((K + K.T) * 0.5).tocsr()
    M = sparse.diags(tables.vertex_area[free]).tocsr()
    return TwistedOperators(K, M, free, n, tables)


@dataclass(eq=False)
class SectorProjector:
    """Projector onto the chi-isotypic sector, P = B B^T with orthonormal orbit sums B."""

    B: sparse.csc_matrix
    group_order: int
    n_orbits: int

    @property
    def rank(self) -> int:
        return self.B.shape[1]

    def __call__(self, x):
        return self.B @ (self.B.T @ x)

    def dense(self) -> np.ndarray:
        return (self.B @ self.B.T).toarray()


def sector_projector(lifts, free) -> SectorProjector:
    """(1/|H|) sum_h chi(h) rho(h) over the group generated by ``lifts``.

    chi is -1 on every lift.  ``free`` are the vertex indices kept by
    :func:`assemble`; the projector acts on that coordinate space.
    """
    elems, chars = group_closure(lifts, free)
    n = len(lifts[0].permutation)
    pos = -np.ones(n, dtype=np.int64)
    pos[free] = np.arange(len(free))
    perms = np.array([g.permutation[free] for g in elems])
    signs = np.array([g.vertex_sign[free] for g in elems], dtype=float)
    images = pos[perms]
    if np.any(images < 0):
        raise ValueError("group does not preserve the non-branch vertices")
    orbit_rep = images.min(axis=0)
    reps = np.flatnonzero(orbit_rep == np.arange(len(free)))
    H = len(elems)
    rows = images[:, reps].ravel()
    cols = np.tile(np.arange(len(reps)), H)
    vals = (chars[:, None] * signs[:, reps]).ravel() / H
    B = sparse.coo_matrix((vals, (rows, cols)), shape=(len(free), len(reps))).tocsc()
    B.eliminate_zeros()
    norms = np.sqrt(np.asarray(B.multiply(B).sum(axis=0)).ravel())
    keep = norms > 1e-12
    B = B[:, np.flatnonzero(keep)] @ sparse.diags(1.0 / norms[keep])
    return SectorProjector(B.tocsc(), H, len(reps))


@dataclass(eq=False)
class EigenResult:
    eigenvalue: float
    section: np.ndarray  # full vertex vector, 0 at branch vertices, sum(area f^2) = 1
    residual: float
    iterations: int
    level: int
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sections: np.ndarray | None = None
    sector_dimension: int | None = None


def _residual(K, M, x, E):
    m = M.diagonal()
    r = K @ x - E * (M @ x)
    xm = np.sqrt(x @ (m * x))
    return float(np.sqrt(r @ (r / m)) / xm)


def solve_lowest(ops: TwistedOperators, P: SectorProjector | None = None, seed: int = 0,
                 tol: float = 1e-9, count: int = 1, level: int = -1, maxiter: int = 5000) -> EigenResult:
    """Smallest eigenpairs of (K, M), optionally restricted to range(P).

    Small (sector-reduced) pencils are solved densely; large ones by
    shift-invert Lanczos with a seeded start vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    K, M = ops.K, ops.M
    if P is not None:
        if P.rank == 0:
            raise ValueError("empty sector: the projector has rank 0")
        B = P.B
        Kr = (B.T @ K @ B).tocsc()
        Mr = (B.T @ M @ B).tocsc()
    else:
        B = None
        Kr, Mr = K.tocsc(), M.tocsc()
    n = Kr.shape[0]
    count = min(count, n)
    iterations = 1
    if n <= DENSE_LIMIT:
        w, V = linalg.eigh(Kr.toarray(), Mr.toarray(), subset_by_index=[0, count - 1])
    else:
        lu = splinalg.splu((Kr + Mr).tocsc())
        calls = [0]

        def op(x):
            calls[0] += 1
            return lu.solve(np.asarray(x, dtype=float).ravel())

        OPinv = splinalg.LinearOperator((n, n), matvec=op, dtype=float)
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            w, V = splinalg.eigsh(Kr, k=count, M=Mr, sigma=-1.0, OPinv=OPinv, v0=v0,
                                  which="LM", tol=0.0, maxiter=maxiter)
        except splinalg.ArpackNoConvergence as exc:
            raise RuntimeError("eigensolver did not converge within the iteration cap") from exc
        order = np.argsort(w)
        w, V = w[order], V[:, order]
        iterations = calls[0]
    X = V if B is None else B @ V
    X = np.asarray(X)
    res = []
    for k in range(X.shape[1]):
        x = X[:, k]
        x /= np.sqrt(x @ (M @ x))
        i = np.argmax(np.abs(x))
        if x[i] < 0:
            x *= -1
        X[:, k] = x
        res.append(_residual(K, M, x, w[k]))
    if res[0] > tol:
        raise RuntimeError(f"residual {res[0]:.2e} above tolerance {tol:.1e}")
    full = ops.extend(X)
    return EigenResult(
        eigenvalue=float(w[0]),
        section=full[:, 0],
        residual=res[0],
        iterations=iterations,
        level=level,
        eigenvalues=np.asarray(w, dtype=float),
        sections=full,
        sector_dimension=None if P is None else P.rank,
    )


def rayleigh_quotient(ops: TwistedOperators, f) -> float:
    x = np.asarray(f)[ops.free]
    return float(x @ (ops.K @ x) / (x @ (ops.M @ x)))


def mobius_circle_eigenvalue(n_points: int) -> float:
    """Lowest eigenvalue of the antiperiodic second difference on a circle of length 2 pi.

    The continuum limit is 1/4: the smallest (n + 1/2)^2.
    """
    h = 2 * np.pi / n_points
    main = np.full(n_points, 2.0)
    off = -np.ones(n_points - 1)
    L = sparse.diags([off, main, off], [-1, 0, 1], format="lil")
    L[0, n_points - 1] = 1.0  # crossing the twist flips the sign
    L[n_points - 1, 0] = 1.0
    L = (L / h**2).tocsc()
    w = splinalg.eigsh(L, k=1, sigma=-1.0, which="LM", v0=np.ones(n_points), return_eigenvectors=False)
    return float(w[0])


def mobius_circle_exact(n_points: int) -> float:
    h = 2 * np.pi / n_points
    return float(4.0 / h**2 * np.sin(h / 4.0) ** 2)


def annulus_inequality_check(mesh, cocycle: SignCocycle, p: int, delta: float, rho: float,
                             N: int | None = None, tables: GeometricTables | None = None) -> float:
    """Largest ratio int|f|^2 / int|df|^2 over twisted sections supported in the annulus.

    ``p`` is a branch vertex index.  With ``N`` the sections are further
    required to have no circle modes with |n + 1/2| < N + 1/2, imposed per
    radial bin of roughly one edge length.
    """
    from .local import local_gauge

    if tables is None:
        tables = geometric_tables(mesh)
    if not mesh.is_branch[p]:
        raise ValueError("annulus must be centred at a branch point")
    if cocycle.cycle_product(mesh.fan(p)) != -1:
        raise ValueError("untwisted annulus: constants make the ratio unbounded")
    d = tables.branch_distance[:, list(mesh.branch).index(p)]
    others = [b for b in mesh.branch if b != p]
    if others and tables.branch_distance[others, list(mesh.branch).index(p)].min() <= rho:
        raise ValueError("annulus contains another branch point")
    inside = np.flatnonzero((d > delta) & (d < rho) & ~mesh.is_branch)
    ops = assemble(mesh, cocycle, tables)
    pos = -np.ones(mesh.n_vertices, dtype=np.int64)
    pos[ops.free] = np.arange(len(ops.free))
    idx = pos[inside]
    K = ops.K[idx][:, idx].toarray()
    m = ops.M.diagonal()[idx]
    if N is not None and N > 0:
        g, theta = local_gauge(mesh, cocycle, p, rho, vertices=inside)
        h = mesh.local_edge_length(mesh.vertices[p], rho)
        nbins = max(1, int(round((rho - delta) / h)))
        bins = np.minimum(((d[inside] - delta) / (rho - delta) * nbins).astype(int), nbins - 1)
        rows = []
        for b in range(nbins):
            sel = bins == b
            for n in range(-N, N):
                c = m * g * np.exp(-1j * (n + 0.5) * theta) * sel
                rows += [c.real, c.imag]
        C = np.array(rows)
        Z = linalg.null_space(C, rcond=1e-10)
        K = Z.T @ K @ Z
        Mz = Z.T @ (m[:, None] * Z)
        lam = linalg.eigh(K, Mz, eigvals_only=True, subset_by_index=[0, 0])[0]
    else:
        lam = linalg.eigh(K, np.diag(m), eigvals_only=True, subset_by_index=[0, 0])[0]
    return float(1.0 / lam)


def write_coo(A, path) -> None:
    """Operator as ``row col value`` lines (0-based, upper and lower entries)."""
    C = sparse.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        fh.write(f"# {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for k in order:
            fh.write(f"{C.row[k]} {C.col[k]} {C.data[k]:.17e}\n")
