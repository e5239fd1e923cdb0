"""P1 finite elements on the Gamma0-constrained space.

Dirichlet constraints are eliminated: every matrix returned with
``full=False`` acts on the free (non-Gamma0) vertices only. Assembly is
vectorised over elements and reduced through COO summation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, SingularMatrixError
from .expr import as_expression, evaluate
from .mesh import BoundaryPartition, CoefficientTables, Mesh
from .quadrature import triangle_rule

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FemSpace:
    mesh: Mesh
    partition: BoundaryPartition
    free: np.ndarray
    constrained: np.ndarray
    dof_of_vertex: np.ndarray  # -1 on constrained vertices

    @property
    def n_free(self) -> int:
        return len(self.free)

    def gamma1_vertices(self) -> np.ndarray:
        """Free vertices lying on a Gamma1 edge."""
        v = np.unique(self.partition.gamma1_edges(self.mesh))
        return v[self.dof_of_vertex[v] >= 0]

    def restrict(self, nodal: np.ndarray) -> np.ndarray:
        return np.asarray(nodal)[self.free]

    def extend(self, free_values, constrained_values=0.0) -> np.ndarray:
        free_values = np.asarray(free_values)
        out = np.zeros(self.mesh.n_vertices, dtype=np.result_type(free_values, float))
        out[self.constrained] = constrained_values
        out[self.free] = free_values
        return out


def build_space(mesh: Mesh, partition: BoundaryPartition) -> FemSpace:
    constrained = np.unique(partition.gamma0_edges(mesh))
    mask = np.ones(mesh.n_vertices, dtype=bool)
    mask[constrained] = False
    free = np.flatnonzero(mask)
    dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
    dof[free] = np.arange(len(free))
    return FemSpace(mesh, partition, free, constrained, dof)


# ---------------------------------------------------------------------------
# element kernels


def p1_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle gradients of the barycentric coordinates, shape (m, 3, 2), and areas."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.areas()
    x, y = p[..., 0], p[..., 1]
    g = np.empty(p.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = y[:, j] - y[:, k]
        g[:, i, 1] = x[:, k] - x[:, j]
    return g / (2.0 * area)[:, None, None], area


def _scatter(n: int, conn: np.ndarray, local: np.ndarray) -> sp.csr_matrix:
    nloc = conn.shape[1]
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _reduce(space: FemSpace, A: sp.csr_matrix, full: bool) -> sp.csr_matrix:
    if full:
        return A
    return A[space.free][:, space.free].tocsr()


def local_mass(mesh: Mesh, tables: CoefficientTables, weighted: bool = True) -> np.ndarray:
    bary, w = tables.bary, tables.weights
    rho = tables.rho if weighted else np.ones_like(tables.rho)
    # sum_q w_q rho_q lam_i(q) lam_j(q)
    loc = np.einsum("q,mq,qi,qj->mij", w, rho, bary, bary)
    return loc * mesh.areas()[:, None, None]


def local_stiffness(mesh: Mesh, tables: CoefficientTables, weighted: bool = True) -> np.ndarray:
    g, area = p1_gradients(mesh)
    if weighted:
        Tbar = np.einsum("q,mqab->mab", tables.weights, tables.T)
    else:
        Tbar = np.broadcast_to(np.eye(2), (mesh.n_triangles, 2, 2))
    loc = np.einsum("mia,mab,mjb->mij", g, Tbar, g) * area[:, None, None]
    return 0.5 * (loc + loc.transpose(0, 2, 1))


def assemble_mass(space: FemSpace, tables: CoefficientTables, full: bool = False,
                  weighted: bool = True) -> sp.csr_matrix:
    """rho-weighted P1 mass matrix; ``weighted=False`` gives the plain L2 Gram matrix."""
    mesh = space.mesh
    A = _scatter(mesh.n_vertices, mesh.triangles, local_mass(mesh, tables, weighted))
    return _reduce(space, A, full)


def assemble_stiffness(space: FemSpace, tables: CoefficientTables, full: bool = False,
                       weighted: bool = True) -> sp.csr_matrix:
    """T-weighted P1 stiffness matrix; T is averaged per element with the quadrature weights."""
    mesh = space.mesh
    A = _scatter(mesh.n_vertices, mesh.triangles, local_stiffness(mesh, tables, weighted))
    return _reduce(space, A, full)


def assemble_boundary_mass(space: FemSpace, partition: BoundaryPartition, tables: CoefficientTables,
                           full: bool = False, weighted: bool = True) -> sp.csr_matrix:
    """Gamma1 edge mass weighted by 1/k (the impedance term with lambda factored out)."""
    mesh = space.mesh
    edges = tables.gamma1_edges
    if len(edges) == 0:
        A = sp.csr_matrix((mesh.n_vertices, mesh.n_vertices))
        return _reduce(space, A, full)
    s = tables.edge_params
    phi = np.column_stack([1.0 - s, s])  # (q, 2)
    kinv = tables.kinv if weighted else np.ones_like(tables.kinv)
    L = mesh.edge_lengths(edges)
    loc = np.einsum("q,eq,qi,qj->eij", tables.edge_weights, kinv, phi, phi) * L[:, None, None]
    A = _scatter(mesh.n_vertices, edges, loc)
    return _reduce(space, A, full)


@dataclass(frozen=True, eq=False)
class OperatorMatrices:
    """Sparse operators over the free dofs, plus full-vertex versions and unweighted Gram matrices.

    ``M``, ``K``, ``B`` define the pencil ``K + lam^2 M + lam B``; ``mass0``,
    ``stiff0`` and ``boundary0_full`` are the unweighted L2, H1-seminorm and
    Gamma1 L2 Gram matrices.
    """

    space: FemSpace
    tables: CoefficientTables
    M: sp.csr_matrix
    K: sp.csr_matrix
    B: sp.csr_matrix
    M_full: sp.csr_matrix
    K_full: sp.csr_matrix
    B_full: sp.csr_matrix
    mass0: sp.csr_matrix
    stiff0: sp.csr_matrix
    mass0_full: sp.csr_matrix
    stiff0_full: sp.csr_matrix
    boundary0_full: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.space.n_free

    @property
    def rho_max(self) -> float:
        return self.tables.rho_max

    @property
    def rho_free(self) -> np.ndarray:
        """rho at the free vertices; converts nodal velocity to momentum density."""
        return self.tables.rho_vertex[self.space.free]


def assemble_operators(space: FemSpace, tables: CoefficientTables) -> OperatorMatrices:
    part = space.partition
    M_full = assemble_mass(space, tables, full=True)
    K_full = assemble_stiffness(space, tables, full=True)
    B_full = assemble_boundary_mass(space, part, tables, full=True)
    m0 = assemble_mass(space, tables, full=True, weighted=False)
    k0 = assemble_stiffness(space, tables, full=True, weighted=False)
    b0 = assemble_boundary_mass(space, part, tables, full=True, weighted=False)
    r = lambda A: _reduce(space, A, False)  # noqa: E731
    return OperatorMatrices(
        space=space, tables=tables,
        M=r(M_full), K=r(K_full), B=r(B_full),
        M_full=M_full, K_full=K_full, B_full=B_full,
        mass0=r(m0), stiff0=r(k0), mass0_full=m0, stiff0_full=k0, boundary0_full=b0,
    )


def export_matrix_market(matrices: OperatorMatrices, directory) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in ("M", "K", "B"):
        p = out / f"{name}.mtx"
        scipy.io.mmwrite(str(p), getattr(matrices, name), symmetry="symmetric")
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# linear solves


class Factorization:
    """Sparse LU factorisation with residual checking and iterative refinement.

    ``solve`` is reentrant: it only reads the factors.
    """

    PIVOT_RATIO = 1e-14

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        self.n = A.shape[0]
        try:
            self.lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularMatrixError(f"matrix of size {self.n} is singular: {exc}") from exc
        d = np.abs(self.lu.U.diagonal())
        dmax = d.max() if d.size else 0.0
        if d.size and (dmax == 0 or d.min() <= self.PIVOT_RATIO * dmax):
            raise SingularMatrixError(
                f"matrix of size {self.n} is singular to tolerance: "
                f"min |pivot| = {d.min():.3e}, max |pivot| = {dmax:.3e}")
        self.pivot_ratio = float(d.min() / dmax) if d.size else 1.0

    def _apply(self, r):
        if np.iscomplexobj(r) and not np.iscomplexobj(self.A):
            return self.lu.solve(np.ascontiguousarray(r.real)) + 1j * self.lu.solve(
                np.ascontiguousarray(r.imag))
        return self.lu.solve(r)

    def solve(self, b, tol: float = RESIDUAL_TOL, refine: int = 3):
        b = np.asarray(b)
        dtype = np.result_type(self.A.dtype, b.dtype, np.float64)
        rhs = np.ascontiguousarray(b.astype(dtype, copy=False))
        x = self._apply(rhs)
        bn = np.linalg.norm(rhs, axis=0)
        bn = np.where(bn == 0, 1.0, bn)
        history = []
        for _ in range(refine + 1):
            r = rhs - self.A @ x
            rel = np.max(np.linalg.norm(r, axis=0) / bn)
            history.append(float(rel))
            if rel <= tol:
                return x
            x = x + self._apply(r)
        raise ConvergenceError(
            f"relative residual {history[-1]:.3e} above {tol:.0e} after refinement", history)


def solve_linear(A, rhs, tol: float = RESIDUAL_TOL):
    """Direct sparse solve with ``||Ax - b|| / ||b|| <= tol`` enforced."""
    return Factorization(A).solve(rhs, tol=tol)


def l2_error(mesh: Mesh, nodal: np.ndarray, exact, rule: int = 7) -> float:
    """L2 norm of ``exact - u_h`` for a P1 field given on all vertices, by quadrature."""
    bary, w = triangle_rule(rule)
    pts = np.einsum("qi,mid->mqd", bary, mesh.vertices[mesh.triangles])
    uh = np.einsum("qi,mi->mq", bary, np.asarray(nodal)[mesh.triangles])
    if callable(exact):
        ue = exact(pts[..., 0], pts[..., 1])
    else:
        ue = evaluate(as_expression(exact), pts[..., 0], pts[..., 1])
    err = np.abs(ue - uh) ** 2
    return float(np.sqrt(np.sum(mesh.areas()[:, None] * w[None, :] * err)))
