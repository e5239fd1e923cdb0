"""Discrete spectrum of the generator and the A0 zero-eigenvalue witness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, ConvergenceError
from .fem import Factorization, OperatorMatrices, _scatter, p1_gradients
from .helmholtz import Resolvent
from .mesh import CoefficientTables, Mesh
from .state import GeneratorMatrix, split, stack

IMAG_AXIS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Eigenvalues sorted by real part (descending) with H-normalised eigenvectors.

    ``vectors[:, j]`` stacks ``(w, v)``.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    trace_energy: np.ndarray
    dissipation_defect: np.ndarray
    mode: str

    def __len__(self):
        return len(self.eigenvalues)


def _sort_order(lam):
    # exact conjugate pairs share the real part; break ties by imaginary part
    return np.lexsort((-lam.imag, -lam.real))


def dissipation_defects(lam, vectors, gen: GeneratorMatrix) -> np.ndarray:
    out = np.empty(len(lam))
    for j, l in enumerate(lam):
        z = vectors[:, j]
        nz = np.real(gen.inner(z, z))
        out[j] = abs(l.real * nz + gen.dissipation(z)) / nz
    return out


def compute_spectrum(matrices: OperatorMatrices, how: str = "dense", shift=0.0,
                     count: int = 20, tol: float = 0.0, maxiter: int = None) -> SpectrumReport:
    """Eigenvalues of ``lam^2 M + lam B + K`` through the first-companion form over ``(w, v)``.

    ``dense`` solves the full companion problem; ``shift_invert`` runs
    ARPACK on ``(A_h - shift)^{-1}``, each application being one lossy
    Helmholtz solve with a fixed factorisation of ``S(shift)``.
    """
    gen = GeneratorMatrix(matrices)
    n = matrices.n
    if how == "dense":
        lam, Z = sla.eig(gen.dense())
        mode = "dense"
    elif how == "shift_invert":
        shift = complex(0.0 if shift is None else shift)
        count = int(count)
        if not 1 <= count < 2 * n - 1:
            raise ConfigError(f"count must be in [1, {2 * n - 2}] for shift-invert, got {count}")
        if shift == 0:
            stiff = Factorization(matrices.K)

            def op(z):
                w, v = gen.apply_inverse(z[:n], z[n:], stiff)
                return stack(w, v)
        else:
            res = Resolvent(matrices, shift)
            op = res.apply_stacked
        dtype = complex if shift.imag != 0 else float
        L = spla.LinearOperator((2 * n, 2 * n), matvec=op, dtype=dtype)
        v0 = np.ones(2 * n, dtype=dtype)  # fixed start vector for reproducibility
        try:
            theta, Z = spla.eigs(L, k=count, which="LM", v0=v0, tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"shift-invert Arnoldi did not converge: {len(exc.eigenvalues)} of {count} "
                f"eigenvalues converged", history=list(exc.eigenvalues)) from exc
        lam = shift + 1.0 / theta
        mode = "shift_invert"
    else:
        raise ConfigError(f"unknown spectrum mode {how!r} (dense | shift_invert)")

    order = _sort_order(lam)
    lam, Z = lam[order], np.array(Z[:, order], dtype=complex)
    residuals = np.empty(len(lam))
    trace = np.empty(len(lam))
    for j in range(len(lam)):
        z = Z[:, j]
        z /= gen.norm(z)
        Z[:, j] = z
        residuals[j] = gen.norm(gen.apply_stacked(z) - lam[j] * z)
        trace[j] = gen.dissipation(z)
    return SpectrumReport(lam, Z, residuals, trace, dissipation_defects(lam, Z, gen), mode)


def spectral_abscissa(report: SpectrumReport) -> float:
    if len(report) == 0:
        raise ValueError("empty spectrum report")
    return float(np.max(report.eigenvalues.real))


def certify_left_half_plane(report: SpectrumReport, tol: float = IMAG_AXIS_TOL) -> bool:
    return spectral_abscissa(report) < -tol


def conjugation_gap(report: SpectrumReport) -> float:
    """Largest distance from an eigenvalue's conjugate to the nearest listed eigenvalue."""
    lam = report.eigenvalues
    d = np.abs(np.conj(lam)[:, None] - lam[None, :])
    return float(d.min(axis=1).max()) if len(lam) else 0.0


def eigenpair_dissipation_check(report: SpectrumReport, matrices: OperatorMatrices) -> np.ndarray:
    """``|Re lam ||z||_H^2 + v^H B v| / ||z||_H^2`` for every listed eigenpair."""
    return dissipation_defects(report.eigenvalues, report.vectors, GeneratorMatrix(matrices))


def imaginary_axis_trace(report: SpectrumReport) -> list:
    """Eigenpairs with ``|Re lam| <= tol``, with their boundary trace energy (relative to ||z||_H^2 = 1)."""
    mask = np.abs(report.eigenvalues.real) <= IMAG_AXIS_TOL
    return [(complex(l), float(t)) for l, t in zip(report.eigenvalues[mask], report.trace_energy[mask])]


@dataclass(frozen=True)
class ZeroInjectivity:
    min_abs_eigenvalue: float
    sigma_min_generator: float
    sigma_min_stiffness: float


def zero_injectivity_check(matrices: OperatorMatrices, report: SpectrumReport = None) -> ZeroInjectivity:
    report = report if report is not None else compute_spectrum(matrices, "dense")
    A = GeneratorMatrix(matrices).dense()
    return ZeroInjectivity(
        min_abs_eigenvalue=float(np.min(np.abs(report.eigenvalues))),
        sigma_min_generator=float(np.linalg.svd(A, compute_uv=False)[-1]),
        sigma_min_stiffness=float(np.linalg.svd(matrices.K.toarray(), compute_uv=False)[-1]),
    )


# ---------------------------------------------------------------------------
# A0 pathology


@dataclass(frozen=True, eq=False)
class A0KernelWitness:
    """Divergence-free (in the T sense) field ``F = T^{-1}(d2 phi, -d1 phi)`` and its orthogonality.

    ``residual`` is ``sup_v |int T F . grad v| / (||F|| ||grad v||)`` over P1
    functions vanishing on the boundary; ``projection_rel`` the relative norm
    of the L2 projection of ``T F`` onto their gradients.
    """

    points: np.ndarray
    F: np.ndarray
    f_norm: float
    residual: float
    projection_rel: float
    mesh_size: float


def bump(points, center, radius):
    """``phi = exp(-1/(1-r^2))`` for ``r = |z - c|/R < 1`` and its gradient."""
    d = (points - np.asarray(center, dtype=float)) / radius
    q = np.sum(d * d, axis=-1)
    inside = q < 1
    phi = np.zeros_like(q)
    grad = np.zeros_like(points)
    qi = q[inside]
    phi[inside] = np.exp(-1.0 / (1.0 - qi))
    fac = -2.0 * phi[inside] / (radius * (1.0 - qi) ** 2)
    grad[inside] = fac[:, None] * d[inside]
    return phi, grad


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
    return np.hypot(*(a + t[:, None] * ab - p).T)


def a0_kernel_field(mesh: Mesh, bump_center, bump_radius: float, tables: CoefficientTables) -> A0KernelWitness:
    """Quadrature witness that ``(0, F)`` is a nonzero stationary state of the unconstrained operator.

    Uses whatever quadrature rule ``tables`` was sampled with (7 points for
    the convergence study).
    """
    c = np.asarray(bump_center, dtype=float)
    R = float(bump_radius)
    if R <= 0:
        raise ConfigError("bump radius must be positive")
    e = mesh.boundary_edges
    dist = _segment_distance(c, mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]])
    outward = mesh.outward_normals()
    # inside test: center on the inner side of the closest edge
    k = int(np.argmin(dist))
    inside = np.dot(c - mesh.vertices[e[k, 0]], outward[k]) < 0
    if not inside or dist.min() <= R:
        raise ConfigError(f"bump disk (center {tuple(c)}, radius {R}) is not strictly inside the domain")

    pts = tables.points
    _, dphi = bump(pts, c, R)
    TF = np.stack([dphi[..., 1], -dphi[..., 0]], axis=-1)  # T F, independent of T
    F = np.linalg.solve(tables.T, TF[..., None])[..., 0]
    area = mesh.areas()
    wq = area[:, None] * tables.weights[None, :]
    f_norm = float(np.sqrt(np.sum(wq * np.sum(F * F, axis=-1))))
    tf_norm = float(np.sqrt(np.sum(wq * np.sum(TF * TF, axis=-1))))

    grads, _ = p1_gradients(mesh)
    # r_i = sum_T int_T (T F) . grad lam_i, with T F recomputed from the sampled tensor
    TFq = np.einsum("mqab,mqb->mqa", tables.T, F)
    mean_TF = np.einsum("mq,mqa->ma", wq, TFq)
    r = np.bincount(mesh.triangles.ravel(), np.einsum("ma,mia->mi", mean_TF, grads).ravel(),
                    minlength=mesh.n_vertices)

    interior = np.setdiff1d(np.arange(mesh.n_vertices), np.unique(e))
    k0 = _scatter(mesh.n_vertices, mesh.triangles,
                  np.einsum("mia,mja->mij", grads, grads) * area[:, None, None])
    k0 = k0[interior][:, interior]
    ri = r[interior]
    dual = float(np.sqrt(max(ri @ Factorization(k0).solve(ri), 0.0)))

    # independent route: weighted least squares of grad u ~ T F at the quadrature points
    nq = pts.shape[1]
    col = np.full(mesh.n_vertices, -1)
    col[interior] = np.arange(len(interior))
    m_idx, q_idx, a_idx, i_idx = np.meshgrid(np.arange(mesh.n_triangles), np.arange(nq),
                                             np.arange(2), np.arange(3), indexing="ij")
    rows = (m_idx * nq + q_idx) * 2 + a_idx
    cols = col[mesh.triangles[m_idx, i_idx]]
    vals = grads[m_idx, i_idx, a_idx] * np.sqrt(wq)[m_idx, q_idx]
    keep = cols >= 0
    G = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])),
                      shape=(mesh.n_triangles * nq * 2, len(interior)))
    target = (TFq * np.sqrt(wq)[..., None]).ravel()
    coef = spla.lsqr(G, target, atol=1e-15, btol=1e-15, iter_lim=20 * len(interior))[0]
    proj = float(np.linalg.norm(G @ coef))

    return A0KernelWitness(pts, F, f_norm, dual / f_norm, proj / tf_norm, mesh.max_edge_length())
