"""Lossy Helmholtz problems and the generator resolvent built from them.

The weak problem is ``S(lam) u = rhs`` with the symmetric (not Hermitian) pencil

    S(lam) = K + lam^2 M + lam B,
    rhs_i  = -<f, phi_i> + <g, phi_i>_Gamma1.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigError, InvariantViolation, NearSpectrumError, SingularMatrixError, SizeLimitError
from .expr import Expression, as_expression, evaluate
from .fem import Factorization, OperatorMatrices
from .state import DENSE_LIMIT, GeneratorMatrix, PHState, from_wv, stack, to_wv

log = logging.getLogger(__name__)

Load = Union[None, str, Expression, np.ndarray]


@dataclass(frozen=True)
class HelmholtzProblem:
    """``f`` is an interior load and ``g`` a Gamma1 load.

    Each may be an expression, a nodal vector over all vertices (taken as its
    P1 interpolant), or ``None`` for zero.
    """

    lam: complex
    f: Load = None
    g: Load = None


@dataclass(frozen=True)
class HelmholtzSolution:
    u: np.ndarray  # free dofs
    residual: float


def assemble_pencil(matrices: OperatorMatrices, lam) -> sp.csr_matrix:
    lam = complex(lam)
    if lam.imag == 0:
        lam = lam.real
    return (matrices.K + (lam * lam) * matrices.M + lam * matrices.B).tocsr()


def _check_lambda(lam):
    lam = complex(lam)
    if lam == 0:
        raise ConfigError("lambda must be nonzero for the lossy Helmholtz problem")
    if lam.real < 0:
        log.warning("lambda = %s lies in the open left half-plane; solvable only off the discrete spectrum", lam)
    return lam


def sigma_min_estimate(S) -> Optional[float]:
    if S.shape[0] > DENSE_LIMIT:
        return None
    return float(np.linalg.svd(S.toarray(), compute_uv=False)[-1])


class PencilSolver:
    """Factorisation of ``S(lam)`` reused across right-hand sides."""

    def __init__(self, matrices: OperatorMatrices, lam):
        self.matrices = matrices
        self.lam = complex(lam)
        self.S = assemble_pencil(matrices, lam)
        try:
            self.fact = Factorization(self.S)
        except SingularMatrixError as exc:
            raise NearSpectrumError(self.lam, sigma_min_estimate(self.S)) from exc

    def solve(self, rhs):
        return self.fact.solve(rhs)


def load_vector(matrices: OperatorMatrices, f: Load = None, g: Load = None) -> np.ndarray:
    """``-<f, phi_i> + <g, phi_i>_Gamma1`` over the free dofs."""
    space, tables = matrices.space, matrices.tables
    mesh = space.mesh
    n_all = mesh.n_vertices
    total = np.zeros(n_all, dtype=complex)
    if f is not None:
        if isinstance(f, np.ndarray):
            total -= matrices.mass0_full @ f
        else:
            e = as_expression(f)
            vals = evaluate(e, tables.points[..., 0], tables.points[..., 1])
            loc = np.einsum("q,mq,qi->mi", tables.weights, vals, tables.bary) * mesh.areas()[:, None]
            total -= np.bincount(mesh.triangles.ravel(), loc.ravel(), minlength=n_all)
    if g is not None:
        if isinstance(g, np.ndarray):
            total += matrices.boundary0_full @ g
        elif len(tables.gamma1_edges):
            e = as_expression(g)
            vals = evaluate(e, tables.edge_points[..., 0], tables.edge_points[..., 1])
            s = tables.edge_params
            phi = np.column_stack([1.0 - s, s])
            L = mesh.edge_lengths(tables.gamma1_edges)
            loc = np.einsum("q,eq,qi->ei", tables.edge_weights, vals, phi) * L[:, None]
            total += np.bincount(tables.gamma1_edges.ravel(), loc.ravel(), minlength=n_all)
    out = total[space.free]
    return out if np.any(out.imag) else out.real


def solve_helmholtz(matrices: OperatorMatrices, problem: HelmholtzProblem,
                    solver: PencilSolver = None) -> HelmholtzSolution:
    lam = _check_lambda(problem.lam)
    rhs = load_vector(matrices, problem.f, problem.g)
    solver = solver or PencilSolver(matrices, lam)
    u = solver.solve(rhs)
    bn = np.linalg.norm(rhs)
    res = np.linalg.norm(solver.S @ u - rhs)
    return HelmholtzSolution(u, float(res / bn) if bn > 0 else float(res))


class Resolvent:
    """``R(lam) = (A_h - lam)^{-1}`` applied through one lossy Helmholtz solve.

    For ``y = (p_y, phi_y)`` the Helmholtz loads are ``f = lam y1 + lam^2 rho phi_y``
    and ``g = -lam k^{-1} phi_y``; the result is
    ``p_x = rho (u + phi_y)``, ``phi_x = u / lam``.
    """

    def __init__(self, matrices: OperatorMatrices, lam):
        self.matrices = matrices
        self.lam = _check_lambda(lam)
        self.pencil = PencilSolver(matrices, self.lam)

    def rhs(self, w_y, v_y):
        m, lam = self.matrices, self.lam
        # -<lam rho v_y + lam^2 rho phi, .> + <-lam k^-1 phi, .>_Gamma1
        return -lam * (m.M @ v_y) - lam * lam * (m.M @ w_y) - lam * (m.B @ w_y)

    def apply_wv(self, w_y, v_y):
        u = self.pencil.solve(self.rhs(w_y, v_y))
        return u / self.lam, u + w_y

    def apply(self, y: PHState) -> PHState:
        w_y, v_y = to_wv(self.matrices, y)
        return from_wv(self.matrices, *self.apply_wv(w_y, v_y))

    def apply_stacked(self, z):
        n = self.matrices.n
        return stack(*self.apply_wv(z[:n], z[n:]))


def apply_resolvent(matrices: OperatorMatrices, lam, y: PHState) -> PHState:
    return Resolvent(matrices, lam).apply(y)


def resolvent_defect(matrices: OperatorMatrices, lam, y: PHState, x: PHState,
                     generator: GeneratorMatrix = None) -> float:
    """``||(A_h - lam) x - y||_H / ||y||_H``."""
    gen = generator or GeneratorMatrix(matrices)
    wx, vx = to_wv(matrices, x)
    wy, vy = to_wv(matrices, y)
    aw, av = gen.apply(wx, vx)
    r = stack(aw - lam * wx - wy, av - lam * vx - vy)
    yn = gen.norm(stack(wy, vy))
    return gen.norm(r) / yn if yn > 0 else gen.norm(r)


# ---------------------------------------------------------------------------
# Garding structure and non-degeneracy


@dataclass(frozen=True)
class GardingResult:
    eta: float
    C1: float
    C2: float
    min_shifted_eig: float
    identity_defect: float


def _dense_guard(n):
    if n > DENSE_LIMIT:
        raise SizeLimitError(f"dense eigen/SVD computations limited to {DENSE_LIMIT} dofs, got {n}")


def verify_garding(matrices: OperatorMatrices, eta: float, samples: int = 20,
                   seed: int = 0) -> GardingResult:
    """Check ``Re b(u,u) = u^H K u - eta^2 u^H M u`` and the Garding constants at ``lam = i eta``.

    ``C2 = eta^2 rho_max`` and ``C1`` is the smallest generalised eigenvalue
    of ``K`` against the H1 Gram matrix; the shifted form
    ``K - eta^2 M + C2 M0`` is then confirmed to dominate ``C1`` times the H1 Gram.
    """
    n = matrices.n
    _dense_guard(n)
    eta = float(eta)
    S = assemble_pencil(matrices, 1j * eta)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        lhs = np.real(np.vdot(u, S @ u))
        kk = np.real(np.vdot(u, matrices.K @ u))
        rhs = kk - eta ** 2 * np.real(np.vdot(u, matrices.M @ u))
        worst = max(worst, abs(lhs - rhs) / abs(kk))
    if worst > 1e-12:
        raise InvariantViolation(f"Garding identity defect {worst:.3e} exceeds 1e-12")

    C2 = eta ** 2 * matrices.rho_max
    H1 = (matrices.stiff0 + matrices.mass0).toarray()
    Kd = matrices.K.toarray()
    C1 = float(sla.eigh(Kd, H1, eigvals_only=True, subset_by_index=[0, 0])[0])
    if C1 <= 0:
        raise InvariantViolation(f"Garding constant C1 = {C1:.3e} is not positive")
    shifted = Kd - eta ** 2 * matrices.M.toarray() + C2 * matrices.mass0.toarray()
    mu = float(sla.eigh(shifted, H1, eigvals_only=True, subset_by_index=[0, 0])[0])
    if mu < C1 * (1 - 1e-10) - 1e-12:
        raise InvariantViolation(f"shifted form eigenvalue {mu:.6e} below C1 = {C1:.6e}")
    return GardingResult(eta, C1, C2, mu, worst)


def _workers(deterministic: bool) -> int:
    if deterministic:
        return 1
    try:
        return max(1, int(os.environ.get("PHWAVE_THREADS", "1")))
    except ValueError:
        return 1


def nondegeneracy_sweep(matrices: OperatorMatrices, etas, deterministic: bool = True):
    """Smallest singular value of ``S(i eta)`` per eta, as a list of ``(eta, sigma_min)``."""
    _dense_guard(matrices.n)
    etas = [float(e) for e in etas]

    def one(eta):
        S = assemble_pencil(matrices, 1j * eta).toarray()
        return float(np.linalg.svd(S, compute_uv=False)[-1])

    with ThreadPoolExecutor(max_workers=_workers(deterministic)) as pool:
        sig = list(pool.map(one, etas))
    return list(zip(etas, sig))
