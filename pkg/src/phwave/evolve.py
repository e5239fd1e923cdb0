"""Energy-contractive time stepping, decay profiles and the two-path equivalence check.

The implicit-midpoint (Cayley) step

    z+ = (I - dt/2 A_h)^{-1} (I + dt/2 A_h) z

is realised with one solve against ``M + dt/2 B + dt^2/4 K`` per step and
satisfies ``H(z+) - H(z) = -dt v_mid^T B v_mid`` exactly in exact arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .equilibrium import solve_equilibrium
from .errors import ConfigError, SizeLimitError
from .fem import Factorization, OperatorMatrices
from .problem import Discretization, interpolate
from .state import GeneratorMatrix, energy

DECAY_LIMIT = 1000


class CayleyStepper:
    """Implicit-midpoint stepper with a single factorisation reused for every step."""

    def __init__(self, matrices: OperatorMatrices, dt: float):
        if not dt > 0:
            raise ConfigError(f"dt must be positive, got {dt}")
        self.matrices = matrices
        self.dt = float(dt)
        m = matrices
        half = 0.5 * dt * m.B + 0.25 * dt * dt * m.K
        self._lhs = Factorization((m.M + half).tocsc())
        self._rhs = (m.M - half).tocsr()

    def step(self, w, v, forcing=None):
        """Advance ``(w, v)`` by one step; ``forcing`` adds a constant load ``-f`` to ``M dv/dt``.

        Accepts single vectors or column blocks.
        """
        dt = self.dt
        rhs = self._rhs @ v - dt * (self.matrices.K @ w)
        if forcing is not None:
            rhs = rhs - dt * (forcing if rhs.ndim == 1 else forcing[:, None])
        v_new = self._lhs.solve(rhs)
        w_new = w + 0.5 * dt * (v + v_new)
        return w_new, v_new


def cayley_step(matrices: OperatorMatrices, state, dt: float):
    w, v = state
    return CayleyStepper(matrices, dt).step(np.asarray(w), np.asarray(v))


def n_steps(t_end: float, dt: float) -> int:
    return int(math.ceil(t_end / dt - 1e-9))


@dataclass(frozen=True, eq=False)
class EnergyTrace:
    t: np.ndarray
    H: np.ndarray
    dissipation: np.ndarray  # v_mid^T B v_mid for the step ending at t[k]; 0 at t[0]
    balance_defect: np.ndarray  # H[k] - H[k-1] + dt * dissipation[k]
    observation_vertices: np.ndarray
    observation: np.ndarray  # (len(t), n_obs): velocity trace on Gamma1
    max_norm_increase: float
    w: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def is_non_increasing(self, slack: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.H) <= slack))


def evolve_free(matrices: OperatorMatrices, w, v, dt: float, steps: int,
                observe: np.ndarray = None, callback=None) -> EnergyTrace:
    """Integrate the homogeneous-Dirichlet dynamics from free-dof data ``(w, v)``."""
    stepper = CayleyStepper(matrices, dt)
    B = matrices.B
    space = matrices.space
    obs_vertices = space.gamma1_vertices() if observe is None else observe
    obs_dofs = space.dof_of_vertex[obs_vertices]
    H = np.empty(steps + 1)
    diss = np.zeros(steps + 1)
    defect = np.zeros(steps + 1)
    obs = np.empty((steps + 1, len(obs_dofs)))
    H[0] = energy(matrices, w, v)
    obs[0] = v[obs_dofs]
    worst = -np.inf
    if callback is not None:
        callback(0, w, v)
    for k in range(1, steps + 1):
        w_new, v_new = stepper.step(w, v)
        vm = 0.5 * (v + v_new)
        diss[k] = float(vm @ (B @ vm))
        H[k] = energy(matrices, w_new, v_new)
        defect[k] = H[k] - H[k - 1] + dt * diss[k]
        worst = max(worst, math.sqrt(2 * H[k]) - math.sqrt(2 * H[k - 1]))
        obs[k] = v_new[obs_dofs]
        w, v = w_new, v_new
        if callback is not None:
            callback(k, w, v)
    t = dt * np.arange(steps + 1)
    return EnergyTrace(t, H, diss, defect, obs_vertices, obs, float(worst if steps else 0.0), w, v)


def simulate(disc: Discretization, w0="0", w1="0", dt: float = 0.01, t_end: float = 1.0,
             h="0") -> EnergyTrace:
    """Run the dynamic part from ``(interp(w0) - w_e, interp(w1))`` over ``ceil(t_end/dt)`` steps."""
    if not t_end >= 0:
        raise ConfigError(f"t_end must be non-negative, got {t_end}")
    space, m = disc.space, disc.matrices
    we = solve_equilibrium(space, m, h).we
    w = (interpolate(disc.mesh, w0) - we)[space.free]
    v = interpolate(disc.mesh, w1)[space.free]
    return evolve_free(m, w, v, dt, n_steps(t_end, dt))


# ---------------------------------------------------------------------------
# semi-uniform decay profile


@dataclass(frozen=True)
class DecayProfile:
    t: np.ndarray
    sigma: np.ndarray
    resolvent_norm: float  # ||A_h^{-1}||_H


def decay_profile(matrices: OperatorMatrices, t_grid, dt: float) -> DecayProfile:
    """``sigma(t) = ||P(t) A_h^{-1}||_H`` with ``P(t)`` the Cayley propagator.

    With ``G = blockdiag(K, M) = L L^T`` the H-operator norm of ``X`` is
    ``||L^T X L^{-T}||_2``; the propagator is applied to all columns at once.
    """
    n = matrices.n
    if 2 * n > DECAY_LIMIT:
        raise SizeLimitError(f"decay profile limited to {DECAY_LIMIT} total dofs, got {2 * n}")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < 0:
        raise ConfigError("t_grid must be non-negative and increasing")
    step_idx = np.rint(t_grid / dt).astype(int)
    if np.any(np.abs(step_idx * dt - t_grid) > 1e-9 * max(1.0, t_grid.max())):
        raise ConfigError("every t in t_grid must be a multiple of dt")

    gen = GeneratorMatrix(matrices)
    L = sla.cholesky(gen.gram_dense(), lower=True)
    Linv_T = sla.solve_triangular(L, np.eye(2 * n), lower=True).T  # L^{-T}
    stiff = Factorization(matrices.K)
    W, V = gen.apply_inverse(Linv_T[:n], Linv_T[n:], stiff)

    def h_norm(W, V):
        return float(np.linalg.norm(L.T @ np.vstack([W, V]), 2))

    stepper = CayleyStepper(matrices, dt)
    sigma = np.empty(len(t_grid))
    done = 0
    for j, target in enumerate(step_idx):
        while done < target:
            W, V = stepper.step(W, V)
            done += 1
        sigma[j] = h_norm(W, V)
    return DecayProfile(t_grid, sigma, sigma[0] if step_idx[0] == 0 else float("nan"))


def resolvent_norm_dense(matrices: OperatorMatrices) -> float:
    """``||A_h^{-1}||_H`` from the explicit dense inverse (independent of the propagation path)."""
    gen = GeneratorMatrix(matrices)
    G = gen.gram_dense()
    Ainv = np.linalg.inv(gen.dense())
    # ||X||_H^2 = max eig of X^T G X against G
    return float(np.sqrt(sla.eigh(Ainv.T @ G @ Ainv, G, eigvals_only=True)[-1]))


# ---------------------------------------------------------------------------
# solution equivalence


@dataclass(frozen=True)
class EquivalenceResult:
    max_deviation: float
    t: np.ndarray
    deviation: np.ndarray


def solution_equivalence_check(disc: Discretization, h, w0, w1="0", dt: float = 0.01,
                               t_end: float = 5.0) -> EquivalenceResult:
    """Compare ``w_e + evolve(w0 - w_e, w1)`` with a direct run of the inhomogeneous problem.

    The direct path keeps the full nodal field, pins Gamma0 vertices to ``h`` and
    carries the constant load ``K_fc h`` from the constrained columns. The
    deviation is measured in the H1 seminorm.
    """
    space, m = disc.space, disc.matrices
    free, fixed = space.free, space.constrained
    we = solve_equilibrium(space, m, h).we
    h_nodal = interpolate(disc.mesh, h)[fixed]
    w0n = interpolate(disc.mesh, w0)
    w1n = interpolate(disc.mesh, w1)
    forcing = (m.K_full[free][:, fixed] @ h_nodal)

    steps = n_steps(t_end, dt)
    stepper = CayleyStepper(m, dt)
    wd, vd = (w0n - we)[free], w1n[free]
    wf, vf = w0n[free], w1n[free].copy()
    S0 = m.stiff0_full
    dev = np.empty(steps + 1)

    def deviation():
        a = we + space.extend(wd)
        b = space.extend(wf, h_nodal)
        e = a - b
        return math.sqrt(max(float(e @ (S0 @ e)), 0.0))

    dev[0] = deviation()
    for k in range(1, steps + 1):
        wd, vd = stepper.step(wd, vd)
        wf, vf = stepper.step(wf, vf, forcing=forcing)
        dev[k] = deviation()
    return EquivalenceResult(float(dev.max()), dt * np.arange(steps + 1), dev)
