"""Discrete states and the block generator.

A state is a pair ``(w, v)`` of free-dof nodal vectors: ``w`` is the
potential whose gradient is the strain ``x2 = grad w`` and ``v`` the velocity,
so the momentum density is ``x1 = rho * v``. The generator acts as::

    A_h (w, v) = (v, -M^{-1} (K w + B v))

and the energy norm is ``||(w, v)||_H^2 = w^H K w + v^H M v`` (twice the
Hamiltonian). Storing the potential keeps ``x2`` inside the gradient space
by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import SizeLimitError
from .fem import Factorization, OperatorMatrices

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class PHState:
    """Port-Hamiltonian state on free dofs: momentum density ``p`` and potential ``phi``."""

    p: np.ndarray
    phi: np.ndarray


def to_wv(matrices: OperatorMatrices, state: PHState):
    return np.asarray(state.phi), np.asarray(state.p) / matrices.rho_free


def from_wv(matrices: OperatorMatrices, w, v) -> PHState:
    return PHState(p=matrices.rho_free * np.asarray(v), phi=np.asarray(w))


def stack(w, v) -> np.ndarray:
    return np.concatenate([w, v])


def split(z, n: int):
    return z[:n], z[n:]


def energy(matrices: OperatorMatrices, w, v) -> float:
    """Hamiltonian ``0.5 (v^H M v + w^H K w)``."""
    return 0.5 * float(np.real(np.vdot(v, matrices.M @ v) + np.vdot(w, matrices.K @ w)))


class GeneratorMatrix:
    """Action of ``A_h`` through a factorised mass matrix, plus the H-Gram matrix."""

    def __init__(self, matrices: OperatorMatrices):
        self.matrices = matrices
        self.n = matrices.n
        self._mass = Factorization(matrices.M)

    def apply(self, w, v):
        return v, -self._mass.solve(self.matrices.K @ w + self.matrices.B @ v)

    def apply_stacked(self, z):
        w, v = split(z, self.n)
        return stack(*self.apply(w, v))

    def inner(self, z1, z2) -> complex:
        """``<z1, z2>_H = z2^H G z1`` with ``G = blockdiag(K, M)``."""
        w1, v1 = split(z1, self.n)
        w2, v2 = split(z2, self.n)
        m = self.matrices
        return np.vdot(w2, m.K @ w1) + np.vdot(v2, m.M @ v1)

    def norm(self, z) -> float:
        return float(np.sqrt(max(np.real(self.inner(z, z)), 0.0)))

    def dissipation(self, z) -> float:
        """``v^H B v``: the power absorbed by the Gamma1 feedback."""
        _, v = split(z, self.n)
        return float(np.real(np.vdot(v, self.matrices.B @ v)))

    def apply_inverse(self, w_y, v_y, stiffness: Factorization = None):
        """Solve ``A_h (w, v) = (w_y, v_y)``: ``v = w_y``, ``w = -K^{-1}(M v_y + B w_y)``."""
        stiffness = stiffness or Factorization(self.matrices.K)
        m = self.matrices
        return -stiffness.solve(m.M @ v_y + m.B @ w_y), w_y

    # -- dense representations (desk scale only) --------------------------------

    def _guard(self):
        if 2 * self.n > DENSE_LIMIT:
            raise SizeLimitError(f"dense generator limited to {DENSE_LIMIT} total dofs, "
                                 f"got {2 * self.n}; use shift-invert mode")

    def dense(self) -> np.ndarray:
        self._guard()
        m = self.matrices
        Md = m.M.toarray()
        cho = sla.cho_factor(Md)
        n = self.n
        A = np.zeros((2 * n, 2 * n))
        A[:n, n:] = np.eye(n)
        A[n:, :n] = -sla.cho_solve(cho, m.K.toarray())
        A[n:, n:] = -sla.cho_solve(cho, m.B.toarray())
        return A

    def gram_dense(self) -> np.ndarray:
        self._guard()
        m = self.matrices
        return sla.block_diag(m.K.toarray(), m.M.toarray())
