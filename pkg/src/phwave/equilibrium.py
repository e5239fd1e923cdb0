"""Static equilibrium: div T grad w_e = 0, w_e = h on Gamma0, zero conormal flux on Gamma1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError
from .fem import Factorization, FemSpace, OperatorMatrices
from .problem import interpolate


@dataclass(frozen=True)
class EquilibriumSolution:
    we: np.ndarray  # nodal values on all vertices
    residual: float  # relative weak residual over free test functions


def lifting(space: FemSpace, h) -> np.ndarray:
    """Nodal lifting of the Dirichlet data: h on Gamma0 vertices, zero elsewhere."""
    values = interpolate(space.mesh, h)
    H = np.zeros(space.mesh.n_vertices)
    H[space.constrained] = values[space.constrained]
    return H


def solve_equilibrium(space: FemSpace, matrices: OperatorMatrices, h) -> EquilibriumSolution:
    """Solve for ``w_e = w~ + H`` with ``K w~ = -(K_full H)|free``.

    The Gamma1 condition is natural, so no boundary term enters.
    """
    H = lifting(space, h)
    load = -(matrices.K_full @ H)[space.free]
    if space.n_free == 0:
        return EquilibriumSolution(H, 0.0)
    try:
        wt = Factorization(matrices.K).solve(load)
    except SingularMatrixError as exc:  # unreachable while Gamma0 is nonempty
        raise SingularMatrixError(f"equilibrium stiffness matrix singular: {exc}") from exc
    we = space.extend(wt, H[space.constrained])
    weak = (matrices.K_full @ we)[space.free]
    scale = np.linalg.norm(load)
    residual = float(np.linalg.norm(weak) / scale) if scale > 0 else float(np.linalg.norm(weak))
    return EquilibriumSolution(we, residual)
