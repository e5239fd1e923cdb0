"""Bundle of mesh, boundary split, coefficients and assembled operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import as_expression, evaluate
from .fem import FemSpace, OperatorMatrices, assemble_operators, build_space
from .mesh import BoundaryPartition, CoefficientSet, CoefficientTables, Mesh, sample_coefficients


@dataclass(frozen=True, eq=False)
class Discretization:
    mesh: Mesh
    partition: BoundaryPartition
    coeffs: CoefficientSet
    tables: CoefficientTables
    space: FemSpace
    matrices: OperatorMatrices


def discretize(mesh: Mesh, partition: BoundaryPartition, coeffs: CoefficientSet,
               rule: int = 3) -> Discretization:
    tables = sample_coefficients(mesh, partition, coeffs, rule=rule)
    space = build_space(mesh, partition)
    return Discretization(mesh, partition, coeffs, tables, space, assemble_operators(space, tables))


def interpolate(mesh: Mesh, value) -> np.ndarray:
    """Nodal interpolant on all vertices of an expression, number or ready-made vector."""
    if isinstance(value, np.ndarray):
        if value.shape != (mesh.n_vertices,):
            raise ValueError(f"nodal vector must have shape ({mesh.n_vertices},), got {value.shape}")
        return value
    e = as_expression(value)
    return evaluate(e, mesh.vertices[:, 0], mesh.vertices[:, 1])
