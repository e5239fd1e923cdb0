"""Quadrature rules on the reference triangle and the unit segment.

Triangle rules are given in barycentric coordinates with weights that sum to
one, so the integral over a triangle is ``area * sum(w * f(points))``.
"""

import math

import numpy as np


def _perms(a, b):
    return [(b, a, a), (a, b, a), (a, a, b)]


def triangle_rule(npoints: int):
    """Return ``(bary, weights)`` for the 1-, 3- or 7-point rule (exact to degree 1, 2, 5)."""
    if npoints == 1:
        bary = np.array([[1 / 3, 1 / 3, 1 / 3]])
        weights = np.array([1.0])
    elif npoints == 3:
        bary = np.array(_perms(1 / 6, 2 / 3))
        weights = np.full(3, 1 / 3)
    elif npoints == 7:
        s15 = math.sqrt(15.0)
        a1, b1 = (6 - s15) / 21, (9 + 2 * s15) / 21
        a2, b2 = (6 + s15) / 21, (9 - 2 * s15) / 21
        bary = np.array([(1 / 3, 1 / 3, 1 / 3)] + _perms(a1, b1) + _perms(a2, b2))
        weights = np.array([9 / 40] + [(155 - s15) / 1200] * 3 + [(155 + s15) / 1200] * 3)
    else:
        raise ValueError(f"no {npoints}-point triangle rule (use 1, 3 or 7)")
    return bary, weights


def segment_rule(npoints: int = 2):
    """Gauss-Legendre rule on [0, 1]: ``(params, weights)`` with weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w
