"""Conforming planar triangulations, boundary tagging and coefficient sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CoefficientError, ConfigError, MeshError
from .expr import Expression, as_expression, evaluate, to_source
from .quadrature import segment_rule, triangle_rule

log = logging.getLogger(__name__)

GAMMA0 = 0
GAMMA1 = 1
TAG_LITERALS = {GAMMA0: "g0", GAMMA1: "g1"}
SIDES = ("left", "right", "top", "bottom")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with counter-clockwise triangles.

    ``boundary_edges`` are oriented so that the domain lies to their left;
    the outward normal of edge ``(a, b)`` is the rotation of ``b - a`` by -90
    degrees.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (m, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle references a non-existent vertex")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        areas = signed_areas(v, t)
        if np.any(areas <= 0):
            k = int(np.argmin(areas))
            raise MeshError(f"triangle {k} has non-positive signed area {areas[k]:.3e}")
        edges = _boundary_edges(t)
        edges.flags.writeable = False
        object.__setattr__(self, "boundary_edges", edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    def edge_lengths(self, edges=None) -> np.ndarray:
        e = self.boundary_edges if edges is None else edges
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def outward_normals(self, edges=None) -> np.ndarray:
        e = self.boundary_edges if edges is None else edges
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.hypot(n[:, 0], n[:, 1])[:, None]

    def max_edge_length(self) -> float:
        p = self.vertices[self.triangles]
        d = p - np.roll(p, -1, axis=1)
        return float(np.hypot(d[..., 0], d[..., 1]).max())

    def bounding_box(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return lo[0], lo[1], hi[0], hi[1]


def signed_areas(vertices, triangles) -> np.ndarray:
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _boundary_edges(triangles) -> np.ndarray:
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise MeshError("non-conforming mesh: an edge is shared by more than two triangles")
    # interior edges must be traversed once in each direction
    interior = counts[inverse] == 2
    if np.any(interior):
        fwd = directed[interior, 0] < directed[interior, 1]
        per_edge = np.bincount(inverse[interior], weights=fwd, minlength=len(counts))
        if np.any(per_edge[counts == 2] != 1):
            raise MeshError("inconsistent triangle orientation across a shared edge")
    return np.ascontiguousarray(directed[counts[inverse] == 1])


def generate_rect_mesh(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> Mesh:
    """Structured triangulation of (0, lx) x (0, ly); every cell is cut along its rising diagonal."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ConfigError(f"nx, ny must be integers >= 1, got {nx}, {ny}")
    if not (lx > 0 and ly > 0):
        raise ConfigError(f"lx, ly must be positive, got {lx}, {ly}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j <-> y index
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, triangles)


# ---------------------------------------------------------------------------
# boundary tagging


@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    """Tag per boundary edge, aligned with ``mesh.boundary_edges``."""

    tags: np.ndarray
    warnings: tuple = ()

    def __post_init__(self):
        tags = np.asarray(self.tags, dtype=np.int8)
        if tags.size and not np.all(np.isin(tags, (GAMMA0, GAMMA1))):
            raise ConfigError("boundary tags must be Gamma0 or Gamma1")
        if not np.any(tags == GAMMA0):
            raise ConfigError("Gamma0 empty: at least one boundary edge must be Dirichlet")
        tags.flags.writeable = False
        object.__setattr__(self, "tags", tags)

    def edges(self, mesh: Mesh, tag: int) -> np.ndarray:
        return mesh.boundary_edges[self.tags == tag]

    def gamma0_edges(self, mesh):
        return self.edges(mesh, GAMMA0)

    def gamma1_edges(self, mesh):
        return self.edges(mesh, GAMMA1)

    @property
    def n_gamma0(self) -> int:
        return int(np.count_nonzero(self.tags == GAMMA0))

    @property
    def n_gamma1(self) -> int:
        return int(np.count_nonzero(self.tags == GAMMA1))


def _selector_mask(mesh: Mesh, selector, tol: float) -> np.ndarray:
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    xmin, ymin, xmax, ymax = mesh.bounding_box()
    if isinstance(selector, str):
        if selector == "left":
            return (abs(a[:, 0] - xmin) <= tol) & (abs(b[:, 0] - xmin) <= tol)
        if selector == "right":
            return (abs(a[:, 0] - xmax) <= tol) & (abs(b[:, 0] - xmax) <= tol)
        if selector == "bottom":
            return (abs(a[:, 1] - ymin) <= tol) & (abs(b[:, 1] - ymin) <= tol)
        if selector == "top":
            return (abs(a[:, 1] - ymax) <= tol) & (abs(b[:, 1] - ymax) <= tol)
        raise ConfigError(f"unknown side selector {selector!r} (expected one of {SIDES})")
    box = selector.get("box") if isinstance(selector, dict) else selector
    try:
        x0, y0, x1, y1 = (float(c) for c in box)
    except (TypeError, ValueError):
        raise ConfigError(f"box selector must be [xmin, ymin, xmax, ymax], got {selector!r}") from None

    def inside(p):
        return (p[:, 0] >= x0 - tol) & (p[:, 0] <= x1 + tol) & (p[:, 1] >= y0 - tol) & (p[:, 1] <= y1 + tol)

    return inside(a) & inside(b)


def tag_boundary(mesh: Mesh, gamma0_selectors) -> BoundaryPartition:
    """Tag boundary edges matched by any selector as Gamma0 and the rest as Gamma1.

    A selector is a side name (``left``, ``right``, ``top``, ``bottom``) or an
    axis-aligned box ``{"box": [xmin, ymin, xmax, ymax]}`` that must contain
    both endpoints of an edge.
    """
    xmin, ymin, xmax, ymax = mesh.bounding_box()
    tol = 1e-10 * max(xmax - xmin, ymax - ymin)
    tags = np.full(len(mesh.boundary_edges), GAMMA1, dtype=np.int8)
    warnings = []
    for sel in gamma0_selectors:
        mask = _selector_mask(mesh, sel, tol)
        if not mask.any():
            msg = f"selector {sel!r} matches no boundary edge"
            log.warning(msg)
            warnings.append(msg)
        tags[mask] = GAMMA0
    if not np.any(tags == GAMMA0):
        raise ConfigError("Gamma0 empty: at least one boundary edge must be Dirichlet")
    return BoundaryPartition(tags, tuple(warnings))


# ---------------------------------------------------------------------------
# text format


def write_mesh(path, mesh: Mesh, partition: BoundaryPartition) -> None:
    lines = ["phmesh 1", f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [f"{a} {b} {TAG_LITERALS[int(t)]}"
              for (a, b), t in zip(mesh.boundary_edges.tolist(), partition.tags)]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write mesh file {path}: {exc}") from exc


def read_mesh(path):
    """Read a ``phmesh 1`` file.

    Returns ``(mesh, partition, notes)``. Clockwise triangles are reoriented
    and reported in ``notes``.
    """
    try:
        raw = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read mesh file {path}: {exc}") from exc
    rows = [(n, ln.split()) for n, ln in enumerate(raw, start=1)]
    rows = [(n, tok) for n, tok in rows if tok and not tok[0].startswith("#")]
    it = iter(rows)

    def take(expected_section=None):
        try:
            n, tok = next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file (expected {expected_section or 'data'})",
                            len(raw)) from None
        return n, tok

    n, tok = take("header")
    if tok != ["phmesh", "1"]:
        raise MeshError("missing header 'phmesh 1'", n)

    def section(name):
        n, tok = take(f"section '{name}'")
        if len(tok) != 2 or tok[0] != name:
            raise MeshError(f"expected section header '{name} <count>'", n)
        try:
            return int(tok[1])
        except ValueError:
            raise MeshError(f"bad count {tok[1]!r}", n) from None

    nv = section("vertices")
    vertices = []
    for _ in range(nv):
        n, tok = take("vertex")
        try:
            if len(tok) != 2:
                raise ValueError
            vertices.append((float(tok[0]), float(tok[1])))
        except ValueError:
            raise MeshError("expected two coordinates", n) from None
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)

    def index_row(n, tok, count, what):
        try:
            if len(tok) != count:
                raise ValueError
            idx = [int(t) for t in tok]
        except ValueError:
            raise MeshError(f"expected {count} vertex indices for {what}", n) from None
        for i in idx:
            if not 0 <= i < nv:
                raise MeshError(f"{what} references vertex {i} of {nv}", n)
        return idx

    nt = section("triangles")
    triangles, notes = [], []
    for k in range(nt):
        n, tok = take("triangle")
        a, b, c = index_row(n, tok, 3, "triangle")
        area = signed_areas(vertices, np.array([[a, b, c]]))[0]
        if area == 0:
            raise MeshError(f"degenerate triangle {k}", n)
        if area < 0:
            notes.append(f"line {n}: triangle {k} was clockwise; orientation fixed")
            a, b = b, a
        triangles.append((a, b, c))
    mesh = Mesh(vertices, np.array(triangles, dtype=np.int64).reshape(-1, 3))

    lookup = {tuple(sorted(e)): i for i, e in enumerate(mesh.boundary_edges.tolist())}
    tags = np.full(len(lookup), -1, dtype=np.int8)
    literal_to_tag = {v: k for k, v in TAG_LITERALS.items()}
    nb = section("boundary")
    for _ in range(nb):
        n, tok = take("boundary edge")
        if len(tok) != 3 or tok[2] not in literal_to_tag:
            raise MeshError("expected '<a> <b> g0|g1'", n)
        a, b = index_row(n, tok[:2], 2, "boundary edge")
        key = (min(a, b), max(a, b))
        if key not in lookup:
            raise MeshError(f"edge ({a}, {b}) is not on the mesh boundary", n)
        tags[lookup[key]] = literal_to_tag[tok[2]]
    extra = next(it, None)
    if extra is not None:
        raise MeshError("trailing content after boundary section", extra[0])
    if np.any(tags < 0):
        missing = mesh.boundary_edges[np.flatnonzero(tags < 0)[0]]
        raise MeshError(f"boundary edge ({missing[0]}, {missing[1]}) has no tag")
    for note in notes:
        log.info(note)
    return mesh, BoundaryPartition(tags), notes


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class CoefficientSet:
    rho: Expression
    T11: Expression
    T12: Expression
    T22: Expression
    k: Optional[Expression] = None

    @classmethod
    def from_strings(cls, rho="1", T11="1", T12="0", T22="1", k=None):
        return cls(as_expression(rho), as_expression(T11), as_expression(T12),
                   as_expression(T22), None if k is None else as_expression(k))


@dataclass(frozen=True, eq=False)
class CoefficientTables:
    """Coefficient values at quadrature points plus certified bounds.

    Interior arrays are indexed ``[triangle, qpoint]``; boundary arrays
    ``[gamma1 edge, qpoint]`` with edges from ``partition.gamma1_edges``.
    """

    bary: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    rho: np.ndarray
    T: np.ndarray
    gamma1_edges: np.ndarray
    edge_params: np.ndarray
    edge_weights: np.ndarray
    edge_points: np.ndarray
    kinv: np.ndarray
    rho_vertex: np.ndarray
    rho_min: float
    rho_max: float
    T_eig_min: float
    T_eig_max: float
    k_min: Optional[float]
    k_max: Optional[float]
    coeffs: CoefficientSet

    def T_at(self, x, y) -> np.ndarray:
        c = self.coeffs
        T = np.empty(np.broadcast(x, y).shape + (2, 2))
        T[..., 0, 0] = evaluate(c.T11, x, y)
        T[..., 0, 1] = T[..., 1, 0] = evaluate(c.T12, x, y)
        T[..., 1, 1] = evaluate(c.T22, x, y)
        return T


def _check_positive(name, values, points):
    bad = ~(values > 0)
    if np.any(bad):
        k = int(np.flatnonzero(bad.ravel())[0])
        px, py = points.reshape(-1, 2)[k]
        raise CoefficientError(
            f"{name} not positive at ({px:.17g}, {py:.17g}): value {values.ravel()[k]:.17g}")


def sample_coefficients(mesh: Mesh, partition: BoundaryPartition, coeffs: CoefficientSet,
                        rule: int = 3, edge_rule: int = 2) -> CoefficientTables:
    """Evaluate the coefficient fields at quadrature points and validate them.

    Positivity of rho and k and definiteness of T are checked at every
    interior/boundary quadrature point and at the mesh vertices.
    """
    bary, weights = triangle_rule(rule)
    corners = mesh.vertices[mesh.triangles]  # (m, 3, 2)
    points = np.einsum("qi,mid->mqd", bary, corners)
    px, py = points[..., 0], points[..., 1]
    vx, vy = mesh.vertices[:, 0], mesh.vertices[:, 1]

    rho = evaluate(coeffs.rho, px, py)
    rho_vertex = evaluate(coeffs.rho, vx, vy)
    _check_positive("rho", rho, points)
    _check_positive("rho", rho_vertex, mesh.vertices)

    def T_fields(x, y):
        return (evaluate(coeffs.T11, x, y), evaluate(coeffs.T12, x, y), evaluate(coeffs.T22, x, y))

    def eig_bounds(t11, t12, t22):
        mean = 0.5 * (t11 + t22)
        rad = np.hypot(0.5 * (t11 - t22), t12)
        return mean - rad, mean + rad

    t11, t12, t22 = T_fields(px, py)
    lo_q, hi_q = eig_bounds(t11, t12, t22)
    lo_v, hi_v = eig_bounds(*T_fields(vx, vy))
    for lo, pts in ((lo_q, points), (lo_v, mesh.vertices)):
        bad = ~(lo > 0)
        if np.any(bad):
            k = int(np.flatnonzero(bad.ravel())[0])
            x0, y0 = pts.reshape(-1, 2)[k]
            raise CoefficientError(f"T not positive definite at ({x0:.17g}, {y0:.17g}): "
                                   f"smallest eigenvalue {lo.ravel()[k]:.17g}")
    T = np.empty(rho.shape + (2, 2))
    T[..., 0, 0] = t11
    T[..., 0, 1] = T[..., 1, 0] = t12
    T[..., 1, 1] = t22

    g1 = partition.gamma1_edges(mesh)
    s, ew = segment_rule(edge_rule)
    a = mesh.vertices[g1[:, 0]]
    b = mesh.vertices[g1[:, 1]]
    edge_points = a[:, None, :] * (1 - s)[None, :, None] + b[:, None, :] * s[None, :, None]
    if len(g1):
        if coeffs.k is None:
            raise ConfigError("feedback gain k is required when Gamma1 is nonempty", "/coefficients/k")
        k_q = evaluate(coeffs.k, edge_points[..., 0], edge_points[..., 1])
        gv = np.unique(g1)
        k_v = evaluate(coeffs.k, mesh.vertices[gv, 0], mesh.vertices[gv, 1])
        _check_positive("k", k_q, edge_points)
        _check_positive("k", k_v, mesh.vertices[gv])
        kinv = 1.0 / k_q
        k_min = float(min(k_q.min(), k_v.min()))
        k_max = float(max(k_q.max(), k_v.max()))
    else:
        kinv = np.zeros((0, len(s)))
        k_min = k_max = None

    return CoefficientTables(
        bary=bary, weights=weights, points=points, rho=rho, T=T,
        gamma1_edges=g1, edge_params=s, edge_weights=ew, edge_points=edge_points, kinv=kinv,
        rho_vertex=rho_vertex,
        rho_min=float(min(rho.min(), rho_vertex.min())),
        rho_max=float(max(rho.max(), rho_vertex.max())),
        T_eig_min=float(min(lo_q.min(), lo_v.min())),
        T_eig_max=float(max(hi_q.max(), hi_v.max())),
        k_min=k_min, k_max=k_max, coeffs=coeffs,
    )


def describe(coeffs: CoefficientSet) -> dict:
    out = {name: to_source(getattr(coeffs, name)) for name in ("rho", "T11", "T12", "T22")}
    if coeffs.k is not None:
        out["k"] = to_source(coeffs.k)
    return out
