"""Structured quadrilateral meshes of rectangle unions with tensor Lagrange bases.

The truth discretization lives here: geometry description, node/element
construction with deduplicated interface nodes, Gauss-Legendre quadrature,
and the sparse point-evaluation operators that the assembly routines build on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ConfigurationError",
    "GeometrySpec",
    "BoundarySegment",
    "QuadratureSet",
    "DiscreteSpace",
    "unit_square",
    "t_shape",
    "build_space",
    "quadrature_points",
]

#: coordinates are snapped to this many decimals when identifying shared nodes
_SNAP_DECIMALS = 10


class ConfigurationError(ValueError):
    """Invalid geometry or discretization configuration."""


@dataclass(frozen=True)
class BoundarySegment:
    """Axis-aligned exterior boundary segment with a boundary-condition label.

    ``axis`` is the frozen coordinate (0 for a vertical segment x = coord,
    1 for a horizontal segment y = coord); ``lo``/``hi`` bound the free
    coordinate.  ``label`` is one of ``dirichlet``, ``neumann-zero``,
    ``neumann-flux``.
    """

    label: str
    axis: int
    coord: float
    lo: float
    hi: float

    def contains(self, xy: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        on_line = np.abs(xy[:, self.axis] - self.coord) <= tol
        t = xy[:, 1 - self.axis]
        return on_line & (t >= self.lo - tol) & (t <= self.hi + tol)


@dataclass(frozen=True)
class GeometrySpec:
    """Union of axis-aligned rectangles with labeled exterior boundary.

    Each rectangle is ``((x0, x1), (y0, y1))``.  Rectangles must have
    pairwise disjoint interiors and an edge-connected union; every exterior
    edge carries exactly one label.
    """

    kind: str
    rectangles: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    segments: tuple[BoundarySegment, ...]

    def __post_init__(self):
        for (x0, x1), (y0, y1) in self.rectangles:
            if not (x1 > x0 and y1 > y0):
                raise ConfigurationError(f"degenerate rectangle {((x0, x1), (y0, y1))}")
        for i, ((ax0, ax1), (ay0, ay1)) in enumerate(self.rectangles):
            for ((bx0, bx1), (by0, by1)) in self.rectangles[i + 1:]:
                if ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1:
                    raise ConfigurationError("rectangles overlap in their interior")


def unit_square(label: str = "dirichlet") -> GeometrySpec:
    """Unit square with a single boundary label on all four edges."""
    segs = (
        BoundarySegment(label, 1, 0.0, 0.0, 1.0),
        BoundarySegment(label, 1, 1.0, 0.0, 1.0),
        BoundarySegment(label, 0, 0.0, 0.0, 1.0),
        BoundarySegment(label, 0, 1.0, 0.0, 1.0),
    )
    return GeometrySpec("unit-square", ((((0.0, 1.0), (0.0, 1.0))),), segs)


def t_shape(scale: float = 1.0) -> GeometrySpec:
    """T-shaped domain: bar [0,4]x[5,6] on top of stem [1.5,2.5]x[0,5], scaled.

    Dirichlet on the top edge, prescribed flux on the bottom edge, zero flux
    on the remaining boundary.  ``scale`` multiplies all lengths; the heat
    conduction study uses a small scale so that the prescribed bottom flux
    stays within the conductivity's saturation limit over the whole
    parameter domain.
    """
    nz = "neumann-zero"
    s = float(scale)
    segs = (
        BoundarySegment("dirichlet", 1, 6.0 * s, 0.0, 4.0 * s),
        BoundarySegment("neumann-flux", 1, 0.0, 1.5 * s, 2.5 * s),
        # bar sides and underside
        BoundarySegment(nz, 0, 0.0, 5.0 * s, 6.0 * s),
        BoundarySegment(nz, 0, 4.0 * s, 5.0 * s, 6.0 * s),
        BoundarySegment(nz, 1, 5.0 * s, 0.0, 1.5 * s),
        BoundarySegment(nz, 1, 5.0 * s, 2.5 * s, 4.0 * s),
        # stem sides
        BoundarySegment(nz, 0, 1.5 * s, 0.0, 5.0 * s),
        BoundarySegment(nz, 0, 2.5 * s, 0.0, 5.0 * s),
    )
    rects = (((0.0, 4.0 * s), (5.0 * s, 6.0 * s)),
             ((1.5 * s, 2.5 * s), (0.0, 5.0 * s)))
    return GeometrySpec("t-shape", rects, segs)


def lagrange_1d(p: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the p+1 equispaced Lagrange polynomials on [0,1].

    Returns arrays of shape (len(t), p+1).
    """
    nodes = np.linspace(0.0, 1.0, p + 1)
    t = np.asarray(t, dtype=float)
    vals = np.ones((t.size, p + 1))
    ders = np.zeros((t.size, p + 1))
    for i in range(p + 1):
        others = np.delete(nodes, i)
        denom = np.prod(nodes[i] - others)
        diffs = t[:, None] - others[None, :]  # (nt, p)
        vals[:, i] = np.prod(diffs, axis=1) / denom
        # derivative: sum over dropped factor
        for j in range(p):
            keep = np.delete(diffs, j, axis=1)
            ders[:, i] += np.prod(keep, axis=1)
        ders[:, i] /= denom
    return vals, ders


def gauss_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0,1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class QuadratureSet:
    """Tensor Gauss quadrature over all elements, with basis data per point.

    ``basis_values`` has shape (n_points, n_local) and ``basis_gradients``
    shape (n_points, n_local, 2), both in physical coordinates.  ``phi``,
    ``gx``, ``gy`` are sparse (n_points, n_nodes) evaluation operators for
    FE functions and their gradient components.
    """

    element_index: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    basis_values: np.ndarray
    basis_gradients: np.ndarray
    phi: sp.csr_matrix
    gx: sp.csr_matrix
    gy: sp.csr_matrix

    @property
    def n_points(self) -> int:
        return self.weights.size


@dataclass
class DiscreteSpace:
    """Conforming tensor-Lagrange space on a union of structured rectangles."""

    geometry: GeometrySpec
    resolution: tuple[tuple[int, int], ...]
    degree: int
    nodes: np.ndarray            # (n_nodes, 2)
    connectivity: np.ndarray     # (n_elems, (p+1)**2)
    element_extent: np.ndarray   # (n_elems, 2) physical hx, hy
    dirichlet_mask: np.ndarray   # bool per node
    quadrature: QuadratureSet = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.connectivity.shape[0]

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet_mask


def _rect_nodes(rect, nx, ny, p):
    (x0, x1), (y0, y1) = rect
    xs = np.linspace(x0, x1, p * nx + 1)
    ys = np.linspace(y0, y1, p * ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()]), xs, ys


def build_space(geometry: GeometrySpec, resolution, degree: int,
                rule_order: int | None = None) -> DiscreteSpace:
    """Build the discrete space: nodes, connectivity, Dirichlet mask, quadrature.

    ``resolution`` is an (nx, ny) pair per rectangle (a single pair is
    broadcast to all rectangles).  Shared interface nodes between rectangles
    are identified once; the node count for a single nx-by-ny rectangle of
    degree p is (p nx + 1)(p ny + 1).
    """
    if degree < 1:
        raise ConfigurationError("degree must be >= 1")
    res = np.asarray(resolution, dtype=int)
    if res.ndim == 0:
        res = np.array([[int(res), int(res)]])
    res = np.atleast_2d(res)
    if res.shape[0] == 1:
        res = np.repeat(res, len(geometry.rectangles), axis=0)
    if res.shape[0] != len(geometry.rectangles):
        raise ConfigurationError("one (nx, ny) resolution pair per rectangle required")
    if np.any(res < 1):
        raise ConfigurationError("resolutions must be >= 1")
    _check_conforming(geometry, res, degree)

    p = degree
    node_ids: dict[tuple[float, float], int] = {}
    coords: list[tuple[float, float]] = []
    conn_rows = []
    extents = []
    for rect, (nx, ny) in zip(geometry.rectangles, res):
        pts, xs, ys = _rect_nodes(rect, nx, ny, p)
        local_ids = np.empty(pts.shape[0], dtype=int)
        keys = np.round(pts, _SNAP_DECIMALS)
        for i, key in enumerate(map(tuple, keys)):
            if key not in node_ids:
                node_ids[key] = len(coords)
                coords.append(key)
            local_ids[i] = node_ids[key]
        ncol = p * nx + 1
        hx = (rect[0][1] - rect[0][0]) / nx
        hy = (rect[1][1] - rect[1][0]) / ny
        for ey in range(ny):
            for ex in range(nx):
                loc = []
                for j in range(p + 1):
                    for i in range(p + 1):
                        loc.append(local_ids[(ey * p + j) * ncol + (ex * p + i)])
                conn_rows.append(loc)
                extents.append((hx, hy))

    nodes = np.asarray(coords, dtype=float)
    conn = np.asarray(conn_rows, dtype=int)
    extent = np.asarray(extents, dtype=float)

    dmask = np.zeros(nodes.shape[0], dtype=bool)
    for seg in geometry.segments:
        if seg.label == "dirichlet":
            dmask |= seg.contains(nodes)

    space = DiscreteSpace(geometry, tuple(map(tuple, res)), p,
                          nodes, conn, extent, dmask)
    space.quadrature = quadrature_points(space, rule_order or p + 1)
    return space


def _check_conforming(geometry: GeometrySpec, res, degree: int) -> None:
    """Shared rectangle edges must carry identical node spacings."""
    rects = geometry.rectangles
    for i, (ra, (nxa, nya)) in enumerate(zip(rects, res)):
        for rb, (nxb, nyb) in zip(rects[i + 1:], res[i + 1:]):
            (ax0, ax1), (ay0, ay1) = ra
            (bx0, bx1), (by0, by1) = rb
            # horizontal interface (a above/below b)
            if (np.isclose(ay1, by0) or np.isclose(ay0, by1)) and ax0 < bx1 and bx0 < ax1:
                ha, hb = (ax1 - ax0) / nxa, (bx1 - bx0) / nxb
                if not np.isclose(ha, hb):
                    raise ConfigurationError("non-conforming horizontal interface spacing")
                if not np.isclose((bx0 - ax0) / ha, round((bx0 - ax0) / ha)):
                    raise ConfigurationError("interface nodes are not aligned")
            # vertical interface
            if (np.isclose(ax1, bx0) or np.isclose(ax0, bx1)) and ay0 < by1 and by0 < ay1:
                ha, hb = (ay1 - ay0) / nya, (by1 - by0) / nyb
                if not np.isclose(ha, hb):
                    raise ConfigurationError("non-conforming vertical interface spacing")
                if not np.isclose((by0 - ay0) / ha, round((by0 - ay0) / ha)):
                    raise ConfigurationError("interface nodes are not aligned")


def quadrature_points(space: DiscreteSpace, rule_order: int) -> QuadratureSet:
    """Tensor Gauss-Legendre rule with precomputed basis values and gradients.

    ``rule_order`` is the number of Gauss points per direction and must be
    at least degree + 1.
    """
    p = space.degree
    if rule_order < p + 1:
        raise ConfigurationError("rule_order must be >= degree + 1")
    q = rule_order
    g, gw = gauss_01(q)
    v1, d1 = lagrange_1d(p, g)                    # (q, p+1)

    nloc = (p + 1) ** 2
    nq = q * q
    # reference tensor data, point index = jy*q + ix ; local basis = j*(p+1)+i
    ref_vals = np.einsum("yj,xi->yxji", v1, v1).reshape(nq, p + 1, p + 1)
    ref_dx = np.einsum("yj,xi->yxji", v1, d1).reshape(nq, p + 1, p + 1)
    ref_dy = np.einsum("yj,xi->yxji", d1, v1).reshape(nq, p + 1, p + 1)
    ref_vals = ref_vals.reshape(nq, nloc)
    ref_dx = ref_dx.reshape(nq, nloc)
    ref_dy = ref_dy.reshape(nq, nloc)
    ref_w = np.outer(gw, gw).reshape(nq)

    ne = space.n_elements
    elem_idx = np.repeat(np.arange(ne), nq)
    hx = space.element_extent[:, 0]
    hy = space.element_extent[:, 1]

    # physical points: element origin from the minimum corner of its nodes
    corners = space.nodes[space.connectivity[:, 0]]       # lower-left node
    px = corners[:, 0][:, None] + hx[:, None] * g[None, :]
    py = corners[:, 1][:, None] + hy[:, None] * g[None, :]
    pts = np.empty((ne, nq, 2))
    pts[:, :, 0] = px[:, None, :].repeat(q, axis=1).reshape(ne, nq)
    pts[:, :, 1] = py[:, :, None].repeat(q, axis=2).reshape(ne, nq)
    points = pts.reshape(-1, 2)

    weights = (ref_w[None, :] * (hx * hy)[:, None]).reshape(-1)
    vals = np.broadcast_to(ref_vals, (ne, nq, nloc)).reshape(-1, nloc)
    grads = np.empty((ne, nq, nloc, 2))
    grads[:, :, :, 0] = ref_dx[None, :, :] / hx[:, None, None]
    grads[:, :, :, 1] = ref_dy[None, :, :] / hy[:, None, None]
    grads = grads.reshape(-1, nloc, 2)

    rows = np.repeat(np.arange(ne * nq), nloc)
    cols = space.connectivity[elem_idx].ravel()
    shape = (ne * nq, space.n_nodes)
    phi = sp.csr_matrix((vals.ravel(), (rows, cols)), shape=shape)
    gxm = sp.csr_matrix((grads[:, :, 0].ravel(), (rows, cols)), shape=shape)
    gym = sp.csr_matrix((grads[:, :, 1].ravel(), (rows, cols)), shape=shape)

    return QuadratureSet(elem_idx, points, weights, vals, grads, phi, gxm, gym)


@dataclass
class EdgeQuadrature:
    """1D Gauss rule along a boundary segment with node evaluation operator."""

    points: np.ndarray
    weights: np.ndarray
    phi: sp.csr_matrix


def edge_quadrature(space: DiscreteSpace, segment: BoundarySegment,
                    rule_order: int | None = None) -> EdgeQuadrature:
    """Quadrature along element edges lying on the given boundary segment."""
    p = space.degree
    q = rule_order or p + 1
    g, gw = gauss_01(q)
    v1, _ = lagrange_1d(p, g)
    end_vals, _ = lagrange_1d(p, np.array([0.0, 1.0]))  # basis at edge ends

    nloc = (p + 1) ** 2
    rows, cols, data, pts, wts = [], [], [], [], []
    tol = 1e-9
    row = 0
    for e in range(space.n_elements):
        enodes = space.nodes[space.connectivity[e]]
        hx, hy = space.element_extent[e]
        x0, y0 = enodes[0]
        if segment.axis == 1:  # horizontal segment y = coord
            if abs(y0 - segment.coord) <= tol:
                edge_side, h = 0.0, hx
            elif abs(y0 + hy - segment.coord) <= tol:
                edge_side, h = 1.0, hx
            else:
                continue
            if x0 < segment.lo - tol or x0 + hx > segment.hi + tol:
                continue
            exy = np.column_stack([x0 + hx * g, np.full(q, segment.coord)])
            vt = lagrange_1d(p, np.array([edge_side]))[0][0]  # y-direction values
            basis = np.einsum("j,xi->xji", vt, v1).reshape(q, nloc)
        else:  # vertical segment x = coord
            if abs(x0 - segment.coord) <= tol:
                edge_side, h = 0.0, hy
            elif abs(x0 + hx - segment.coord) <= tol:
                edge_side, h = 1.0, hy
            else:
                continue
            if y0 < segment.lo - tol or y0 + hy > segment.hi + tol:
                continue
            exy = np.column_stack([np.full(q, segment.coord), y0 + hy * g])
            vt = lagrange_1d(p, np.array([edge_side]))[0][0]
            basis = np.einsum("yj,i->yji", v1, vt).reshape(q, nloc)
        for k in range(q):
            rows.extend([row] * nloc)
            cols.extend(space.connectivity[e])
            data.extend(basis[k])
            pts.append(exy[k])
            wts.append(gw[k] * h)
            row += 1
    if row == 0:
        raise ConfigurationError("no element edges found on the given segment")
    phi = sp.csr_matrix((data, (rows, cols)), shape=(row, space.n_nodes))
    return EdgeQuadrature(np.asarray(pts), np.asarray(wts), phi)
