"""Uniform Cartesian meshes and their classification against an interface.

Element ``e = j*N + i`` occupies column ``i`` and row ``j``.  Vertical
edges come first in the edge numbering (``i*N + j`` for the edge at
``x_i`` spanning row ``j``), followed by horizontal edges
(``V + j*N + i`` for the edge at ``y_j`` spanning column ``i``).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import (
    Curve,
    GeometryError,
    HypothesisError,
    IntersectionRecord,
    TubeError,
    edge_intersection,
    pull_back,
    push_forward,
    FrenetPoint,
)

log = logging.getLogger(__name__)

__all__ = [
    "CartesianMesh",
    "MeshClassification",
    "FictitiousElement",
    "build_mesh",
    "classify",
    "fictitious_element",
    "dof_counts",
    "sdg_formula_count",
    "write_classification_csv",
    "write_dof_table_csv",
]


@dataclass(frozen=True)
class CartesianMesh:
    x0: float
    x1: float
    y0: float
    y1: float
    N: int
    m: int = 1

    @property
    def domain(self):
        return ((self.x0, self.x1), (self.y0, self.y1))

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.N

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.N

    @property
    def h(self) -> float:
        """Edge length used as the mesh size (max over the two directions)."""
        return max(self.hx, self.hy)

    @property
    def diameter(self) -> float:
        return math.hypot(self.hx, self.hy)

    @property
    def n_elements(self) -> int:
        return self.N * self.N

    @property
    def n_vertices(self) -> int:
        return (self.N + 1) ** 2

    @property
    def n_vertical_edges(self) -> int:
        return (self.N + 1) * self.N

    @property
    def n_edges(self) -> int:
        return 2 * self.N * (self.N + 1)

    @cached_property
    def xs(self) -> np.ndarray:
        return self.x0 + self.hx * np.arange(self.N + 1)

    @cached_property
    def ys(self) -> np.ndarray:
        return self.y0 + self.hy * np.arange(self.N + 1)

    @cached_property
    def vertices(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def element_ij(self, e):
        return np.asarray(e) % self.N, np.asarray(e) // self.N

    def element_box(self, e):
        i, j = int(e) % self.N, int(e) // self.N
        return ((self.xs[i], self.xs[i + 1]), (self.ys[j], self.ys[j + 1]))

    @cached_property
    def element_origin(self) -> np.ndarray:
        i, j = self.element_ij(np.arange(self.n_elements))
        return np.stack([self.xs[i], self.ys[j]], axis=-1)

    @cached_property
    def element_vertices(self) -> np.ndarray:
        """(nel, 4) vertex ids ordered counter-clockwise from the lower left."""
        N = self.N
        i, j = self.element_ij(np.arange(self.n_elements))
        v = j * (N + 1) + i
        return np.stack([v, v + 1, v + N + 2, v + N + 1], axis=-1)

    @cached_property
    def element_edges(self) -> np.ndarray:
        """(nel, 4) edge ids: bottom, right, top, left."""
        N = self.N
        V = self.n_vertical_edges
        i, j = self.element_ij(np.arange(self.n_elements))
        return np.stack([V + j * N + i, (i + 1) * N + j, V + (j + 1) * N + i, i * N + j], axis=-1)

    @cached_property
    def edge_endpoints(self) -> np.ndarray:
        N = self.N
        ii, jj = np.meshgrid(np.arange(N + 1), np.arange(N), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        vert = np.stack([np.stack([self.xs[ii], self.ys[jj]], -1),
                         np.stack([self.xs[ii], self.ys[jj + 1]], -1)], axis=1)
        jj, ii = np.meshgrid(np.arange(N + 1), np.arange(N), indexing="ij")
        jj, ii = jj.ravel(), ii.ravel()
        horz = np.stack([np.stack([self.xs[ii], self.ys[jj]], -1),
                         np.stack([self.xs[ii + 1], self.ys[jj]], -1)], axis=1)
        return np.concatenate([vert, horz])

    @cached_property
    def edge_elements(self) -> np.ndarray:
        """(nE, 2) incident elements (smaller id first, -1 on the boundary)."""
        N = self.N
        out = -np.ones((self.n_edges, 2), dtype=np.int64)
        ii, jj = np.meshgrid(np.arange(N + 1), np.arange(N), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        left = np.where(ii > 0, jj * N + ii - 1, -1)
        right = np.where(ii < N, jj * N + ii, -1)
        V = self.n_vertical_edges
        out[:V] = np.stack([left, right], -1)
        jj, ii = np.meshgrid(np.arange(N + 1), np.arange(N), indexing="ij")
        jj, ii = jj.ravel(), ii.ravel()
        below = np.where(jj > 0, (jj - 1) * N + ii, -1)
        above = np.where(jj < N, jj * N + ii, -1)
        out[V:] = np.stack([below, above], -1)
        # boundary edges: put the single element first
        bnd = out[:, 0] < 0
        out[bnd] = out[bnd][:, ::-1]
        return out

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normal of each edge pointing from its first to its second element."""
        n = np.zeros((self.n_edges, 2))
        n[: self.n_vertical_edges, 0] = 1.0
        n[self.n_vertical_edges:, 1] = 1.0
        return n

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        L = np.empty(self.n_edges)
        L[: self.n_vertical_edges] = self.hy
        L[self.n_vertical_edges:] = self.hx
        return L

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_elements[:, 1] >= 0)[0]

    def node_grid(self, m: int | None = None):
        m = self.m if m is None else m
        nx = m * self.N + 1
        X, Y = np.meshgrid(np.linspace(self.x0, self.x1, nx), np.linspace(self.y0, self.y1, nx))
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def element_nodes(self, m: int | None = None) -> np.ndarray:
        """(nel, (m+1)^2) global Q_m node ids, local index ``b*(m+1) + a``."""
        m = self.m if m is None else m
        nx = m * self.N + 1
        i, j = self.element_ij(np.arange(self.n_elements))
        a = np.arange(m + 1)
        loc = (m * j[:, None, None] + a[None, :, None]) * nx + (m * i[:, None, None] + a[None, None, :])
        return loc.reshape(self.n_elements, (m + 1) ** 2)


def build_mesh(domain, N: int, m: int = 1) -> CartesianMesh:
    if N < 2:
        raise ValueError("N must be >= 2")
    if m < 1:
        raise ValueError("m must be >= 1")
    (x0, x1), (y0, y1) = domain
    return CartesianMesh(float(x0), float(x1), float(y0), float(y1), int(N), int(m))


@dataclass
class MeshClassification:
    mesh: CartesianMesh
    curve: Curve
    interface_elements: np.ndarray
    non_interface_elements: np.ndarray
    shell_elements: np.ndarray
    interior_edges: np.ndarray
    interface_edges: np.ndarray
    penalty_edges: np.ndarray
    nodes: np.ndarray
    interface_nodes: np.ndarray
    element_side: np.ndarray  # -1 / +1 for non-interface elements, 0 for interface elements
    edge_cuts: dict = field(default_factory=dict)  # edge id -> IntersectionRecord
    element_cuts: dict = field(default_factory=dict)  # element id -> (edge ids, records)
    element_xi_range: dict = field(default_factory=dict)  # element id -> (xi_lo, xi_hi)

    @cached_property
    def is_interface(self) -> np.ndarray:
        flag = np.zeros(self.mesh.n_elements, bool)
        flag[self.interface_elements] = True
        return flag

    @cached_property
    def is_penalty_edge(self) -> np.ndarray:
        flag = np.zeros(self.mesh.n_edges, bool)
        flag[self.penalty_edges] = True
        return flag


def classify(mesh: CartesianMesh, curve: Curve, n_sub: int = 8) -> MeshClassification:
    """Sort elements, edges and nodes into interface / non-interface sets.

    Raises :class:`HypothesisError` when an edge is cut more than once, an
    element is cut in other than exactly two edges, or an interface element
    touches the domain boundary.
    """
    phi = curve.level_set
    if phi is None:
        raise GeometryError("classification needs a level set")
    ends = mesh.edge_endpoints
    t = np.linspace(0.0, 1.0, n_sub + 2)
    samp = ends[:, None, 0, :] + t[None, :, None] * (ends[:, None, 1, :] - ends[:, None, 0, :])
    vals = phi(samp[..., 0], samp[..., 1])
    pos = vals > 0
    changes = np.count_nonzero(pos[:, 1:] != pos[:, :-1], axis=1)
    zero_tol = 1e-13 * max(mesh.h, 1.0)
    touching = (np.abs(vals[:, 0]) <= zero_tol) | (np.abs(vals[:, -1]) <= zero_tol)
    multi = np.nonzero((changes > 1) & ~touching)[0]
    if multi.size:
        B = int(multi[0])
        raise HypothesisError(f"edge {B} is crossed more than once by the interface (H1); refine the mesh")
    cut = (changes == 1) & (pos[:, 0] != pos[:, -1]) & ~touching

    edge_cuts: dict[int, IntersectionRecord] = {}
    for B in np.nonzero(cut)[0]:
        rec = edge_intersection(curve, ends[B, 0], ends[B, 1], n_check=n_sub + 1)
        if rec is not None:
            edge_cuts[int(B)] = rec
    cut = np.zeros(mesh.n_edges, bool)
    cut[list(edge_cuts)] = True

    ncut = cut[mesh.element_edges].sum(axis=1)
    bad = np.nonzero((ncut != 0) & (ncut != 2))[0]
    if bad.size:
        raise HypothesisError(
            f"element {int(bad[0])} has {int(ncut[bad[0]])} intersected edges (H2); refine the mesh")

    # elements with no edge crossing but an interior sign change: the curve hides inside
    interface = ncut == 2
    origin = mesh.element_origin
    g = (np.arange(1, 4) / 4.0)
    sx = origin[:, 0, None, None] + mesh.hx * g[None, :, None]
    sy = origin[:, 1, None, None] + mesh.hy * g[None, None, :]
    sx, sy = np.broadcast_arrays(sx, sy)
    inner = phi(sx.reshape(len(origin), -1), sy.reshape(len(origin), -1)) > 0
    vpos = phi(mesh.vertices[:, 0], mesh.vertices[:, 1]) > 0
    cverts = vpos[mesh.element_vertices]
    allsame = np.concatenate([inner, cverts], axis=1)
    mixed = allsame.any(axis=1) & ~allsame.all(axis=1)
    hidden = np.nonzero(mixed & ~interface)[0]
    if hidden.size:
        raise HypothesisError(
            f"element {int(hidden[0])} contains part of the interface without two edge crossings (H2)")

    int_el = np.nonzero(interface)[0]
    N = mesh.N
    i, j = mesh.element_ij(int_el)
    at_bnd = (i == 0) | (j == 0) | (i == N - 1) | (j == N - 1)
    if at_bnd.any():
        raise HypothesisError(f"interface element {int(int_el[at_bnd][0])} touches the domain boundary")

    side = np.where(cverts.all(axis=1), 1, -1)
    side[int_el] = 0

    interior = mesh.interior_edges
    pen = np.zeros(mesh.n_edges, bool)
    pen[mesh.element_edges[int_el].ravel()] = True
    pen &= mesh.edge_elements[:, 1] >= 0
    shell = np.zeros(mesh.n_elements, bool)
    pe = mesh.edge_elements[pen]
    shell[pe.ravel()] = True

    element_cuts = {}
    xi_range = {}
    for e in int_el:
        eds = [int(B) for B in mesh.element_edges[e] if cut[B]]
        recs = [edge_cuts[B] for B in eds]
        xs = np.array([r.xi for r in recs])
        if curve.closed:
            xs = curve.wrap(xs, xs[0])
        element_cuts[int(e)] = (tuple(eds), tuple(recs))
        xi_range[int(e)] = (float(xs.min()), float(xs.max()))

    return MeshClassification(
        mesh=mesh,
        curve=curve,
        interface_elements=int_el,
        non_interface_elements=np.nonzero(~interface)[0],
        shell_elements=np.nonzero(shell)[0],
        interior_edges=interior,
        interface_edges=np.intersect1d(np.nonzero(cut)[0], interior),
        penalty_edges=np.nonzero(pen)[0],
        nodes=np.arange(mesh.n_vertices),
        interface_nodes=np.unique(mesh.element_vertices[int_el].ravel()),
        element_side=side,
        edge_cuts=edge_cuts,
        element_cuts=element_cuts,
        element_xi_range=xi_range,
    )


@dataclass(frozen=True)
class FictitiousElement:
    parent: int
    h: float
    a: float
    b: float
    xi_center: float
    overlap_count: int

    @property
    def rect_hat(self):
        return ((-self.h, self.h), (self.a, self.b))


MAX_OVERLAP = 49


def fictitious_element(classification: MeshClassification, K: int, curve: Curve | None = None) -> FictitiousElement:
    """Rectangle ``[-h, h] x [a_K, b_K]`` in Frenet coordinates covering element ``K``."""
    curve = classification.curve if curve is None else curve
    mesh = classification.mesh
    K = int(K)
    if K not in classification.element_xi_range:
        raise ValueError(f"element {K} is not an interface element")
    lo, hi = classification.element_xi_range[K]
    center = 0.5 * (lo + hi)
    verts = mesh.vertices[mesh.element_vertices[K]]
    try:
        fp = pull_back(curve, verts, hint=center)
    except TubeError as exc:
        raise TubeError(f"vertex of interface element {K} outside the Frenet tube: {exc}") from exc
    xi = np.asarray(fp.xi)
    a = float(min(xi.min(), lo))
    b = float(max(xi.max(), hi))
    h = mesh.h
    # physical image of the rectangle boundary, then bounding-box overlap with the mesh
    s = np.linspace(0.0, 1.0, 17)
    etas = np.concatenate([np.full_like(s, -h), np.full_like(s, h), -h + 2 * h * s, -h + 2 * h * s])
    xis = np.concatenate([a + (b - a) * s, a + (b - a) * s, np.full_like(s, a), np.full_like(s, b)])
    try:
        img = push_forward(curve, FrenetPoint(etas, xis))
    except TubeError:
        img = np.concatenate([curve.g(xis), verts])
    lo_xy = img.min(axis=0)
    hi_xy = img.max(axis=0)
    i0 = int(np.clip(math.floor((lo_xy[0] - mesh.x0) / mesh.hx), 0, mesh.N - 1))
    i1 = int(np.clip(math.ceil((hi_xy[0] - mesh.x0) / mesh.hx) - 1, 0, mesh.N - 1))
    j0 = int(np.clip(math.floor((lo_xy[1] - mesh.y0) / mesh.hy), 0, mesh.N - 1))
    j1 = int(np.clip(math.ceil((hi_xy[1] - mesh.y0) / mesh.hy) - 1, 0, mesh.N - 1))
    count = (i1 - i0 + 1) * (j1 - j0 + 1)
    if count > MAX_OVERLAP:
        raise HypothesisError(f"fictitious element of {K} overlaps {count} > {MAX_OVERLAP} elements; refine the mesh")
    return FictitiousElement(K, h, a, b, center, count)


# -------------------------------------------------------------- DoF counts


def sdg_node_usage(classification: MeshClassification, m: int) -> np.ndarray:
    """Boolean mask over the Q_m node grid: node belongs to some non-interface element."""
    mesh = classification.mesh
    used = np.zeros((m * mesh.N + 1) ** 2, bool)
    used[mesh.element_nodes(m)[classification.non_interface_elements].ravel()] = True
    return used


def sdg_formula_count(N: int, m: int, n_interface_elements: int, n_interface_edges: int) -> int:
    return (m * N + 1) ** 2 + 4 * m * n_interface_elements - (m - 1) * n_interface_edges


def dof_counts(classification: MeshClassification, m: int, scheme: str = "SDG") -> int:
    scheme = scheme.upper()
    N = classification.mesh.N
    if scheme == "DG":
        return (m + 1) ** 2 * N * N
    if scheme == "CG":
        return (m * N + 1) ** 2
    if scheme != "SDG":
        raise ValueError(f"unknown scheme {scheme!r}")
    nT = len(classification.interface_elements)
    count = int(sdg_node_usage(classification, m).sum()) + (m + 1) ** 2 * nT
    formula = sdg_formula_count(N, m, nT, len(classification.interface_edges))
    if formula != count:
        log.warning("SDG DoF count %d differs from the closed formula %d (N=%d, m=%d)", count, formula, N, m)
    return count


def write_classification_csv(classification: MeshClassification, path) -> None:
    mesh = classification.mesh
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "class", "x1", "y1", "x2", "y2"])
        for e in range(mesh.n_elements):
            if classification.is_interface[e]:
                _, recs = classification.element_cuts[e]
                w.writerow([e, "interface", *(f"{v:.16g}" for r in recs for v in r.point)])
            else:
                w.writerow([e, "minus" if classification.element_side[e] < 0 else "plus", "", "", "", ""])


DOF_TABLE_COLUMNS = ["N", "m", "n_interface_elements", "n_interface_edges",
                     "dof_dg", "dof_sdg", "dof_cg", "ratio_dg_sdg", "ratio_cg_sdg"]


def write_dof_table_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=DOF_TABLE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.4f}" if k.startswith("ratio") else r[k]) for k in DOF_TABLE_COLUMNS})
