"""Quadrature on whole cells, cut cells, edges and interface segments."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .geometry import Curve, GeometryError, HypothesisError, IntersectionRecord, edge_intersection

__all__ = [
    "QuadRule",
    "gauss_rule_1d",
    "tensor_rule",
    "cut_cell_rule",
    "edge_rule",
    "interface_segment_rule",
]


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    region_tag: str = "whole"
    sides: Optional[np.ndarray] = None  # per-point -1/+1 where known

    def __len__(self):
        return len(self.weights)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.points)))


@lru_cache(maxsize=64)
def _leggauss(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_rule_1d(q: int):
    """Gauss-Legendre nodes and weights on [-1, 1], exact up to degree 2q-1."""
    if not 1 <= q <= 30:
        raise ValueError("q must be in 1..30")
    return _leggauss(int(q))


def _map_1d(q, lo, hi):
    x, w = gauss_rule_1d(q)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * x, 0.5 * (hi - lo) * w


def tensor_rule(box, q: int) -> QuadRule:
    (x0, x1), (y0, y1) = box
    xs, wx = _map_1d(q, x0, x1)
    ys, wy = _map_1d(q, y0, y1)
    X, Y = np.meshgrid(xs, ys)
    W = np.outer(wy, wx)
    return QuadRule(np.stack([X.ravel(), Y.ravel()], -1), W.ravel(), "whole")


def _bisect_rows(phi_line, lo, hi, pos_lo, iters=64):
    """Vectorised bisection of ``phi_line(v) > 0`` between ``lo`` and ``hi``."""
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pm = phi_line(mid) > 0
        same = pm == pos_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(np.abs(lo), 1.0)):
            break
    return 0.5 * (lo + hi)


def cut_cell_rule(K, curve: Curve, intersections, q: int, n_samples: int = 9):
    """Rules for ``K ∩ Omega^-`` and ``K ∩ Omega^+`` by iterated Gauss quadrature.

    The outer rule runs along the axis on which the two intersection points
    differ most; the range is split at their coordinates into at most three
    strips.  Along every outer node the cross line is split at the curve,
    found by bisection on the level set.
    """
    phi = curve.level_set
    if phi is None:
        raise GeometryError("cut_cell_rule needs a level set")
    (x0, x1), (y0, y1) = K
    p1, p2 = (np.asarray(getattr(p, "point", p), float) for p in intersections)
    axis = 0 if abs(p1[0] - p2[0]) >= abs(p1[1] - p2[1]) else 1
    lo_u, hi_u = (x0, x1) if axis == 0 else (y0, y1)
    lo_v, hi_v = (y0, y1) if axis == 0 else (x0, x1)
    tol = 1e-12 * (hi_u - lo_u)
    breaks = [lo_u]
    for c in sorted((p1[axis], p2[axis])):
        if c - breaks[-1] > tol and hi_u - c > tol:
            breaks.append(float(c))
    breaks.append(hi_u)

    us, wus = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        u, w = _map_1d(q, a, b)
        us.append(u)
        wus.append(w)
    U = np.concatenate(us)
    WU = np.concatenate(wus)

    def ev(u, v):
        return phi(u, v) if axis == 0 else phi(v, u)

    s = np.linspace(lo_v, hi_v, n_samples)
    Us, Vs = np.meshgrid(U, s, indexing="ij")
    pos = ev(Us, Vs) > 0
    nchg = np.count_nonzero(pos[:, 1:] != pos[:, :-1], axis=1)
    if np.any(nchg > 1):
        raise HypothesisError("interface is not a graph over either axis inside the element; refine the mesh")

    vstar = np.full(len(U), np.nan)
    rows = np.nonzero(nchg == 1)[0]
    if rows.size:
        k = np.argmax(pos[rows, 1:] != pos[rows, :-1], axis=1)
        Ur = U[rows]
        vstar[rows] = _bisect_rows(lambda v: ev(Ur, v), s[k], s[k + 1], pos[rows, k])

    gv, gw = gauss_rule_1d(q)
    pts = {-1: [], 1: []}
    wts = {-1: [], 1: []}

    def add(side_pos, u, wu, a, b):
        v = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * gv[None, :]
        w = wu[:, None] * 0.5 * (b - a)[:, None] * gw[None, :]
        uu = np.broadcast_to(u[:, None], v.shape)
        xy = np.stack([uu, v], -1) if axis == 0 else np.stack([v, uu], -1)
        for sgn in (-1, 1):
            sel = side_pos == (sgn > 0)
            pts[sgn].append(xy[sel].reshape(-1, 2))
            wts[sgn].append(w[sel].ravel())

    whole = nchg == 0
    if whole.any():
        n = int(whole.sum())
        add(pos[whole, n_samples // 2], U[whole], WU[whole], np.full(n, lo_v), np.full(n, hi_v))
    if rows.size:
        add(pos[rows, 0], U[rows], WU[rows], np.full(rows.size, lo_v), vstar[rows])
        add(pos[rows, -1], U[rows], WU[rows], vstar[rows], np.full(rows.size, hi_v))

    out = []
    for sgn, tag in ((-1, "minus"), (1, "plus")):
        P = np.concatenate(pts[sgn]) if pts[sgn] else np.zeros((0, 2))
        W = np.concatenate(wts[sgn]) if wts[sgn] else np.zeros(0)
        out.append(QuadRule(P, W, tag, np.full(len(W), sgn)))
    return out[0], out[1]


def edge_rule(B, curve: Curve, q: int, intersection: IntersectionRecord | None | bool = False) -> QuadRule:
    """Gauss rule on segment ``B = (a, b)``, split where the interface crosses it.

    ``intersection=False`` locates the crossing; ``None`` asserts there is none.
    """
    a, b = (np.asarray(p, float) for p in B)
    if intersection is False:
        intersection = edge_intersection(curve, a, b) if curve is not None and curve.level_set is not None else None
    ts = [0.0, 1.0] if intersection is None else [0.0, intersection.t, 1.0]
    L = float(np.linalg.norm(b - a))
    pts, wts, sides = [], [], []
    for t0, t1 in zip(ts[:-1], ts[1:]):
        t, w = _map_1d(q, t0, t1)
        P = a + t[:, None] * (b - a)
        pts.append(P)
        wts.append(w * L)
        if curve is not None and curve.level_set is not None:
            mid = a + 0.5 * (t0 + t1) * (b - a)
            sg = 1 if curve.level_set(mid[0], mid[1]) > 0 else -1
        else:
            sg = 0
        sides.append(np.full(q, sg))
    return QuadRule(np.concatenate(pts), np.concatenate(wts), "edge", np.concatenate(sides))


def interface_segment_rule(K_F, curve: Curve, q: int) -> QuadRule:
    """Gauss rule in ``xi`` on ``[a_K, b_K]`` with arc-length weights ``|g'(xi)| dxi``."""
    xi, w = _map_1d(q, K_F.a, K_F.b)
    speed = np.linalg.norm(curve.dg(xi), axis=-1)
    return QuadRule(xi, w * speed, "interface")
