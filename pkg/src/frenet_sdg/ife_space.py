"""Local shape functions: Q_m Lagrange on plain elements, Frenet IFE on cut ones.

An IFE shape function is a pair of tensor polynomials in the scaled Frenet
coordinates ``s = eta / h`` and ``t`` (``xi`` mapped affinely from
``[a_K, b_K]`` to ``[-1, 1]``), one per side of the interface.  Both are
stored as tensor-Legendre coefficient vectors, index ``i*(m+1) + j`` for
``L_i(s) L_j(t)``.  The plus-side polynomial is a fixed linear image
``E c^-`` of the minus-side one, chosen so that the weak jump conditions
hold against every ``v`` in ``P_m`` on the interface segment.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .geometry import Curve, FrenetPoint, frenet_frame, laplacian_coeffs, pull_back
from .quadrature import interface_segment_rule

log = logging.getLogger(__name__)

__all__ = [
    "LocalIFEBasis",
    "BasisEval",
    "IFEConstructionError",
    "build_ife_basis",
    "eval_ife",
    "jump_residual",
    "lagrange_basis",
    "lagrange_1d",
]

MAX_CONDITION = 1e12


class IFEConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class BasisEval:
    values: np.ndarray  # (n, nloc)
    gradients: np.ndarray  # (n, nloc, 2)


@dataclass(frozen=True)
class LocalIFEBasis:
    parent: int
    m: int
    h: float
    a: float
    b: float
    xi_center: float
    beta: tuple[float, float]
    minus_coeffs: np.ndarray  # (nloc, (m+1)^2)
    plus_coeffs: np.ndarray
    extension_matrix: np.ndarray
    condition: float
    q: int

    @property
    def rect_hat(self):
        return ((-self.h, self.h), (self.a, self.b))

    @property
    def dim(self) -> int:
        return self.minus_coeffs.shape[0]

    def scaled(self, eta, xi):
        return eta / self.h, 2.0 * (xi - self.a) / (self.b - self.a) - 1.0


# --------------------------------------------------------------- Legendre


@lru_cache(maxsize=None)
def _leg_deriv_coeffs(m: int, a: int) -> np.ndarray:
    out = np.zeros((m + 1, m + 1))
    for i in range(m + 1):
        e = np.zeros(m + 1)
        e[i] = 1.0
        d = np.polynomial.legendre.legder(e, a) if a else e
        out[: len(d), i] = d
    return out


def _leg(x, m: int, a: int = 0) -> np.ndarray:
    """a-th derivatives of L_0..L_m at ``x``: shape (len(x), m+1)."""
    x = np.atleast_1d(np.asarray(x, float))
    if a > m:
        return np.zeros(x.shape + (m + 1,))
    return np.polynomial.legendre.legvander(x, m) @ _leg_deriv_coeffs(m, a)


def _tensor(Ls, Lt):
    """Row-wise outer product: (n, m+1) x (n, m+1) -> (n, (m+1)^2)."""
    return (Ls[:, :, None] * Lt[:, None, :]).reshape(len(Ls), -1)


# ------------------------------------------------------ constraint system


def _constraint_rows(basis_geom, curve: Curve, m: int, q: int):
    """Rows of the weak jump operator, before side-dependent beta scaling.

    Returns ``R`` of shape ((m+1)^2, (m+1)^2) and the family label of each
    row ("continuity", "flux", "extended").  Rows are scaled by powers of
    ``h`` so the system is independent of the mesh size.
    """
    h, a, b = basis_geom
    rule = interface_segment_rule(_Rect(a, b), curve, q)
    xi, w = rule.points, rule.weights
    t = 2.0 * (xi - a) / (b - a) - 1.0
    ct = 2.0 / (b - a)
    nq = len(xi)
    Lt = [_leg(t, m, k) * ct ** k for k in range(3)]
    # d^a/deta^a L_i(s) at s = 0, per unit eta
    Ls0 = [_leg(0.0, m, k)[0] / h ** k for k in range(m + 1)]
    test = _leg(t, m, 0) * w[:, None]  # (nq, m+1)

    def dval(ka, kb):
        # (nq, nb): d^ka/deta^ka d^kb/dxi^kb of every tensor basis function at eta = 0
        if ka > m:
            return np.zeros((nq, (m + 1) ** 2))
        return _tensor(np.broadcast_to(Ls0[ka], (nq, m + 1)), Lt[kb])

    rows, fam = [], []
    rows.append(test.T @ dval(0, 0))
    fam += ["continuity"] * (m + 1)
    rows.append(h * (test.T @ dval(1, 0)))
    fam += ["flux"] * (m + 1)
    if m >= 2:
        lc = laplacian_coeffs(curve, FrenetPoint(np.zeros(nq), xi), order=m - 2)
        for j in range(m - 1):
            D = dval(j + 2, 0).copy()
            for k in range(j + 1):
                c = math.comb(j, k)
                D += c * lc.J0[k][:, None] * dval(j - k, 2)
                D += c * lc.J1[k][:, None] * dval(j - k + 1, 0)
                D += c * lc.J2[k][:, None] * dval(j - k, 1)
            rows.append(h ** (j + 2) * (test.T @ D))
            fam += ["extended"] * (m + 1)
    return np.vstack(rows), np.array(fam)


@dataclass(frozen=True)
class _Rect:
    a: float
    b: float


def _side_scale(fam, beta_side):
    return np.where(fam == "continuity", 1.0, beta_side)


@lru_cache(maxsize=None)
def _nodal_dual(m: int) -> np.ndarray:
    """Legendre coefficients (columns) of the Q_m Lagrange polynomials on the
    uniform grid of [-1, 1]^2, node index ``b*(m+1) + a`` (a along s)."""
    g = np.linspace(-1.0, 1.0, m + 1)
    S, T = np.meshgrid(g, g)  # rows: t index, cols: s index
    V = _tensor(_leg(S.ravel(), m), _leg(T.ravel(), m))
    return np.linalg.inv(V)


def build_ife_basis(K_F, curve: Curve, beta, m: int, q: int | None = None) -> LocalIFEBasis:
    """Frenet IFE shape functions on the fictitious element ``K_F``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    bm, bp = map(float, beta)
    if bm <= 0 or bp <= 0:
        raise ValueError("beta must be positive")
    q = m + 4 if q is None else q
    R, fam = _constraint_rows((K_F.h, K_F.a, K_F.b), curve, m, q)
    cond = float(np.linalg.cond(R))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IFEConstructionError(f"IFE constraint system of element {K_F.parent} is ill-conditioned (cond={cond:.3e})")
    Mm = _side_scale(fam, bm)[:, None] * R
    Mp = _side_scale(fam, bp)[:, None] * R
    Q, Rq, piv = sla.qr(Mp, pivoting=True)
    E = np.empty((Mp.shape[1], Mm.shape[1]))
    rhs = Mm
    for sweep in range(2):  # one refinement sweep
        sol = sla.solve_triangular(Rq, Q.T @ rhs)
        dE = np.empty_like(sol)
        dE[piv] = sol
        E = dE if sweep == 0 else E + dE
        rhs = Mm - Mp @ E
    log.debug("element %d: IFE constraint condition %.3e", K_F.parent, cond)
    Cm = _nodal_dual(m)
    Cp = E @ Cm
    return LocalIFEBasis(
        parent=K_F.parent, m=m, h=K_F.h, a=K_F.a, b=K_F.b, xi_center=K_F.xi_center,
        beta=(bm, bp), minus_coeffs=Cm.T.copy(), plus_coeffs=Cp.T.copy(),
        extension_matrix=E, condition=cond, q=q,
    )


def eval_ife(basis: LocalIFEBasis, curve: Curve, x, sides=None) -> BasisEval:
    """Values and physical gradients of all IFE shapes at points ``x`` (n, 2).

    ``sides`` (-1/+1 per point) overrides the side implied by the sign of eta.
    """
    x = np.asarray(x, float).reshape(-1, 2)
    fp = pull_back(curve, x, hint=basis.xi_center)
    eta, xi = np.asarray(fp.eta).ravel(), np.asarray(fp.xi).ravel()
    return _eval_frenet(basis, curve, eta, xi, sides)


def _eval_frenet(basis, curve, eta, xi, sides=None):
    m = basis.m
    s, t = basis.scaled(eta, xi)
    Ls, dLs = _leg(s, m), _leg(s, m, 1)
    Lt, dLt = _leg(t, m), _leg(t, m, 1)
    T0 = _tensor(Ls, Lt)
    Te = _tensor(dLs, Lt) / basis.h
    Tx = _tensor(Ls, dLt) * (2.0 / (basis.b - basis.a))
    if sides is None:
        sides = np.where(eta > 0, 1, -1)
    plus = np.asarray(sides) > 0
    C = np.where(plus[:, None, None], basis.plus_coeffs[None], basis.minus_coeffs[None])
    vals = np.einsum("nb,nkb->nk", T0, C)
    de = np.einsum("nb,nkb->nk", Te, C)
    dx = np.einsum("nb,nkb->nk", Tx, C)
    fr = frenet_frame(curve, xi)
    psi = 1.0 / (1.0 + eta * fr.curvature)
    gxi = (psi / fr.speed)[:, None] * fr.tangent  # grad of xi
    grads = de[:, :, None] * fr.normal[:, None, :] + dx[:, :, None] * gxi[:, None, :]
    return BasisEval(vals, grads)


def jump_residual(basis: LocalIFEBasis, curve: Curve, q: int | None = None) -> dict:
    """Largest relative residual of each weak jump family over all shapes.

    Families without constraints (the extended family for m = 1) are omitted.
    """
    q = basis.q + 2 if q is None else q
    R, fam = _constraint_rows((basis.h, basis.a, basis.b), curve, basis.m, q)
    bm, bp = basis.beta
    rm = (_side_scale(fam, bm)[:, None] * R) @ basis.minus_coeffs.T
    rp = (_side_scale(fam, bp)[:, None] * R) @ basis.plus_coeffs.T
    out = {}
    for name in ("continuity", "flux", "extended"):
        sel = fam == name
        if not sel.any():
            continue
        diff = np.abs(rp[sel] - rm[sel])
        scale = np.maximum(np.abs(rm[sel]).max(axis=0), np.abs(rp[sel]).max(axis=0))
        scale = np.maximum(scale, np.abs(_side_scale(fam, max(bm, bp))[sel][:, None] * R[sel]).max()
                           * np.abs(basis.minus_coeffs).max(axis=1))
        out[name] = float((diff / scale[None, :]).max())
    return out


# ---------------------------------------------------------------- Lagrange


def lagrange_1d(x, m: int, a: int = 0) -> np.ndarray:
    """a-th derivative (a in {0, 1}) of the Lagrange polynomials on ``m+1``
    uniform nodes of [0, 1]: shape (len(x), m+1)."""
    x = np.atleast_1d(np.asarray(x, float))
    nodes = np.linspace(0.0, 1.0, m + 1)
    out = np.empty(x.shape + (m + 1,))
    for i in range(m + 1):
        others = np.delete(nodes, i)
        den = np.prod(nodes[i] - others)
        if a == 0:
            out[..., i] = np.prod(x[..., None] - others, axis=-1) / den
        else:
            acc = np.zeros_like(x)
            for k in range(m):
                acc += np.prod(np.delete(x[..., None] - others, k, axis=-1), axis=-1)
            out[..., i] = acc / den
    return out


def lagrange_basis(K, m: int, x) -> BasisEval:
    """Tensor Q_m Lagrange shapes on the rectangle ``K``, local index ``b*(m+1) + a``."""
    (x0, x1), (y0, y1) = K
    x = np.asarray(x, float).reshape(-1, 2)
    hx, hy = x1 - x0, y1 - y0
    u = (x[:, 0] - x0) / hx
    v = (x[:, 1] - y0) / hy
    Lu, dLu = lagrange_1d(u, m), lagrange_1d(u, m, 1) / hx
    Lv, dLv = lagrange_1d(v, m), lagrange_1d(v, m, 1) / hy
    vals = (Lv[:, :, None] * Lu[:, None, :]).reshape(len(x), -1)
    gx = (Lv[:, :, None] * dLu[:, None, :]).reshape(len(x), -1)
    gy = (dLv[:, :, None] * Lu[:, None, :]).reshape(len(x), -1)
    return BasisEval(vals, np.stack([gx, gy], axis=-1))
