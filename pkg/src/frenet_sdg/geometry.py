"""Interface curves and the Frenet coordinate system attached to them.

A point near the interface is described by ``(eta, xi)``: ``xi`` is the
curve parameter of its foot point and ``eta`` the signed offset along the
unit normal.  The normal is the tangent rotated by ``[[0, 1], [-1, 0]]`` and
must point from the minus side (level set < 0) to the plus side.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "Curve",
    "FrenetPoint",
    "FrenetFrame",
    "LaplacianCoeffs",
    "IntersectionRecord",
    "GeometryError",
    "TubeError",
    "PullBackError",
    "HypothesisError",
    "circle",
    "star",
    "line",
    "curve_from_config",
    "frenet_frame",
    "push_forward",
    "pull_back",
    "laplacian_coeffs",
    "edge_intersection",
    "write_curve_csv",
]

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])

# 1 + eta*kappa must stay above this for the Frenet map to be a local bijection
TUBE_MARGIN = 0.05


class GeometryError(ValueError):
    pass


class TubeError(GeometryError):
    """A point lies outside the region where the Frenet map is invertible."""


class PullBackError(GeometryError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class HypothesisError(GeometryError):
    """The mesh is too coarse for the interface (H1/H2 violated)."""


@dataclass(frozen=True)
class Curve:
    """Parametrized interface curve.

    ``g``, ``dg`` and ``ddg`` take an array of parameters of shape ``(n,)``
    and return arrays of shape ``(n, 2)``.  ``level_set(x, y)`` is negative
    on the minus side.
    """

    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]
    ddg: Callable[[np.ndarray], np.ndarray]
    param_domain: tuple[float, float]
    closed: bool = True
    level_set: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "curve"
    params: dict = field(default_factory=dict)
    n_samples: int = 64
    dddg: Optional[Callable[[np.ndarray], np.ndarray]] = None  # enables an exact kappa'

    def __post_init__(self):
        s, e = self.param_domain
        if not e > s:
            raise GeometryError("empty parameter domain")
        xi = self.sample_params(257)
        speed = np.linalg.norm(self.dg(xi), axis=-1)
        if np.any(speed < 1e-14):
            raise GeometryError("degenerate parametrization (|g'| ~ 0)")
        if self.level_set is not None:
            pts = self.g(xi)
            lv = self.level_set(pts[:, 0], pts[:, 1])
            if np.max(np.abs(lv)) > 1e-10:
                raise GeometryError(
                    f"level set does not vanish on the curve (max |phi| = {np.max(np.abs(lv)):.2e})")
            n = (self.dg(xi) / speed[:, None]) @ ROT.T
            delta = 1e-6 * self.length_scale
            out = pts + delta * n
            if np.any(self.level_set(out[:, 0], out[:, 1]) <= 0):
                raise GeometryError(
                    "curve orientation: the normal must point towards level_set > 0")

    @property
    def period(self) -> float:
        return self.param_domain[1] - self.param_domain[0]

    def sample_params(self, n: int) -> np.ndarray:
        s, e = self.param_domain
        if self.closed:
            return s + (e - s) * np.arange(n) / n
        return np.linspace(s, e, n)

    @cached_property
    def length_scale(self) -> float:
        pts = self.g(self.sample_params(257))
        return float(np.max(np.ptp(pts, axis=0)))

    @cached_property
    def _samples(self):
        xi = self.sample_params(self.n_samples)
        return xi, self.g(xi)

    @cached_property
    def max_curvature(self) -> float:
        xi = self.sample_params(4096)
        return float(np.max(np.abs(curvature(self, xi))))

    @cached_property
    def tube_halfwidth(self) -> float:
        """Conservative half-width of the tube where the Frenet map is injective."""
        k = self.max_curvature
        return math.inf if k == 0 else 0.9 / k

    def wrap(self, xi, center=None):
        """Map parameters of a closed curve into one period.

        With ``center`` the window is ``[center - P/2, center + P/2)``,
        otherwise the parameter domain itself.
        """
        xi = np.asarray(xi, dtype=float)
        if not self.closed:
            return xi
        P = self.period
        if center is None:
            s = self.param_domain[0]
            return s + np.mod(xi - s, P)
        return center + np.mod(xi - center + 0.5 * P, P) - 0.5 * P

    def side(self, x, y) -> np.ndarray:
        """+1 on the plus side, -1 on the minus side (points on the curve count as minus)."""
        if self.level_set is None:
            raise GeometryError(f"curve {self.name!r} has no level set")
        return np.where(self.level_set(np.asarray(x, float), np.asarray(y, float)) > 0, 1, -1)


@dataclass(frozen=True)
class FrenetPoint:
    eta: np.ndarray
    xi: np.ndarray


@dataclass(frozen=True)
class FrenetFrame:
    tangent: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray
    speed: np.ndarray


@dataclass(frozen=True)
class LaplacianCoeffs:
    """``psi``, ``J0``, ``J1``, ``J2`` and their eta-derivatives.

    Each array has shape ``(order + 1, n)``; row ``k`` holds the k-th
    derivative with respect to eta.
    """

    psi: np.ndarray
    J0: np.ndarray
    J1: np.ndarray
    J2: np.ndarray


@dataclass(frozen=True)
class IntersectionRecord:
    point: np.ndarray
    xi: float
    t: float


# ---------------------------------------------------------------- curves


def circle(r0: float = 0.5, center=(0.0, 0.0)) -> Curve:
    cx, cy = map(float, center)
    r0 = float(r0)

    def g(xi):
        xi = np.asarray(xi, float)
        return np.stack([cx + r0 * np.cos(xi), cy + r0 * np.sin(xi)], axis=-1)

    def dg(xi):
        xi = np.asarray(xi, float)
        return np.stack([-r0 * np.sin(xi), r0 * np.cos(xi)], axis=-1)

    def ddg(xi):
        xi = np.asarray(xi, float)
        return np.stack([-r0 * np.cos(xi), -r0 * np.sin(xi)], axis=-1)

    def dddg(xi):
        xi = np.asarray(xi, float)
        return np.stack([r0 * np.sin(xi), -r0 * np.cos(xi)], axis=-1)

    def phi(x, y):
        return np.hypot(x - cx, y - cy) - r0

    return Curve(g, dg, ddg, (0.0, 2 * math.pi), True, phi, "circle",
                 {"r0": r0, "center": (cx, cy)}, dddg=dddg)


def star(b: float = 0.3, r0: float = math.pi / 3, center=(0.0, 0.0)) -> Curve:
    """Six-lobed curve ``rho^4 (1 + b sin 6 theta)^2 = r0``."""
    if not 0 <= b < 1:
        raise GeometryError("star curve needs 0 <= b < 1")
    cx, cy = map(float, center)
    c = r0 ** 0.25

    def radial(th, third=False):
        S = 1 + b * np.sin(6 * th)
        S1 = 6 * b * np.cos(6 * th)
        S2 = -36 * b * np.sin(6 * th)
        r = c * S ** -0.5
        r1 = -0.5 * c * S ** -1.5 * S1
        r2 = c * (0.75 * S ** -2.5 * S1 ** 2 - 0.5 * S ** -1.5 * S2)
        if not third:
            return r, r1, r2
        S3 = -216 * b * np.cos(6 * th)
        r3 = c * (-1.875 * S ** -3.5 * S1 ** 3 + 2.25 * S ** -2.5 * S1 * S2 - 0.5 * S ** -1.5 * S3)
        return r, r1, r2, r3

    def g(th):
        th = np.asarray(th, float)
        r, _, _ = radial(th)
        return np.stack([cx + r * np.cos(th), cy + r * np.sin(th)], axis=-1)

    def dg(th):
        th = np.asarray(th, float)
        r, r1, _ = radial(th)
        co, si = np.cos(th), np.sin(th)
        return np.stack([r1 * co - r * si, r1 * si + r * co], axis=-1)

    def ddg(th):
        th = np.asarray(th, float)
        r, r1, r2 = radial(th)
        co, si = np.cos(th), np.sin(th)
        return np.stack([(r2 - r) * co - 2 * r1 * si, (r2 - r) * si + 2 * r1 * co], axis=-1)

    def phi(x, y):
        X = np.asarray(x, float) - cx
        Y = np.asarray(y, float) - cy
        rho2 = X * X + Y * Y
        im6 = 6 * X ** 5 * Y - 20 * X ** 3 * Y ** 3 + 6 * X * Y ** 5
        with np.errstate(divide="ignore", invalid="ignore"):
            lobe = np.where(rho2 > 0, b * im6 / np.where(rho2 > 0, rho2, 1.0) ** 2, 0.0)
        return (rho2 + lobe) ** 2 - r0

    def dddg(th):
        th = np.asarray(th, float)
        r, r1, r2, r3 = radial(th, third=True)
        co, si = np.cos(th), np.sin(th)
        return np.stack([(r3 - 3 * r1) * co - (3 * r2 - r) * si, (r3 - 3 * r1) * si + (3 * r2 - r) * co], axis=-1)

    return Curve(g, dg, ddg, (0.0, 2 * math.pi), True, phi, "star",
                 {"b": b, "r0": r0, "center": (cx, cy)}, dddg=dddg)


def line(p0=(0.0, 0.0), direction=(1.0, 0.0), span=(-10.0, 10.0)) -> Curve:
    """Straight (open) interface through ``p0``; the plus side is to the right of ``direction``."""
    p0 = np.asarray(p0, float)
    d = np.asarray(direction, float)
    nrm = ROT @ (d / np.linalg.norm(d))

    def g(xi):
        xi = np.asarray(xi, float)
        return p0 + xi[..., None] * d

    def dg(xi):
        xi = np.asarray(xi, float)
        return np.broadcast_to(d, xi.shape + (2,)).copy()

    def ddg(xi):
        xi = np.asarray(xi, float)
        return np.zeros(xi.shape + (2,))

    def phi(x, y):
        return (np.asarray(x) - p0[0]) * nrm[0] + (np.asarray(y) - p0[1]) * nrm[1]

    return Curve(g, dg, ddg, tuple(map(float, span)), False, phi, "line",
                 {"p0": tuple(p0), "direction": tuple(d)}, dddg=ddg)


def curve_from_config(name: str, **params) -> Curve:
    builders = {"circle": circle, "star": star, "line": line}
    if name not in builders:
        raise KeyError(f"unknown curve {name!r}; choose from {sorted(builders)}")
    return builders[name](**params)


# ------------------------------------------------------------ frame & maps


def curvature(curve: Curve, xi) -> np.ndarray:
    d1 = curve.dg(xi)
    d2 = curve.ddg(xi)
    sp = np.linalg.norm(d1, axis=-1)
    return (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]) / sp ** 3


def curvature_derivative(curve: Curve, xi) -> np.ndarray:
    """``d kappa / d xi``; exact when the curve supplies ``dddg``, otherwise a
    fourth-order central difference."""
    xi = np.asarray(xi, float)
    if curve.dddg is not None:
        d1, d2, d3 = curve.dg(xi), curve.ddg(xi), curve.dddg(xi)
        sp2 = np.einsum("...i,...i->...", d1, d1)
        c12 = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        c13 = d1[..., 0] * d3[..., 1] - d1[..., 1] * d3[..., 0]
        dot12 = np.einsum("...i,...i->...", d1, d2)
        return c13 / sp2 ** 1.5 - 3 * c12 * dot12 / sp2 ** 2.5
    h = 1e-3 * curve.period
    k = lambda s: curvature(curve, s)
    return (-k(xi + 2 * h) + 8 * k(xi + h) - 8 * k(xi - h) + k(xi - 2 * h)) / (12 * h)


def frenet_frame(curve: Curve, xi) -> FrenetFrame:
    xi = np.asarray(xi, float)
    d1 = curve.dg(xi)
    sp = np.linalg.norm(d1, axis=-1)
    if np.any(sp < 1e-14):
        raise GeometryError("degenerate parametrization (|g'| < 1e-14)")
    tau = d1 / sp[..., None]
    n = tau @ ROT.T
    return FrenetFrame(tau, n, curvature(curve, xi), sp)


def _check_tube(curve, eta, kappa):
    jac = 1.0 + eta * kappa
    if np.any(jac < TUBE_MARGIN):
        worst = float(np.min(jac))
        raise TubeError(f"point outside the Frenet tube of {curve.name} (1 + eta*kappa = {worst:.3g})")


def push_forward(curve: Curve, p: FrenetPoint, jacobian: bool = False):
    """``g(xi) + eta n(xi)``; with ``jacobian`` also the (..., 2, 2) matrix with columns
    ``d/deta`` and ``d/dxi`` of the map."""
    eta = np.asarray(p.eta, float)
    xi = np.asarray(p.xi, float)
    fr = frenet_frame(curve, xi)
    _check_tube(curve, eta, fr.curvature)
    x = curve.g(xi) + eta[..., None] * fr.normal
    if not jacobian:
        return x
    # d n / d xi = kappa g'
    dxi = curve.dg(xi) * (1.0 + eta * fr.curvature)[..., None]
    return x, np.stack([fr.normal, dxi], axis=-1)


def pull_back(curve: Curve, x, hint=None, max_iter: int = 50, check_tube: bool = True) -> FrenetPoint:
    """Closest-point coordinates ``(eta, xi)`` of points ``x`` of shape (..., 2).

    Damped Newton on ``(x - g(xi)) . g'(xi) = 0``.  Returned ``xi`` lies in the
    parameter domain, or in the period window centred on ``hint`` for closed
    curves when a hint is given.
    """
    x = np.asarray(x, float)
    shape = x.shape[:-1]
    X = x.reshape(-1, 2)
    if hint is None:
        xi = _nearest_sample(curve, X)
    else:
        xi = np.broadcast_to(np.asarray(hint, float), shape).reshape(-1).copy()
    try:
        xi = _newton_foot(curve, X, xi, max_iter)
    except PullBackError:
        if hint is None:
            raise
        xi = _newton_foot(curve, X, _nearest_sample(curve, X), max_iter)
    if curve.closed:
        center = None if hint is None else np.broadcast_to(np.asarray(hint, float), shape).reshape(-1)
        xi = curve.wrap(xi, center)
    else:
        xi = np.clip(xi, *curve.param_domain)
    fr = frenet_frame(curve, xi)
    eta = np.einsum("ij,ij->i", X - curve.g(xi), fr.normal)
    if check_tube:
        _check_tube(curve, eta, fr.curvature)
    return FrenetPoint(eta.reshape(shape), xi.reshape(shape))


def _nearest_sample(curve, X):
    xs, ps = curve._samples
    d2 = ((X[:, None, :] - ps[None, :, :]) ** 2).sum(-1)
    return xs[np.argmin(d2, axis=1)].astype(float)


def _newton_foot(curve, X, xi, max_iter):
    """Minimise ``d(s) = |X - g(s)|^2 / 2`` from ``xi``.

    Newton where ``d'' > 0``, a gradient step otherwise, with backtracking
    on ``d`` itself so the iteration settles in a local minimum of distance.
    """
    tol = 1e-13 * curve.period
    xi = xi.copy()
    active = np.ones(len(xi), bool)
    F = np.zeros(len(xi))
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            return xi
        s = xi[idx]
        Xi = X[idx]
        g0, d1, d2 = curve.g(s), curve.dg(s), curve.ddg(s)
        r = Xi - g0
        Fi = np.einsum("ij,ij->i", r, d1)  # -d'(s)
        sp2 = np.einsum("ij,ij->i", d1, d1)
        curv = sp2 - np.einsum("ij,ij->i", r, d2)  # d''(s)
        step = Fi / np.where(curv > 0.1 * sp2, curv, sp2)
        # cap the step at a tenth of the period
        step = np.clip(step, -0.1 * curve.period, 0.1 * curve.period)
        d0 = 0.5 * np.einsum("ij,ij->i", r, r)
        ftol = 64 * np.finfo(float).eps * (np.abs(Xi).max(axis=1) + curve.length_scale) * np.sqrt(sp2)
        conv = np.abs(Fi) <= ftol
        step[conv] = 0.0
        full = step.copy()
        trial = s + step
        for _ in range(40):
            rt = Xi - curve.g(trial)
            dt = 0.5 * np.einsum("ij,ij->i", rt, rt)
            bad = dt > d0 - 1e-4 * step * Fi + 64 * np.finfo(float).eps * d0
            if not bad.any():
                break
            step = np.where(bad, 0.5 * step, step)
            trial = s + step
        # near the root the distance test is swamped by roundoff: take the full step
        tiny = np.abs(full) < 1e-6 * curve.period
        trial = np.where(tiny, s + full, trial)
        xi[idx] = trial
        F[idx] = Fi
        done = conv | (np.abs(full) <= tol)
        active[idx[done]] = False
    if active.any():
        raise PullBackError(
            f"pull_back did not converge in {max_iter} iterations", residual=float(np.max(np.abs(F[active]))))
    return xi


def laplacian_coeffs(curve: Curve, p: FrenetPoint, order: int = 0) -> LaplacianCoeffs:
    """Coefficients of the Laplacian in Frenet coordinates,

        L u = u_ee + J0 u_xx + J1 u_e + J2 u_x,

    together with their eta-derivatives up to ``order``.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    eta = np.atleast_1d(np.asarray(p.eta, float))
    xi = np.atleast_1d(np.asarray(p.xi, float))
    eta, xi = np.broadcast_arrays(eta, xi)
    d1, d2 = curve.dg(xi), curve.ddg(xi)
    sp2 = np.einsum("...i,...i->...", d1, d1)
    kap = curvature(curve, xi)
    dkap = curvature_derivative(curve, xi)
    jac = 1.0 + eta * kap
    if np.any(jac <= 0):
        raise TubeError("1 + eta*kappa <= 0: outside the Frenet tube")
    psi = 1.0 / jac
    G = np.einsum("...i,...i->...", d1, d2) / sp2

    def dpow(n, k):
        # d^k/deta^k psi^n = (-kappa)^k n (n+1) ... (n+k-1) psi^(n+k)
        return (-kap) ** k * math.prod(range(n, n + k)) * psi ** (n + k)

    ks = range(order + 1)
    P = np.array([dpow(1, k) for k in ks])
    J0 = np.array([dpow(2, k) / sp2 for k in ks])
    J1 = kap * P
    J2 = []
    for k in ks:
        d_eta_psi3 = eta * dpow(3, k) + (k * dpow(3, k - 1) if k > 0 else 0.0)
        J2.append(-(dkap * d_eta_psi3 + G * dpow(2, k)) / sp2)
    return LaplacianCoeffs(P, J0, J1, np.array(J2))


# ---------------------------------------------------------- intersections


def edge_intersection(curve: Curve, a, b, n_check: int = 16) -> Optional[IntersectionRecord]:
    """The point where the interface crosses segment ``a -> b``, if any."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    phi = curve.level_set
    if phi is None:
        raise GeometryError("edge_intersection needs a level set")
    L = float(np.linalg.norm(b - a))
    t = np.linspace(0.0, 1.0, n_check + 1)
    pts = a + t[:, None] * (b - a)
    vals = phi(pts[:, 0], pts[:, 1])
    zero_tol = 1e-13 * max(L, 1.0)
    if abs(vals[0]) <= zero_tol or abs(vals[-1]) <= zero_tol:
        warnings.warn("interface touches an edge endpoint; treated as no intersection", stacklevel=2)
        return None
    pos = vals > 0
    changes = int(np.count_nonzero(pos[1:] != pos[:-1]))
    if changes == 0:
        return None
    if changes > 1:
        raise HypothesisError(f"interface crosses edge {a.tolist()}->{b.tolist()} more than once (H1)")
    fun = lambda s: float(phi(*(a + s * (b - a))))
    ts = brentq(fun, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    point = a + ts * (b - a)
    fp = pull_back(curve, point, check_tube=False)
    return IntersectionRecord(point, float(fp.xi), float(ts))


def write_curve_csv(curve: Curve, path, n: int = 400) -> None:
    xi = curve.sample_params(n)
    pts = curve.g(xi)
    kap = curvature(curve, xi)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi", "x", "y", "kappa"])
        for row in zip(xi, pts[:, 0], pts[:, 1], kap):
            w.writerow([f"{v:.16g}" for v in row])
