"""Manufactured interface problems with exact solutions on both sides."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ad
from .geometry import Curve, circle, star
from .special import bessel_j1_y1, j1_over_x, j2_over_x2

log = logging.getLogger(__name__)

__all__ = [
    "ManufacturedProblem",
    "radial_problem",
    "star_problem",
    "bessel_problem",
    "problem_from_config",
    "extended_jump_diagnostic",
]

SideFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ManufacturedProblem:
    """Per-side fields take points of shape (n, 2); the public ``u``, ``grad``
    and ``f`` dispatch on a per-point side array (-1 or +1)."""

    name: str
    domain: tuple
    curve: Curve
    beta: tuple[float, float]
    u_minus: SideFn
    u_plus: SideFn
    grad_minus: SideFn
    grad_plus: SideFn
    f_minus: SideFn
    f_plus: SideFn
    params: dict = field(default_factory=dict)

    def side(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float).reshape(-1, 2)
        return self.curve.side(pts[:, 0], pts[:, 1])

    def _dispatch(self, fm, fp, pts, sides, width):
        pts = np.asarray(pts, float).reshape(-1, 2)
        sides = self.side(pts) if sides is None else np.broadcast_to(np.asarray(sides), (len(pts),))
        out = np.zeros((len(pts),) + width)
        for s, fn in ((-1, fm), (1, fp)):
            sel = sides == s if s > 0 else sides <= 0
            if sel.any():
                out[sel] = fn(pts[sel])
        return out

    def u(self, pts, sides=None):
        return self._dispatch(self.u_minus, self.u_plus, pts, sides, ())

    def grad(self, pts, sides=None):
        return self._dispatch(self.grad_minus, self.grad_plus, pts, sides, (2,))

    def f(self, pts, sides=None):
        return self._dispatch(self.f_minus, self.f_plus, pts, sides, ())

    def g(self, pts):
        """Dirichlet data."""
        return self.u(pts)

    def beta_at(self, sides):
        return np.where(np.asarray(sides) > 0, self.beta[1], self.beta[0])


def radial_problem(r0: float = math.pi / 6.28, nu: float = 5.0, beta=(1.0, 10.0)) -> ManufacturedProblem:
    """``u = r^nu / beta`` inside, shifted outside so that ``u`` is continuous."""
    if not 0 < r0 < 1:
        raise ValueError("radial problem needs 0 < r0 < 1")
    if nu < 2:
        raise ValueError("nu must be >= 2")
    bm, bp = map(float, beta)
    shift = (1 / bm - 1 / bp) * r0 ** nu

    def r2(X):
        return X[:, 0] ** 2 + X[:, 1] ** 2

    def make(b, c):
        return (lambda X: r2(X) ** (nu / 2) / b + c,
                lambda X: (nu * r2(X) ** (nu / 2 - 1) / b)[:, None] * X)

    um, gm = make(bm, 0.0)
    up, gp = make(bp, shift)
    f = lambda X: -nu ** 2 * r2(X) ** (nu / 2 - 1)  # noqa: E731
    return ManufacturedProblem("radial", ((-1.0, 1.0), (-1.0, 1.0)), circle(r0), (bm, bp),
                               um, up, gm, gp, f, f, {"r0": r0, "nu": nu})


def star_problem(b: float = 0.3, r0: float = math.pi / 3, beta=(1.0, 10.0)) -> ManufacturedProblem:
    """``u = cos(psi) / beta`` plus a constant outside; ``psi`` is the star level set."""
    if not 0 <= b < 1:
        raise ValueError("star problem needs 0 <= b < 1")
    bm, bp = map(float, beta)
    curve = star(b, r0)

    def psi(x, y):
        # written with Dual-friendly operations only
        rho2 = x * x + y * y
        im6 = 6 * x ** 5 * y - 20 * x ** 3 * y ** 3 + 6 * x * y ** 5
        return (rho2 + b * im6 / (rho2 * rho2)) ** 2 - r0

    def cos_psi(x, y):
        return ad.cos(psi(x, y))

    def psi_safe(x, y):
        # the lobe term behaves like rho^2 near the origin; its limit there is 0
        rho2 = x * x + y * y
        im6 = 6 * x ** 5 * y - 20 * x ** 3 * y ** 3 + 6 * x * y ** 5
        lobe = b * im6 / np.where(rho2 > 0, rho2, 1.0) ** 2
        return (rho2 + lobe) ** 2 - r0

    def make(beta_s, c):
        def u(X):
            return np.cos(psi_safe(X[:, 0], X[:, 1])) / beta_s + c

        def grad(X):
            _, ux, uy = ad.gradient(cos_psi, X[:, 0], X[:, 1])
            return np.stack([ux, uy], -1) / beta_s

        return u, grad

    def f(X):
        return -ad.laplacian(cos_psi, X[:, 0], X[:, 1])

    um, gm = make(bm, 0.0)
    up, gp = make(bp, 1 / bm - 1 / bp)
    return ManufacturedProblem("star", ((-2.0, 2.0), (-2.0, 2.0)), curve, (bm, bp),
                               um, up, gm, gp, f, f, {"b": b, "r0": r0})


def bessel_coefficients(r0: float, beta) -> tuple[float, float, float]:
    """(A, B, residual) matching value and flux of the outer J1/Y1 combination at ``r0``."""
    bm, bp = map(float, beta)
    gm, gp = bm ** -0.5, bp ** -0.5
    Jm, _, dJm, _ = bessel_j1_y1(gm * r0)
    Jp, Yp, dJp, dYp = bessel_j1_y1(gp * r0)
    # flux row divided by beta+ gamma+ so both rows are O(1)
    M = np.array([[Jp, Yp], [dJp, dYp]], dtype=float)
    rhs = np.array([Jm, bm * gm * dJm / (bp * gp)], dtype=float)
    if abs(np.linalg.det(M)) < 1e-14 * np.abs(M).max() ** 2:
        raise ValueError("singular Bessel matching system")
    sol = np.linalg.solve(M, rhs)
    sol = sol + np.linalg.solve(M, rhs - M @ sol)
    A, B = sol
    return float(A), float(B), float(np.abs(M @ [A, B] - rhs).max())


def bessel_problem(r0: float = math.pi / 6.28, beta=(1.0, 10.0)) -> ManufacturedProblem:
    """Mode ``sin(theta)`` eigenfunction: ``-beta Lap u = u`` on both sides."""
    if not 0 < r0 < 1:
        raise ValueError("Bessel problem needs 0 < r0 < 1")
    bm, bp = map(float, beta)
    gm, gp = bm ** -0.5, bp ** -0.5
    A, B, _ = bessel_coefficients(r0, beta)

    def u_minus(X):
        r = np.hypot(X[:, 0], X[:, 1])
        return gm * j1_over_x(gm * r) * X[:, 1]

    def grad_minus(X):
        # u = gamma j(gamma r) y with j(s) = J1(s)/s and j'(s) = -J2(s)/s
        x, y = X[:, 0], X[:, 1]
        r = np.hypot(x, y)
        d = -gm ** 3 * j2_over_x2(gm * r)
        return np.stack([d * x * y, d * y * y + gm * j1_over_x(gm * r)], -1)

    def outer(X):
        r = np.hypot(X[:, 0], X[:, 1])
        J, Y, dJ, dY = bessel_j1_y1(gp * r)
        return r, A * J + B * Y, gp * (A * dJ + B * dY)

    def u_plus(X):
        r, F, _ = outer(X)
        return F * X[:, 1] / r

    def grad_plus(X):
        # u = F(r) y / r
        x, y = X[:, 0], X[:, 1]
        r, F, dF = outer(X)
        dG = (dF - F / r) / r  # derivative of F/r
        return np.stack([dG * x * y / r, dG * y * y / r + F / r], -1)

    return ManufacturedProblem("bessel", ((-1.0, 1.0), (-1.0, 1.0)), circle(r0), (bm, bp),
                               u_minus, u_plus, grad_minus, grad_plus, u_minus, u_plus,
                               {"r0": r0, "A": A, "B": B})


def problem_from_config(name: str, beta, **params) -> ManufacturedProblem:
    builders = {"radial": radial_problem, "circle": radial_problem, "star": star_problem,
                "bessel": bessel_problem}
    if name not in builders:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(builders)}")
    return builders[name](beta=beta, **params)


def extended_jump_diagnostic(problem: ManufacturedProblem, m: int, n: int = 200,
                             step: float = 1e-3, tol: float = 1e-6) -> dict:
    """Sample ``[d_n^j (beta Lap u)]`` on the interface for ``j <= m-2``.

    ``beta Lap u = -f`` per side, so the jumps of normal derivatives of the
    two source branches are compared, each side continued across the curve
    by its own formula.  Warns above ``tol``.
    """
    from .geometry import frenet_frame

    curve = problem.curve
    xi = curve.sample_params(n)
    P = curve.g(xi)
    nrm = frenet_frame(curve, xi).normal
    out = {}
    for j in range(max(m - 1, 0)):
        # central differences of order j along the normal
        k = np.arange(j + 1)
        c = np.array([(-1) ** (j - i) * math.comb(j, i) for i in k], float)
        offs = (k - j / 2) * step
        vals = []
        for fn in (problem.f_minus, problem.f_plus):
            samples = np.stack([fn(P + o * nrm) for o in offs])
            vals.append((c @ samples) / step ** j)
        jump = float(np.abs(vals[1] - vals[0]).max())
        scale = max(1.0, float(np.abs(vals[0]).max()))
        out[j] = jump / scale
        if out[j] > tol:
            log.warning("%s: extended jump j=%d is %.2e (m=%d)", problem.name, j, out[j], m)
    return out
