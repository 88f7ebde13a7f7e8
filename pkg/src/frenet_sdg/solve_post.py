"""Linear solve, the hybrid projection, error norms and convergence rates."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import GlobalSpace, LinearSystem, SchemeParams, energy_norm, volume_data

log = logging.getLogger(__name__)

__all__ = [
    "SolveError",
    "SolveInfo",
    "DiscreteSolution",
    "ErrorReport",
    "solve",
    "project",
    "error_norms",
    "convergence_rates",
    "RESIDUAL_TOL",
]

RESIDUAL_TOL = 1e-10


class SolveError(RuntimeError):
    pass


@dataclass
class SolveInfo:
    method: str
    residual: float
    seconds: float
    iterations: int = 0


def _relres(A, x, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / (nb if nb > 0 else 1.0))


def solve(system, rhs=None, method: str = "direct", refine: int = 2, tol: float = RESIDUAL_TOL,
          return_info: bool = False):
    """Solve ``A x = b``.  ``system`` is a LinearSystem or a sparse/dense matrix.

    The direct path uses a sparse LU with a couple of refinement sweeps and
    falls back to GMRES (rtol 1e-12, 10 n iterations) if the residual stays
    above ``tol``.
    """
    if isinstance(system, LinearSystem):
        A, b = system.matrix, system.rhs
    else:
        A, b = system, rhs
    A = sp.csc_matrix(A)
    b = np.asarray(b, float)
    n = A.shape[0]
    t0 = time.perf_counter()
    x = None
    used = method
    if method == "direct":
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolveError(f"sparse factorization failed: {exc}") from exc
        x = lu.solve(b)
        for _ in range(refine):
            if _relres(A, x, b) < tol * 1e-2:
                break
            x = x + lu.solve(b - A @ x)
        if not np.all(np.isfinite(x)):
            raise SolveError("factorization produced non-finite values (singular matrix?)")
    its = 0
    if x is None or _relres(A, x, b) >= tol:
        used = "gmres" if method == "direct" else method

        def cb(_):
            nonlocal its
            its += 1

        x0 = x if x is not None else np.zeros(n)
        x, flag = spla.gmres(A, b, x0=x0, rtol=1e-12, atol=0.0, restart=min(n, 200), maxiter=10 * n,
                             callback=cb, callback_type="pr_norm")
        if flag != 0:
            raise SolveError(f"iterative solver did not converge (flag {flag})")
    res = _relres(A, x, b)
    if res >= tol:
        raise SolveError(f"relative residual {res:.2e} above {tol:.0e}")
    info = SolveInfo(used, res, time.perf_counter() - t0, its)
    log.debug("solve: n=%d method=%s residual=%.2e", n, used, res)
    return (x, info) if return_info else x


@dataclass
class DiscreteSolution:
    space: GlobalSpace
    coeffs: np.ndarray
    scheme: SchemeParams | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, float)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValueError("coefficient vector length differs from the DoF count")

    def evaluate(self, pts) -> np.ndarray:
        """Point values; each point is assigned to the element containing it."""
        pts = np.asarray(pts, float).reshape(-1, 2)
        mesh = self.space.mesh
        i = np.clip(((pts[:, 0] - mesh.x0) / mesh.hx).astype(int), 0, mesh.N - 1)
        j = np.clip(((pts[:, 1] - mesh.y0) / mesh.hy).astype(int), 0, mesh.N - 1)
        e = j * mesh.N + i
        sides = self.space.curve.side(pts[:, 0], pts[:, 1])
        out = np.zeros(len(pts))
        for k in np.unique(e):
            sel = e == k
            ev = self.space.eval_element(k, pts[sel], sides[sel])
            out[sel] = ev.values @ self.coeffs[self.space.element_dofs[k]]
        return out


@dataclass
class ErrorReport:
    l2: float
    semi_h1: float
    energy: float
    l2_minus: float
    l2_plus: float
    h1_minus: float
    h1_plus: float

    def as_dict(self):
        return dict(self.__dict__)


def project(problem, space: GlobalSpace, q: int | None = None) -> DiscreteSolution:
    """Nodal interpolation on plain elements, local L2 projection onto the IFE
    shapes on interface elements."""
    coeffs = np.zeros(space.dof_count)
    cl = space.classification
    plain = cl.non_interface_elements
    if plain.size:
        nodes = space.mesh.node_grid(space.m)
        en = space.mesh.element_nodes(space.m)[plain]
        sides = np.repeat(cl.element_side[plain][:, None], en.shape[1], axis=1)
        vals = problem.u(nodes[en.ravel()], sides.ravel())
        coeffs[space.element_dofs[plain].ravel()] = vals
    for e in cl.interface_elements:
        pts, w, s = space.volume_rule(e, q)
        ev = space.eval_element(e, pts, s)
        M = (ev.values * w[:, None]).T @ ev.values
        rhs = ev.values.T @ (w * problem.u(pts, s))
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > 1e14:
            raise SolveError(f"local mass matrix on element {e} is singular (cond {cond:.2e})")
        coeffs[space.element_dofs[e]] = np.linalg.solve(M, rhs)
    return DiscreteSolution(space, coeffs, None, {"kind": "projection"})


def error_norms(problem, solution: DiscreteSolution, scheme: SchemeParams | None = None,
                q: int | None = None) -> ErrorReport:
    """L2, broken H1-seminorm and energy errors, split by subdomain."""
    space = solution.space
    vd = volume_data(space, solution.coeffs, q)
    pts, w, s = vd["points"], vd["weights"], vd["sides"]
    eu = problem.u(pts, s) - vd["uh"]
    eg = problem.grad(pts, s) - vd["guh"]
    l2_loc = w * eu ** 2
    h1_loc = w * np.einsum("qd,qd->q", eg, eg)
    plus = s > 0
    parts = [float(np.sum(a[sel])) for a in (l2_loc, h1_loc) for sel in (~plus, plus)]
    scheme = scheme or solution.scheme
    energy = energy_norm(space, scheme, solution.coeffs, problem, q) if scheme is not None else float("nan")
    return ErrorReport(
        l2=float(np.sqrt(parts[0] + parts[1])),
        semi_h1=float(np.sqrt(parts[2] + parts[3])),
        energy=energy,
        l2_minus=float(np.sqrt(parts[0])),
        l2_plus=float(np.sqrt(parts[1])),
        h1_minus=float(np.sqrt(parts[2])),
        h1_plus=float(np.sqrt(parts[3])),
    )


def convergence_rates(errors, last: int | None = 3):
    """Stepwise rates and the least-squares log-log slope.

    ``errors`` is a sequence of ``(h, e)``.  The fit uses the last ``last``
    levels (all of them when ``last`` is None).
    """
    data = np.asarray(errors, float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need at least two (h, e) pairs")
    h, e = data[:, 0], data[:, 1]
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    if np.any(np.diff(h) >= 0):
        raise ValueError("h must be strictly decreasing")
    step = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    k = len(h) if last is None else min(last, len(h))
    slope = float(np.polyfit(np.log(h[-k:]), np.log(e[-k:]), 1)[0])
    log.debug("stepwise rates %s, fitted %.3f", np.round(step, 3), slope)
    return step, slope
