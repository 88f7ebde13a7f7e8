"""Hybrid DoF map and assembly of the selective DG bilinear form.

The form is

    a(u, v) = sum_K (beta grad u, grad v)_K
              - sum_B ({beta grad u . n_B}, [v])_B
              + epsilon sum_B ({beta grad v . n_B}, [u])_B
              + sum_B sigma0 / |B|^alpha ([u], [v])_B

with ``B`` running over the edges of interface elements (``edge_set="sdg"``)
or over all interior edges (``edge_set="dg"``).  Jumps are taken as the
trace from the element with the smaller id minus the trace from the other;
``n_B`` points from the first to the second.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .ife_space import BasisEval, LocalIFEBasis, build_ife_basis, eval_ife, lagrange_basis
from .mesh import MeshClassification, fictitious_element, sdg_node_usage
from .quadrature import cut_cell_rule, edge_rule, gauss_rule_1d, tensor_rule

log = logging.getLogger(__name__)

__all__ = [
    "SchemeParams",
    "QuadratureConfig",
    "GlobalSpace",
    "LinearSystem",
    "build_global_space",
    "assemble",
    "assemble_forms",
    "energy_norm",
    "volume_data",
    "edge_jump_data",
    "write_matrix_market",
]


@dataclass(frozen=True)
class SchemeParams:
    epsilon: int = -1
    sigma0: float = 1.0
    alpha: float = 1.0
    edge_set: str = "sdg"
    m: int = 1

    def __post_init__(self):
        if self.epsilon not in (-1, 0, 1):
            raise ValueError("epsilon must be -1, 0 or 1")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.edge_set not in ("sdg", "dg"):
            raise ValueError("edge_set must be 'sdg' or 'dg'")

    @classmethod
    def from_rules(cls, m: int, beta, epsilon: int = -1, sigma0="large", alpha="auto", edge_set: str = "sdg"):
        """``sigma0`` may be "large" (4 max beta), "reduced" (max beta) or a number;
        ``alpha="auto"`` gives 3 for the nonsymmetric form with even m, else 1."""
        bmax = max(beta)
        if sigma0 == "large":
            s = 4.0 * bmax
        elif sigma0 == "reduced":
            s = float(bmax)
        else:
            s = float(sigma0)
        if alpha == "auto":
            a = 3.0 if (epsilon == 1 and m % 2 == 0) else 1.0
        else:
            a = float(alpha)
        return cls(int(epsilon), s, a, edge_set, int(m))


@dataclass(frozen=True)
class QuadratureConfig:
    q_volume: Optional[int] = None
    q_edge: Optional[int] = None
    q_interface: Optional[int] = None

    def resolved(self, m: int) -> "QuadratureConfig":
        return QuadratureConfig(self.q_volume or m + 3, self.q_edge or m + 3, self.q_interface or m + 4)


@dataclass
class GlobalSpace:
    classification: MeshClassification
    m: int
    edge_set: str
    beta: tuple[float, float]
    dof_count: int
    element_dofs: np.ndarray
    boundary_dofs: np.ndarray
    dof_coords: np.ndarray  # NaN rows for IFE DoFs
    dof_side: np.ndarray
    quad: QuadratureConfig
    _bases: dict = field(default_factory=dict, repr=False)
    _rules: dict = field(default_factory=dict, repr=False)

    @property
    def mesh(self):
        return self.classification.mesh

    @property
    def curve(self):
        return self.classification.curve

    @property
    def nloc(self) -> int:
        return (self.m + 1) ** 2

    @property
    def jump_edges(self) -> np.ndarray:
        if self.edge_set == "sdg":
            return self.classification.penalty_edges
        return self.mesh.interior_edges

    def basis(self, e: int) -> LocalIFEBasis:
        e = int(e)
        if e not in self._bases:
            kf = fictitious_element(self.classification, e)
            self._bases[e] = build_ife_basis(kf, self.curve, self.beta, self.m, q=self.quad.q_interface)
        return self._bases[e]

    def volume_rule(self, e: int, q: int | None = None):
        """(points, weights, sides) for element ``e``; cut elements use cut-cell rules."""
        q = self.quad.q_volume if q is None else q
        key = (int(e), q)
        if key not in self._rules:
            box = self.mesh.element_box(e)
            cl = self.classification
            if cl.is_interface[e]:
                _, recs = cl.element_cuts[int(e)]
                rm, rp = cut_cell_rule(box, self.curve, recs, q)
                pts = np.concatenate([rm.points, rp.points])
                w = np.concatenate([rm.weights, rp.weights])
                s = np.concatenate([rm.sides, rp.sides])
            else:
                r = tensor_rule(box, q)
                pts, w, s = r.points, r.weights, np.full(len(r.weights), cl.element_side[e])
            self._rules[key] = (pts, w, s)
        return self._rules[key]

    def eval_element(self, e: int, pts, sides=None) -> BasisEval:
        if self.classification.is_interface[e]:
            return eval_ife(self.basis(e), self.curve, pts, sides)
        return lagrange_basis(self.mesh.element_box(e), self.m, pts)

    def beta_of(self, sides) -> np.ndarray:
        return np.where(np.asarray(sides) > 0, self.beta[1], self.beta[0])


def build_global_space(classification: MeshClassification, m: int, edge_set: str = "sdg",
                       beta=(1.0, 1.0), quad: QuadratureConfig | None = None) -> GlobalSpace:
    """Number the DoFs: shared Q_m nodes on plain elements, private blocks on cut ones
    (``"sdg"``) or private blocks everywhere (``"dg"``)."""
    mesh = classification.mesh
    quad = (quad or QuadratureConfig()).resolved(m)
    nloc = (m + 1) ** 2
    enodes = mesh.element_nodes(m)
    grid = mesh.node_grid(m)
    side = classification.element_side
    plain = classification.non_interface_elements
    cut = classification.interface_elements
    if edge_set == "sdg":
        used = sdg_node_usage(classification, m)
        cg_index = np.full(len(grid), -1, dtype=np.int64)
        cg_index[used] = np.arange(int(used.sum()))
        n_cg = int(used.sum())
        dofs = np.empty((mesh.n_elements, nloc), dtype=np.int64)
        dofs[plain] = cg_index[enodes[plain]]
        dofs[cut] = n_cg + np.arange(len(cut) * nloc).reshape(len(cut), nloc)
        ndof = n_cg + len(cut) * nloc
        coords = np.full((ndof, 2), np.nan)
        coords[:n_cg] = grid[used]
        dside = np.zeros(ndof, dtype=np.int64)
        dside[dofs[plain].ravel()] = np.repeat(side[plain], nloc)
    elif edge_set == "dg":
        dofs = np.arange(mesh.n_elements * nloc).reshape(mesh.n_elements, nloc)
        ndof = mesh.n_elements * nloc
        coords = np.full((ndof, 2), np.nan)
        coords[dofs[plain].ravel()] = grid[enodes[plain].ravel()]
        dside = np.zeros(ndof, dtype=np.int64)
        dside[dofs[plain].ravel()] = np.repeat(side[plain], nloc)
    else:
        raise ValueError("edge_set must be 'sdg' or 'dg'")
    tol = 1e-12 * max(mesh.x1 - mesh.x0, mesh.y1 - mesh.y0)
    with np.errstate(invalid="ignore"):
        onb = ((np.abs(coords[:, 0] - mesh.x0) < tol) | (np.abs(coords[:, 0] - mesh.x1) < tol)
               | (np.abs(coords[:, 1] - mesh.y0) < tol) | (np.abs(coords[:, 1] - mesh.y1) < tol))
    return GlobalSpace(classification, m, edge_set, (float(beta[0]), float(beta[1])), ndof, dofs,
                       np.nonzero(onb)[0], coords, dside, quad)


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix  # after Dirichlet elimination
    rhs: np.ndarray
    stiffness: sp.csr_matrix  # before elimination
    load: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    volume: sp.csr_matrix
    flux: sp.csr_matrix  # F[i, j] = ({beta grad phi_j . n}, [phi_i])
    penalty: sp.csr_matrix
    scheme: SchemeParams

    @property
    def norm_matrix(self) -> sp.csr_matrix:
        """Matrix of the energy inner product."""
        return (self.volume + self.penalty).tocsr()


class _Triplets:
    def __init__(self):
        self.r, self.c, self.v = [], [], []

    def add(self, dofs_r, dofs_c, block):
        block = np.asarray(block)
        R = np.broadcast_to(np.asarray(dofs_r)[..., :, None], block.shape)
        C = np.broadcast_to(np.asarray(dofs_c)[..., None, :], block.shape)
        self.r.append(R.ravel())
        self.c.append(C.ravel())
        self.v.append(block.ravel())

    def tocsr(self, n, deterministic=False):
        if not self.r:
            return sp.csr_matrix((n, n))
        r = np.concatenate(self.r)
        c = np.concatenate(self.c)
        v = np.concatenate(self.v)
        if deterministic:
            order = np.lexsort((c, r))
            r, c, v = r[order], c[order], v[order]
            key = r * n + c
            start = np.concatenate([[0], np.nonzero(np.diff(key))[0] + 1])
            v = np.add.reduceat(v, start) if len(v) else v
            r, c = r[start], c[start]
        return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def _reference_plain(space: GlobalSpace, q: int):
    """Lagrange data on the reference element at the lower-left corner of the mesh."""
    mesh = space.mesh
    box = ((0.0, mesh.hx), (0.0, mesh.hy))
    rule = tensor_rule(box, q)
    ev = lagrange_basis(box, space.m, rule.points)
    return rule, ev


def _edge_template(space, vertical: bool, q: int):
    """Flux and jump matrices for an uncut edge between two plain elements (beta = 1)."""
    mesh, m = space.mesh, space.m
    hx, hy = mesh.hx, mesh.hy
    if vertical:
        b1, b2 = ((0, hx), (0, hy)), ((hx, 2 * hx), (0, hy))
        ends = ((hx, 0.0), (hx, hy))
        n = np.array([1.0, 0.0])
    else:
        b1, b2 = ((0, hx), (0, hy)), ((0, hx), (hy, 2 * hy))
        ends = ((0.0, hy), (hx, hy))
        n = np.array([0.0, 1.0])
    rule = edge_rule(ends, None, q, intersection=None)
    e1 = lagrange_basis(b1, m, rule.points)
    e2 = lagrange_basis(b2, m, rule.points)
    jv = np.hstack([e1.values, -e2.values])
    fl = 0.5 * np.hstack([e1.gradients @ n, e2.gradients @ n])
    F = np.einsum("q,qi,qj->ij", rule.weights, jv, fl)
    P = np.einsum("q,qi,qj->ij", rule.weights, jv, jv)
    return F, P


def _edge_local(space: GlobalSpace, B: int, q: int):
    """Jump / weighted-average traces of both neighbours' shapes on edge ``B``."""
    mesh = space.mesh
    K1, K2 = mesh.edge_elements[B]
    rec = space.classification.edge_cuts.get(int(B))
    rule = edge_rule(mesh.edge_endpoints[B], space.curve, q, intersection=rec)
    n = mesh.edge_normals[B]
    e1 = space.eval_element(K1, rule.points, rule.sides)
    e2 = space.eval_element(K2, rule.points, rule.sides)
    beta = space.beta_of(rule.sides)
    jv = np.hstack([e1.values, -e2.values])
    fl = 0.5 * beta[:, None] * np.hstack([e1.gradients @ n, e2.gradients @ n])
    dofs = np.concatenate([space.element_dofs[K1], space.element_dofs[K2]])
    return rule, jv, fl, dofs


def assemble_forms(space: GlobalSpace, scheme: SchemeParams, deterministic: bool = False):
    """Volume, flux and penalty matrices ``(V, F, P)`` so that
    ``A = V - F + epsilon F^T + P``."""
    mesh, cl = space.mesh, space.classification
    qv, qe = space.quad.q_volume, space.quad.q_edge
    vol, flux, pen = _Triplets(), _Triplets(), _Triplets()

    plain = cl.non_interface_elements
    if plain.size:
        rule, ev = _reference_plain(space, qv)
        Kref = np.einsum("q,qid,qjd->ij", rule.weights, ev.gradients, ev.gradients)
        betas = space.beta_of(cl.element_side[plain])
        D = space.element_dofs[plain]
        vol.add(D, D, betas[:, None, None] * Kref[None])
    for e in cl.interface_elements:
        pts, w, s = space.volume_rule(e)
        ev = space.eval_element(e, pts, s)
        Ke = np.einsum("q,qid,qjd->ij", w * space.beta_of(s), ev.gradients, ev.gradients)
        D = space.element_dofs[e]
        vol.add(D, D, Ke)

    edges = space.jump_edges
    weight = scheme.sigma0 / mesh.edge_lengths ** scheme.alpha
    K12 = mesh.edge_elements[edges]
    plain_pair = ~cl.is_interface[K12[:, 0]] & ~cl.is_interface[K12[:, 1]]
    for vertical in (True, False):
        isv = edges < mesh.n_vertical_edges
        sel = edges[plain_pair & (isv if vertical else ~isv)]
        if sel.size == 0:
            continue
        Ft, Pt = _edge_template(space, vertical, qe)
        Ks = mesh.edge_elements[sel]
        D = np.concatenate([space.element_dofs[Ks[:, 0]], space.element_dofs[Ks[:, 1]]], axis=1)
        b = space.beta_of(cl.element_side[Ks[:, 0]])
        flux.add(D, D, b[:, None, None] * Ft[None])
        pen.add(D, D, weight[sel][:, None, None] * Pt[None])
    for B in edges[~plain_pair]:
        rule, jv, fl, D = _edge_local(space, B, qe)
        flux.add(D, D, np.einsum("q,qi,qj->ij", rule.weights, jv, fl))
        pen.add(D, D, weight[B] * np.einsum("q,qi,qj->ij", rule.weights, jv, jv))

    n = space.dof_count
    return vol.tocsr(n, deterministic), flux.tocsr(n, deterministic), pen.tocsr(n, deterministic)


def load_vector(space: GlobalSpace, f) -> np.ndarray:
    """``(f, phi_i)`` for every DoF; ``f(points, sides)``."""
    cl, mesh = space.classification, space.mesh
    b = np.zeros(space.dof_count)
    plain = cl.non_interface_elements
    if plain.size:
        rule, ev = _reference_plain(space, space.quad.q_volume)
        pts = mesh.element_origin[plain][:, None, :] + rule.points[None]
        sides = np.repeat(cl.element_side[plain][:, None], len(rule.weights), axis=1)
        fv = f(pts.reshape(-1, 2), sides.ravel()).reshape(len(plain), -1)
        loc = (fv * rule.weights[None]) @ ev.values
        np.add.at(b, space.element_dofs[plain], loc)
    for e in cl.interface_elements:
        pts, w, s = space.volume_rule(e)
        ev = space.eval_element(e, pts, s)
        np.add.at(b, space.element_dofs[e], (w * f(pts, s)) @ ev.values)
    return b


def assemble(space: GlobalSpace, problem, scheme: SchemeParams, deterministic: bool = False) -> LinearSystem:
    """Stiffness matrix and load vector with Dirichlet data imposed strongly."""
    if scheme.edge_set != space.edge_set:
        raise ValueError("scheme and space disagree on the edge set")
    V, F, P = assemble_forms(space, scheme, deterministic)
    A0 = (V - F + scheme.epsilon * F.T + P).tocsr()
    b0 = load_vector(space, problem.f)
    bd = space.boundary_dofs
    coords = space.dof_coords[bd]
    g = problem.u(coords, problem.side(coords)) if bd.size else np.zeros(0)
    ug = np.zeros(space.dof_count)
    ug[bd] = g
    rhs = b0 - A0 @ ug
    rhs[bd] = g
    keep = np.ones(space.dof_count)
    keep[bd] = 0.0
    Dk = sp.diags(keep)
    A = (Dk @ A0 @ Dk + sp.diags(1.0 - keep)).tocsr()
    A.eliminate_zeros()
    return LinearSystem(A, rhs, A0, b0, bd, g, V, F, P, scheme)


# ---------------------------------------------------------- field sampling


def volume_data(space: GlobalSpace, coeffs=None, q: int | None = None):
    """Quadrature data over the whole mesh.

    Returns a dict with ``points``, ``weights``, ``sides``, ``element`` and,
    when ``coeffs`` is given, the discrete field ``uh`` and its gradient ``guh``.
    """
    cl, mesh = space.classification, space.mesh
    q = space.quad.q_volume if q is None else q
    P, W, S, E, U, G = [], [], [], [], [], []
    plain = cl.non_interface_elements
    if plain.size:
        rule, ev = _reference_plain(space, q)
        nq = len(rule.weights)
        P.append((mesh.element_origin[plain][:, None, :] + rule.points[None]).reshape(-1, 2))
        W.append(np.tile(rule.weights, len(plain)))
        S.append(np.repeat(cl.element_side[plain], nq))
        E.append(np.repeat(plain, nq))
        if coeffs is not None:
            c = coeffs[space.element_dofs[plain]]  # (ne, nloc)
            U.append((c @ ev.values.T).ravel())
            G.append(np.einsum("ek,qkd->eqd", c, ev.gradients).reshape(-1, 2))
    for e in cl.interface_elements:
        pts, w, s = space.volume_rule(e, q)
        P.append(pts)
        W.append(w)
        S.append(s)
        E.append(np.full(len(w), e))
        if coeffs is not None:
            ev = space.eval_element(e, pts, s)
            c = coeffs[space.element_dofs[e]]
            U.append(ev.values @ c)
            G.append(np.einsum("qkd,k->qd", ev.gradients, c))
    out = {"points": np.concatenate(P), "weights": np.concatenate(W),
           "sides": np.concatenate(S), "element": np.concatenate(E)}
    if coeffs is not None:
        out["uh"] = np.concatenate(U)
        out["guh"] = np.concatenate(G)
    return out


def edge_jump_data(space: GlobalSpace, coeffs, q: int | None = None):
    """Per jump edge: (edge id, weights, jump of the discrete field at the edge points)."""
    q = space.quad.q_edge if q is None else q
    out = []
    for B in space.jump_edges:
        rule, jv, _, D = _edge_local(space, B, q)
        out.append((int(B), rule.weights, jv @ coeffs[D]))
    return out


def energy_norm(space: GlobalSpace, scheme: SchemeParams, coeffs, problem=None, q: int | None = None) -> float:
    """Broken beta-weighted H1 seminorm plus penalty-weighted jumps.

    With ``problem`` the norm of ``u - u_h`` is returned (the exact solution
    has no jumps across edges).
    """
    coeffs = np.asarray(coeffs, float)
    vd = volume_data(space, coeffs, q)
    g = vd["guh"]
    if problem is not None:
        g = problem.grad(vd["points"], vd["sides"]) - g
    total = float(np.sum(vd["weights"] * space.beta_of(vd["sides"]) * np.einsum("qd,qd->q", g, g)))
    L = space.mesh.edge_lengths
    for B, w, jump in edge_jump_data(space, coeffs, q):
        total += scheme.sigma0 / L[B] ** scheme.alpha * float(np.sum(w * jump ** 2))
    return float(np.sqrt(max(total, 0.0)))


def write_matrix_market(system: LinearSystem, matrix_path, rhs_path=None) -> None:
    scipy.io.mmwrite(str(matrix_path), system.matrix, comment="frenet_sdg stiffness (Dirichlet rows eliminated)")
    if rhs_path is not None:
        np.savetxt(rhs_path, system.rhs, fmt="%.17g")
