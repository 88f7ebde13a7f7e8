"""Acceptance criteria, one test each.

Every test prints a single ``CRITERION k: PASS|FAIL`` line (visible with -s)
and asserts at the stated tolerance.
"""

import math
import time
from functools import lru_cache

import numpy as np
import pytest

from frenet_sdg.assembly import SchemeParams, assemble, build_global_space, energy_norm
from frenet_sdg.geometry import FrenetPoint, circle, laplacian_coeffs, pull_back, push_forward, star
from frenet_sdg.ife_space import build_ife_basis, jump_residual
from frenet_sdg.mesh import build_mesh, classify, dof_counts, fictitious_element, sdg_formula_count
from frenet_sdg.problems import bessel_problem, problem_from_config, radial_problem, star_problem
from frenet_sdg.quadrature import cut_cell_rule
from frenet_sdg.solve_post import DiscreteSolution, convergence_rates, error_norms, project, solve
from frenet_sdg.special import bessel_j1_y1

NS = (10, 20, 40, 80)
BETAS = ((1.0, 10.0), (1.0, 1000.0))

# N, |T_i|, |E_i|, then (DG/SDG, CG/SDG) for m = 1..4
TABLE3 = [
    (5, 8, 8, 1.4706, 0.5294, 1.2712, 0.6836, 1.1905, 0.7619, 1.1468, 0.8092),
    (10, 20, 20, 1.9900, 0.6020, 1.5491, 0.7590, 1.3781, 0.8277, 1.2880, 0.8660),
    (20, 44, 44, 2.5932, 0.7147, 1.8100, 0.8451, 1.5381, 0.8943, 1.3872, 0.9101),
    (40, 92, 92, 3.1235, 0.8204, 1.9986, 0.9106, 1.6451, 0.9409, 1.4425, 0.9348),
    (80, 188, 188, 3.5006, 0.8972, 2.1148, 0.9517, 1.7078, 0.9686, 1.4699, 0.9466),
    (160, 372, 372, 3.7360, 0.9457, 2.1809, 0.9754, 1.7424, 0.9842, 1.4833, 0.9523),
    (320, 740, 740, 3.8641, 0.9721, 2.2151, 0.9875, 1.7600, 0.9921, 1.4951, 0.9584),
    (640, 1476, 1476, 3.9310, 0.9858, 2.2324, 0.9937, 1.7689, 0.9960, 1.5003, 0.9620),
]


def report(k, ok, detail):
    print(f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")


@lru_cache(maxsize=None)
def study(problem, m, beta, mode, epsilon=-1, sigma0="large", edge_set="sdg"):
    """(h, l2, h1) per N for one series; cached across tests."""
    out = []
    for N in NS:
        P = problem_from_config(problem, beta)
        mesh = build_mesh(P.domain, N, m)
        cl = classify(mesh, P.curve)
        space = build_global_space(cl, m, edge_set, beta)
        scheme = SchemeParams.from_rules(m, beta, epsilon, sigma0, edge_set=edge_set)
        if mode == "project":
            sol = project(P, space)
        else:
            sol = DiscreteSolution(space, solve(assemble(space, P, scheme)), scheme)
        rep = error_norms(P, sol, scheme)
        out.append((mesh.h, rep.l2, rep.semi_h1))
    return tuple(out)


def slopes(series):
    a = np.asarray(series)
    return convergence_rates(a[:, [0, 1]])[1], convergence_rates(a[:, [0, 2]])[1]


def check_rates(k, cases, tol):
    fails, lines = [], []
    for label, series, m in cases:
        s2, s1 = slopes(series)
        ok = s2 >= m + 1 - tol and s1 >= m - tol
        lines.append(f"{label}: L2 {s2:.2f} H1 {s1:.2f}{'' if ok else ' <-- below'}")
        if not ok:
            fails.append(label)
    for ln in lines:
        print("   ", ln)
    report(k, not fails, f"{len(cases) - len(fails)}/{len(cases)} series meet the thresholds")
    assert not fails, f"below threshold: {fails}"


def test_criterion_1_dof_table():
    t0 = time.perf_counter()
    bad = []
    for row in TABLE3:
        N, T, E = row[:3]
        for m in range(1, 5):
            sdg = sdg_formula_count(N, m, T, E)
            dg, cg = (m + 1) ** 2 * N * N, (m * N + 1) ** 2
            want = row[3 + 2 * (m - 1): 5 + 2 * (m - 1)]
            got = (round(dg / sdg, 4), round(cg / sdg, 4))
            for w, g, nm in zip(want, got, ("DG/SDG", "CG/SDG")):
                if abs(w - g) > 5e-5:
                    bad.append(f"N={N} m={m} {nm}: table {w:.4f} formula {g:.4f}")
    dt = time.perf_counter() - t0
    report(1, not bad and dt < 1, f"{64 - len(bad)}/64 entries match, {dt:.3f}s")
    for b in bad:
        print("   ", b)
    assert dt < 1.0
    assert not bad, f"{len(bad)} entries differ: {bad}"


def test_criterion_2_asymptotic_ratios():
    t0 = time.perf_counter()
    P = radial_problem()
    msgs, ok = [], True
    for m in (1, 2):
        cl = classify(build_mesh(P.domain, 640, m), P.curve)
        sdg = dof_counts(cl, m, "SDG")
        rd = dof_counts(cl, m, "DG") / sdg / ((m + 1) ** 2 / m ** 2)
        rc = dof_counts(cl, m, "CG") / sdg
        ok &= abs(rd - 1) < 0.02 and abs(rc - 1) < 0.02
        msgs.append(f"m={m}: DG/SDG/limit {rd:.4f}, CG/SDG {rc:.4f}")
    dt = time.perf_counter() - t0
    report(2, ok and dt < 10, "; ".join(msgs) + f" ({dt:.1f}s)")
    assert ok and dt < 10


def test_criterion_3_projection_orders():
    cases = [(f"m={m} beta={b}", study("radial", m, b, "project"), m) for m in (1, 2) for b in BETAS]
    check_rates(3, cases, 0.25)


def test_criterion_4_symmetric_sdg():
    cases = [(f"m={m} beta={b}", study("radial", m, b, "solve", -1, "large"), m) for m in (1, 2) for b in BETAS]
    check_rates(4, cases, 0.3)


def test_criterion_5_nonsymmetric_sdg():
    cases = [(f"m={m} beta={b}", study("radial", m, b, "solve", 1, "reduced"), m) for m in (1, 2) for b in BETAS]
    check_rates(5, cases, 0.3)


def test_criterion_6_star_and_bessel():
    cases = []
    for name, sig in (("star", "large"), ("bessel", "reduced")):
        for eps in (-1, 1):
            for m in (1, 2):
                for b in BETAS:
                    tag = f"{name} {'S' if eps < 0 else 'N'}-SDG m={m} beta={b}"
                    cases.append((tag, study(name, m, b, "solve", eps, sig), m))
    check_rates(6, cases, 0.3)


def _segment_area(r0, x0, y0, y1):
    """Area of {x >= x0, y0 <= y <= y1} inside the circle of radius r0 (closed form,
    valid when the circle crosses y = y1 at x1 < r0 and y = y0 below y1)."""
    F = lambda x: 0.5 * (x * math.sqrt(max(r0 * r0 - x * x, 0.0)) + r0 * r0 * math.asin(min(x / r0, 1.0)))  # noqa: E731
    xa = math.sqrt(r0 * r0 - y1 * y1)  # where the circle leaves the top edge
    xb = math.sqrt(r0 * r0 - y0 * y0)  # where it leaves the bottom edge
    return ((xa - x0) * (y1 - y0)
            + (F(xb) - F(xa)) - y0 * (xb - xa)
            + 2 * (F(r0) - F(xb)))


def _fd4_second(fun, x, h, axis):
    e = np.zeros(2)
    e[axis] = h
    return (-fun(x + 2 * e) + 16 * fun(x + e) - 30 * fun(x) + 16 * fun(x - e) - fun(x - 2 * e)) / (12 * h * h)


def test_criterion_7_property_suites():
    from frenet_sdg.geometry import edge_intersection, frenet_frame

    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    checks = {}

    err = 0.0
    for c, w in ((circle(0.5), 0.2), (star(), 0.05)):
        p = FrenetPoint(rng.uniform(-w, w, 500), rng.uniform(0, 2 * np.pi, 500))
        q = pull_back(c, push_forward(c, p))
        err = max(err, np.abs(q.eta - p.eta).max(), np.abs(np.angle(np.exp(1j * (q.xi - p.xi)))).max())
    checks["Frenet roundtrip"] = (err, 1e-12)

    # transformed Laplacian of u = x^2 y + y^3 (Laplacian 8y) on the star
    c = star()
    p = FrenetPoint(rng.uniform(-0.03, 0.03, 50), rng.uniform(0, 2 * np.pi, 50))
    co = laplacian_coeffs(c, p, 0)

    def uh(Z):
        Y = push_forward(c, FrenetPoint(Z[..., 0], Z[..., 1]))
        return Y[..., 0] ** 2 * Y[..., 1] + Y[..., 1] ** 3

    Z = np.stack([p.eta, p.xi], -1)
    hh = 1e-3
    d1 = [(uh(Z + hh * e) - uh(Z - hh * e)) / (2 * hh) - (uh(Z + 2 * hh * e) - 2 * uh(Z + hh * e)
          + 2 * uh(Z - hh * e) - uh(Z - 2 * hh * e)) / (12 * hh) for e in np.eye(2)]
    d2 = [_fd4_second(uh, Z, hh, k) for k in (0, 1)]
    lap = d2[0] + co.J0[0] * d2[1] + co.J1[0] * d1[0] + co.J2[0] * d1[1]
    exact = 8 * push_forward(c, p)[:, 1]
    checks["transformed Laplacian"] = (np.abs(lap - exact).max() / np.abs(exact).max(), 1e-7)

    P = radial_problem()
    res, ident = 0.0, 0.0
    for m in (1, 2, 3):
        cl = classify(build_mesh(P.domain, 20, m), P.curve)
        for K in cl.interface_elements[::7]:
            kf = fictitious_element(cl, K)
            res = max(res, max(jump_residual(build_ife_basis(kf, P.curve, (1, 1000), m), P.curve).values()))
            E = build_ife_basis(kf, P.curve, (3, 3), m).extension_matrix
            ident = max(ident, np.abs(E - np.eye(len(E))).max())
    checks["IFE weak-jump residual"] = (res, 1e-10)
    checks["equal-beta extension"] = (ident, 1e-12)

    r0, K = 0.5, ((0.3, 0.7), (-0.1, 0.3))
    corners = [(0.3, -0.1), (0.7, -0.1), (0.7, 0.3), (0.3, 0.3)]
    recs = [r for a, b in zip(corners, corners[1:] + corners[:1])
            if (r := edge_intersection(circle(r0), np.array(a), np.array(b))) is not None]
    rm, rp = cut_cell_rule(K, circle(r0), recs, 12)
    checks["cut-cell partition"] = (abs(rm.weights.sum() + rp.weights.sum() - 0.16) / 0.16, 1e-12)
    checks["circular-segment area"] = (abs(rm.weights.sum() - _segment_area(r0, 0.3, -0.1, 0.3)), 1e-10)

    beta = (1.0, 1000.0)
    P = radial_problem(beta=beta)
    cl = classify(build_mesh(P.domain, 10, 1), P.curve)
    space = build_global_space(cl, 1, "sdg", beta)
    sym = SchemeParams.from_rules(1, beta, -1, "large")
    A = assemble(space, P, sym).stiffness
    checks["symmetry"] = (abs(A - A.T).max() / abs(A).max(), 1e-12)
    nonsym = SchemeParams.from_rules(1, beta, 1, "reduced")
    AN = assemble(space, P, nonsym).stiffness
    ws, wn = np.inf, np.inf
    for _ in range(100):
        v = rng.standard_normal(space.dof_count)
        ws = min(ws, (v @ (A @ v)) / energy_norm(space, sym, v) ** 2)
        wn = min(wn, (v @ (AN @ v)) / energy_norm(space, nonsym, v) ** 2)
    checks["coercivity margin (0.1 - min ratio)"] = (0.1 - ws, 0.0)
    checks["nonsymmetric positivity (-min ratio)"] = (-wn, 0.0)

    jump = flux = pde = 0.0
    for prob in (radial_problem(beta=beta), star_problem(beta=(1, 10)), bessel_problem(beta=beta)):
        xi = prob.curve.sample_params(200)
        G = prob.curve.g(xi)
        n = frenet_frame(prob.curve, xi).normal
        jump = max(jump, np.abs(prob.u(G, -1) - prob.u(G, 1)).max())
        fl = prob.beta[1] * np.sum(prob.grad(G, 1) * n, 1) - prob.beta[0] * np.sum(prob.grad(G, -1) * n, 1)
        flux = max(flux, np.abs(fl).max())
        (x0, x1), (y0, y1) = prob.domain
        X = np.c_[rng.uniform(x0, x1, 200), rng.uniform(y0, y1, 200)]
        sd = prob.side(X)
        lapu = sum(_fd4_second(lambda Z: prob.u(Z, sd), X, 1e-3, k) for k in (0, 1))
        f = prob.f(X, sd)
        pde = max(pde, np.abs(-prob.beta_at(sd) * lapu - f).max() / np.abs(f).max())
    checks["manufactured [u]"] = (jump, 1e-10)
    checks["manufactured [beta du/dn]"] = (flux, 1e-8)
    checks["manufactured PDE residual"] = (pde, 1e-5)

    xs = np.linspace(0.1, 3.0, 300)
    J1, Y1, dJ, dY = bessel_j1_y1(xs)
    checks["Wronskian"] = (np.abs(J1 * dY - dJ * Y1 - 2 / (np.pi * xs)).max(), 1e-9)
    J, Y, _, _ = bessel_j1_y1(np.array([1.0]))
    checks["J1(1)"] = (abs(J[0] - 0.4400505857), 1e-9)
    checks["Y1(1)"] = (abs(Y[0] + 0.7812128213), 1e-8)

    dt = time.perf_counter() - t0
    bad = [k for k, (v, tol) in checks.items() if not v <= tol]
    for k, (v, tol) in checks.items():
        print(f"    {k}: {v:.3e} (limit {tol:.0e}){'  <-- FAIL' if k in bad else ''}")
    report(7, not bad and dt < 120, f"{len(checks) - len(bad)}/{len(checks)} property checks, {dt:.1f}s")
    assert not bad, bad
    assert dt < 120


def test_criterion_8_dg_reduced_penalty_observational():
    lines = []
    for b in BETAS:
        for es in ("sdg", "dg"):
            s2, s1 = slopes(study("radial", 1, b, "solve", -1, "reduced", es))
            lines.append(f"S-{es.upper()} beta={b}: L2 {s2:.2f} H1 {s1:.2f}")
    for ln in lines:
        print("   ", ln)
    report(8, True, "observational, slopes recorded without threshold")
