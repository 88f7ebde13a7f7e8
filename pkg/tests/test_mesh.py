import math

import numpy as np
import pytest

from frenet_sdg.geometry import HypothesisError, circle, star
from frenet_sdg.mesh import (
    MAX_OVERLAP,
    build_mesh,
    classify,
    dof_counts,
    fictitious_element,
    sdg_formula_count,
    write_classification_csv,
)

SQUARE = ((-1.0, 1.0), (-1.0, 1.0))


def test_mesh_counts():
    mesh = build_mesh(SQUARE, 5, 1)
    assert mesh.n_elements == 25
    assert mesh.n_vertices == 36
    assert len(mesh.interior_edges) == 2 * 5 * 4
    assert build_mesh(SQUARE, 5, 2).node_grid(2).shape[0] == 121


def test_uniform_diameter():
    mesh = build_mesh(SQUARE, 5, 1)
    assert mesh.diameter == pytest.approx(math.sqrt(2) * 0.4)
    boxes = [mesh.element_box(e) for e in range(mesh.n_elements)]
    d = [math.hypot(b[0][1] - b[0][0], b[1][1] - b[1][0]) for b in boxes]
    np.testing.assert_allclose(d, math.sqrt(2) * 0.4, rtol=1e-14)


def test_invalid_mesh_arguments():
    with pytest.raises(ValueError):
        build_mesh(SQUARE, 1)
    with pytest.raises(ValueError):
        build_mesh(SQUARE, 4, 0)


def test_edge_topology():
    mesh = build_mesh(SQUARE, 4, 1)
    ee = mesh.edge_elements
    for B in mesh.interior_edges:
        k1, k2 = ee[B]
        assert k1 < k2
        assert B in mesh.element_edges[k1] and B in mesh.element_edges[k2]
    # edge normals point from the first to the second element
    c = mesh.element_origin + 0.5 * mesh.h
    for B in mesh.interior_edges:
        d = c[ee[B, 1]] - c[ee[B, 0]]
        assert np.dot(d, mesh.edge_normals[B]) > 0


def _brute_force(mesh, phi, n=256):
    ends = mesh.edge_endpoints
    t = np.linspace(0, 1, n)
    cut_edges = set()
    for B in mesh.interior_edges:
        P = ends[B, 0] + t[:, None] * (ends[B, 1] - ends[B, 0])
        s = phi(P[:, 0], P[:, 1]) > 0
        if s.any() and not s.all():
            cut_edges.add(int(B))
    cut_elements = set()
    g = np.linspace(0, 1, 16)
    for e in range(mesh.n_elements):
        (x0, x1), (y0, y1) = mesh.element_box(e)
        X, Y = np.meshgrid(x0 + (x1 - x0) * g, y0 + (y1 - y0) * g)
        s = phi(X, Y) > 0
        if s.any() and not s.all():
            cut_elements.add(e)
    return cut_elements, cut_edges


@pytest.mark.parametrize("curve,domain,N", [(circle(0.5), SQUARE, 5), (circle(0.5), SQUARE, 10),
                                            (star(), ((-2.0, 2.0), (-2.0, 2.0)), 20)])
def test_classify_matches_sign_sampling(curve, domain, N):
    mesh = build_mesh(domain, N, 1)
    cl = classify(mesh, curve)
    els, eds = _brute_force(mesh, curve.level_set)
    assert set(cl.interface_elements.tolist()) == els
    assert set(cl.interface_edges.tolist()) == eds
    # closed curve on a rectangular mesh
    assert len(cl.interface_elements) == len(cl.interface_edges)


def test_classify_sets_are_consistent():
    cl = classify(build_mesh(SQUARE, 10, 1), circle(0.5))
    mesh = cl.mesh
    assert len(cl.interface_elements) + len(cl.non_interface_elements) == mesh.n_elements
    assert np.all(cl.element_side[cl.interface_elements] == 0)
    assert set(cl.penalty_edges) == {int(B) for B in mesh.element_edges[cl.interface_elements].ravel()}
    assert set(cl.interface_elements) <= set(cl.shell_elements)
    # non-interface elements lie on the side given by their centre
    cen = mesh.element_origin[cl.non_interface_elements] + 0.5 * mesh.h
    np.testing.assert_array_equal(cl.element_side[cl.non_interface_elements],
                                  np.where(np.hypot(*cen.T) > 0.5, 1, -1))


def test_curve_inside_one_element_violates_hypothesis():
    with pytest.raises(HypothesisError):
        classify(build_mesh(SQUARE, 2, 1), circle(0.2, center=(0.5, 0.5)))


def test_interface_touching_boundary_rejected():
    with pytest.raises(HypothesisError):
        classify(build_mesh(SQUARE, 10, 1), circle(0.95))


def test_fictitious_element_parameters():
    # h = 0.4 mesh with the element [0.4, 0.8] x [0, 0.4]
    mesh = build_mesh(((-1.2, 1.2), (-1.2, 1.2)), 6, 1)
    cl = classify(mesh, circle(0.5))
    K = 4 + 3 * 6
    np.testing.assert_allclose(mesh.element_box(K), ((0.4, 0.8), (0.0, 0.4)), atol=1e-14)
    kf = fictitious_element(cl, K)
    assert kf.a == pytest.approx(math.atan2(0.0, 0.8), abs=1e-12)
    assert kf.b == pytest.approx(math.atan2(0.4, 0.4), abs=1e-12)
    lo, hi = cl.element_xi_range[K]
    assert kf.a <= lo <= hi <= kf.b
    assert kf.h == pytest.approx(mesh.h)


def test_fictitious_element_rejects_plain_element():
    cl = classify(build_mesh(SQUARE, 10, 1), circle(0.5))
    with pytest.raises(ValueError):
        fictitious_element(cl, int(cl.non_interface_elements[0]))


@pytest.mark.parametrize("N", [10, 20, 40])
def test_overlap_bound(N):
    cl = classify(build_mesh(SQUARE, N, 1), circle(math.pi / 6.28))
    counts = [fictitious_element(cl, K).overlap_count for K in cl.interface_elements]
    assert max(counts) <= MAX_OVERLAP


@pytest.mark.parametrize("m,N,T,E,sdg,dg,r1,r2", [(1, 5, 8, 8, 68, 100, 1.4706, 0.5294),
                                                   (2, 10, 20, 20, 581, 900, 1.5491, 0.7590)])
def test_table_formula(m, N, T, E, sdg, dg, r1, r2):
    s = sdg_formula_count(N, m, T, E)
    cg = (m * N + 1) ** 2
    assert s == sdg
    assert (m + 1) ** 2 * N * N == dg
    assert round(dg / s, 4) == r1
    assert round(cg / s, 4) == r2


@pytest.mark.parametrize("m", [1, 2, 3])
def test_dof_counts_structural(m):
    cl = classify(build_mesh(SQUARE, 10, m), circle(math.pi / 6.28))
    N = 10
    assert dof_counts(cl, m, "DG") == (m + 1) ** 2 * N * N
    assert dof_counts(cl, m, "CG") == (m * N + 1) ** 2
    nT = len(cl.interface_elements)
    # independent count: union of Q_m nodes of plain elements plus private blocks
    used = set()
    for e in cl.non_interface_elements:
        i, j = e % N, e // N
        for a in range(m + 1):
            for b in range(m + 1):
                used.add((i * m + a, j * m + b))
    assert dof_counts(cl, m, "SDG") == len(used) + (m + 1) ** 2 * nT


def test_dof_counts_unknown_scheme():
    cl = classify(build_mesh(SQUARE, 10, 1), circle(0.5))
    with pytest.raises(ValueError):
        dof_counts(cl, 1, "XFEM")


def test_classification_csv(tmp_path):
    cl = classify(build_mesh(SQUARE, 5, 1), circle(0.5))
    p = tmp_path / "cls.csv"
    write_classification_csv(cl, p)
    rows = p.read_text().strip().splitlines()
    assert rows[0] == "element,class,x1,y1,x2,y2"
    assert len(rows) == 26
    assert sum(",interface," in r for r in rows) == len(cl.interface_elements)
