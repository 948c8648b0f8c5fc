import math

import numpy as np
import pytest

from anisoq import currents, exterior
from anisoq.multipoint import QPoint, g_metric

E12 = np.array([1.0, 0, 0, 0, 0, 0])


def unit_mesh(n):
    return currents.Mesh(x0=(0.0, 0.0), r=1.0, n=n)


def test_flat_graph_mass_and_tangents():
    g = currents.affine_graph(unit_mesh(4), [(1, np.zeros(2), np.zeros((2, 2)))])
    T = currents.triangulate(g)
    assert abs(T.mass() - 1.0) < 1e-12
    assert np.allclose(T.unit_tangents(), E12[None, :])


def test_affine_graph_area_formula(rng):
    for _ in range(10):
        X = rng.normal(size=(2, 2))
        g = currents.affine_graph(unit_mesh(3), [(1, rng.normal(size=2), X)])
        T = currents.triangulate(g)
        expected = np.linalg.norm(exterior.lambda_m(X))
        assert abs(T.mass() - expected) < 1e-10
        gam = T.gaussian_image().merged()
        assert gam.n_atoms == 1
        lam = exterior.lambda_m(X)
        assert np.allclose(gam.points[0], lam / np.linalg.norm(lam), atol=1e-12)
        assert abs(gam.total_mass() - expected) < 1e-10


def test_two_parallel_sheets():
    parts = [(1, np.array([0.0, 1.0]), np.zeros((2, 2))), (1, np.array([0.0, -1.0]), np.zeros((2, 2)))]
    g = currents.affine_graph(unit_mesh(3), parts)
    T = currents.triangulate(g)
    assert abs(T.mass() - 2.0) < 1e-12
    # boundary: one square loop at each of the two heights
    chain = T.boundary()
    assert len(chain) == 2 * 4 * 3  # two squares, 4 sides, 3 edges per side
    assert all(abs(c) == 1 for c in chain.values())


def test_zero_boundary_chain_is_q_square():
    for q in (1, 2):
        g = currents.random_lipschitz_graph(7 + q, 1.5, q, unit_mesh(5))
        assert g.is_zero_boundary()
        assert currents.graph_boundary_is_q_square(g)


def test_closed_surface_empty_boundary():
    # a flat square traversed with opposite orientations cancels entirely
    g = currents.affine_graph(unit_mesh(2), [(1, np.zeros(2), np.zeros((2, 2)))])
    T = currents.triangulate(g)
    reversed_T = currents.TriangulatedCurrent(T.verts[:, [0, 2, 1], :], T.mults)
    both = T.concatenated(reversed_T)
    assert both.boundary() == {}


def test_branched_boundary_two_circles():
    B = currents.branched_graph(2, 0.8, 1.0, n_r=8, n_theta=24)
    loop = currents.disk_boundary_loop(24)
    assert B.boundary_equals_loop(loop, 2)
    assert not B.boundary_equals_loop(loop, 1)


def test_gaussian_barycenter_stokes(rng):
    # zero-boundary graphs: barycenter of the Gaussian image is Q |D| e12
    for q in (1, 2, 3):
        g = currents.random_lipschitz_graph(int(rng.integers(1e6)), 2.0, q, unit_mesh(5))
        T = currents.triangulate(g)
        bary = T.gaussian_image().barycenter()
        assert np.linalg.norm(bary - q * E12) <= 1e-8


def test_partition_flat_all_horizontal():
    g = currents.affine_graph(unit_mesh(3), [(2, np.zeros(2), np.zeros((2, 2)))])
    T = currents.triangulate(g)
    pm, parts = T.partition(0.1)
    assert pm.mH == pytest.approx(T.mass())
    assert pm.mV == 0.0 and pm.mM == 0.0
    assert parts[exterior.HORIZONTAL].n_triangles == T.n_triangles


def test_partition_additivity(rng):
    g = currents.random_lipschitz_graph(99, 3.0, 2, unit_mesh(6))
    T = currents.triangulate(g)
    pm, _ = T.partition(0.1)
    assert abs(pm.total() - T.mass()) <= 1e-10


def test_partition_x1_affine_classification(bundle01):
    # the v1-plane at eps = 0.1: check against a direct SVD of the blocks
    g = currents.affine_graph(unit_mesh(2), [(1, np.zeros(2), bundle01.X[0])])
    T = currents.triangulate(g)
    labels = set(T.classify_triangles(0.1))
    expected = exterior.classify_bivector(bundle01.v[0], 0.1)
    assert labels == {expected}


def test_partition_vertical_after_squeeze(bundle01):
    # plateau with the third lift gradient: after the squeeze the plateau
    # tangents coincide with the vertical w3-plane
    g = currents.ray_plateau_graph(bundle01.X[2], 1, unit_mesh(12))
    T = currents.triangulate(g).pushforward(np.diag([1, 1, 0.1, 0.1]))
    pm, _ = T.partition(0.1)
    assert pm.mV > 0.0


def test_pushforward_identity(rng):
    g = currents.random_lipschitz_graph(5, 1.0, 1, unit_mesh(4))
    T = currents.triangulate(g)
    T2 = T.pushforward(np.eye(4))
    assert np.allclose(T.verts, T2.verts)
    with pytest.raises(ValueError):
        T.pushforward(np.zeros((4, 4)))


def test_tangential_jacobian_identity(bundle01):
    R = np.diag([1.0, 1.0, 0.1, 0.1])
    nv = np.linalg.norm(bundle01.v, axis=1)
    nw = np.linalg.norm(bundle01.w, axis=1)
    for i in range(3):
        tri = np.array([np.zeros(4), bundle01.u[i, 0], bundle01.u[i, 0] + bundle01.u[i, 1]])
        T = currents.TriangulatedCurrent(tri[None, :, :], [1])
        ratio = T.pushforward(R).mass() / T.mass()
        assert abs(ratio - nw[i] / nv[i]) <= 1e-12


def test_squeeze_pushforward_is_scaled_graph(rng):
    # the squeeze of the graph of f is the graph of eps * f
    eps = 0.1
    mesh = unit_mesh(4)
    nodal = rng.normal(size=(5, 5, 2)) * 0.5
    nodal[0, :, :] = nodal[-1, :, :] = nodal[:, 0, :] = nodal[:, -1, :] = 0.0
    g1 = currents.FunctionalQGraph.from_nodal_sheets(mesh, [(1, nodal)])
    g2 = currents.FunctionalQGraph.from_nodal_sheets(mesh, [(1, eps * nodal)])
    T1 = currents.triangulate(g1).pushforward(np.diag([1, 1, eps, eps]))
    T2 = currents.triangulate(g2)
    assert abs(T1.mass() - T2.mass()) <= 1e-10
    assert np.allclose(np.sort(T1.verts, axis=0), np.sort(T2.verts, axis=0), atol=1e-12)


def test_gauss_image_pushforward_identity(rng):
    # atomwise: gamma_{L T} = L_sharp gamma_{(J_T L) T}
    g = currents.random_lipschitz_graph(11, 1.0, 1, unit_mesh(3))
    T = currents.triangulate(g)
    L = np.diag([1.0, 1.0, 0.3, 0.3])
    lhs = T.pushforward(L).gaussian_image()
    wedge_action = np.array([1.0, 0.3, 0.3, 0.3, 0.3, 0.09])
    tw = T.tangent_wedges() * wedge_action[None, :]
    nrm = np.linalg.norm(tw, axis=1)
    jac = nrm / (2.0 * T.areas())
    rhs_points = tw / nrm[:, None]
    rhs_weights = jac * T.mults * T.areas()
    assert np.allclose(lhs.points, rhs_points, atol=1e-10)
    assert np.allclose(lhs.weights, rhs_weights, atol=1e-10)


def test_slice_flat_disk():
    D = currents.flat_disk_current(n_r=16, n_theta=96)
    assert abs(D.slice_mass(np.zeros(4), 0.5) - math.pi) < 1e-10
    assert D.slice_mass(np.zeros(4), 5.0) == 0.0


def test_slice_respects_multiplicity():
    D = currents.flat_disk_current(n_r=8, n_theta=32)
    D2 = currents.TriangulatedCurrent(D.verts, D.mults * 3)
    assert abs(D2.slice_mass(np.zeros(4), 0.5) - 3 * D.slice_mass(np.zeros(4), 0.5)) < 1e-12


def test_coarea_inequality_flat_and_branched():
    r = 0.25
    for T in (
        currents.flat_disk_current(n_r=16, n_theta=48),
        currents.branched_graph(2, 1.0, 1.0, n_r=16, n_theta=48),
    ):
        rhos = np.linspace(r, 2 * r, 41)
        vals = [T.slice_mass(np.zeros(4), rho) for rho in rhos]
        integral = np.trapezoid(vals, rhos)
        ball = T.mass_in_ball(np.zeros(4), 2 * r, subdiv=24)
        assert integral <= ball * 1.02 + 1e-8


def test_projection_multiplicity_bound(rng):
    for q in (1, 2, 3):
        g = currents.random_lipschitz_graph(200 + q, 2.0, q, unit_mesh(5))
        T = currents.triangulate(g)
        pm, parts = T.partition(0.1)
        proj = parts[exterior.HORIZONTAL].projected_mass_h()
        assert proj <= q * 1.0 + 1e-8


def test_generator_determinism():
    a = currents.random_lipschitz_graph(42, 2.0, 2, unit_mesh(5))
    b = currents.random_lipschitz_graph(42, 2.0, 2, unit_mesh(5))
    Ta, Tb = currents.triangulate(a), currents.triangulate(b)
    assert np.array_equal(Ta.verts, Tb.verts)


def test_edge_continuity_validation():
    mesh = unit_mesh(2)
    g = currents.affine_graph(mesh, [(1, np.zeros(2), np.zeros((2, 2)))])
    g.sheets[0][0][0] = [(1, np.array([5.0, 0.0]), np.zeros((2, 2)))]  # break one triangle
    with pytest.raises(ValueError, match="traces disagree"):
        g.validate()


def test_degenerate_triangle_rejected():
    tri = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [2, 0, 0, 0]], dtype=float)
    with pytest.raises(ValueError):
        currents.TriangulatedCurrent(tri[None, :, :], [1])


def test_chain_report_on_suites(bundle01):
    eps = 0.1
    worst0 = worst1 = np.inf
    suite = []
    for q in (1, 2):
        suite.append((q, currents.triangulate(
            currents.random_lipschitz_graph(300 + q, 2.0, q, unit_mesh(6))), 1.0))
    suite.append((1, currents.triangulate(
        currents.steep_plateau_graph(4.0, 1, unit_mesh(12))), 1.0))
    for i in range(3):
        suite.append((1, currents.triangulate(
            currents.ray_plateau_graph(bundle01.X[i], 1, unit_mesh(12))), 1.0))
    A = currents.polygon_disk_area(24)
    suite.append((2, currents.branched_graph(2, 1.0, 1.0, n_r=8, n_theta=24), A))
    for q, T, area in suite:
        rep = currents.chain_report(T, q, eps, domain_area=area)
        worst0 = min(worst0, rep["est0_value"], rep["est0_exact_atoms"])
        worst1 = min(worst1, rep["est1_slack"])
    assert worst0 >= -1e-8
    assert worst1 >= -1e-8


def test_ratio_lower_bound_where_vertical(bundle01):
    eps = 0.1
    for T in (
        currents.triangulate(currents.steep_plateau_graph(4.0, 1, unit_mesh(12))),
        currents.triangulate(currents.steep_plateau_graph(3.0, 2, unit_mesh(16))),
        currents.branched_graph(2, 8.0, 1.0, n_r=12, n_theta=24),
    ):
        pm, _ = T.partition(eps)
        if pm.mV > 0:
            assert pm.mM / pm.mV >= 1.0 / 200.0 - 1e-8


def test_graph_evaluation_and_trace():
    mesh = unit_mesh(3)
    X = np.array([[0.5, 0.0], [0.0, -0.25]])
    g = currents.affine_graph(mesh, [(2, np.array([1.0, 2.0]), X)])
    x = np.array([0.21, -0.37])
    expected = QPoint(np.tile(np.array([1.0, 2.0]) + X @ x, (2, 1)))
    assert g_metric(g.evaluate(x), expected) < 1e-12


def test_graph_json_roundtrip():
    g = currents.random_lipschitz_graph(5, 1.0, 2, unit_mesh(3))
    g2 = currents.FunctionalQGraph.from_json_obj(g.to_json_obj())
    x = np.array([0.13, 0.27])
    assert g_metric(g.evaluate(x), g2.evaluate(x)) < 1e-12


def test_current_json_roundtrip():
    T = currents.branched_graph(2, 0.5, 1.0, n_r=4, n_theta=12)
    T2 = currents.TriangulatedCurrent.from_json_obj(T.to_json_obj())
    assert abs(T.mass() - T2.mass()) < 1e-9
    assert T2.boundary() == T.boundary()
