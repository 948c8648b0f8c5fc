import itertools

import numpy as np
import pytest

from anisoq import multipoint as mp


def brute_force_g(xs, ys):
    best = np.inf
    for perm in itertools.permutations(range(len(xs))):
        c = sum(np.sum((xs[i] - ys[p]) ** 2) for i, p in enumerate(perm))
        best = min(best, c)
    return np.sqrt(best)


def test_full_multiplicity_translation():
    for q in (1, 2, 5):
        p = mp.QPoint.full(np.array([0.0, 0.0]), q)
        r = mp.QPoint.full(np.array([3.0, 4.0]), q)
        assert abs(mp.g_metric(p, r) - np.sqrt(q) * 5.0) < 1e-12


def test_metric_zero_on_equal():
    p = mp.QPoint(np.array([[0.0, 1.0], [2.0, -1.0]]))
    assert mp.g_metric(p, p) == 0.0


def test_three_point_collapse_brute_force():
    p = mp.QPoint(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    q = mp.QPoint.full(np.zeros(2), 3)
    assert abs(mp.g_metric(p, q) - np.sqrt(2.0)) < 1e-14
    assert abs(brute_force_g(p.points, q.points) - np.sqrt(2.0)) < 1e-14


def test_mismatched_q_raises():
    with pytest.raises(ValueError):
        mp.g_metric(mp.QPoint.full(np.zeros(2), 2), mp.QPoint.full(np.zeros(2), 3))


def test_metric_axioms(rng):
    for _ in range(200):
        q = int(rng.integers(1, 5))
        a = mp.QPoint(rng.normal(size=(q, 2)))
        b = mp.QPoint(rng.normal(size=(q, 2)))
        c = mp.QPoint(rng.normal(size=(q, 2)))
        dab, dba = mp.g_metric(a, b), mp.g_metric(b, a)
        assert dab >= 0
        assert abs(dab - dba) < 1e-10
        assert dab <= mp.g_metric(a, c) + mp.g_metric(c, b) + 1e-10


def test_hungarian_equals_exhaustive(rng):
    for _ in range(500):
        q = int(rng.integers(2, 7))
        xs = rng.normal(size=(q, 2)) * rng.uniform(0.1, 10)
        ys = rng.normal(size=(q, 2)) * rng.uniform(0.1, 10)
        d_exh = mp.g_metric(mp.QPoint(xs), mp.QPoint(ys))  # exhaustive for Q <= 6
        d_hun = mp.g_metric_hungarian(mp.QPoint(xs), mp.QPoint(ys))
        d_ora = brute_force_g(xs, ys)
        assert abs(d_exh - d_hun) < 1e-10
        assert abs(d_exh - d_ora) < 1e-10


def test_hungarian_used_above_threshold(rng):
    q = 8
    xs, ys = rng.normal(size=(q, 2)), rng.normal(size=(q, 2))
    d = mp.g_metric(mp.QPoint(xs), mp.QPoint(ys))
    assert abs(d - mp.g_metric_hungarian(mp.QPoint(xs), mp.QPoint(ys))) < 1e-12


def test_qpoint_order_independence(rng):
    pts = rng.normal(size=(4, 2))
    perm = pts[[2, 0, 3, 1]]
    assert mp.QPoint(pts) == mp.QPoint(perm)


def test_maximal_decomposition_full_point():
    jet = mp.QJet.from_parts(np.tile([1.0, 2.0], (3, 1)), np.tile(np.eye(2), (3, 1, 1)))
    md = mp.maximal_decomposition(jet)
    assert len(md.parts) == 1
    assert md.parts[0][0] == 3
    assert not md.ambiguous


def test_maximal_decomposition_two_parts():
    jet = mp.QJet.from_parts(
        np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros((2, 2, 2))
    )
    md = mp.maximal_decomposition(jet, tol=1e-6)
    assert md.multiplicities == [1, 1]
    assert not md.ambiguous


def test_maximal_decomposition_ambiguous_flag():
    jet = mp.QJet.from_parts(
        np.array([[0.0, 0.0], [1e-6, 0.0]]), np.zeros((2, 2, 2))
    )
    md = mp.maximal_decomposition(jet, tol=1e-6)
    assert md.ambiguous


def test_decomposition_reconstruction_roundtrip(rng):
    for _ in range(50):
        j = int(rng.integers(1, 4))
        parts = []
        total = 0
        for _i in range(j):
            m = int(rng.integers(1, 3))
            total += m
            parts.append((m, rng.normal(size=2) * 5, rng.normal(size=(2, 2))))
        md = mp.MaximalDecomposition(parts=parts, tol=1e-9)
        back = mp.maximal_decomposition(md.reconstruct(), tol=1e-9)
        assert back.q == total
        assert back.multiplicities == md.multiplicities or back.ambiguous


def test_same_maximal_multiplicities_distinct_vs_collapsed(rng):
    q = 3
    distinct = mp.QJet.from_parts(rng.normal(size=(q, 2)) * 10, np.zeros((q, 2, 2)))
    collapsed = mp.QJet.from_parts(np.zeros((q, 2)), np.zeros((q, 2, 2)))
    md_d = mp.maximal_decomposition(distinct)
    md_c = mp.maximal_decomposition(collapsed)
    assert md_d.multiplicities == [1, 1, 1]
    assert md_c.multiplicities == [3]
    assert not md_d.same_maximal_multiplicities(md_c)


def test_competitor_descriptor_boundary_value():
    md = mp.MaximalDecomposition.single(2, np.array([1.0, 0.0]), np.eye(2))
    desc = mp.CompetitorClassDescriptor(target=md)
    bv = desc.boundary_value(np.array([0.5, 0.5]))
    assert bv == mp.QPoint(np.array([[1.5, 0.5], [1.5, 0.5]]))


def test_qpoint_json_roundtrip(rng):
    p = mp.QPoint(rng.normal(size=(3, 2)))
    assert mp.QPoint.from_json(p.to_json()) == p
