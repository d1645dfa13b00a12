import numpy as np
import pytest
from scipy.linalg import null_space

from conftest import random_pose, scene
from matchsum._poly import real_roots
from matchsum.geometry import (decompose_essential, essential_constraint_residual,
                               essential_from_pose, pose_error, RelativePose)
from matchsum.solvers import (essential_5pt, essential_from_summary, fundamental_7pt,
                              nullspace_from_summary)
from matchsum.summarization import constraint_row, summarize_cluster


def unit(E):
    E = np.asarray(E, dtype=float)
    return E / np.linalg.norm(E)


def test_real_roots_against_numpy(rng):
    out = np.empty(10)
    for deg in range(1, 11):
        for _ in range(20):
            r = np.sort(rng.uniform(-3, 3, deg))
            c = np.poly(r)
            n = real_roots(c, out)
            assert n == deg
            assert np.allclose(np.sort(out[:n]), r, atol=1e-6)
    # x^2 + 1 has no real root
    assert real_roots(np.array([1.0, 0, 1]), out) == 0


def test_real_roots_wide_scales(rng):
    # real roots spread over three decades plus complex pairs, arbitrary scaling
    out = np.empty(10)
    for _ in range(500):
        nr = 2 * rng.integers(0, 4)
        real = np.sort(rng.choice([-1, 1], nr) * 10 ** rng.uniform(-1, 2, nr))
        z = rng.normal(scale=20, size=(10 - nr) // 2) + 1j * 10 ** rng.uniform(-0.5, 1.5, (10 - nr) // 2)
        c = np.real(np.poly(np.concatenate([real, z, z.conj()]))) * 10 ** rng.uniform(-8, 8)
        n = real_roots(c, out)
        assert n == nr
        assert np.allclose(np.sort(out[:n]), real, rtol=1e-6)


def test_five_point_recovers_pose(rng):
    for _ in range(50):
        R, t = random_pose(rng)
        x1, x2 = scene(rng, 5, R, t)
        models = essential_5pt(x1, x2)
        assert 1 <= len(models) <= 10
        best = min(max(pose_error(c, RelativePose(R, t)).max_deg
                       for c in [min(decompose_essential(m),
                                     key=lambda c: np.linalg.norm(c.R - R) + np.linalg.norm(c.t - t))])
                   for m in models)
        assert np.deg2rad(best) < 1e-6
        for m in models:
            E = m.matrix
            assert abs(np.linalg.det(E)) < 1e-8
            assert np.max(np.abs(essential_constraint_residual(E))) < 1e-8
            assert np.max(np.abs(np.einsum("ij,jk,ik->i", x2, E, x1))) < 1e-8


def test_five_point_degenerate_sample(rng):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, 5, R, t)
    x1[4], x2[4] = x1[3], x2[3]
    for m in essential_5pt(x1, x2):
        assert np.max(np.abs(essential_constraint_residual(m.matrix))) < 1e-8
    with pytest.raises(ValueError):
        essential_5pt(x1[:4], x2[:4])


def fundamental_scene(rng, n):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, n, R, t)
    K1 = np.array([[900.0, 0, 320], [0, 950, 240], [0, 0, 1]])
    K2 = np.array([[800.0, 0, 300], [0, 820, 260], [0, 0, 1]])
    p1 = (x1 @ K1.T)[:, :2]
    p2 = (x2 @ K2.T)[:, :2]
    F = np.linalg.inv(K2).T @ essential_from_pose(R, t).matrix @ np.linalg.inv(K1)
    return p1, p2, unit(F)


def test_seven_point_recovers_f(rng):
    for _ in range(50):
        p1, p2, F = fundamental_scene(rng, 7)
        models = fundamental_7pt(p1, p2)
        assert 1 <= len(models) <= 3
        dist = min(min(np.linalg.norm(unit(m.matrix) - F), np.linalg.norm(unit(m.matrix) + F))
                   for m in models)
        assert dist < 1e-6
        for m in models:
            assert abs(np.linalg.det(unit(m.matrix))) < 1e-10
            assert np.linalg.matrix_rank(m.matrix, tol=1e-9) == 2


def cubic_root_count(p1, p2):
    """Independent count of real roots of det(a F1 + (1 - a) F2)."""
    h = lambda p: np.column_stack([p, np.ones(len(p))])
    q1, q2 = h(p1), h(p2)
    A = constraint_row(q1, q2)
    F1, F2 = (v.reshape(3, 3, order="F") for v in null_space(A).T)
    a = np.array([-1.0, 0, 1, 2])
    d = [np.linalg.det(x * F1 + (1 - x) * F2) for x in a]
    c = np.polyfit(a, d, 3)
    r = np.roots(c)
    return int(np.sum(np.abs(r.imag) < 1e-8 * np.maximum(1, np.abs(r.real))))


def test_seven_point_root_count(rng):
    seen = set()
    for _ in range(200):
        p1 = rng.uniform(0, 640, (7, 2))
        p2 = rng.uniform(0, 480, (7, 2))
        n = len(fundamental_7pt(p1, p2))
        assert n == cubic_root_count(p1, p2)
        seen.add(n)
    assert 1 in seen


def test_nullspace_exact_five(rng):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, 5, R, t)
    s = summarize_cluster((x1, x2), (x1[:1], x2[:1]))
    B = nullspace_from_summary(s)
    A = constraint_row(x1, x2)
    assert np.max(np.abs(A @ B.T)) < 1e-10
    assert np.allclose(B @ B.T, np.eye(4), atol=1e-12)


def test_nullspace_single_match(rng):
    x1, x2 = np.array([[0.1, 0.2, 1.0]]), np.array([[-0.3, 0.1, 1.0]])
    s = summarize_cluster((x1, x2), (x1, x2))
    B = nullspace_from_summary(s)
    assert B.shape == (4, 9)
    assert np.max(np.abs(B @ constraint_row(x1[0], x2[0]))) < 1e-12


def test_nullspace_singular_values(rng):
    x1 = np.column_stack([rng.normal(size=(30, 2)), np.ones(30)])
    x2 = np.column_stack([rng.normal(size=(30, 2)), np.ones(30)])
    s = summarize_cluster((x1, x2), (x1[:1], x2[:1]))
    B = nullspace_from_summary(s)
    sv = np.linalg.svd(s.M, compute_uv=False)
    assert np.allclose(np.sort(np.linalg.norm(s.M @ B.T, axis=0)), np.sort(sv[5:]), rtol=1e-8)


def test_summary_five_point_equivalence(rng):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, 5, R, t)
    direct = [unit(m.matrix) for m in essential_5pt(x1, x2)]
    via = [unit(m.matrix) for m in essential_from_summary(summarize_cluster((x1, x2), (x1[:1], x2[:1])))]
    assert len(direct) == len(via)
    for E in via:
        assert min(min(np.linalg.norm(E - D), np.linalg.norm(E + D)) for D in direct) < 1e-6


def test_summary_noiseless_cluster(rng):
    for _ in range(10):
        R, t = random_pose(rng)
        x1, x2 = scene(rng, 50, R, t)
        models = essential_from_summary(summarize_cluster((x1, x2), (x1[:1], x2[:1])))
        errs = [min(pose_error(c, RelativePose(R, t)).max_deg for c in decompose_essential(m))
                for m in models]
        assert min(errs) < 0.5


def test_summary_without_roots_is_empty():
    # an all-zero summary has no constraints and the solver must not fail
    s = summarize_cluster((np.zeros((1, 3)), np.zeros((1, 3))), (np.zeros((1, 3)), np.zeros((1, 3))))
    assert isinstance(essential_from_summary(s), list)
