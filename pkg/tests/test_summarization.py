import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_pose, scene
from matchsum.geometry import essential_from_pose, sampson_error, symmetric_epipolar_distance
from matchsum.summarization import (approx_cluster_residual, approx_residuals,
                                    approx_symmetric_epipolar, constraint_row, cost_approx,
                                    cost_center, cost_dense, gram, model_vector, summarize,
                                    summarize_cluster)


def hom(a):
    return np.column_stack([a, np.ones(len(a))])


def test_constraint_row_units():
    a = constraint_row([1.0, 0, 0], [0, 1.0, 0])
    assert np.array_equal(a, [0, 1, 0, 0, 0, 0, 0, 0, 0])
    E = np.arange(9.0).reshape(3, 3)
    assert a @ model_vector(E) == E[1, 0]
    assert constraint_row([0, 0, 1.0], [0, 0, 1.0]) @ model_vector(E) == E[2, 2]


def test_constraint_row_bilinear(rng):
    for _ in range(100):
        x1, x2, E = rng.normal(size=3), rng.normal(size=3), rng.normal(size=(3, 3))
        assert constraint_row(x1, x2) @ model_vector(E) == pytest.approx(x2 @ E @ x1, abs=1e-14)


def test_singleton_summary_exact(rng):
    x1, x2 = hom(rng.normal(size=(1, 2))), hom(rng.normal(size=(1, 2)))
    s = summarize_cluster((x1, x2), (x1, x2))
    for _ in range(20):
        E = rng.normal(size=(3, 3))
        Me = s.M @ model_vector(E)
        assert Me @ Me == pytest.approx((x2[0] @ E @ x1[0]) ** 2, rel=1e-12)
        assert approx_cluster_residual(E, s) == pytest.approx(sampson_error(E, x1[0], x2[0]),
                                                             rel=1e-12)
        assert approx_symmetric_epipolar(E, s) == pytest.approx(
            symmetric_epipolar_distance(E, x1[0], x2[0]), rel=1e-12)


@given(st.integers(1, 200), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_gram_identity(n, seed):
    r = np.random.default_rng(seed)
    x1, x2 = hom(r.normal(size=(n, 2))), hom(r.normal(size=(n, 2)))
    s = summarize_cluster((x1, x2), (x1[:1], x2[:1]))
    G = gram(x1, x2)
    e = r.normal(size=9)
    e /= np.linalg.norm(e)
    Me = s.M @ e
    assert abs(Me @ Me - e @ G @ e) <= 1e-9 * (e @ G @ e)
    assert np.allclose(np.tril(s.M, -1), 0)


def test_duplicated_rows_scale(rng):
    x1, x2 = hom(rng.normal(size=(1, 2))), hom(rng.normal(size=(1, 2)))
    s = summarize_cluster((np.repeat(x1, 20, 0), np.repeat(x2, 20, 0)), (x1, x2))
    E = rng.normal(size=(3, 3))
    Me = s.M @ model_vector(E)
    assert Me @ Me == pytest.approx(20 * (x2[0] @ E @ x1[0]) ** 2, rel=1e-9)
    assert approx_cluster_residual(E, s) == pytest.approx(20 * sampson_error(E, x1[0], x2[0]),
                                                         rel=1e-9)


def test_summarize_rejects_bad_input():
    with pytest.raises(ValueError):
        summarize_cluster((np.zeros((0, 3)), np.zeros((0, 3))), (np.ones(3), np.ones(3)))
    with pytest.raises(ValueError):
        summarize(np.array([[np.nan, 0, 1]]), np.array([[0, 0, 1.0]]), [0], [0])


def neighbourhood(rng, n=80, f=1000.0, radius_px=20.0, noise_px=1.0):
    """Matches whose image-1 points lie in a disk of ``radius_px``, at random depths."""
    R, t = random_pose(rng)
    centre = rng.uniform(-0.3, 0.3, 2)
    r = radius_px / f * np.sqrt(rng.uniform(size=n))
    phi = rng.uniform(0, 2 * np.pi, n)
    x1 = hom(centre + np.column_stack([r * np.cos(phi), r * np.sin(phi)]))
    X2 = (x1 * rng.uniform(4, 10, (n, 1))) @ R.T + t
    x2 = X2 / X2[:, 2:]
    x1[:, :2] += rng.normal(scale=noise_px / f, size=(n, 2))
    x2[:, :2] += rng.normal(scale=noise_px / f, size=(n, 2))
    return essential_from_pose(R, t).matrix, x1, x2


def test_cluster_residual_close_to_exact_sum(rng):
    f = 1000.0
    for _ in range(20):
        E, x1, x2 = neighbourhood(rng)
        s = summarize_cluster((x1, x2), (x1[:1], x2[:1]))
        n = len(x1)
        eps_s = np.sqrt(np.sum(sampson_error(E, x1, x2)) / n) * f
        eps_a = np.sqrt(approx_cluster_residual(E, s) / n) * f
        assert abs(eps_s - eps_a) < 0.1
        sym = np.sum(symmetric_epipolar_distance(E, x1, x2))
        assert approx_symmetric_epipolar(E, s) == pytest.approx(sym, rel=0.1)


def test_symmetric_equal_denominator_identity():
    # E = [t]x with t along z gives d1 = d2 at a point on the optical axis
    E = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 0]])
    c = np.array([0.3, 0.2, 1.0])
    s = summarize_cluster((c[None], c[None]), (c[None], c[None]))
    l1, l2 = E @ c, E.T @ c
    d = l1[0] ** 2 + l1[1] ** 2
    assert d == pytest.approx(l2[0] ** 2 + l2[1] ** 2)
    alpha = 2 * d
    assert approx_symmetric_epipolar(E, s) == pytest.approx(
        2 * approx_cluster_residual(E, s) * alpha / (2 * d))


def cluster_data(rng, n=2000, K=50, outliers=0.2):
    R, t = random_pose(rng)
    x1, x2 = scene(rng, n, R, t)
    k = int(outliers * n)
    x2[:k, :2] = rng.uniform(-0.5, 0.5, (k, 2))
    labels = rng.integers(K, size=n)
    labels[:K] = np.arange(K)
    reps = np.array([np.flatnonzero(labels == j)[0] for j in range(K)])
    return essential_from_pose(R, t).matrix, x1, x2, labels, reps


def test_cost_dense_limits(rng):
    E, x1, x2, *_ = cluster_data(rng, outliers=0)
    c = cost_dense(E, (x1, x2), 1e-3)
    assert c.score == pytest.approx(0, abs=1e-20) and c.inliers == len(x1)
    c = cost_dense(np.eye(3), (x1, x2), 1e-9)
    assert c.score == pytest.approx(len(x1) * 1e-18) and c.inliers == 0
    with pytest.raises(ValueError):
        cost_dense(E, (x1, x2), 0)


def test_cost_dense_brute_force(rng):
    E, x1, x2, *_ = cluster_data(rng)
    for tau in (1e-4, 1e-3, 1e-2):
        err = np.array([sampson_error(E, a, b) for a, b in zip(x1, x2)])
        c = cost_dense(E, (x1, x2), tau)
        assert c.score == pytest.approx(np.minimum(err, tau ** 2).sum(), rel=1e-12)
        assert c.inliers == np.sum(err < tau ** 2)


def test_cost_center_subset(rng):
    E, x1, x2, labels, reps = cluster_data(rng, outliers=0)
    S = summarize(x1, x2, labels, reps)
    Er = rng.normal(size=(3, 3))
    for model in (E, Er):
        assert cost_center(model, S, 1e-3) == cost_dense(model, (x1[reps], x2[reps]), 1e-3)
    assert cost_center(E, S, 1e-3).score == pytest.approx(0, abs=1e-20)


def test_singletons_match_dense(rng):
    E, x1, x2, *_ = cluster_data(rng, n=500)
    n = len(x1)
    S = summarize(x1, x2, np.arange(n), np.arange(n))
    for _ in range(20):
        model = rng.normal(size=(3, 3))
        tau = 10 ** rng.uniform(-4, -1)
        a, d = cost_approx(model, S, tau), cost_dense(model, (x1, x2), tau)
        assert a.score == pytest.approx(d.score, rel=1e-12) and a.inliers == d.inliers
        assert cost_center(model, S, tau).score == pytest.approx(d.score, rel=1e-12)


def test_approx_noiseless_zero(rng):
    E, x1, x2, labels, reps = cluster_data(rng, outliers=0)
    S = summarize(x1, x2, labels, reps)
    c = cost_approx(E, S, 1e-3)
    assert c.score < 1e-20 and c.inliers == len(S)


def test_approx_within_exact_bound(rng):
    E, x1, x2, labels, reps = cluster_data(rng, n=3000, K=60)
    S = summarize(x1, x2, labels, reps)
    model = E + 0.01 * rng.normal(size=(3, 3))
    tau = 3e-3
    res = approx_residuals(model, S)
    exact = np.bincount(labels, weights=sampson_error(model, x1, x2))
    budget = S.size * tau ** 2
    c = cost_approx(model, S, tau)
    assert c.score == pytest.approx(np.minimum(res, budget).sum(), rel=1e-12)
    # each truncated term is bounded by the budget, like the exact one
    assert c.score <= budget.sum() + 1e-15
    assert np.minimum(exact, budget).sum() <= budget.sum()
