import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mhetgl import autodiff as ad
from mhetgl.encoder import plain_structure
from mhetgl.mhl import (
    anomaly_scores,
    assign,
    augment_assignments,
    community_reps,
    derive_center,
    loss_cluster_plain,
    loss_cluster_regularized,
    loss_global,
    loss_local,
    total_loss,
)

import oracles as O


def _rand_p(rng, n, k):
    logits = rng.standard_normal((n, k))
    e = np.exp(logits - logits.max(1, keepdims=True))
    return e / e.sum(1, keepdims=True)


def test_assign_uniform_and_rows():
    adj = sp.csr_matrix(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float))
    p = assign(np.ones((3, 2)), plain_structure(adj), np.zeros((2, 4)), np.zeros(8)).data
    assert np.allclose(p, 0.25)
    rng = np.random.default_rng(0)
    p = assign(rng.standard_normal((3, 2)), plain_structure(adj), rng.standard_normal((2, 3)), rng.standard_normal(6)).data
    assert np.allclose(p.sum(1), 1.0)
    with pytest.raises(ValueError):
        assign(np.ones((3, 2)), plain_structure(adj), np.zeros((2, 1)), np.zeros(2))


def test_assign_matches_loop():
    rng = np.random.default_rng(1)
    adj = sp.csr_matrix(np.array([[0, 1, 1, 0], [1, 0, 0, 0], [1, 0, 0, 1], [0, 0, 1, 0]], dtype=float))
    z, w, a = rng.standard_normal((4, 3)), rng.standard_normal((3, 2)), rng.standard_normal(4)
    logits = O.attention_loop(z.tolist(), O.closed_sets(adj), w.tolist(), a.tolist())
    ref = [O.softmax_list(r) for r in logits]
    assert np.allclose(assign(z, plain_structure(adj), w, a).data, ref, atol=1e-12)


def test_augment_examples():
    assert np.allclose(augment_assignments(np.full((5, 4), 0.25)).data, 0.25)
    out = augment_assignments(np.array([[0.8, 0.2]])).data
    assert out[0] == pytest.approx([0.6457, 0.3543], abs=5e-5)
    rng = np.random.default_rng(2)
    p = _rand_p(rng, 7, 3)
    f = p.sum(0)
    ref = [O.softmax_list([p[i, k] ** 2 / f[k] for k in range(3)]) for i in range(7)]
    out = augment_assignments(p).data
    assert np.allclose(out, ref) and np.allclose(out.sum(1), 1.0)


def test_community_reps_examples():
    rng = np.random.default_rng(3)
    z = rng.standard_normal((5, 2))
    assert np.allclose(community_reps(_rand_p(rng, 5, 1) * 0 + 1.0, z).data, z.mean(0))
    v = np.tile([1.5, -2.0], (5, 1))
    assert np.allclose(community_reps(_rand_p(rng, 5, 3), v).data, v[:3])
    p, z = _rand_p(rng, 3, 2), rng.standard_normal((3, 4))
    ref = [[sum(p[i, k] * z[i, c] for i in range(3)) / sum(p[i, k] for i in range(3)) for c in range(4)]
           for k in range(2)]
    assert np.allclose(community_reps(p, z).data, ref)
    with pytest.raises(ad.ShapeError):
        community_reps(p, z[:2])


def test_global_loss_examples():
    loss, per = loss_global(np.array([[3.0, 4.0]]), np.zeros(2), np.array([0]))
    assert loss.item() == 25.0 and per.data.tolist() == [25.0]
    c0 = np.array([1.0, 2.0])
    assert loss_global(np.tile(c0, (4, 1)), c0, np.arange(4))[0].item() == 0.0
    rng = np.random.default_rng(4)
    z, c0, ids = rng.standard_normal((5, 3)), rng.standard_normal(3), np.array([0, 2, 3])
    ref = np.mean([sum((z[i, c] - c0[c]) ** 2 for c in range(3)) for i in ids])
    assert loss_global(z, c0, ids)[0].item() == pytest.approx(ref)


def test_local_loss_examples():
    rng = np.random.default_rng(5)
    z = rng.standard_normal((5, 3))
    p = _rand_p(rng, 5, 3)
    centers = rng.standard_normal((3, 3))
    loss, per, k_star = loss_local(z, p, centers, np.arange(5))
    ref = [sum((z[i, c] - centers[int(np.argmax(p[i])), c]) ** 2 for c in range(3)) for i in range(5)]
    assert np.allclose(per.data, ref) and loss.item() == pytest.approx(np.mean(ref))
    at_center = centers[k_star]
    assert loss_local(at_center, p, centers, np.arange(5))[0].item() == 0.0
    # a single cluster reduces to the global loss around the mean embedding
    one = np.ones((5, 1))
    c1 = community_reps(one, z)
    assert loss_local(z, one, c1, np.arange(5))[0].item() == pytest.approx(
        loss_global(z, z.mean(0), np.arange(5))[0].item())
    _, _, ks = loss_local(z, np.array([[0.4, 0.4, 0.2]] * 5), centers, np.arange(5))
    assert ks.tolist() == [0] * 5


@pytest.mark.parametrize("k", [2, 4, 8])
def test_cluster_collapse_value(k):
    c = np.tile([0.3, -1.2, 2.0], (k, 1))
    assert loss_cluster_regularized(c, c.copy()).item() == pytest.approx(math.log(k), abs=1e-9)


def test_cluster_loss_examples():
    c = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert loss_cluster_regularized(c, c).item() == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-12)
    p = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert loss_cluster_plain(p, p).item() == pytest.approx(0.3133, abs=5e-5)
    same = np.tile([[0.5, 0.5]], (3, 1))
    assert loss_cluster_plain(same, same).item() == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        loss_cluster_regularized(np.ones((1, 2)), np.ones((1, 2)))
    with pytest.raises(ZeroDivisionError):
        loss_cluster_regularized(np.array([[0.0, 0.0], [1.0, 0.0]]), c)


@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(1, 5))
@settings(max_examples=50, deadline=None)
def test_cluster_loss_nonnegative_and_matches_loop(seed, k, d):
    rng = np.random.default_rng(seed)
    c, cp = rng.standard_normal((k, d)), rng.standard_normal((k, d))
    val = loss_cluster_regularized(c, cp).item()
    assert val >= 0
    assert val == pytest.approx(O.contrast_loop(c.tolist(), cp.tolist()), abs=1e-12)


def test_total_loss():
    assert total_loss(1.0, 2.0, 3.0, 0.0, 0.0) == 1.0
    assert total_loss(1.0, 2.0, 3.0, 1.0, 0.1) == pytest.approx(3.3)
    assert total_loss(1.0, 2.0, 3.0, 2.0, 1.0) - total_loss(1.0, 2.0, 3.0, 1.0, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        total_loss(1.0, 1.0, 1.0, -1.0, 0.0)


def test_scores():
    rng = np.random.default_rng(6)
    z, c0, centers, p = rng.standard_normal((5, 3)), rng.standard_normal(3), rng.standard_normal((2, 3)), _rand_p(rng, 5, 2)
    assert np.allclose(anomaly_scores(z, c0, centers, p, 0.0), loss_global(z, c0, np.arange(5))[1].data)
    ref = [sum((z[i] - c0) ** 2) + 0.7 * sum((z[i] - centers[np.argmax(p[i])]) ** 2) for i in range(5)]
    assert np.allclose(anomaly_scores(z, c0, centers, p, 0.7), ref)
    zc = np.tile(c0, (2, 1))
    assert np.allclose(anomaly_scores(zc, c0, zc, np.eye(2), 1.0), 0.0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_scores_translation_invariant_ranking(seed):
    rng = np.random.default_rng(seed)
    z, c0, centers, p = rng.standard_normal((9, 3)), rng.standard_normal(3), rng.standard_normal((3, 3)), _rand_p(rng, 9, 3)
    u = rng.standard_normal(3) * 5
    s1 = anomaly_scores(z, c0, centers, p, 0.5)
    s2 = anomaly_scores(z + u, c0 + u, centers + u, p, 0.5)
    assert np.allclose(s1, s2, atol=1e-9)


def test_derive_center_modes():
    v = np.array([1.0, -1.0])
    z = np.tile(v, (4, 1))
    assert np.array_equal(derive_center("init", z), v)
    assert np.array_equal(derive_center("init", z + 3, previous=v), v)
    u = np.array([0.5, 2.0])
    assert np.allclose(derive_center("update", z + u, previous=v), v + u)
    assert np.array_equal(derive_center("train", z + u, previous=v), v)
    with pytest.raises(ValueError):
        derive_center("median", z)


def test_center_gradient_in_train_mode():
    rng = np.random.default_rng(7)
    z = rng.standard_normal((6, 3))
    c0 = rng.standard_normal(3)
    ids = np.arange(6)
    g = ad.gradients(lambda t: loss_global(ad.constant(z), t["c"], ids)[0], {"c": c0})["c"]
    assert np.allclose(g, np.mean(-2 * (z - c0), axis=0), atol=1e-12)
    rep = ad.finite_difference_check(lambda t: loss_global(ad.constant(z), t["c"], ids)[0], {"c": c0},
                                     tolerance=1e-6)
    assert rep.passed
