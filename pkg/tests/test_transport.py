import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhetgl.transport import TransportError, transport_plan

from oracles import ot_linprog, ot_vertex_enumeration


def _masses(rng, k):
    w = rng.random(k) + 0.05
    return w / w.sum()


def test_identity_and_point_masses():
    cost = np.array([[0.0, 1.0], [1.0, 0.0]])
    value, plan = transport_plan([0.3, 0.7], [0.3, 0.7], cost)
    assert value == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(plan, np.diag([0.3, 0.7]))
    value, _ = transport_plan([1.0], [1.0], [[3.0]])
    assert value == 3.0


def test_plan_is_a_coupling():
    rng = np.random.default_rng(0)
    a, b = _masses(rng, 5), _masses(rng, 4)
    _, plan = transport_plan(a, b, rng.random((5, 4)))
    assert np.all(plan >= 0)
    assert np.allclose(plan.sum(1), a, atol=1e-12) and np.allclose(plan.sum(0), b, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_matches_vertex_enumeration_small(seed, m, n):
    rng = np.random.default_rng(seed)
    a, b = _masses(rng, m), _masses(rng, n)
    cost = rng.integers(0, 4, (m, n)).astype(float)
    assert transport_plan(a, b, cost)[0] == pytest.approx(ot_vertex_enumeration(a, b, cost), abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12))
@settings(max_examples=150, deadline=None)
def test_matches_linprog(seed, m, n):
    rng = np.random.default_rng(seed)
    a, b = _masses(rng, m), _masses(rng, n)
    cost = rng.random((m, n)) * rng.choice([1.0, 3.0, 40.0])
    assert transport_plan(a, b, cost)[0] == pytest.approx(ot_linprog(a, b, cost), abs=1e-8)


def test_degenerate_equal_masses():
    # uniform masses on both sides make most northwest-corner steps degenerate
    rng = np.random.default_rng(3)
    for k in range(2, 9):
        a = np.full(k, 1.0 / k)
        cost = rng.integers(0, 4, (k, k)).astype(float)
        assert transport_plan(a, a, cost)[0] == pytest.approx(ot_linprog(a, a, cost), abs=1e-9)


@pytest.mark.parametrize("a,b,cost", [
    ([0.5, 0.5], [1.0], [[1.0, 2.0]]),
    ([0.5, 0.6], [1.0], [[1.0], [2.0]]),
    ([-0.5, 1.5], [1.0], [[1.0], [2.0]]),
    ([], [], np.zeros((0, 0))),
])
def test_invalid_inputs(a, b, cost):
    with pytest.raises(TransportError):
        transport_plan(a, b, cost)
