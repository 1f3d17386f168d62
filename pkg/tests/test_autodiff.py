import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mhetgl import autodiff as ad
from mhetgl.autodiff import ShapeError, Tensor


def test_evaluate_examples():
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(ad.evaluate(lambda t: ad.matmul(Tensor(np.eye(2)), t["x"]), {"x": x})["output"], x)
    assert ad.evaluate(lambda t: ad.row_softmax(t["x"]), {"x": np.zeros((1, 2))})["output"].tolist() == [[0.5, 0.5]]
    assert ad.evaluate(lambda t: ad.leaky_relu(t["x"], 0.01), {"x": np.array([-2.0])})["output"][0] == pytest.approx(-0.02)


def test_gradient_examples():
    g = ad.gradients(lambda t: t["x"] * t["x"], {"x": np.array(3.0)})
    assert g["x"] == 6.0
    g = ad.gradients(lambda t: ad.sum(ad.sq_norm_rows(ad.sub_row(t["x"], ad.constant(np.zeros(2))))),
                     {"x": np.array([[3.0, 4.0]])})
    assert g["x"].tolist() == [[6.0, 8.0]]


def test_non_scalar_output_rejected():
    with pytest.raises(ValueError):
        ad.gradients(lambda t: t["x"] * 2.0, {"x": np.ones(3)})


def test_shape_errors_name_the_primitive():
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        ad.add(Tensor(np.ones(3)), Tensor(np.ones(2)))


def test_evaluate_is_pure():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3))
    fn = lambda t: ad.row_softmax(ad.leaky_relu(t["x"] @ ad.transpose(t["x"])))
    assert ad.evaluate(fn, {"x": x})["output"].tobytes() == ad.evaluate(fn, {"x": x})["output"].tobytes()


def test_fd_linear_and_quadratic():
    rng = np.random.default_rng(1)
    w = rng.standard_normal(5)
    lin = ad.finite_difference_check(lambda t: ad.sum(t["x"] * ad.constant(w)), {"x": rng.standard_normal(5)})
    assert lin.max_rel_error <= 1e-10
    quad = ad.finite_difference_check(lambda t: ad.sum(t["x"] * t["x"]), {"x": rng.standard_normal(5)})
    assert quad.max_rel_error <= 1e-8


def test_fd_detects_corrupted_backward():
    def bad_square(a):
        return ad._node(a.data ** 2, [a], lambda g: [g * a.data], "bad_square")  # should be 2 * a

    rep = ad.finite_difference_check(lambda t: ad.sum(bad_square(t["x"])), {"x": np.array([1.0, 2.0])})
    assert not rep.passed


def test_fd_moves_off_relu_kink():
    rep = ad.finite_difference_check(lambda t: ad.sum(ad.relu(t["x"])), {"x": np.array([0.0, 1.0])},
                                     step=1e-5)
    assert rep.passed and rep.perturbations >= 1


_S = sp.csr_matrix(np.array([[0, 1.5, 0], [0.5, 0, 2.0], [0, 0, 0], [1.0, 0, 0]]))
_SEG = np.array([0, 0, 1, 2, 2, 2])

# (name, builder, input shapes); every builder returns a scalar
PRIMITIVES = [
    ("add", lambda t: ad.sum(ad.mul(ad.add(t["a"], t["b"]), t["a"])), {"a": (3, 2), "b": (3, 2)}),
    ("sub", lambda t: ad.sum(ad.mul(ad.sub(t["a"], t["b"]), t["b"])), {"a": (3, 2), "b": (3, 2)}),
    ("div", lambda t: ad.sum(ad.div(t["a"], ad.add(ad.mul(t["b"], t["b"]), 1.0))), {"a": (3,), "b": (3,)}),
    ("exp_log", lambda t: ad.sum(ad.log(ad.add(ad.exp(t["a"]), 1.0))), {"a": (4,)}),
    ("relu", lambda t: ad.sum(ad.mul(ad.relu(t["a"]), t["a"])), {"a": (6,)}),
    ("leaky", lambda t: ad.sum(ad.mul(ad.leaky_relu(t["a"], 0.01), t["a"])), {"a": (6,)}),
    ("mul_scalar", lambda t: ad.sum(ad.mul(ad.mul_scalar(t["a"], t["s"]), t["a"])), {"a": (3, 2), "s": ()}),
    ("matmul", lambda t: ad.sum(ad.mul(t["a"] @ t["b"], t["a"] @ t["b"])), {"a": (3, 4), "b": (4, 2)}),
    ("spmm", lambda t: ad.sum(ad.mul(ad.spmm(_S, t["a"]), ad.spmm(_S, t["a"]))), {"a": (3, 2)}),
    ("transpose_reshape", lambda t: ad.sum(ad.mul(ad.reshape(ad.transpose(t["a"]), (6,)), ad.constant(np.arange(6.0)))), {"a": (3, 2)}),
    ("concat", lambda t: ad.sum(ad.mul(ad.concat([t["a"], t["b"]], 1), ad.concat([t["b"], t["a"]], 1))), {"a": (3, 2), "b": (3, 2)}),
    ("gather", lambda t: ad.sum(ad.mul(ad.gather_rows(t["a"], np.array([2, 0, 2, 1])), ad.gather_rows(t["a"], np.array([0, 1, 1, 2])))), {"a": (3, 2)}),
    ("segment_sum", lambda t: ad.sum(ad.mul(ad.segment_sum(t["a"], _SEG, 3), ad.segment_sum(t["a"], _SEG, 3))), {"a": (6, 2)}),
    ("segment_softmax", lambda t: ad.sum(ad.mul(ad.segment_softmax(t["v"], _SEG, 3), ad.constant(np.arange(6.0)))), {"v": (6,)}),
    ("row_softmax", lambda t: ad.sum(ad.mul(ad.row_softmax(t["a"]), ad.constant(np.arange(6.0).reshape(3, 2)))), {"a": (3, 2)}),
    ("scale_rows_cols", lambda t: ad.sum(ad.mul(ad.scale_cols(ad.scale_rows(t["a"], t["r"]), t["c"]), t["a"])), {"a": (3, 2), "r": (3,), "c": (2,)}),
    ("add_sub_row", lambda t: ad.sum(ad.sq_norm_rows(ad.sub_row(ad.add_row(t["a"], t["v"]), t["w"]))), {"a": (3, 2), "v": (2,), "w": (2,)}),
    ("reciprocal", lambda t: ad.sum(ad.reciprocal(ad.add(ad.mul(t["a"], t["a"]), 0.5))), {"a": (4,)}),
    ("diag_mean", lambda t: ad.mean(ad.mul(ad.diag(t["a"] @ ad.transpose(t["a"])), ad.constant(np.arange(3.0)))), {"a": (3, 2)}),
    ("sum_axis", lambda t: ad.sum(ad.mul(ad.sum(t["a"], axis=0), ad.sum(t["a"], axis=0))) + ad.sum(ad.mul(ad.sum(t["a"], axis=1), ad.constant(np.arange(3.0)))), {"a": (3, 2)}),
    ("mean_axis", lambda t: ad.sum(ad.mul(ad.mean(t["a"], axis=1), ad.mean(t["a"], axis=1))), {"a": (3, 2)}),
    ("cosine", lambda t: ad.sum(ad.mul(ad.cosine_matrix(t["a"], t["b"]), ad.constant(np.arange(12.0).reshape(3, 4)))), {"a": (3, 5), "b": (4, 5)}),
]


@pytest.mark.parametrize("name,fn,shapes", PRIMITIVES, ids=[p[0] for p in PRIMITIVES])
@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_primitive_gradients(name, fn, shapes, seed):
    rng = np.random.default_rng(seed)
    inputs = {k: rng.standard_normal(s) for k, s in shapes.items()}
    rep = ad.finite_difference_check(fn, inputs, step=1e-6, tolerance=1e-6, seed=seed)
    assert rep.passed, rep.params


def test_argmax_ties_lowest_index():
    assert ad.argmax_rows(np.array([[0.2, 0.5, 0.5], [1.0, 1.0, 0.0]])).tolist() == [1, 0]


def test_cosine_zero_norm_raises():
    with pytest.raises(ZeroDivisionError):
        ad.cosine_matrix(Tensor(np.zeros((1, 2))), Tensor(np.ones((1, 2))))
