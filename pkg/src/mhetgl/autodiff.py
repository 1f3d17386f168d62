"""A small reverse-mode differentiation engine over float64 numpy arrays.

The primitive set is fixed and deliberately narrow: only what the encoder and
the hypersphere losses need.  There is no implicit broadcasting; operations
that combine a matrix with a vector say so in their name (``scale_rows``,
``add_row`` ...).  Expressions are built by running ordinary Python code on
:class:`Tensor` values, and :func:`gradients` walks the recorded graph in
reverse topological order.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


# sign / selection patterns recorded while tracing, used to keep finite
# differences away from kinks and argmax switches
_TRACE: Optional[list] = None


@contextlib.contextmanager
def trace_patterns():
    global _TRACE
    saved, _TRACE = _TRACE, []
    try:
        yield _TRACE
    finally:
        _TRACE = saved


def _record(pattern):
    if _TRACE is not None:
        _TRACE.append(np.asarray(pattern).copy())


class Tensor:
    __slots__ = ("data", "parents", "backward", "op", "name")
    # make ``ndarray <op> Tensor`` defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, parents=(), backward=None, op="leaf", name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.backward = backward
        self.op = op
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor({self.op}{label}, shape={self.shape})"

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, op="const")


def _check(op, cond, *tensors):
    if not cond:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"{op}: incompatible shapes {shapes}")


def _node(data, parents, backward, op):
    return Tensor(data, tuple(parents), backward, op)


# ---- elementwise ---------------------------------------------------------

def _scalar(x):
    return isinstance(x, (int, float, np.floating, np.integer))


def add(a, b) -> Tensor:
    if _scalar(b):
        a = constant(a)
        return _node(a.data + b, (a,), lambda g: (g,), "add_const")
    if _scalar(a):
        return add(b, a)
    a, b = constant(a), constant(b)
    _check("add", a.shape == b.shape, a, b)
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    if _scalar(b):
        return add(a, -b)
    if _scalar(a):
        return add(scale(b, -1.0), a)
    a, b = constant(a), constant(b)
    _check("sub", a.shape == b.shape, a, b)
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def scale(a, c: float) -> Tensor:
    a = constant(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def mul(a, b) -> Tensor:
    if _scalar(b):
        return scale(a, b)
    if _scalar(a):
        return scale(b, a)
    a, b = constant(a), constant(b)
    _check("mul", a.shape == b.shape, a, b)
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a, b) -> Tensor:
    if _scalar(b):
        return scale(a, 1.0 / b)
    a, b = constant(a), constant(b)
    _check("div", a.shape == b.shape, a, b)
    out = a.data / b.data
    return _node(out, (a, b), lambda g: (g / b.data, -g * out / b.data), "div")


def exp(a) -> Tensor:
    a = constant(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = constant(a)
    if np.any(a.data <= 0):
        raise ValueError("log of non-positive value")
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def relu(a) -> Tensor:
    a = constant(a)
    mask = a.data > 0
    _record(mask)
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = constant(a)
    mask = a.data > 0
    _record(mask)
    factor = np.where(mask, 1.0, slope)
    return _node(a.data * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def mul_scalar(a, s) -> Tensor:
    """Multiply every entry of ``a`` by the 0-d tensor ``s``."""
    a, s = constant(a), constant(s)
    _check("mul_scalar", s.data.ndim == 0, a, s)
    return _node(a.data * s.data, (a, s), lambda g: (g * s.data, np.sum(g * a.data)), "mul_scalar")


# ---- linear algebra ------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check("matmul", a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[0], a, b)
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def spmm(s: sp.spmatrix, x) -> Tensor:
    """Constant sparse matrix times dense tensor."""
    x = constant(x)
    s = sp.csr_matrix(s)
    if x.data.ndim != 2 or s.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: incompatible shapes {s.shape}, {x.shape}")
    st = s.T.tocsr()
    return _node(np.asarray(s @ x.data), (x,), lambda g: (np.asarray(st @ g),), "spmm")


def transpose(a) -> Tensor:
    a = constant(a)
    _check("transpose", a.data.ndim == 2, a)
    return _node(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = constant(a)
    old = a.shape
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}")
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    ts = [constant(t) for t in tensors]
    _check("concat", all(t.data.ndim == 2 for t in ts), *ts)
    other = 1 - axis
    _check("concat", len({t.shape[other] for t in ts}) == 1, *ts)
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _node(np.concatenate([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.split(g, sizes, axis=axis)), "concat")


def gather_rows(x, idx) -> Tensor:
    x = constant(x)
    idx = np.asarray(idx, dtype=np.int64)
    n = x.shape[0]

    def back(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(x.data[idx], (x,), back, "gather_rows")


def segment_sum(x, seg, n: int) -> Tensor:
    """Sum rows of ``x`` into ``n`` buckets given by ``seg``."""
    x = constant(x)
    seg = np.asarray(seg, dtype=np.int64)
    _check("segment_sum", x.shape[0] == len(seg), x)
    out = np.zeros((n,) + x.shape[1:])
    np.add.at(out, seg, x.data)
    return _node(out, (x,), lambda g: (g[seg],), "segment_sum")


def segment_softmax(v, seg, n: int) -> Tensor:
    """Softmax of a 1-d tensor within each segment."""
    v = constant(v)
    seg = np.asarray(seg, dtype=np.int64)
    _check("segment_softmax", v.data.ndim == 1 and len(seg) == len(v.data), v)
    mx = np.full(n, -np.inf)
    np.maximum.at(mx, seg, v.data)
    e = np.exp(v.data - mx[seg])
    tot = np.zeros(n)
    np.add.at(tot, seg, e)
    out = e / tot[seg]

    def back(g):
        dot = np.zeros(n)
        np.add.at(dot, seg, g * out)
        return (out * (g - dot[seg]),)

    return _node(out, (v,), back, "segment_softmax")


def row_softmax(a) -> Tensor:
    a = constant(a)
    _check("row_softmax", a.data.ndim == 2, a)
    e = np.exp(a.data - a.data.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)
    return _node(out, (a,), lambda g: (out * (g - np.sum(g * out, axis=1, keepdims=True)),),
                 "row_softmax")


def scale_rows(x, v) -> Tensor:
    """``x[i, :] * v[i]``."""
    x, v = constant(x), constant(v)
    _check("scale_rows", x.data.ndim == 2 and v.shape == (x.shape[0],), x, v)
    return _node(x.data * v.data[:, None], (x, v),
                 lambda g: (g * v.data[:, None], np.sum(g * x.data, axis=1)), "scale_rows")


def scale_cols(x, v) -> Tensor:
    """``x[:, j] * v[j]``."""
    x, v = constant(x), constant(v)
    _check("scale_cols", x.data.ndim == 2 and v.shape == (x.shape[1],), x, v)
    return _node(x.data * v.data[None, :], (x, v),
                 lambda g: (g * v.data[None, :], np.sum(g * x.data, axis=0)), "scale_cols")


def add_row(x, v) -> Tensor:
    """Add vector ``v`` to every row of ``x``."""
    x, v = constant(x), constant(v)
    _check("add_row", x.data.ndim == 2 and v.shape == (x.shape[1],), x, v)
    return _node(x.data + v.data[None, :], (x, v), lambda g: (g, g.sum(axis=0)), "add_row")


def sub_row(x, v) -> Tensor:
    """Subtract vector ``v`` from every row of ``x``."""
    x, v = constant(x), constant(v)
    _check("sub_row", x.data.ndim == 2 and v.shape == (x.shape[1],), x, v)
    return _node(x.data - v.data[None, :], (x, v), lambda g: (g, -g.sum(axis=0)), "sub_row")


def reciprocal(a) -> Tensor:
    a = constant(a)
    out = 1.0 / a.data
    return _node(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def diag(a) -> Tensor:
    a = constant(a)
    _check("diag", a.data.ndim == 2 and a.shape[0] == a.shape[1], a)

    def back(g):
        return (np.diag(g),)

    return _node(np.diag(a.data).copy(), (a,), back, "diag")


# ---- reductions ----------------------------------------------------------

def sum(a, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = constant(a)
    out = a.data.sum(axis=axis)

    def back(g):
        if axis is None:
            return (np.full(a.shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _node(out, (a,), back, "sum")


def mean(a, axis: Optional[int] = None) -> Tensor:
    a = constant(a)
    count = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / count)


def sq_norm_rows(x) -> Tensor:
    """Squared Euclidean norm of every row."""
    x = constant(x)
    _check("sq_norm_rows", x.data.ndim == 2, x)
    return _node(np.einsum("ij,ij->i", x.data, x.data), (x,),
                 lambda g: (2.0 * x.data * g[:, None],), "sq_norm_rows")


def cosine_matrix(a, b) -> Tensor:
    """Pairwise cosine similarity between the rows of ``a`` and ``b``."""
    a, b = constant(a), constant(b)
    _check("cosine_matrix", a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[1], a, b)
    na = np.linalg.norm(a.data, axis=1)
    nb = np.linalg.norm(b.data, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroDivisionError("cosine similarity of a zero-norm vector")
    ua = a.data / na[:, None]
    ub = b.data / nb[:, None]
    out = ua @ ub.T

    def back(g):
        ga = (g @ ub - np.sum(g * out, axis=1)[:, None] * ua) / na[:, None]
        gb = (g.T @ ua - np.sum(g * out, axis=0)[:, None] * ub) / nb[:, None]
        return ga, gb

    return _node(out, (a, b), back, "cosine_matrix")


def argmax_rows(a) -> np.ndarray:
    """Row argmax (lowest index on ties); a constant selection, not a node."""
    data = a.data if isinstance(a, Tensor) else np.asarray(a)
    idx = np.argmax(data, axis=1)
    _record(idx)
    return idx


# ---- driving -------------------------------------------------------------

def _toposort(root: Tensor) -> List[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backprop(output: Tensor, wrt: Iterable[Tensor]) -> List[np.ndarray]:
    """Gradients of the scalar ``output`` with respect to each tensor in ``wrt``."""
    if output.data.ndim != 0:
        raise ShapeError(f"gradient requested for non-scalar output of shape {output.shape}")
    grads: Dict[int, np.ndarray] = {id(output): np.ones(())}
    for node in reversed(_toposort(output)):
        g = grads.pop(id(node), None) if node.parents else grads.get(id(node))
        if g is None or node.backward is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            key = id(parent)
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
            grads[key] = grads[key] + pg if key in grads else pg
    return [grads.get(id(t), np.zeros(t.shape)) for t in wrt]


Expression = Callable[[Mapping[str, Tensor]], Union[Tensor, Mapping[str, Tensor]]]


def _bind(inputs: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
    return {k: Tensor(np.array(v, dtype=np.float64), name=k) for k, v in inputs.items()}


def _pick(result, output):
    if isinstance(result, Tensor):
        return result
    if output is None:
        raise ValueError("expression returned several outputs; name the one to differentiate")
    return result[output]


def evaluate(fn: Expression, inputs: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Run ``fn`` forward and return its outputs as arrays."""
    result = fn(_bind(inputs))
    if isinstance(result, Tensor):
        return {"output": result.data.copy()}
    return {k: v.data.copy() for k, v in result.items()}


def gradients(fn: Expression, inputs: Mapping[str, np.ndarray], wrt: Optional[Sequence[str]] = None,
              output: Optional[str] = None) -> Dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar output of ``fn`` for the named inputs."""
    bound = _bind(inputs)
    out = _pick(fn(bound), output)
    names = list(bound) if wrt is None else list(wrt)
    return dict(zip(names, backprop(out, [bound[k] for k in names])))


@dataclass
class ParamCheck:
    max_rel_error: float
    passed: bool


@dataclass
class FDReport:
    params: Dict[str, ParamCheck]
    tolerance: float
    perturbations: int = 0
    inputs: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.params.values())

    @property
    def max_rel_error(self) -> float:
        return max((p.max_rel_error for p in self.params.values()), default=0.0)


def _patterns(fn, inputs, output):
    with trace_patterns() as trace:
        value = _pick(fn(_bind(inputs)), output).item()
    return value, trace


def _same(a, b):
    return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def finite_difference_check(fn: Expression, inputs: Mapping[str, np.ndarray], step: float = 1e-5,
                            tolerance: float = 1e-4, wrt: Optional[Sequence[str]] = None,
                            output: Optional[str] = None, max_retries: int = 8,
                            seed: int = 0) -> FDReport:
    """Compare reverse-mode gradients with central differences.

    The error for a parameter is ``max|analytic - numeric|`` divided by the
    larger of the two gradients' max-magnitudes (floored at 1e-6). If a
    perturbation flips any recorded rectifier sign or argmax selection, the
    whole input point is jittered and the check restarts.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    rng = np.random.default_rng(seed)
    point = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    names = list(point) if wrt is None else list(wrt)
    for attempt in range(max_retries + 1):
        _, base = _patterns(fn, point, output)
        analytic = gradients(fn, point, names, output)
        numeric = {}
        crossed = False
        for name in names:
            x = point[name]
            num = np.zeros_like(x)
            for idx in np.ndindex(x.shape):
                orig = x[idx]
                x[idx] = orig + step
                fp, tp = _patterns(fn, point, output)
                x[idx] = orig - step
                fm, tm = _patterns(fn, point, output)
                x[idx] = orig
                if not (_same(tp, base) and _same(tm, base)):
                    crossed = True
                    break
                num[idx] = (fp - fm) / (2 * step)
            if crossed:
                break
            numeric[name] = num
        if not crossed:
            break
        for name in names:
            point[name] = point[name] + 1e-3 * rng.standard_normal(point[name].shape)
    else:
        raise RuntimeError("could not find a point away from non-differentiable kinks")

    params = {}
    for name in names:
        a, n = analytic[name], numeric[name]
        denom = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0), 1e-6)
        err = float(np.max(np.abs(a - n), initial=0.0) / denom)
        params[name] = ParamCheck(err, err <= tolerance)
    return FDReport(params, tolerance, attempt, point)
