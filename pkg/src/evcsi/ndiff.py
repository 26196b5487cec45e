"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Every operation builds a `Tensor` node that remembers its parents and a
vector-Jacobian closure.  `Tensor.backward()` walks the graph in reverse
topological order and adds gradients into `.grad`, so calling backward twice
from the same root doubles every stored gradient.  Only the broadcasting the
model actually uses is supported (trailing-axis bias adds, stacked matmul).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericError

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _require_finite(arr: np.ndarray, what: str) -> None:
    # single-pass screen; the sum is non-finite whenever any entry is, and a
    # finite-but-overflowing sum is ruled out by the exact check before raising
    if not np.isfinite(arr.sum()) and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    """One node of the computation graph.

    `values` is always a float64 ndarray.  `grad` stays None until a backward
    pass reaches this node, after which it accumulates across passes.
    """

    __slots__ = ("values", "grad", "name", "_parents", "_vjp")

    def __init__(self, values, parents=(), vjp=None, name: str = "", check: bool = True):
        arr = np.asarray(values, dtype=np.float64)
        if check:
            _require_finite(arr, name or "tensor")
        self.values = arr
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = tuple(parents)
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into every reachable node's grad.

        The root must be a scalar.  Accumulation is additive across calls.
        """
        if self.values.ndim != 0:
            raise ContractError("backward requires a scalar root tensor")
        order = _topo_order(self)
        pending: dict[int, np.ndarray] = {id(self): np.ones((), dtype=np.float64)}
        for node in order:
            g = pending.pop(id(node), None)
            if g is None:
                continue
            _require_finite(g, f"gradient of {node.name or 'tensor'}")
            # vjp outputs are never mutated in place, so aliasing g is safe
            node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.values.shape})"

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


def _topo_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from root, root first, parents always after children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values + b.values

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(out, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values - b.values

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor(out, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values * b.values

    def vjp(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return Tensor(out, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values / b.values

    def vjp(g):
        ga = _unbroadcast(g / b.values, a.shape)
        gb = _unbroadcast(-g * a.values / (b.values * b.values), b.shape)
        return ga, gb

    return Tensor(out, (a, b), vjp, "div")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def vjp(g):
        return (g * c,)

    return Tensor(a.values * c, (a,), vjp, "scale")


def add_scalar(a, c: float) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g,)

    return Tensor(a.values + float(c), (a,), vjp, "add_scalar")


def square(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g * (2.0 * a.values),)

    return Tensor(a.values * a.values, (a,), vjp, "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.values < 0.0):
        raise ContractError("sqrt requires nonnegative entries")
    root = np.sqrt(a.values)

    def vjp(g):
        return (g * (0.5 / root),)

    return Tensor(root, (a,), vjp, "sqrt")


# ---------------------------------------------------------------------------
# shape ops

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ContractError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.values, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.values, -1, -2) @ g, b.shape)
        return ga, gb

    return Tensor(out, (a, b), vjp, "matmul")


def dense(x, w, b=None) -> Tensor:
    """Affine map over the last axis of x.

    Leading axes are collapsed so the product runs as one 2-D GEMM; the
    weight gradient then needs no broadcast reduction.
    """
    x, w = as_tensor(x), as_tensor(w)
    lead = x.shape[:-1]
    flat = x if x.ndim == 2 else reshape(x, (-1, x.shape[-1]))
    out = matmul(flat, w)
    if b is not None:
        out = add(out, b)
    if x.ndim != 2:
        out = reshape(out, lead + (w.shape[-1],))
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return Tensor(a.values.reshape(shape), (a,), vjp, "reshape", check=False)


def flatten(a) -> Tensor:
    a = as_tensor(a)
    return reshape(a, (a.size,))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return Tensor(a.values.transpose(axes), (a,), vjp, "transpose", check=False)


def concatenate(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concatenate needs at least one tensor")
    out = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, tuple(parts), vjp, "concatenate", check=False)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Slice `length` entries from `start` along one axis."""
    a = as_tensor(a)
    if not (0 <= start and start + length <= a.shape[axis]):
        raise ContractError("narrow slice out of range")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def vjp(g):
        full = np.zeros(a.shape, dtype=np.float64)
        full[index] = g
        return (full,)

    return Tensor(a.values[index], (a,), vjp, "narrow", check=False)


# ---------------------------------------------------------------------------
# reductions

def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return Tensor(out, (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        count = a.shape[axis]
    return scale(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# nonlinearities

def softmax(a) -> Tensor:
    """Softmax over the last axis, stable under constant shifts."""
    a = as_tensor(a)
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return Tensor(y, (a,), vjp, "softmax")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # evaluate on each sign branch separately to avoid exp overflow
    v = a.values
    y = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                 np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def vjp(g):
        return (g * y * (1.0 - y),)

    return Tensor(y, (a,), vjp, "sigmoid")


def gelu(a) -> Tensor:
    """GELU under the tanh approximation 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    a = as_tensor(a)
    x = a.values
    x_sq = x * x
    t = np.tanh(_GELU_C * (x + _GELU_A * x_sq * x))
    y = 0.5 * x * (1.0 + t)

    def vjp(g):
        sech2 = 1.0 - t * t
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * x_sq)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner),)

    return Tensor(y, (a,), vjp, "gelu")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean(square(centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add_scalar(var, eps)))
    return add(mul(normed, gain), bias)


def multi_head_attention(x, wq, bq, wk, bk, wv, bv, wo, bo, n_head: int) -> Tensor:
    """Scaled dot-product self-attention over (..., seq, width) inputs."""
    x = as_tensor(x)
    width = x.shape[-1]
    if width % n_head != 0:
        raise ContractError(f"width {width} not divisible by n_head {n_head}")
    d_head = width // n_head
    seq = x.shape[-2]
    lead = x.shape[:-2]

    def split_heads(t: Tensor) -> Tensor:
        t = reshape(t, lead + (seq, n_head, d_head))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return transpose(t, axes)  # (..., n_head, seq, d_head)

    q = split_heads(dense(x, wq, bq))
    k = split_heads(dense(x, wk, bk))
    v = split_heads(dense(x, wv, bv))

    k_t_axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = scale(matmul(q, transpose(k, k_t_axes)), 1.0 / math.sqrt(d_head))
    ctx = matmul(softmax(scores), v)  # (..., n_head, seq, d_head)

    back_axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = transpose(ctx, back_axes)  # (..., seq, n_head, d_head)
    ctx = reshape(ctx, lead + (seq, width))
    return dense(ctx, wo, bo)


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    """Moment estimates for Adam, keyed by parameter name."""

    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> AdamState:
    """One Adam update applied in place to `params`; returns the mutated state."""
    state.step_count += 1
    t = state.step_count
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ContractError(f"missing gradient for parameter {name}")
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.values.shape:
            raise ContractError(f"gradient shape {g.shape} != param shape {p.values.shape} for {name}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.values)
            v = np.zeros_like(p.values)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        p.values = p.values - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        _require_finite(p.values, f"parameter {name} after adam step")
    return state


# ---------------------------------------------------------------------------
# finite-difference oracle

def grad_check(scalar_fn, point, step: float = 1e-4, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients against central finite differences.

    `scalar_fn` maps one Tensor per entry of `point` to a scalar Tensor.
    Returns the worst relative error over all checked coordinates.  With
    `max_coords` set, a random subset of coordinates per input is checked.
    """
    if isinstance(point, (list, tuple)):
        bases = [np.array(p, dtype=np.float64) for p in point]
    else:
        bases = [np.array(point, dtype=np.float64)]

    leaves = [Tensor(b.copy()) for b in bases]
    out = scalar_fn(*leaves)
    if out.values.ndim != 0:
        raise ContractError("grad_check target must return a scalar")
    out.backward()

    def evaluate() -> float:
        return float(scalar_fn(*[Tensor(b.copy()) for b in bases]).values)

    worst = 0.0
    for slot, base in enumerate(bases):
        analytic = leaves[slot].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        flat = base.reshape(-1)
        n = flat.size
        if max_coords is not None and max_coords < n:
            if rng is None:
                rng = np.random.default_rng(0)
            picks = rng.choice(n, size=max_coords, replace=False)
        else:
            picks = range(n)
        a_flat = analytic.reshape(-1)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = evaluate()
            flat[i] = orig - step
            f_minus = evaluate()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            err = abs(a_flat[i] - fd) / max(abs(a_flat[i]) + abs(fd), 1e-8)
            worst = max(worst, err)
    return worst
