"""Dense float64 tensors with reverse-mode automatic differentiation.

Graphs are built eagerly: every op returns a new :class:`Tensor` holding a
closure that pushes its output gradient back to its parents. Leaves created
with ``requires_grad=True`` are trainable; every other leaf is frozen and
never receives a gradient.

Broadcasting follows numpy's trailing-dimension alignment. Gradients flowing
into a broadcast operand are summed back to its original shape.
"""

import threading
import zlib
from contextlib import contextmanager

import numpy as np

from . import _accel
from .errors import ConfigError, ContractError, DimensionError

_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    @property
    def T(self):
        return transpose(self)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    live = grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = live
    if live:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        # interior nodes may alias g (never mutated); leaves own a private copy
        t.grad = g if t._backward is not None else np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if len(shape) == 1 and g.shape[-1] == shape[0]:
        # bias-style operand: one reduction over all leading rows
        return g.reshape(-1, shape[0]).sum(axis=0)
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def _binary(a, b, op):
    try:
        return op(a.data, b.data)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.shape))

    return _node(_binary(a, b, np.add), (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(_binary(a, b, np.subtract), (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(_binary(a, b, np.multiply), (a, b), bw)


def scale(a, c):
    c = float(c)

    def bw(g):
        _accumulate(a, g * c)

    return _node(a.data * c, (a,), bw)


def gelu(x):
    """Tanh-approximated GELU."""

    def bw(g):
        _accumulate(x, _accel.gelu_backward(x.data, g))

    return _node(_accel.gelu_forward(x.data), (x,), bw)


def square(x):
    def bw(g):
        _accumulate(x, 2.0 * x.data * g)

    return _node(x.data * x.data, (x,), bw)


# ---------------------------------------------------------------- reductions


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _node(np.asarray(out, dtype=np.float64), (x,), bw)


def mean(x, axis=None, keepdims=False):
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def mean_square(x):
    return mean(square(x))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    """Batched matrix product over the last two axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        return _matmul_rows(a, b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _node(a.data @ b.data, (a, b), bw)


def _matmul_rows(a, b):
    # (..., m, k) @ (k, n) as one 2-D GEMM instead of numpy's batched loop
    k, n = b.shape
    a2 = a.data.reshape(-1, k)
    out = (a2 @ b.data).reshape(a.shape[:-1] + (n,))

    def bw(g):
        g2 = g.reshape(-1, n)
        if a.requires_grad:
            _accumulate(a, (g2 @ b.data.T).reshape(a.shape))
        if b.requires_grad:
            _accumulate(b, a2.T @ g2)

    return _node(out, (a, b), bw)


def linear(x, w, b=None):
    """``x @ w + b`` over the last axis of ``x`` as a single graph node."""
    x, w = as_tensor(x), as_tensor(w)
    k, n = w.shape
    if x.shape[-1] != k:
        raise DimensionError(f"linear shape mismatch: {x.shape} @ {w.shape}")
    if b is not None and b.shape != (n,):
        raise DimensionError(f"linear bias shape {b.shape} does not match output width {n}")
    x2 = x.data.reshape(-1, k)
    out = x2 @ w.data
    if b is not None:
        out += b.data

    def bw(g):
        g2 = g.reshape(-1, n)
        if x.requires_grad:
            _accumulate(x, (g2 @ w.data.T).reshape(x.shape))
        if w.requires_grad:
            _accumulate(w, x2.T @ g2)
        if b is not None and b.requires_grad:
            _accumulate(b, g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out.reshape(x.shape[:-1] + (n,)), parents, bw)


def attention(q, k, v, num_heads, causal=False):
    """Scaled dot-product attention over ``(B, s, d)`` inputs split into heads.

    One graph node: head split, scores, (causally masked) softmax, weighted
    sum and head merge all happen inside, with a hand-written backward.
    """
    if not (q.shape == k.shape == v.shape) or q.ndim != 3:
        raise DimensionError(f"attention needs equal (B, s, d) inputs, got {q.shape}, {k.shape}, {v.shape}")
    b, s, d = q.shape
    if d % num_heads:
        raise DimensionError(f"width {d} is not divisible by {num_heads} heads")
    dh = d // num_heads
    c = 1.0 / np.sqrt(dh)

    def split(a):
        return a.reshape(b, s, num_heads, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q.data), split(k.data), split(v.data)
    scores = (qh @ kh.transpose(0, 1, 3, 2)).reshape(-1, s)
    scores *= c
    att = _accel.softmax_forward(scores, s if causal else 0).reshape(b, num_heads, s, s)
    out = (att @ vh).transpose(0, 2, 1, 3).reshape(b, s, d)

    def bw(g):
        gh = split(g)
        if v.requires_grad:
            _accumulate(v, (att.transpose(0, 1, 3, 2) @ gh).transpose(0, 2, 1, 3).reshape(b, s, d))
        if not (q.requires_grad or k.requires_grad):
            return
        gatt = np.ascontiguousarray((gh @ vh.transpose(0, 1, 3, 2)).reshape(-1, s))
        gs = _accel.softmax_backward(att.reshape(-1, s), gatt).reshape(b, num_heads, s, s)
        gs *= c
        if q.requires_grad:
            _accumulate(q, (gs @ kh).transpose(0, 2, 1, 3).reshape(b, s, d))
        if k.requires_grad:
            _accumulate(k, (gs.transpose(0, 1, 3, 2) @ qh).transpose(0, 2, 1, 3).reshape(b, s, d))

    return _node(out, (q, k, v), bw)


def transpose(x):
    def bw(g):
        _accumulate(x, np.swapaxes(g, -1, -2))

    return _node(np.swapaxes(x.data, -1, -2), (x,), bw)


def permute(x, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        _accumulate(x, np.transpose(g, inv))

    return _node(np.transpose(x.data, axes), (x,), bw)


def reshape(x, shape):
    def bw(g):
        _accumulate(x, g.reshape(x.shape))

    return _node(x.data.reshape(shape), (x,), bw)


def broadcast_to(x, shape):
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError(f"cannot broadcast {x.shape} to {shape}") from None

    def bw(g):
        _accumulate(x, _unbroadcast(g, x.shape))

    return _node(out, (x,), bw)


def take(x, idx):
    """Basic (slice/int) indexing."""
    out = x.data[idx]

    def bw(g):
        if not x.requires_grad:
            return
        full = np.zeros_like(x.data)
        full[idx] += g
        _accumulate(x, full)

    return _node(np.array(out, dtype=np.float64), (x,), bw)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if len(tensors) == 1:
        return tensors[0]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"cannot concatenate shapes {shapes} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    return _node(out, tuple(tensors), bw)


# ---------------------------------------------------------------- nn primitives


def softmax(x, causal=False):
    """Softmax over the last axis.

    With ``causal=True`` the last two axes form square score matrices and
    entry ``(i, j)`` is dropped for ``j > i``.
    """
    n = x.shape[-1]
    if causal and x.shape[-2] != n:
        raise DimensionError(f"causal softmax needs square score matrices, got {x.shape}")
    z = np.ascontiguousarray(x.data.reshape(-1, n))
    y = _accel.softmax_forward(z, n if causal else 0)

    def bw(g):
        _accumulate(x, _accel.softmax_backward(y, np.ascontiguousarray(g.reshape(-1, n))).reshape(x.shape))

    return _node(y.reshape(x.shape), (x,), bw)


def layer_norm(x, gain, bias, eps=1e-5):
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm affine shapes {gain.shape}/{bias.shape} vs width {d}")
    rows = np.ascontiguousarray(x.data.reshape(-1, d))
    xhat, inv = _accel.layernorm_forward(rows, eps)
    out = xhat * gain.data + bias.data

    def bw(g):
        g2 = g.reshape(-1, d)
        if gain.requires_grad:
            _accumulate(gain, (g2 * xhat).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, g2.sum(axis=0))
        if x.requires_grad:
            gx = _accel.layernorm_backward(xhat, inv, np.ascontiguousarray(g2 * gain.data))
            _accumulate(x, gx.reshape(x.shape))

    return _node(out.reshape(x.shape), (x, gain, bias), bw)


# ---------------------------------------------------------------- backward


def backward(loss):
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node._backward is not None:
            # interior nodes: drop buffers and closures so the graph can be freed
            node.grad = None
            node._parents = ()
            node._backward = None


# ---------------------------------------------------------------- randomness


class Rng:
    """Seeded stream on numpy's counter-based Philox4x64 bit generator.

    ``child(purpose)`` derives an independent stream keyed by a string, so one
    root seed fans out into per-purpose seeds without draw-order coupling.
    """

    algorithm = "philox4x64-10/seedsequence"

    def __init__(self, seed, _spawn_key=()):
        self.seed = int(seed)
        self._key = tuple(_spawn_key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, purpose):
        return Rng(self.seed, self._key + (zlib.crc32(str(purpose).encode()),))

    def normal(self, sigma, shape):
        return self.gen.normal(0.0, sigma, size=shape)

    def uniform(self, a, b, shape):
        return self.gen.uniform(a, b, size=shape)

    def permutation(self, n):
        return self.gen.permutation(n)

    def integers(self, low, high, size=None):
        return self.gen.integers(low, high, size=size)


def seeded_init(shape, scheme, rng, requires_grad=False, name=None):
    """Draw a tensor from ``scheme``.

    ``scheme`` is ``"zeros"``, ``("gaussian", sigma)`` or ``("uniform", a, b)``.
    """
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ConfigError(f"invalid shape {shape}")
    kind = scheme if isinstance(scheme, str) else scheme[0]
    if kind == "zeros":
        data = np.zeros(shape)
    elif kind == "gaussian":
        data = rng.normal(float(scheme[1]), shape)
    elif kind == "uniform":
        data = rng.uniform(float(scheme[1]), float(scheme[2]), shape)
    else:
        raise ConfigError(f"unknown init scheme {scheme!r}")
    return Tensor(data, requires_grad=requires_grad, name=name)


# ---------------------------------------------------------------- gradient oracle


def finite_diff_check(f, params, eps=1e-5):
    """Worst relative error between autodiff and central differences.

    ``f`` takes no arguments and returns a scalar Tensor built from
    ``params``. Relative error uses ``max(|g|, 1e-8)`` as denominator.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    worst = 0.0
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                up = f().item()
            flat[i] = orig - eps
            with no_grad():
                down = f().item()
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            err = abs(fd - gflat[i]) / max(abs(gflat[i]), 1e-8)
            worst = max(worst, err)
    return worst
