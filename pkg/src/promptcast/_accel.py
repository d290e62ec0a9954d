"""Hot kernels with an optional numba path.

Set ``PROMPTCAST_NUMBA=0`` before import to force the pure-numpy fallbacks.
The flag is read once; ``USE_NUMBA`` reports what was selected.

Every kernel exists in two spellings that compute the same thing:
``<name>_numpy`` (vectorised numpy, or the plain Python loop where the
algorithm is inherently sequential) and ``<name>_loop`` (explicit loops,
compiled with ``numba.njit`` when enabled). The public name is bound to
whichever one is active.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("PROMPTCAST_NUMBA", "1").strip().lower()
USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")

_GELU_C = math.sqrt(2.0 / math.pi)


def jit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------- rasterizer


def _draw_polyline(canvas, xs, ys, thickness):
    # Bresenham walk per segment; each visited pixel stamps a
    # thickness x thickness square. Same body serves both paths.
    h, w = canvas.shape
    lo = (thickness - 1) // 2
    for i in range(xs.shape[0] - 1):
        x0 = xs[i]
        y0 = ys[i]
        x1 = xs[i + 1]
        y1 = ys[i + 1]
        dx = abs(x1 - x0)
        dy = -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        while True:
            for oy in range(thickness):
                py = y0 - lo + oy
                if py < 0 or py >= h:
                    continue
                for ox in range(thickness):
                    px = x0 - lo + ox
                    if 0 <= px < w:
                        canvas[py, px] = 1.0
            if x0 == x1 and y0 == y1:
                break
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x0 += sx
            if e2 <= dx:
                err += dx
                y0 += sy
    return canvas


draw_polyline_numpy = _draw_polyline
draw_polyline_loop = jit(_draw_polyline)


# --------------------------------------------------------------------- GELU
# Tanh approximation. numba has no vectorised libm here, so scalar exp/tanh
# under njit are several times slower than numpy's SIMD loops; the loop path
# therefore fuses the polynomial work in numba and leaves tanh to numpy.


def gelu_forward_numpy(x):
    u = x * x
    u *= x
    u *= 0.044715
    u += x
    u *= _GELU_C
    np.tanh(u, out=u)
    u += 1.0
    u *= x
    u *= 0.5
    return u


def gelu_backward_numpy(x, g):
    x2 = x * x
    t = x2 * x
    t *= 0.044715
    t += x
    t *= _GELU_C
    np.tanh(t, out=t)
    # d/dx = 0.5 (1 + t) + 0.5 x (1 - t^2) c (1 + 3a x^2)
    x2 *= 3 * 0.044715
    x2 += 1.0
    x2 *= _GELU_C * 0.5
    x2 *= x
    x2 *= 1.0 - t * t
    t += 1.0
    t *= 0.5
    t += x2
    t *= g
    return t


def _gelu_inner_loop(x):
    flat = x.ravel()
    u = np.empty_like(flat)
    for i in range(flat.shape[0]):
        v = flat[i]
        u[i] = _GELU_C * (v + 0.044715 * v * v * v)
    return u


def _gelu_combine_loop(x, t):
    flat = x.ravel()
    for i in range(flat.shape[0]):
        t[i] = 0.5 * flat[i] * (1.0 + t[i])
    return t


def _gelu_grad_combine_loop(x, t, g):
    xf = x.ravel()
    gf = g.ravel()
    for i in range(xf.shape[0]):
        v = xf[i]
        dt = (1.0 - t[i] * t[i]) * _GELU_C * (1.0 + 3 * 0.044715 * v * v)
        t[i] = gf[i] * (0.5 * (1.0 + t[i]) + 0.5 * v * dt)
    return t


_gelu_inner = jit(_gelu_inner_loop)
_gelu_combine = jit(_gelu_combine_loop)
_gelu_grad_combine = jit(_gelu_grad_combine_loop)


def gelu_forward_loop(x):
    t = _gelu_inner(np.ascontiguousarray(x))
    np.tanh(t, out=t)
    return _gelu_combine(np.ascontiguousarray(x), t).reshape(x.shape)


def gelu_backward_loop(x, g):
    x = np.ascontiguousarray(x)
    t = _gelu_inner(x)
    np.tanh(t, out=t)
    return _gelu_grad_combine(x, t, np.ascontiguousarray(g)).reshape(x.shape)


# ---------------------------------------------------------------- layer norm
# Kernels work on (rows, d) views. They return the normalised rows and the
# per-row inverse std, which the backward pass reuses.


def layernorm_forward_numpy(x, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return xc * inv, inv[:, 0]


def layernorm_backward_numpy(xhat, inv, gxhat):
    m1 = gxhat.mean(axis=-1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
    return inv[:, None] * (gxhat - m1 - xhat * m2)


def _layernorm_forward_loop(x, eps):
    n, d = x.shape
    xhat = np.empty_like(x)
    inv = np.empty(n)
    for r in range(n):
        mu = 0.0
        for c in range(d):
            mu += x[r, c]
        mu /= d
        var = 0.0
        for c in range(d):
            diff = x[r, c] - mu
            var += diff * diff
        var /= d
        s = 1.0 / math.sqrt(var + eps)
        inv[r] = s
        for c in range(d):
            xhat[r, c] = (x[r, c] - mu) * s
    return xhat, inv


def _layernorm_backward_loop(xhat, inv, gxhat):
    n, d = xhat.shape
    out = np.empty_like(xhat)
    for r in range(n):
        m1 = 0.0
        m2 = 0.0
        for c in range(d):
            m1 += gxhat[r, c]
            m2 += gxhat[r, c] * xhat[r, c]
        m1 /= d
        m2 /= d
        for c in range(d):
            out[r, c] = inv[r] * (gxhat[r, c] - m1 - xhat[r, c] * m2)
    return out


layernorm_forward_loop = jit(_layernorm_forward_loop)
layernorm_backward_loop = jit(_layernorm_backward_loop)


# ------------------------------------------------------------------ softmax
# Row softmax over a (rows, n) view. With causal_s > 0 the rows are stacked
# (s, s) score matrices and row r may only see columns <= r % causal_s.
# The loop path shifts and masks in numba, exponentiates with numpy (see the
# GELU note) and normalises in numba.


def softmax_forward_numpy(z, causal_s):
    if causal_s:
        s = causal_s
        mask = np.triu(np.ones((s, s), dtype=bool), k=1)
        z = np.where(mask, -np.inf, z.reshape(-1, s, s)).reshape(z.shape)
    e = z - z.max(axis=-1, keepdims=True)
    np.exp(e, out=e)
    e /= e.sum(axis=-1, keepdims=True)
    return e


def softmax_backward_numpy(y, g):
    return y * (g - (g * y).sum(axis=-1, keepdims=True))


def _softmax_shift_loop(z, causal_s):
    rows, n = z.shape
    out = np.empty_like(z)
    for r in range(rows):
        stop = n if causal_s == 0 else (r % causal_s) + 1
        m = z[r, 0]
        for c in range(1, stop):
            if z[r, c] > m:
                m = z[r, c]
        for c in range(stop):
            out[r, c] = z[r, c] - m
        for c in range(stop, n):
            out[r, c] = 0.0  # masked; exp(-inf) is a slow path, zeroed after
    return out


def _softmax_normalize_loop(e, causal_s):
    rows, n = e.shape
    for r in range(rows):
        stop = n if causal_s == 0 else (r % causal_s) + 1
        total = 0.0
        for c in range(stop):
            total += e[r, c]
        inv = 1.0 / total
        for c in range(stop):
            e[r, c] *= inv
        for c in range(stop, n):
            e[r, c] = 0.0
    return e


def _softmax_backward_loop(y, g):
    rows, n = y.shape
    out = np.empty_like(y)
    for r in range(rows):
        dot = 0.0
        for c in range(n):
            dot += g[r, c] * y[r, c]
        for c in range(n):
            out[r, c] = y[r, c] * (g[r, c] - dot)
    return out


_softmax_shift = jit(_softmax_shift_loop)
_softmax_normalize = jit(_softmax_normalize_loop)


def softmax_forward_loop(z, causal_s):
    e = _softmax_shift(np.ascontiguousarray(z), causal_s)
    np.exp(e, out=e)
    return _softmax_normalize(e, causal_s)


softmax_backward_loop = jit(_softmax_backward_loop)


if USE_NUMBA:
    softmax_forward = softmax_forward_loop
    softmax_backward = softmax_backward_loop
    draw_polyline = draw_polyline_loop
    gelu_forward = gelu_forward_loop
    gelu_backward = gelu_backward_loop
    layernorm_forward = layernorm_forward_loop
    layernorm_backward = layernorm_backward_loop
else:
    softmax_forward = softmax_forward_numpy
    softmax_backward = softmax_backward_numpy
    draw_polyline = draw_polyline_numpy
    gelu_forward = gelu_forward_numpy
    gelu_backward = gelu_backward_numpy
    layernorm_forward = layernorm_forward_numpy
    layernorm_backward = layernorm_backward_numpy
