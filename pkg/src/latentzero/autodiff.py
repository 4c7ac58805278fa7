"""Reverse-mode autodiff over dense numpy arrays.

The engine is tape-based: every op records its parents and a backward
closure on the Tensor it returns, so a forward pass is ordinary function
composition and `backward` walks the recorded graph once in reverse
topological order. Storage is float32; the same ops run unchanged on
float64 data, which the finite-difference oracles use as a shadow mode.

Only the primitives the networks need are provided: linear, 3x3
convolution (stride 1 or 2, pad 1), relu/tanh/sigmoid, softmax and
log-softmax, per-channel scale-shift, flatten/reshape/concat, nearest
upsampling, MSE, cross-entropy from logits, cosine similarity, and the
elementwise add/scale glue.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import NumericError, ShapeError

DTYPE = np.float32

# Per-op output validation. On by default: a NaN that surfaces three ops
# later is much harder to attribute.
FINITE_CHECKS = True

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (forward-only evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """A node in the computation graph.

    `data` is always a numpy array. Leaf tensors created with
    requires_grad=True (parameters) accumulate gradients into `.grad`
    across backward calls; intermediate gradients are transient.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), backward=None, name=None):
        if isinstance(data, np.generic):  # 0-d op results arrive as numpy scalars
            data = np.asarray(data)
        elif not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=DTYPE)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        """Forward-identity leaf; gradient does not flow past it."""
        return Tensor(self.data, op="detach")

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def parameter(data, name=None):
    arr = np.asarray(data, dtype=DTYPE)
    return Tensor(arr, requires_grad=True, op="param", name=name)


def constant(data, dtype=None):
    arr = np.asarray(data, dtype=dtype if dtype is not None else DTYPE)
    return Tensor(arr)


def _check_finite(data, op):
    if FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite output in op '{op}'")


def _make(op, data, parents, backward_fn):
    _check_finite(data, op)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, parents=tuple(parents), backward=backward_fn)
    return Tensor(data, op=op)


def backward(loss):
    """Populate gradients of every parameter reachable from `loss`.

    Gradients accumulate into leaf `.grad`, so backward of a sum equals
    the sum of individual backward passes. Unreachable parameters are
    simply left untouched.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            parent_grads = node._backward(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if FINITE_CHECKS and not np.all(np.isfinite(pg)):
                    raise NumericError(f"non-finite gradient below op '{node.op}'")
                prev = grads.get(id(p))
                # Out-of-place accumulation: backward closures may hand
                # the same buffer to several parents.
                grads[id(p)] = pg if prev is None else prev + pg
        elif node.parents:
            raise NumericError(f"op '{node.op}' requires grad but has no backward")
        else:
            node.grad = g.copy() if node.grad is None else node.grad + g


def zero_grad(params):
    for p in params.values() if isinstance(params, dict) else params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise / glue ops


def add(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def bwd(g):
        return g, g

    return _make("add", out, (a, b), bwd)


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: {a.data.shape} vs {b.data.shape}")
    out = a.data * b.data

    def bwd(g):
        return g * b.data, g * a.data

    return _make("mul", out, (a, b), bwd)


def scale(a, s):
    s = float(s)
    out = a.data * s

    def bwd(g):
        return (g * s,)

    return _make("scale", out, (a,), bwd)


def relu(a):
    out = np.maximum(a.data, 0)

    def bwd(g):
        return (g * (a.data > 0),)

    return _make("relu", out, (a,), bwd)


def tanh(a):
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _make("tanh", out, (a,), bwd)


def sigmoid(a):
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _make("sigmoid", out, (a,), bwd)


def softmax(a):
    """Softmax over the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make("softmax", out, (a,), bwd)


def log_softmax(a):
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse

    def bwd(g):
        sm = np.exp(out)
        return (g - sm * g.sum(axis=-1, keepdims=True),)

    return _make("log_softmax", out, (a,), bwd)


def reshape(a, shape):
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _make("reshape", out, (a,), bwd)


def flatten(a):
    """(N, ...) -> (N, D)."""
    n = a.data.shape[0]
    return reshape(a, (n, -1))


def concat(tensors, axis=1):
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concat", out, tuple(tensors), bwd)


def tsum(a):
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def bwd(g):
        return (np.broadcast_to(g, a.data.shape),)

    return _make("sum", out, (a,), bwd)


def tmean(a):
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def bwd(g):
        return (np.broadcast_to(g / n, a.data.shape),)

    return _make("mean", out, (a,), bwd)


def sum_squares(a):
    out = np.asarray((a.data * a.data).sum(), dtype=a.data.dtype)

    def bwd(g):
        return (2.0 * g * a.data,)

    return _make("sum_squares", out, (a,), bwd)


# ---------------------------------------------------------------------------
# dense / conv layers


def linear(x, w, b):
    """x (N, D) @ w (D, M) + b (M,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear: x {x.data.shape} w {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"linear: bias {b.data.shape} vs M={w.data.shape[1]}")
    out = x.data @ w.data + b.data

    def bwd(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _make("linear", out, (x, w, b), bwd)


def _im2col(xp, kh, kw, stride, oh, ow):
    n, c = xp.shape[0], xp.shape[1]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def conv2d(x, w, b, stride=1, pad=1):
    """Small-kernel convolution, NCHW layout.

    x (N, Cin, H, W), w (Cout, Cin, kh, kw), b (Cout,).
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: x {x.data.shape} w {w.data.shape}")
    n, cin, h, wd = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input channels {cin} vs kernel {cin_w}")
    if b.data.shape != (cout,):
        raise ShapeError(f"conv2d: bias {b.data.shape} vs Cout={cout}")
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, kh, kw, stride, oh, ow)  # (N, F, P) with F=Cin*kh*kw, P=oh*ow
    wf = w.data.reshape(cout, -1)
    out = np.matmul(wf, cols) + b.data[None, :, None]  # (N, Cout, P)
    out = out.reshape(n, cout, oh, ow)

    def bwd(g):
        gf = g.reshape(n, cout, oh * ow)
        gw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
        gb = gf.sum(axis=(0, 2))
        gcols = np.matmul(wf.T, gf).reshape(n, cin, kh, kw, oh, ow)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[:, :, i, j]
        gx = gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp
        return gx, gw, gb

    return _make("conv2d", out, (x, w, b), bwd)


def upsample2x(x):
    """Nearest-neighbour 2x upsampling on NCHW."""
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bwd(g):
        n, c, h2, w2 = g.shape
        return (g.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)),)

    return _make("upsample2x", out, (x,), bwd)


def channel_scale_shift(x, gamma, beta):
    """Per-channel learnable affine y = x * gamma[c] + beta[c] (no batch stats)."""
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"channel_scale_shift: {gamma.data.shape}/{beta.data.shape} vs C={c}")
    if x.data.ndim == 4:
        gview, bview, red = gamma.data[None, :, None, None], beta.data[None, :, None, None], (0, 2, 3)
    else:
        gview, bview, red = gamma.data[None, :], beta.data[None, :], (0,)
    out = x.data * gview + bview

    def bwd(g):
        return g * gview, (g * x.data).sum(axis=red), g.sum(axis=red)

    return _make("channel_scale_shift", out, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# losses


def _as_array(t, like):
    return t.data if isinstance(t, Tensor) else np.asarray(t, dtype=like.dtype)


def mse(pred, target, weights=None):
    """Mean of squared differences over every entry.

    `weights` is an optional per-row (N,) array applied before the mean
    (importance-sampling correction).
    """
    tgt = _as_array(target, pred.data)
    if tgt.shape != pred.data.shape:
        raise ShapeError(f"mse: {pred.data.shape} vs {tgt.shape}")
    diff = pred.data - tgt
    n = diff.size
    if weights is not None:
        wv = np.asarray(weights, dtype=pred.data.dtype).reshape((-1,) + (1,) * (diff.ndim - 1))
    else:
        wv = None
    sq = wv * diff * diff if wv is not None else diff * diff
    out = np.asarray(sq.sum() / n, dtype=pred.data.dtype)
    target_is_tensor = isinstance(target, Tensor)
    parents = (pred, target) if target_is_tensor else (pred,)

    def bwd(g):
        gp = g * 2.0 * diff / n
        if wv is not None:
            gp = gp * wv
        return (gp, -gp) if target_is_tensor else (gp,)

    return _make("mse", out, parents, bwd)


def cross_entropy_logits(logits, target_probs, weights=None):
    """Mean over rows of -sum(target * log_softmax(logits))."""
    tgt = _as_array(target_probs, logits.data)
    if tgt.shape != logits.data.shape:
        raise ShapeError(f"cross_entropy: {logits.data.shape} vs {tgt.shape}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    n = logits.data.shape[0]
    per_row = -(tgt * logp).sum(axis=-1)
    wv = np.asarray(weights, dtype=logits.data.dtype) if weights is not None else None
    total = (per_row * wv).sum() if wv is not None else per_row.sum()
    out = np.asarray(total / n, dtype=logits.data.dtype)

    def bwd(g):
        sm = np.exp(logp)
        grad = (sm * tgt.sum(axis=-1, keepdims=True) - tgt) / n
        if wv is not None:
            grad = grad * wv[:, None]
        return (g * grad,)

    return _make("cross_entropy", out, (logits,), bwd)


def cosine_similarity(a, b, eps=1e-12):
    """Row-wise cosine similarity of (N, D) inputs -> (N,) tensor.

    Rows where either vector is (numerically) zero yield cosine 0 with
    zero gradient.
    """
    if a.data.ndim != 2 or a.data.shape != b.data.shape:
        raise ShapeError(f"cosine: {a.data.shape} vs {b.data.shape}")
    na = np.sqrt((a.data * a.data).sum(axis=1))
    nb = np.sqrt((b.data * b.data).sum(axis=1))
    prod = na * nb
    dead = prod < eps
    denom = np.maximum(prod, eps)
    out = ((a.data * b.data).sum(axis=1) / denom).astype(a.data.dtype)
    if dead.any():
        out = np.where(dead, 0.0, out).astype(a.data.dtype)

    def bwd(g):
        gv = np.where(dead, 0.0, g / denom)[:, None]
        cosv = out[:, None]
        sa = np.where(dead, 1.0, na * na)[:, None]
        sb = np.where(dead, 1.0, nb * nb)[:, None]
        ga = gv * (b.data - cosv * denom[:, None] * a.data / sa)
        gb = gv * (a.data - cosv * denom[:, None] * b.data / sb)
        return ga, gb

    return _make("cosine", out, (a, b), bwd)


def weighted_row_mean(rows, weights=None):
    """Mean of a (N,) tensor, optionally importance-weighted."""
    if weights is None:
        return tmean(rows)
    n = rows.data.shape[0]
    wv = np.asarray(weights, dtype=rows.data.dtype)
    out = np.asarray((rows.data * wv).sum() / n, dtype=rows.data.dtype)

    def bwd(g):
        return (g * wv / n,)

    return _make("weighted_row_mean", out, (rows,), bwd)


# ---------------------------------------------------------------------------
# optimizer


class OptimizerState:
    """SGD with momentum and weight decay; one momentum buffer per parameter."""

    def __init__(self, lr=0.1, momentum=0.9, weight_decay=1e-4):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers = {}


def sgd_step(params, state):
    """buf <- momentum*buf + (grad + wd*param); param <- param - lr*buf.

    Parameters with no gradient this step still receive weight decay.
    """
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        buf = state.buffers.get(name)
        buf = g.astype(p.data.dtype, copy=True) if buf is None else state.momentum * buf + g
        state.buffers[name] = buf
        upd = p.data - state.lr * buf
        if not np.all(np.isfinite(upd)):
            raise NumericError(f"non-finite update for parameter '{name}'")
        p.data = upd.astype(p.data.dtype, copy=False)


def clip_grad_value(params, clip):
    """Clamp every gradient component to [-clip, +clip] in place."""
    if clip <= 0:
        raise ValueError("clip must be positive")
    for p in params.values() if isinstance(params, dict) else params:
        if p.grad is not None:
            np.clip(p.grad, -clip, clip, out=p.grad)
