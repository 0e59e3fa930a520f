"""Dense float64 tensors with reverse-mode differentiation.

Single-threaded by design: a computation graph belongs to one thread, and a
graph can be backpropagated exactly once. Gradients accumulate into leaf
tensors created with ``requires_grad=True``; call ``ParamStore.zero_grads``
before each backward pass.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from .errors import EmptyPoolError, ShapeError, UsageError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_consumed")

    def __init__(self, data, requires_grad=False):
        if type(data) is np.ndarray and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def in_graph(self) -> bool:
        return self.requires_grad or self._backward_fn is not None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_view(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self, None)

    def backward(self):
        backward(self)


def _make(data, parents, backward_fn):
    """Create a result tensor, recording the node when grads are on."""
    out = Tensor(data)
    if _grad_enabled and any(p.in_graph for p in parents):
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting allowed; backward unbroadcasts)

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    return _make(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data
    return _make(
        data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)
    return _make(data, (a,), lambda g: (g / (2.0 * data),))


# ---------------------------------------------------------------------------
# shape manipulation

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward_fn(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _make(data, (a, b), backward_fn)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    if axes is None:
        inverse = None
    else:
        inverse = [0] * len(axes)
        for position, axis in enumerate(axes):
            inverse[axis] = position
    return _make(data, (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    original = a.data.shape
    data = a.data.reshape(shape)
    return _make(data, (a,), lambda g: (g.reshape(original),))


def slice_view(a, key) -> Tensor:
    """Basic (non-fancy) slicing; backward scatters into a zero tensor."""
    a = as_tensor(a)
    data = a.data[key]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return _make(data, (a,), backward_fn)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(
            np.moveaxis(moved[offsets[k] : offsets[k + 1]], 0, axis) for k in range(len(tensors))
        )

    return _make(data, tuple(tensors), backward_fn)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("stack of zero tensors")
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward_fn(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(moved[k] for k in range(len(tensors)))

    return _make(data, tuple(tensors), backward_fn)


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        g_expanded = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_expanded, a.data.shape).copy(),)

    return _make(data, (a,), backward_fn)


# ---------------------------------------------------------------------------
# neural-net primitives

def softmax(x, axis: int = -1) -> Tensor:
    """Stable softmax along ``axis``; rows sum to one."""
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _make(y, (x,), backward_fn)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - log_norm

    def backward_fn(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _make(y, (x,), backward_fn)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x) -> Tensor:
    """Smooth GELU (tanh form); smoothness keeps finite-difference checks tight."""
    x = as_tensor(x)
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)
    y = 0.5 * v * (1.0 + t)

    def backward_fn(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t**2) * d_inner
        return (g * dy,)

    return _make(y, (x,), backward_fn)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(f"layer_norm expects gain/bias of shape ({d},)")
    mu = x.data.sum(axis=-1, keepdims=True) / d
    centered = x.data - mu
    var = (centered * centered).sum(axis=-1, keepdims=True) / d
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    y = xhat * gain.data + bias.data

    def backward_fn(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv_std * (
            dxhat
            - dxhat.sum(axis=-1, keepdims=True) / d
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / d
        )
        return dx, dgain, dbias

    return _make(y, (x, gain, bias), backward_fn)


def masked_fill(x, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is True with ``value`` (no grad there)."""
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    if np.broadcast_shapes(x.data.shape, mask.shape) != x.data.shape:
        raise ShapeError(f"mask {mask.shape} does not broadcast onto {x.data.shape}")
    data = np.where(mask, value, x.data)
    return _make(data, (x,), lambda g: (np.where(mask, 0.0, g),))


def embedding_lookup(table, ids) -> Tensor:
    """Gather rows of a (V, d) table; backward scatter-adds into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError("embedding table must be 2-d")
    data = table.data[ids]

    def backward_fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make(data, (table,), backward_fn)


def cross_entropy(logits, target_ids, ignore_id: int | None = None) -> Tensor:
    """Mean negative log-likelihood over positions whose target is not
    ``ignore_id``; exactly zero (with zero gradient) if all are ignored."""
    logits = as_tensor(logits)
    targets = np.asarray(target_ids, dtype=np.int64)
    if logits.data.ndim != 2 or targets.ndim != 1 or logits.data.shape[0] != targets.shape[0]:
        raise ShapeError(f"cross_entropy got logits {logits.data.shape}, targets {targets.shape}")
    keep = np.ones_like(targets, dtype=bool) if ignore_id is None else targets != ignore_id
    n_eff = int(keep.sum())
    if n_eff == 0:
        return _make(np.zeros(()), (logits,), lambda g: (np.zeros_like(logits.data),))
    vocab = logits.data.shape[1]
    if targets[keep].min() < 0 or targets[keep].max() >= vocab:
        raise IndexError("target id outside the vocabulary")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(targets.shape[0])
    loss = -log_probs[rows[keep], targets[keep]].sum() / n_eff

    def backward_fn(g):
        grad = np.exp(log_probs)
        grad[rows, targets] -= 1.0
        grad[~keep] = 0.0
        return (grad * (g / n_eff),)

    return _make(np.asarray(loss), (logits,), backward_fn)


def index_mean_pool(h, positions) -> Tensor:
    """Mean of the rows of ``h`` selected by 0-based ``positions``."""
    h = as_tensor(h)
    if h.data.ndim != 2:
        raise ShapeError("index_mean_pool expects a (len, d) tensor")
    rows = sorted(int(p) for p in positions)
    if not rows:
        raise EmptyPoolError("cannot pool over an empty position set")
    if rows[0] < 0 or rows[-1] >= h.data.shape[0]:
        raise IndexError(f"pool position out of range for {h.data.shape[0]} rows")
    idx = np.asarray(rows, dtype=np.int64)
    data = h.data[idx].mean(axis=0)

    def backward_fn(g):
        gh = np.zeros_like(h.data)
        gh[idx] = g / len(rows)
        return (gh,)

    return _make(data, (h,), backward_fn)


def cosine_cost(a, b, eps: float = 1e-12) -> Tensor:
    """Pairwise cosine distance: C[i, j] = 1 - <a_i, b_j> / (|a_i||b_j| + eps).

    Rows must not be exactly zero; the eps only guards the division.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(f"cosine_cost got {a.data.shape} vs {b.data.shape}")
    dots = matmul(a, transpose(b))
    norm_a = sqrt(reduce_sum(mul(a, a), axis=1, keepdims=True))
    norm_b = sqrt(reduce_sum(mul(b, b), axis=1, keepdims=True))
    denom = add(matmul(norm_a, transpose(norm_b)), Tensor(eps))
    return add(scale(div(dots, denom), -1.0), Tensor(1.0))


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def ffn_op(x, w1, b1, w2, b2) -> Tensor:
    """Two-layer feed-forward block with GELU, fused into one node."""
    x, w1, b1, w2, b2 = (as_tensor(t) for t in (x, w1, b1, w2, b2))
    pre = x.data @ w1.data + b1.data
    inner = _GELU_C * (pre + 0.044715 * pre**3)
    t = np.tanh(inner)
    act = 0.5 * pre * (1.0 + t)
    out = act @ w2.data + b2.data

    def backward_fn(g):
        g_b2 = g.sum(axis=0)
        g_w2 = act.T @ g
        g_act = g @ w2.data.T
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * pre**2)
        g_pre = g_act * (0.5 * (1.0 + t) + 0.5 * pre * (1.0 - t**2) * d_inner)
        return (
            g_pre @ w1.data.T,
            x.data.T @ g_pre,
            g_pre.sum(axis=0),
            g_w2,
            g_b2,
        )

    return _make(out, (x, w1, b1, w2, b2), backward_fn)


def relation_biased_attention_op(z, q_grid, wqs, wks, wvs, wkr, wvr, num_heads: int) -> Tensor:
    """Attention among entity vectors with relation-dependent key/value
    offsets, fused into one node.

    ``z`` is (|V|, d) and ``q_grid`` is (|V|*|V|, d) in row-major (i, j)
    order. Per head: logit(i, j) = dot(z_i Wqs, z_j Wks + q_ij Wkr)/sqrt(d_k),
    output(i) = sum_j softmax_j(logits)(i, j) * (z_j Wvs + q_ij Wvr). Head
    outputs are concatenated; there is no extra output projection.
    """
    z, q_grid = as_tensor(z), as_tensor(q_grid)
    wqs, wks, wvs, wkr, wvr = (as_tensor(t) for t in (wqs, wks, wvs, wkr, wvr))
    nv, d_model = z.data.shape
    if q_grid.data.shape != (nv * nv, d_model):
        raise ShapeError(f"relation grid {q_grid.data.shape} does not match {nv} entities")
    if d_model % num_heads != 0:
        raise ShapeError(f"d_model {d_model} not divisible by {num_heads} heads")
    d_k = d_model // num_heads
    scaling = 1.0 / math.sqrt(d_k)

    def ent_heads(m):
        return m.reshape(nv, num_heads, d_k).transpose(1, 0, 2)

    def grid_heads(m):
        return m.reshape(nv, nv, num_heads, d_k).transpose(2, 0, 1, 3)

    zq = ent_heads(z.data @ wqs.data)
    zk = ent_heads(z.data @ wks.data)
    zv = ent_heads(z.data @ wvs.data)
    qk = grid_heads(q_grid.data @ wkr.data)
    qv = grid_heads(q_grid.data @ wvr.data)
    keys = zk[:, None, :, :] + qk
    vals = zv[:, None, :, :] + qv
    logits = (zq[:, :, None, :] * keys).sum(axis=-1) * scaling
    logits -= logits.max(axis=-1, keepdims=True)
    exp = np.exp(logits)
    beta = exp / exp.sum(axis=-1, keepdims=True)
    pooled = (beta[..., None] * vals).sum(axis=2)
    out = pooled.transpose(1, 0, 2).reshape(nv, d_model)

    def backward_fn(g):
        g_pooled = g.reshape(nv, num_heads, d_k).transpose(1, 0, 2)
        g_beta = (g_pooled[:, :, None, :] * vals).sum(axis=-1)
        g_vals = beta[..., None] * g_pooled[:, :, None, :]
        g_logits = beta * (g_beta - (g_beta * beta).sum(axis=-1, keepdims=True))
        g_logits *= scaling
        g_zq = (g_logits[..., None] * keys).sum(axis=2)
        g_keys = g_logits[..., None] * zq[:, :, None, :]

        def unhead_ent(m):
            return m.transpose(1, 0, 2).reshape(nv, d_model)

        def unhead_grid(m):
            return m.transpose(1, 2, 0, 3).reshape(nv * nv, d_model)

        g_zq = unhead_ent(g_zq)
        g_zk = unhead_ent(g_keys.sum(axis=1))
        g_zv = unhead_ent(g_vals.sum(axis=1))
        g_qk = unhead_grid(g_keys)
        g_qv = unhead_grid(g_vals)
        g_z = g_zq @ wqs.data.T + g_zk @ wks.data.T + g_zv @ wvs.data.T
        g_qgrid = g_qk @ wkr.data.T + g_qv @ wvr.data.T
        return (
            g_z,
            g_qgrid,
            z.data.T @ g_zq,
            z.data.T @ g_zk,
            z.data.T @ g_zv,
            q_grid.data.T @ g_qk,
            q_grid.data.T @ g_qv,
        )

    return _make(out, (z, q_grid, wqs, wks, wvs, wkr, wvr), backward_fn)


def multihead_attention_op(
    x_q,
    x_kv,
    wq,
    wk,
    wv,
    wo,
    num_heads: int,
    blocked=None,
) -> Tensor:
    """Scaled dot-product attention over packed heads, fused into one node.

    ``blocked`` is an optional boolean array broadcastable to
    (1, len_q, len_k): blocked key positions get -inf logits and therefore
    exactly zero attention weight. Head blocks live side by side in the
    (d_model, d_model) projection matrices; head outputs are concatenated and
    passed through the output projection ``wo``.
    """
    x_q, x_kv = as_tensor(x_q), as_tensor(x_kv)
    wq, wk, wv, wo = as_tensor(wq), as_tensor(wk), as_tensor(wv), as_tensor(wo)
    lq, d_model = x_q.data.shape
    lk = x_kv.data.shape[0]
    if x_kv.data.shape[1] != d_model or wq.data.shape != (d_model, d_model):
        raise ShapeError("attention operands disagree on d_model")
    if d_model % num_heads != 0:
        raise ShapeError(f"d_model {d_model} not divisible by {num_heads} heads")
    d_k = d_model // num_heads
    scaling = 1.0 / math.sqrt(d_k)

    def heads(m, length):
        return m.reshape(length, num_heads, d_k).transpose(1, 0, 2)

    q = heads(x_q.data @ wq.data, lq)
    k = heads(x_kv.data @ wk.data, lk)
    v = heads(x_kv.data @ wv.data, lk)
    scores = (q @ k.transpose(0, 2, 1)) * scaling
    if blocked is not None:
        scores = np.where(blocked, -np.inf, scores)
    scores -= scores.max(axis=-1, keepdims=True)
    exp = np.exp(scores)
    probs = exp / exp.sum(axis=-1, keepdims=True)
    context = (probs @ v).transpose(1, 0, 2).reshape(lq, d_model)
    out = context @ wo.data

    def backward_fn(g):
        g_wo = context.T @ g
        g_context = (g @ wo.data.T).reshape(lq, num_heads, d_k).transpose(1, 0, 2)
        g_probs = g_context @ v.transpose(0, 2, 1)
        g_v = probs.transpose(0, 2, 1) @ g_context
        g_scores = probs * (g_probs - (g_probs * probs).sum(axis=-1, keepdims=True))
        g_scores *= scaling
        g_q = g_scores @ k
        g_k = g_scores.transpose(0, 2, 1) @ q

        def unheads(m, length):
            return m.transpose(1, 0, 2).reshape(length, d_model)

        g_q, g_k, g_v = unheads(g_q, lq), unheads(g_k, lk), unheads(g_v, lk)
        g_xq = g_q @ wq.data.T
        g_xkv = g_k @ wk.data.T + g_v @ wv.data.T
        return (
            g_xq,
            g_xkv,
            x_q.data.T @ g_q,
            x_kv.data.T @ g_k,
            x_kv.data.T @ g_v,
            g_wo,
        )

    return _make(out, (x_q, x_kv, wq, wk, wv, wo), backward_fn)


# ---------------------------------------------------------------------------
# backward pass and parameter store

def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.in_graph:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar; may run once per computation graph."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._consumed:
        raise UsageError("backward was already called on this graph; rebuild the forward pass")
    loss._consumed = True
    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
        if node._backward_fn is None:
            continue
        parent_grads = node._backward_fn(g)
        for parent, pg in zip(node._parents, parent_grads):
            if not parent.in_graph:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg


class ParamStore:
    """Named trainable leaf tensors with stable iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise UsageError(f"parameter {name!r} already registered")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def num_values(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# finite-difference gradient checking

class GradCheckReport:
    """Per-parameter maximum relative error of analytic vs numeric gradients."""

    def __init__(self, per_param: dict[str, float], tol: float):
        self.per_param = per_param
        self.tol = tol
        self.max_rel_err = max(per_param.values()) if per_param else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def worst(self) -> str:
        if not self.per_param:
            return "(no parameters)"
        name = max(self.per_param, key=self.per_param.get)
        return f"{name}: {self.per_param[name]:.3e}"

    def format(self) -> str:
        lines = [f"{name}: {err:.3e}" for name, err in self.per_param.items()]
        lines.append(f"max relative error {self.max_rel_err:.3e} (tol {self.tol:.1e})")
        return "\n".join(lines)


def grad_check(f, store: ParamStore, eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of the scalar ``f()`` against central
    differences, element by element, for every parameter in the store.

    ``f`` must be deterministic: it is re-evaluated 2 per element with the
    parameter perturbed in place. The error measure is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1)``, i.e. relative
    above magnitude one and absolute below it, which keeps finite-difference
    round-off from drowning genuinely tiny gradients.
    """
    store.zero_grads()
    loss = f()
    if loss.data.size != 1:
        raise ShapeError("grad_check needs a scalar-valued function")
    backward(loss)
    analytic = {name: t.grad.copy() for name, t in store.items()}

    per_param: dict[str, float] = {}
    two_eps = 2.0 * eps
    with no_grad():
        for name, t in store.items():
            flat = t.data.reshape(-1)
            a_flat = analytic[name].reshape(-1)
            worst = 0.0
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + eps
                f_plus = float(f().data)
                flat[k] = original - eps
                f_minus = float(f().data)
                flat[k] = original
                numeric = (f_plus - f_minus) / two_eps
                a_k = a_flat[k]
                err = abs(a_k - numeric) / max(abs(a_k), abs(numeric), 1.0)
                if err > worst:
                    worst = err
            per_param[name] = worst
    return GradCheckReport(per_param, tol)
