"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Only the operations the training losses actually need are provided. A tensor
without ``requires_grad`` is a plain constant: no graph is recorded through
it, so teacher-side computations cost nothing at backward time.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateVector, IndexOutOfRange, NotScalar, ShapeMismatch

ETA_NORM = 1e-12


class Tensor:
    """A float64 array plus an optional backward closure.

    The graph is held through ``_parents`` references; ``backward`` does an
    iterative topological sort, so it visits each node exactly once and is
    deterministic.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.shape != ():
            raise NotScalar(f"backward requires a scalar, got shape {self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accum(np.ones(()))
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # convenience operators (scalar "other" allowed for * and /)
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return scale(self, 1.0 / float(other))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data, parents, backward_fn):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def add(a, b):
    """Elementwise sum; a 1-D bias may be broadcast over the rows of a 2-D tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        def bwd(g):
            if a.requires_grad:
                a._accum(g)
            if b.requires_grad:
                b._accum(g)
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        def bwd(g):
            if a.requires_grad:
                a._accum(g)
            if b.requires_grad:
                b._accum(g.sum(axis=0))
    else:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
    return _node(a.data + b.data, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}")

    def bwd(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(-g)

    return _node(a.data - b.data, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}")

    def bwd(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)

    return _node(a.data * b.data, (a, b), bwd)


def scale(a, c):
    a = as_tensor(a)
    c = float(c)

    def bwd(g):
        a._accum(g * c)

    return _node(a.data * c, (a,), bwd)


def matmul(a, b):
    """2-D @ 2-D or 2-D @ 1-D product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ShapeMismatch(f"matmul: ndim {a.data.ndim} @ {b.data.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: inner dims {a.shape} @ {b.shape}")

    if b.data.ndim == 2:
        def bwd(g):
            if a.requires_grad:
                a._accum(g @ b.data.T)
            if b.requires_grad:
                b._accum(a.data.T @ g)
    else:
        def bwd(g):
            if a.requires_grad:
                a._accum(np.outer(g, b.data))
            if b.requires_grad:
                b._accum(a.data.T @ g)

    return _node(a.data @ b.data, (a, b), bwd)


def dot(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatch(f"dot: {a.shape} vs {b.shape}")

    def bwd(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)

    return _node(np.dot(a.data, b.data), (a, b), bwd)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)

    def bwd(g):
        a._accum(g * (1.0 - y * y))

    return _node(y, (a,), bwd)


def softplus(a):
    """Elementwise log(1 + exp(x)), computed stably for large |x|."""
    a = as_tensor(a)
    y = np.logaddexp(0.0, a.data)
    sig = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        a._accum(g * sig)

    return _node(y, (a,), bwd)


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)

    def bwd(g):
        a._accum(g * y)

    return _node(y, (a,), bwd)


def log(a):
    a = as_tensor(a)

    def bwd(g):
        a._accum(g / a.data)

    return _node(np.log(a.data), (a,), bwd)


def tsum(a):
    a = as_tensor(a)

    def bwd(g):
        a._accum(np.full_like(a.data, float(g)))

    return _node(a.data.sum(), (a,), bwd)


def mean_rows(a):
    """Mean over axis 0 of a 2-D tensor (temporal pooling)."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"mean_rows expects 2-D, got {a.shape}")
    t = a.shape[0]

    def bwd(g):
        a._accum(np.broadcast_to(g / t, a.data.shape).copy())

    return _node(a.data.mean(axis=0), (a,), bwd)


def l2_normalize(v):
    """Normalize a vector to unit length; full Jacobian (I - uu^T)/||v||."""
    v = as_tensor(v)
    if v.data.ndim != 1:
        raise ShapeMismatch(f"l2_normalize expects 1-D, got {v.shape}")
    n = np.linalg.norm(v.data)
    if n < ETA_NORM:
        raise DegenerateVector(f"norm {n} below floor {ETA_NORM}")
    u = v.data / n

    def bwd(g):
        v._accum((g - u * np.dot(u, g)) / n)

    return _node(u, (v,), bwd)


def cosine_similarity(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatch(f"cosine_similarity: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a.data)
    nb = np.linalg.norm(b.data)
    if na < ETA_NORM or nb < ETA_NORM:
        raise DegenerateVector("cosine_similarity on near-zero vector")
    c = np.dot(a.data, b.data) / (na * nb)

    def bwd(g):
        g = float(g)
        if a.requires_grad:
            a._accum(g * (b.data / (na * nb) - c * a.data / (na * na)))
        if b.requires_grad:
            b._accum(g * (a.data / (na * nb) - c * b.data / (nb * nb)))

    return _node(c, (a, b), bwd)


def softmax_temp(logits, tau):
    """Temperature softmax over a 1-D tensor; subtract-max stabilized."""
    logits = as_tensor(logits)
    if logits.data.ndim != 1:
        raise ShapeMismatch(f"softmax_temp expects 1-D, got {logits.shape}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    z = logits.data / tau
    z = z - z.max()
    e = np.exp(z)
    y = e / e.sum()

    def bwd(g):
        logits._accum(y * (g - np.dot(g, y)) / tau)

    return _node(y, (logits,), bwd)


def softmax_rows(a):
    """Row-wise softmax of a 2-D tensor (used by the temporal mixing layer)."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"softmax_rows expects 2-D, got {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        a._accum(y * (g - (g * y).sum(axis=1, keepdims=True)))

    return _node(y, (a,), bwd)


def cross_entropy(x, target, from_logits=False):
    """-log p(target); x is a probability vector, or logits with from_logits."""
    x = as_tensor(x)
    if x.data.ndim != 1:
        raise ShapeMismatch(f"cross_entropy expects 1-D, got {x.shape}")
    k = x.shape[0]
    if not (isinstance(target, (int, np.integer)) and 0 <= target < k):
        raise IndexOutOfRange(f"class index {target} for {k} classes")
    if from_logits:
        z = x.data - x.data.max()
        lse = np.log(np.exp(z).sum())
        p = np.exp(z - lse)
        loss = lse - z[target]

        def bwd(g):
            gz = p.copy()
            gz[target] -= 1.0
            x._accum(float(g) * gz)
    else:
        loss = -np.log(x.data[target])

        def bwd(g):
            gz = np.zeros_like(x.data)
            gz[target] = -float(g) / x.data[target]
            x._accum(gz)

    return _node(loss, (x,), bwd)


def rowwise_cosine(q, k):
    """Per-row cosine similarity of two T x D tensors, returning a T-vector."""
    q, k = as_tensor(q), as_tensor(k)
    if q.data.ndim != 2 or q.shape != k.shape:
        raise ShapeMismatch(f"rowwise_cosine: {q.shape} vs {k.shape}")
    nq = np.linalg.norm(q.data, axis=1)
    nk = np.linalg.norm(k.data, axis=1)
    if nq.min() < ETA_NORM or nk.min() < ETA_NORM:
        raise DegenerateVector("rowwise_cosine on near-zero row")
    c = (q.data * k.data).sum(axis=1) / (nq * nk)

    def bwd(g):
        if q.requires_grad:
            q._accum(g[:, None] * (k.data / (nq * nk)[:, None]
                                   - (c / (nq * nq))[:, None] * q.data))
        if k.requires_grad:
            k._accum(g[:, None] * (q.data / (nq * nk)[:, None]
                                   - (c / (nk * nk))[:, None] * k.data))

    return _node(c, (q, k), bwd)


def scale_rows(a, w):
    """Multiply row t of a 2-D tensor by scalar weight w[t]."""
    a, w = as_tensor(a), as_tensor(w)
    if a.data.ndim != 2 or w.data.ndim != 1 or a.shape[0] != w.shape[0]:
        raise ShapeMismatch(f"scale_rows: {a.shape} vs {w.shape}")

    def bwd(g):
        if a.requires_grad:
            a._accum(g * w.data[:, None])
        if w.requires_grad:
            w._accum((g * a.data).sum(axis=1))

    return _node(a.data * w.data[:, None], (a, w), bwd)


def gradcheck(f, point, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    p = Tensor(np.array(point.data if isinstance(point, Tensor) else point,
                        dtype=np.float64), requires_grad=True)
    out = f(p)
    out.backward()
    analytic = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
    worst = 0.0
    for idx in np.ndindex(p.data.shape):
        keep = p.data[idx]
        p.data[idx] = keep + eps
        f_plus = float(f(p).data)
        p.data[idx] = keep - eps
        f_minus = float(f(p).data)
        p.data[idx] = keep
        numeric = (f_plus - f_minus) / (2.0 * eps)
        err = abs(analytic[idx] - numeric) / max(1.0, abs(analytic[idx]))
        worst = max(worst, err)
    return worst
