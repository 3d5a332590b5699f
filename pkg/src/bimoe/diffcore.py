"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Only the operations the model actually needs: elementwise arithmetic,
matmul, relu, exp/log/pow, reductions, reshape/concat/slicing, a "same"
1-D convolution, batch norm, and a numerically stable softmax.  The tape
is rebuilt on every forward pass; ``backward()`` on a scalar output
accumulates gradients into every upstream tensor with ``requires_grad``.

``check_gradient`` is the central-finite-difference oracle used across
the test suite.
"""

from __future__ import annotations

import numpy as np

from bimoe import _kernels


class Tensor:
    """Dense float64 array plus the tape bookkeeping for reverse mode."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = tuple(_parents) if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph traversal -------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar output, got shape {self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in node._backward(node.grad):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=(self,), _backward=lambda g: [(self, -g)])

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), -self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, _wrap(other) ** -1.0)

    def __rtruediv__(self, other):
        return mul(_wrap(other), self ** -1.0)

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise TypeError("only scalar exponents are supported")
        e = float(exponent)
        out_data = self.data ** e

        def bw(g):
            return [(self, g * e * self.data ** (e - 1.0))]

        return Tensor(out_data, _parents=(self,), _backward=bw)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        out_data = self.data[key]

        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            return [(self, full)]

        return Tensor(out_data, _parents=(self,), _backward=bw)

    # -- shape ops -------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        out_data = self.data.reshape(shape)
        return Tensor(out_data, _parents=(self,), _backward=lambda g: [(self, g.reshape(src))])

    def flatten(self):
        return self.reshape(-1)

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        out_data = np.transpose(self.data, axes)
        return Tensor(out_data, _parents=(self,), _backward=lambda g: [(self, np.transpose(g, inv))])

    # -- reductions / nonlinearities ------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape

        def bw(g):
            if axis is None:
                return [(self, np.broadcast_to(g, shape).copy())]
            gg = g if keepdims else np.expand_dims(g, axis)
            return [(self, np.broadcast_to(gg, shape).copy())]

        return Tensor(out_data, _parents=(self,), _backward=bw)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def relu(self):
        mask = self.data > 0
        return Tensor(self.data * mask, _parents=(self,), _backward=lambda g: [(self, g * mask)])

    def exp(self):
        out_data = np.exp(self.data)
        return Tensor(out_data, _parents=(self,), _backward=lambda g: [(self, g * out_data)])

    def log(self):
        return Tensor(np.log(self.data), _parents=(self,), _backward=lambda g: [(self, g / self.data)])

    def sqrt(self):
        return self ** 0.5

    def clip_min(self, lo):
        mask = self.data >= lo
        return Tensor(np.maximum(self.data, lo), _parents=(self,),
                      _backward=lambda g: [(self, g * mask)])

    def clip_max(self, hi):
        mask = self.data <= hi
        return Tensor(np.minimum(self.data, hi), _parents=(self,),
                      _backward=lambda g: [(self, g * mask)])

    def detach(self):
        return Tensor(self.data.copy())


class Parameter(Tensor):
    """Named trainable tensor with a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Reduce a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ValueError(f"add: incompatible shapes {a.shape} and {b.shape}") from None

    def bw(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))]

    return Tensor(out_data, _parents=(a, b), _backward=bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data * b.data
    except ValueError:
        raise ValueError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None

    def bw(g):
        return [(a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape))]

    return Tensor(out_data, _parents=(a, b), _backward=bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return [(a, _unbroadcast(ga, a.shape)), (b, _unbroadcast(gb, b.shape))]

    return Tensor(out_data, _parents=(a, b), _backward=bw)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        out = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            out.append((t, g[tuple(idx)]))
        return out

    return Tensor(out_data, _parents=tuple(tensors), _backward=bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = x - Tensor(np.max(x.data, axis=axis, keepdims=True))
    e = shift.exp()
    return e / e.sum(axis=axis, keepdims=True)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """"Same" 1-D convolution: x (B,C_in,T) or (C_in,T), kernels (C_out,C_in,K)."""
    k = kernels.shape[-1]
    if k % 2 == 0:
        raise ValueError(f"conv1d: kernel size must be odd, got {k}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernels.ndim != 3:
        raise ValueError(f"conv1d: expected 3-D input/kernels, got {x.shape} and {kernels.shape}")
    if xd.shape[1] != kernels.shape[1]:
        raise ValueError(f"conv1d: C_in mismatch between input {x.shape} and kernels {kernels.shape}")
    if bias.shape != (kernels.shape[0],):
        raise ValueError(f"conv1d: bias shape {bias.shape} does not match C_out {kernels.shape[0]}")
    xd = np.ascontiguousarray(xd)
    kd = np.ascontiguousarray(kernels.data)
    out_data = _kernels.conv1d_forward(xd, kd, np.ascontiguousarray(bias.data))
    if squeeze:
        out_data = out_data[0]

    def bw(g):
        gd = np.ascontiguousarray(g[None] if squeeze else g)
        gx = _kernels.conv1d_backward_input(gd, kd)
        gk = _kernels.conv1d_backward_kernels(gd, xd, k)
        gb = gd.sum(axis=(0, 2))
        return [(x, gx[0] if squeeze else gx), (kernels, gk), (bias, gb)]

    return Tensor(out_data, _parents=(x, kernels, bias), _backward=bw)


class BatchNormState:
    """Running statistics for one batch-norm site."""

    def __init__(self, num_features):
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, training: bool,
               state: BatchNormState, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch norm over (B,F) per feature or (B,C,T) per channel.

    Biased variance; running stats updated in train mode only.
    """
    if x.ndim == 2:
        axes, pshape = (0,), (1, -1)
    elif x.ndim == 3:
        axes, pshape = (0, 2), (1, -1, 1)
    else:
        raise ValueError(f"batch_norm: expected 2-D or 3-D input, got {x.shape}")
    if training:
        if x.shape[0] < 2:
            raise ValueError("batch_norm: train mode needs batch size >= 2")
        mu = x.mean(axis=axes, keepdims=True)
        var = ((x - mu) * (x - mu)).mean(axis=axes, keepdims=True)
        state.running_mean = (1 - momentum) * state.running_mean + momentum * mu.data.reshape(-1)
        state.running_var = (1 - momentum) * state.running_var + momentum * var.data.reshape(-1)
    else:
        mu = Tensor(state.running_mean.reshape(pshape))
        var = Tensor(state.running_var.reshape(pshape))
    xhat = (x - mu) * ((var + eps) ** -0.5)
    return xhat * gamma.reshape(pshape) + beta.reshape(pshape)


_PRIMITIVES = {
    "matmul": lambda inputs, axis: matmul(*inputs),
    "add": lambda inputs, axis: add(*inputs),
    "relu": lambda inputs, axis: inputs[0].relu(),
    "concat": lambda inputs, axis: concat(inputs, axis=axis if axis is not None else 0),
    "mean": lambda inputs, axis: inputs[0].mean(axis=axis),
    "flatten": lambda inputs, axis: inputs[0].flatten(),
    "linear": lambda inputs, axis: linear(*inputs),
}


def primitive_forward(kind: str, *inputs, axis=None) -> Tensor:
    """Uniform dispatch used by callers that build graphs by op name."""
    if kind not in _PRIMITIVES:
        raise ValueError(f"unknown primitive kind: {kind!r}")
    return _PRIMITIVES[kind]([_wrap(i) for i in inputs], axis)


def check_gradient(f, x: Tensor, h: float = 1e-5, max_coords: int | None = None,
                   rng: np.random.Generator | None = None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` must map ``x`` to a scalar Tensor built from module operations.
    With ``max_coords`` set, only a seeded random subset of coordinates is
    probed (the analytic gradient is still the full one).
    """
    x = Tensor(x.data.copy(), requires_grad=True)
    out = f(x)
    if out.data.size != 1:
        raise ValueError(f"check_gradient: f must be scalar-valued, got shape {out.shape}")
    out.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    n = flat.size
    if max_coords is not None and max_coords < n:
        gen = rng if rng is not None else np.random.default_rng(0)
        coords = gen.choice(n, size=max_coords, replace=False)
    else:
        coords = range(n)

    max_err = 0.0
    analytic_flat = analytic.reshape(-1)
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(Tensor(x.data)).data)
        flat[i] = orig - h
        fm = float(f(Tensor(x.data)).data)
        flat[i] = orig
        numeric = (fp - fm) / (2 * h)
        err = abs(analytic_flat[i] - numeric) / max(1.0, abs(numeric))
        max_err = max(max_err, err)
    return max_err
