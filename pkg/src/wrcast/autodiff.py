"""Reverse-mode automatic differentiation on fp64 numpy arrays.

A Tape records primitive operations in construction (topological) order
with parent indices; backward seeds the loss adjoint with 1 and sweeps
the list in reverse, accumulating into Parameter.grad buffers. The
primitive set is exactly what the forecasting network needs: add, mul,
matmul, dilated causal conv, relu, softmax, reductions, shape plumbing
and the pinball loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import ConfigError, TrainingError, WrcastError


class StateError(WrcastError):
    """Backward invoked without a recorded forward pass."""


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, float)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


class Tape:
    """Wengert list; node handles are plain integers."""

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.parents: list[tuple] = []
        self.vjps: list = []
        self.params: dict[int, Parameter] = {}

    def _push(self, value, parents=(), vjp=None) -> int:
        self.values.append(np.asarray(value, float))
        self.parents.append(tuple(parents))
        self.vjps.append(vjp)
        return len(self.values) - 1

    def value(self, idx: int) -> np.ndarray:
        return self.values[idx]

    # ---- leaves

    def constant(self, x) -> int:
        return self._push(x)

    def param(self, p: Parameter) -> int:
        idx = self._push(p.value)
        self.params[idx] = p
        return idx

    # ---- arithmetic

    def add(self, a: int, b: int) -> int:
        va, vb = self.values[a], self.values[b]

        def vjp(g):
            return _unbroadcast(g, va.shape), _unbroadcast(g, vb.shape)
        return self._push(va + vb, (a, b), vjp)

    def mul(self, a: int, b: int) -> int:
        va, vb = self.values[a], self.values[b]

        def vjp(g):
            return (_unbroadcast(g * vb, va.shape),
                    _unbroadcast(g * va, vb.shape))
        return self._push(va * vb, (a, b), vjp)

    def matmul(self, a: int, b: int) -> int:
        """a: (..., I), b: (I, O)."""
        va, vb = self.values[a], self.values[b]

        def vjp(g):
            ga = g @ vb.T
            lead = tuple(range(va.ndim - 1))
            gb = np.tensordot(va, g, axes=(lead, lead))
            return ga, gb
        return self._push(va @ vb, (a, b), vjp)

    def conv1d_causal(self, x: int, w: int, b: int, dilation: int) -> int:
        """x: (B, T, Cin), w: (K, Cin, Cout), b: (Cout,)."""
        vx, vw, vb = self.values[x], self.values[w], self.values[b]
        out = kernels.conv1d_causal_forward(
            np.ascontiguousarray(vx), np.ascontiguousarray(vw),
            np.ascontiguousarray(vb), dilation)

        def vjp(g):
            return kernels.conv1d_causal_backward(
                np.ascontiguousarray(vx), np.ascontiguousarray(vw),
                np.ascontiguousarray(g), dilation)
        return self._push(out, (x, w, b), vjp)

    def relu(self, a: int) -> int:
        va = self.values[a]
        mask = va > 0

        def vjp(g):
            return (g * mask,)
        return self._push(np.where(mask, va, 0.0), (a,), vjp)

    def softmax(self, a: int) -> int:
        """Softmax over the last axis."""
        va = self.values[a]
        z = va - va.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)

        def vjp(g):
            dot = (g * y).sum(axis=-1, keepdims=True)
            return (y * (g - dot),)
        return self._push(y, (a,), vjp)

    # ---- shape plumbing

    def reshape(self, a: int, shape) -> int:
        va = self.values[a]

        def vjp(g):
            return (g.reshape(va.shape),)
        return self._push(va.reshape(shape), (a,), vjp)

    def concat(self, nodes, axis: int = -1) -> int:
        vals = [self.values[i] for i in nodes]
        sizes = [v.shape[axis] for v in vals]

        def vjp(g):
            return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))
        return self._push(np.concatenate(vals, axis=axis), tuple(nodes), vjp)

    def slice_last_axis(self, a: int, lo: int, hi: int) -> int:
        va = self.values[a]

        def vjp(g):
            out = np.zeros_like(va)
            out[..., lo:hi] = g
            return (out,)
        return self._push(va[..., lo:hi], (a,), vjp)

    def take_last_time(self, a: int) -> int:
        """(B, T, F) -> (B, F) at the final time step."""
        va = self.values[a]

        def vjp(g):
            out = np.zeros_like(va)
            out[:, -1, :] = g
            return (out,)
        return self._push(va[:, -1, :], (a,), vjp)

    def expand_time(self, a: int, steps: int) -> int:
        """(B, F) -> (B, steps, F) by repetition."""
        va = self.values[a]

        def vjp(g):
            return (g.sum(axis=1),)
        return self._push(np.repeat(va[:, None, :], steps, axis=1), (a,), vjp)

    def sum_axis(self, a: int, axis: int) -> int:
        va = self.values[a]

        def vjp(g):
            return (np.broadcast_to(np.expand_dims(g, axis), va.shape).copy(),)
        return self._push(va.sum(axis=axis), (a,), vjp)

    # ---- loss

    def quantile_loss_mean(self, yhat: int, y, p: float) -> int:
        """Mean pinball loss at quantile p against constant targets.

        At the kink the subgradient takes the over-forecast branch:
        d/dyhat = (1 - p) when yhat >= y, -p otherwise.
        """
        if not 0.0 < p < 1.0:
            raise ConfigError(f"quantile p={p} outside (0, 1)")
        vy = np.asarray(y, float)
        vh = self.values[yhat]
        diff = vy - vh
        loss = np.mean(np.where(diff > 0, p * diff, (p - 1.0) * diff))
        scale = 1.0 / vh.size

        def vjp(g):
            d = np.where(diff > 0, -p, 1.0 - p) * scale
            return (g * d,)
        return self._push(loss, (yhat,), vjp)

    # ---- backward

    def backward(self, loss: int):
        """Populate adjoints; loss must be a scalar node on this tape."""
        if not self.values:
            raise StateError("backward before forward: tape is empty")
        if not 0 <= loss < len(self.values):
            raise StateError("loss node is not on this tape")
        if self.values[loss].ndim != 0:
            raise TrainingError("backward target must be scalar")
        adjoint = [None] * len(self.values)
        adjoint[loss] = np.asarray(1.0)
        for i in range(loss, -1, -1):
            g = adjoint[i]
            if g is None:
                continue
            p = self.params.get(i)
            if p is not None:
                p.grad += g
            if self.vjps[i] is None:
                continue
            for parent, gp in zip(self.parents[i], self.vjps[i](g)):
                if adjoint[parent] is None:
                    adjoint[parent] = np.asarray(gp, float).copy()
                else:
                    adjoint[parent] = adjoint[parent] + gp
        self._adjoint = adjoint
        return adjoint


class Adam:
    """Adam with bias correction; deterministic parameter order."""

    def __init__(self, params: dict, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if learning_rate < 0:
            raise ConfigError("learning rate must be nonnegative")
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad[...] = 0.0

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name in sorted(self.params):
            p = self.params[name]
            if not np.all(np.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient in {name}")
            m = self._m[name]
            v = self._v[name]
            m[...] = self.beta1 * m + (1.0 - self.beta1) * p.grad
            v[...] = self.beta2 * v + (1.0 - self.beta2) * p.grad ** 2
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
