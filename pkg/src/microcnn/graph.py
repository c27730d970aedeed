"""Runtime layer graph: shape-checked layer objects bound to named parameters.

A :class:`Node` knows its per-sample input/output shapes ``(C, H, W)``,
the names and shapes of the parameters it reads from a
:class:`ParamStore`, and how to run forward/backward on a batch. Nodes
keep the backward cache of their last train-phase forward on ``self``,
so a graph instance belongs to one thread at a time.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .tensor_core import ShapeError


@dataclass
class CostRow:
    name: str
    kind: str
    params: int
    macs: int
    ops: int
    out_shape: tuple


class ParamStore(OrderedDict):
    """Ordered ``name -> ndarray`` mapping.

    Trainable parameters and non-trainable state (batch-norm running
    statistics) live side by side; ``trainable`` lists the former.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.trainable: list[str] = []

    def add(self, name, value, trainable=True):
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        self[name] = value
        if trainable:
            self.trainable.append(name)

    def trainable_items(self):
        return [(k, self[k]) for k in self.trainable]

    def n_trainable(self) -> int:
        return sum(self[k].size for k in self.trainable)

    def copy(self) -> "ParamStore":
        out = ParamStore((k, v.copy()) for k, v in self.items())
        out.trainable = list(self.trainable)
        return out

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore((k, v.astype(dtype)) for k, v in self.items())
        out.trainable = list(self.trainable)
        return out


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Node:
    kind = "node"

    def __init__(self, name, in_shape):
        self.name = name
        self.in_shape = tuple(in_shape)
        self.out_shape = self.in_shape

    def param_specs(self):
        """List of ``(name, shape, trainable, init)`` tuples."""
        return []

    def init_params(self, store: ParamStore, rng, dtype):
        for name, shape, trainable, init in self.param_specs():
            store.add(name, init(rng, shape, dtype), trainable)

    def forward(self, x, params, train=False):
        raise NotImplementedError

    def backward(self, dy, params, grads):
        raise NotImplementedError

    def n_params(self):
        return sum(int(np.prod(s)) for _, s, t, _ in self.param_specs() if t)

    def cost_rows(self):
        return [CostRow(self.name, self.kind, self.n_params(), self.macs(), self.ops(), self.out_shape)]

    def macs(self):
        return 0

    def ops(self):
        return 0

    def out_size(self):
        return int(np.prod(self.out_shape))

    def pattern(self):
        """Piecewise-linear region of the last train forward (ReLU masks, pool switches)."""
        return []


def _zeros(rng, shape, dtype):
    return np.zeros(shape, dtype=dtype)


def _ones(rng, shape, dtype):
    return np.ones(shape, dtype=dtype)


class Conv(Node):
    kind = "conv"

    def __init__(self, name, in_shape, spec: L.ConvSpec):
        super().__init__(name, in_shape)
        self.spec = spec
        c, h, w = self.in_shape
        self.out_shape = (spec.out_channels, *spec.output_hw(h, w))
        self.w_name, self.b_name = f"{name}.w", f"{name}.b"

    def param_specs(self):
        kh, kw = self.spec.kernel
        o, c = self.spec.out_channels, self.in_shape[0]

        def init_w(rng, shape, dtype):
            return glorot_uniform(rng, shape, c * kh * kw, o * kh * kw, dtype)

        return [(self.w_name, (o, c, kh, kw), True, init_w), (self.b_name, (o,), True, _zeros)]

    def forward(self, x, params, train=False):
        self._x = x if train else None
        return L.conv2d_forward(x, params[self.w_name], params[self.b_name], self.spec.padding)

    def backward(self, dy, params, grads):
        dx, dw, db = L.conv2d_backward(self._x, params[self.w_name], self.spec.padding, dy)
        grads[self.w_name] += dw
        grads[self.b_name] += db
        return dx

    def macs(self):
        kh, kw = self.spec.kernel
        o, ho, wo = self.out_shape
        return kh * kw * self.in_shape[0] * o * ho * wo


class BatchNorm(Node):
    kind = "batchnorm"

    def __init__(self, name, in_shape, spec: L.BatchNormSpec):
        super().__init__(name, in_shape)
        self.spec = spec
        self.length = (1, *self.in_shape)[spec.axis]
        self.names = {k: f"{name}.{k}" for k in ("gamma", "beta", "mean", "var")}
        self.stat_sink = None  # when a list, batch statistics go here instead of the running averages

    def param_specs(self):
        n, s = self.names, (self.length,)
        return [
            (n["gamma"], s, True, _ones),
            (n["beta"], s, True, _zeros),
            (n["mean"], s, False, _zeros),
            (n["var"], s, False, _ones),
        ]

    def forward(self, x, params, train=False):
        n = self.names
        y, cache = L.batchnorm_forward(
            x, params[n["gamma"]], params[n["beta"]], params[n["mean"]], params[n["var"]],
            self.spec, "train" if train else "infer",
        )
        if train:
            self._cache = cache
            if self.stat_sink is not None:
                self.stat_sink.append((x.shape[0], cache["mean"], cache["var"]))
            else:
                params[n["mean"]], params[n["var"]] = L.update_running_stats(
                    params[n["mean"]], params[n["var"]], cache, self.spec.momentum
                )
        return y

    def backward(self, dy, params, grads):
        dx, dg, db = L.batchnorm_backward(self._cache, dy)
        grads[self.names["gamma"]] += dg
        grads[self.names["beta"]] += db
        return dx

    def ops(self):
        return 2 * self.out_size()


class Activation(Node):
    kind = "relu"

    def __init__(self, name, in_shape, fn="relu"):
        super().__init__(name, in_shape)
        self.fn, self.fn_backward = L.ACTIVATIONS[fn]
        self.kind = fn

    def forward(self, x, params, train=False):
        self._x = x if train else None
        return self.fn(x)

    def backward(self, dy, params, grads):
        return self.fn_backward(self._x, dy)

    def pattern(self):
        return [self._x > 0]

    def ops(self):
        return self.out_size()


class MaxPool(Node):
    kind = "maxpool"

    def __init__(self, name, in_shape):
        super().__init__(name, in_shape)
        c, h, w = self.in_shape
        if h < 2 or w < 2:
            raise ShapeError(f"spatial extent exhausted: cannot max-pool a {h}x{w} map at {name}")
        self.out_shape = (c, h // 2, w // 2)

    def forward(self, x, params, train=False):
        y, sw = L.maxpool2x2_forward(x)
        self._switches = sw if train else None
        return y

    def backward(self, dy, params, grads):
        return L.maxpool2x2_backward(self._switches, dy)

    def pattern(self):
        return [self._switches[0]]

    def ops(self):
        # three comparisons per 2x2 cell
        return 3 * self.out_size()


class GlobalAvgPool(Node):
    kind = "gap"

    def __init__(self, name, in_shape):
        super().__init__(name, in_shape)
        self.out_shape = (self.in_shape[0], 1, 1)

    def forward(self, x, params, train=False):
        self._shape = x.shape
        return L.global_avg_pool(x)

    def backward(self, dy, params, grads):
        return L.global_avg_pool_backward(self._shape, dy)

    def ops(self):
        return int(np.prod(self.in_shape))


class Softmax(Node):
    kind = "softmax"

    def __init__(self, name, in_shape):
        super().__init__(name, in_shape)
        if self.in_shape[1:] != (1, 1):
            raise ShapeError(f"softmax at {name} needs a spatially reduced input, got {self.in_shape}")

    def forward(self, x, params, train=False):
        return L.softmax(x)

    def backward(self, dy, params, grads):
        raise RuntimeError("softmax is fused with the cross-entropy loss during training")

    def ops(self):
        return self.out_size()


class Flatten(Node):
    kind = "flatten"

    def __init__(self, name, in_shape):
        super().__init__(name, in_shape)
        self.out_shape = (int(np.prod(self.in_shape)), 1, 1)

    def forward(self, x, params, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1, 1, 1)

    def backward(self, dy, params, grads):
        return dy.reshape(self._shape)


class Dense(Node):
    kind = "dense"

    def __init__(self, name, in_shape, units):
        super().__init__(name, in_shape)
        if units < 1:
            raise ValueError("dense layer needs at least one unit")
        self.units = units
        self.fan_in = int(np.prod(self.in_shape))
        self.out_shape = (units, 1, 1)
        self.w_name, self.b_name = f"{name}.w", f"{name}.b"

    def param_specs(self):
        def init_w(rng, shape, dtype):
            return glorot_uniform(rng, shape, self.fan_in, self.units, dtype)

        return [(self.w_name, (self.units, self.fan_in), True, init_w), (self.b_name, (self.units,), True, _zeros)]

    def forward(self, x, params, train=False):
        self._x = x if train else None
        y = L.dense_forward(x, params[self.w_name], params[self.b_name])
        return y.reshape(x.shape[0], self.units, 1, 1)

    def backward(self, dy, params, grads):
        dx, dw, db = L.dense_backward(self._x, params[self.w_name], dy.reshape(dy.shape[0], -1))
        grads[self.w_name] += dw
        grads[self.b_name] += db
        return dx

    def macs(self):
        return self.fan_in * self.units


class Sequence(Node):
    """Nodes applied one after another; shapes are chained at construction."""

    kind = "sequence"

    def __init__(self, name, in_shape, children=()):
        super().__init__(name, in_shape)
        self.children = []
        for child in children:
            self.append(child)

    def append(self, node):
        if node.in_shape != self.out_shape:
            raise ShapeError(f"{node.name} expects input {node.in_shape}, got {self.out_shape}")
        self.children.append(node)
        self.out_shape = node.out_shape
        return node

    def param_specs(self):
        return [p for c in self.children for p in c.param_specs()]

    def forward(self, x, params, train=False):
        for c in self.children:
            x = c.forward(x, params, train)
        return x

    def backward(self, dy, params, grads):
        for c in reversed(self.children):
            dy = c.backward(dy, params, grads)
        return dy

    def cost_rows(self):
        return [r for c in self.children for r in c.cost_rows()]

    def walk(self):
        for c in self.children:
            yield c
            if isinstance(c, Sequence):
                yield from c.walk()

    def pattern(self):
        return [p for c in self.children for p in c.pattern()]


class Merge(Node):
    """Two branches on the same input, outputs concatenated along channels."""

    kind = "merge"

    def __init__(self, name, in_shape, left: Node, right: Node, activation="relu"):
        super().__init__(name, in_shape)
        if left.in_shape != self.in_shape or right.in_shape != self.in_shape:
            raise ShapeError(f"branches of {name} must consume {self.in_shape}")
        if left.out_shape[1:] != right.out_shape[1:]:
            raise ShapeError(f"branches of {name} disagree spatially: {left.out_shape} vs {right.out_shape}")
        self.left, self.right = left, right
        merged = (left.out_shape[0] + right.out_shape[0], *left.out_shape[1:])
        self.out_shape = merged
        self.act = Activation(f"{name}.relu", merged, activation) if activation else None

    def param_specs(self):
        return self.left.param_specs() + self.right.param_specs()

    def forward(self, x, params, train=False):
        y = L.concat_channels(self.left.forward(x, params, train), self.right.forward(x, params, train))
        return self.act.forward(y, params, train) if self.act else y

    def backward(self, dy, params, grads):
        if self.act:
            dy = self.act.backward(dy, params, grads)
        da, db = L.concat_channels_backward(self.left.out_shape[0], dy)
        return self.left.backward(da, params, grads) + self.right.backward(db, params, grads)

    def cost_rows(self):
        rows = self.left.cost_rows() + self.right.cost_rows()
        rows.append(CostRow(f"{self.name}.concat", "concat", 0, 0, 0, self.out_shape))
        if self.act:
            rows.extend(self.act.cost_rows())
        return rows

    def pattern(self):
        return self.left.pattern() + self.right.pattern() + (self.act.pattern() if self.act else [])
