"""A :class:`NetworkSpec` bound to a parameter store, ready to run."""

from __future__ import annotations

import numpy as np

from .graph import ParamStore, Softmax
from .layers import softmax
from .tensor_core import ShapeError, default_dtype, ensure_finite


class Network:
    """Executable network.

    ``forward`` returns class probabilities of shape ``(N, c, 1, 1)``.
    Training goes through ``logits``/``backward``: the final softmax is
    fused with the loss, so ``backward`` takes the gradient with respect
    to the pre-softmax scores.
    """

    def __init__(self, spec, params: ParamStore | None = None, seed: int = 0, dtype=None):
        self.spec = spec
        self.graph = spec.graph()
        self.body = self.graph.children[:-1]
        assert isinstance(self.graph.children[-1], Softmax)
        dtype = np.dtype(dtype or default_dtype())
        if params is None:
            params = ParamStore()
            rng = np.random.default_rng(seed)
            self.graph.init_params(params, rng, dtype)
        else:
            self._check_params(params)
        self.params = params
        self.dtype = np.dtype(params[next(iter(params))].dtype) if params else dtype

    def _check_params(self, params):
        expected = {name: (shape, trainable) for name, shape, trainable, _ in self.graph.param_specs()}
        missing = set(expected) - set(params)
        extra = set(params) - set(expected)
        if missing or extra:
            raise ShapeError(f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, (shape, _) in expected.items():
            if params[name].shape != tuple(shape):
                raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {params[name].shape}")
        params.trainable = [n for n, (_, t) in expected.items() if t]

    def _check_input(self, x):
        if x.ndim != 4 or x.shape[1:] != self.spec.input[1:]:
            raise ShapeError(f"expected input (N, {', '.join(map(str, self.spec.input[1:]))}), got {x.shape}")
        return x.astype(self.dtype, copy=False)

    def logits(self, x, train=False):
        x = self._check_input(x)
        for node in self.body:
            x = node.forward(x, self.params, train)
        return x

    def forward(self, x, train=False):
        return softmax(self.logits(x, train))

    __call__ = forward

    def predict(self, x):
        p = self.forward(x)
        return p[:, :, 0, 0].argmax(axis=1)

    def backward(self, dlogits):
        """Accumulate parameter gradients for the last train-phase forward."""
        grads = {name: np.zeros_like(value) for name, value in self.params.trainable_items()}
        dy = dlogits
        for node in reversed(self.body):
            dy = node.backward(dy, self.params, grads)
        for name, g in grads.items():
            ensure_finite(g, f"gradient of {name}")
        return grads, dy

    def n_params(self):
        return self.params.n_trainable()
