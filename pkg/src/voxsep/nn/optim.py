"""Parameter containers and the Adam optimizer."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import StateError
from .tensor import Tensor


class ParameterSet:
    """Named trainable tensors plus Adam moments and the step counter."""

    def __init__(self, params=None):
        self.params = OrderedDict()
        self.step_count = 0
        self.m = {}
        self.v = {}
        for name, t in (params or {}).items():
            self.add(name, t)

    def add(self, name, value) -> Tensor:
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        t.name = name
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name):
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def count(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def snapshot(self) -> dict:
        return {k: t.data.copy() for k, t in self.params.items()}

    def restore(self, snap: dict):
        for k, arr in snap.items():
            self.params[k].data[...] = arr


def adam_step(params: ParameterSet, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> ParameterSet:
    for name, t in params.items():
        if t.grad is None:
            raise StateError(f"parameter '{name}' has no gradient")
    params.step_count += 1
    k = params.step_count
    c1 = 1.0 - beta1 ** k
    c2 = 1.0 - beta2 ** k
    for name, t in params.items():
        g = t.grad
        m, v = params.m[name], params.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        t.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(t.dtype)
    return params
