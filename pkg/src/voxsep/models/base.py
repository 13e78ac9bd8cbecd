"""Model container shared by both architectures, plus model checkpoints."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .. import nn
from ..errors import ConfigError, FormatError, ShapeError
from ..nn import checkpoint as nn_ckpt
from ..nn import functional as F
from ..nn.tensor import Tensor

MODEL_MAGIC = b"VXMD"


def masked_l1_loss(mask, X, Y):
    """Mean over elements of ``|mask * X - Y|``."""
    X = X if isinstance(X, Tensor) else Tensor(np.asarray(X, dtype=mask.dtype))
    Y = Y if isinstance(Y, Tensor) else Tensor(np.asarray(Y, dtype=mask.dtype))
    if not (mask.shape == X.shape == Y.shape):
        raise ShapeError(f"mask {mask.shape}, X {X.shape} and Y {Y.shape} must match")
    return F.mean(F.abs(F.sub(F.mul(mask, X), Y)))


class ModelGraph:
    """Parameters, running buffers and a forward function.

    Subclasses implement :meth:`forward` and :meth:`loss`; ``trained`` is
    set once parameters come from training or a checkpoint.
    """

    kind = "base"
    config_type = None

    def __init__(self, config, dtype=np.float32, seed=0):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params = nn.ParameterSet()
        self.buffers = {}
        self.trained = False
        self._rng = np.random.default_rng(seed)
        self.build()

    def build(self):
        raise NotImplementedError

    def forward(self, x, training=False, seed=None):
        raise NotImplementedError

    def loss(self, x, y, training=True, seed=None):
        raise NotImplementedError

    # -- helpers for subclasses
    def _weight(self, name, shape, fan_in, gain=np.sqrt(2.0)):
        std = gain / np.sqrt(fan_in)
        return self.params.add(name, (self._rng.standard_normal(shape) * std).astype(self.dtype))

    def _zeros(self, name, shape):
        return self.params.add(name, np.zeros(shape, dtype=self.dtype))

    def _ones(self, name, shape):
        return self.params.add(name, np.ones(shape, dtype=self.dtype))

    def _input(self, x):
        if isinstance(x, Tensor):
            return x if x.dtype == self.dtype else Tensor(x.data.astype(self.dtype))
        return Tensor(np.asarray(x, dtype=self.dtype))

    def predict(self, x) -> np.ndarray:
        with nn.no_grad():
            return self.forward(x, training=False).data

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        for t in self.params.params.values():
            t.data = t.data.astype(self.dtype)
        for k in self.params.m:
            self.params.m[k] = self.params.m[k].astype(self.dtype)
            self.params.v[k] = self.params.v[k].astype(self.dtype)
        for k in self.buffers:
            self.buffers[k] = self.buffers[k].astype(self.dtype)
        return self

    def parameter_count(self) -> int:
        return self.params.count()

    def state(self):
        return self.params.snapshot(), {k: v.copy() for k, v in self.buffers.items()}

    def load_state(self, state):
        params, buffers = state
        self.params.restore(params)
        for k, v in buffers.items():
            self.buffers[k][...] = v


def save_model(path, model: ModelGraph):
    """Model checkpoint: magic, kind, JSON config, then the parameter block."""
    kind = model.kind.encode()
    cfg = json.dumps(asdict(model.config), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<H", len(kind)) + kind)
        fh.write(struct.pack("<I", len(cfg)) + cfg)
        nn_ckpt.write_params(fh, model.params, model.buffers)


def load_model(path, expected_kind=None) -> ModelGraph:
    from .unet import UNet
    from .waveunet import WaveUNet

    classes = {UNet.kind: UNet, WaveUNet.kind: WaveUNet}
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise FormatError(f"{path}: not a voxsep model checkpoint")
        (klen,) = struct.unpack("<H", fh.read(2))
        kind = fh.read(klen).decode()
        (clen,) = struct.unpack("<I", fh.read(4))
        cfg = json.loads(fh.read(clen).decode())
        params, buffers = nn_ckpt.read_params(fh)
    if kind not in classes:
        raise FormatError(f"{path}: unknown model kind '{kind}'")
    if expected_kind is not None and kind != expected_kind:
        raise ConfigError(f"checkpoint holds a '{kind}' model, expected '{expected_kind}'")
    cls = classes[kind]
    dtype = next(iter(params.params.values())).dtype if len(params) else np.float32
    model = cls(cls.config_type(**cfg), dtype=dtype)
    if list(model.params) != list(params):
        raise FormatError(f"{path}: parameter names do not match the stored config")
    model.params = params
    model.buffers = buffers
    model.trained = True
    return model
