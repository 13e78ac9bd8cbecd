"""Spectrogram U-Net with skip and mask ablation switches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..nn import functional as F
from .base import ModelGraph, masked_l1_loss


@dataclass
class UNetConfig:
    num_layers: int = 6
    base_filters: int = 16
    kernel: int = 5
    stride: int = 2
    use_skip: bool = True
    mask_output: bool = True
    dropout_decoder_layers: int = 3
    dropout_p: float = 0.5
    leaky_alpha: float = 0.2
    input_frames: int = 128
    input_bins: int = 512
    window_size: int = 1024
    hop: int = 256
    sample_rate: int = 8192
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def validate(self):
        if self.num_layers < 1 or self.base_filters < 1:
            raise ConfigError("num_layers and base_filters must be positive")
        step = self.stride ** self.num_layers
        if self.input_frames % step or self.input_bins % step:
            raise ConfigError(f"input {self.input_frames}x{self.input_bins} is not divisible by "
                              f"{self.stride}^{self.num_layers}")
        if not 0 <= self.dropout_decoder_layers <= self.num_layers:
            raise ConfigError("dropout_decoder_layers out of range")

    def channels(self, layer):
        return self.base_filters * 2 ** layer


class UNet(ModelGraph):
    kind = "unet"
    config_type = UNetConfig

    def build(self):
        c = self.config
        c.validate()
        k, L = c.kernel, c.num_layers
        cin = 1
        for i in range(L):
            cout = c.channels(i)
            self._weight(f"enc{i}.w", (cout, cin, k, k), cin * k * k, gain=np.sqrt(2.0 / (1 + c.leaky_alpha ** 2)))
            self._ones(f"enc{i}.gamma", (cout,))
            self._zeros(f"enc{i}.beta", (cout,))
            self.buffers[f"enc{i}.mean"] = np.zeros(cout, dtype=self.dtype)
            self.buffers[f"enc{i}.var"] = np.ones(cout, dtype=self.dtype)
            cin = cout
        for j in range(L):
            # decoder layer j mirrors encoder layer L-1-j
            fin = c.channels(L - 1 - j)
            if c.use_skip and j > 0:
                fin *= 2
            last = j == L - 1
            fout = 1 if last else c.channels(L - 2 - j)
            self._weight(f"dec{j}.w", (fin, fout, k, k), fin * k * k / c.stride ** 2,
                         gain=1.0 if last else np.sqrt(2.0))
            if last:
                self._zeros(f"dec{j}.b", (fout,))
            else:
                self._ones(f"dec{j}.gamma", (fout,))
                self._zeros(f"dec{j}.beta", (fout,))
                self.buffers[f"dec{j}.mean"] = np.zeros(fout, dtype=self.dtype)
                self.buffers[f"dec{j}.var"] = np.ones(fout, dtype=self.dtype)

    def _bn(self, h, name, training):
        c = self.config
        return F.batch_norm(h, self.params[f"{name}.gamma"], self.params[f"{name}.beta"],
                            self.buffers[f"{name}.mean"], self.buffers[f"{name}.var"],
                            training, c.bn_momentum, c.bn_eps)

    def forward(self, x, training=False, seed=None):
        """x: [N, 1, frames, bins] magnitudes -> mask (or magnitude estimate)."""
        c = self.config
        x = self._input(x)
        if x.ndim == 3:
            x = F.reshape(x, (x.shape[0], 1) + x.shape[1:])
        h = x
        skips, shapes = [], []
        for i in range(c.num_layers):
            shapes.append(h.shape[2:])
            h = F.conv2d(h, self.params[f"enc{i}.w"], None, c.stride, "same")
            h = F.leaky_relu(self._bn(h, f"enc{i}", training), c.leaky_alpha)
            skips.append(h)
        for j in range(c.num_layers):
            if j > 0 and c.use_skip:
                h = F.concat([skips[c.num_layers - 1 - j], h], axis=1)
            out_shape = shapes[c.num_layers - 1 - j]
            last = j == c.num_layers - 1
            if last:
                h = F.conv_transpose2d(h, self.params[f"dec{j}.w"], self.params[f"dec{j}.b"], c.stride, out_shape)
                h = F.sigmoid(h) if c.mask_output else F.relu(h)
            else:
                h = F.conv_transpose2d(h, self.params[f"dec{j}.w"], None, c.stride, out_shape)
                h = F.relu(self._bn(h, f"dec{j}", training))
                if j < c.dropout_decoder_layers:
                    h = F.dropout(h, c.dropout_p, training, None if seed is None else [seed, j])
        return h

    def loss(self, x, y, training=True, seed=None):
        out = self.forward(x, training, seed)
        x = self._input(x)
        y = self._input(y)
        if x.ndim == 3:
            x = F.reshape(x, out.shape)
            y = F.reshape(y, out.shape)
        if self.config.mask_output:
            return masked_l1_loss(out, x, y)
        return F.l1_loss(out, y)


def build_unet(config: UNetConfig | None = None, dtype=np.float32, seed=0) -> UNet:
    return UNet(config or UNetConfig(), dtype=dtype, seed=seed)


def expected_parameter_count(config: UNetConfig) -> int:
    """Parameter count from the layer formulas (independent of the builder)."""
    k2 = config.kernel ** 2
    total, cin = 0, 1
    for i in range(config.num_layers):
        cout = config.channels(i)
        total += cout * cin * k2 + 2 * cout
        cin = cout
    for j in range(config.num_layers):
        fin = config.channels(config.num_layers - 1 - j) * (2 if config.use_skip and j > 0 else 1)
        if j == config.num_layers - 1:
            total += fin * k2 + 1
        else:
            fout = config.channels(config.num_layers - 2 - j)
            total += fin * fout * k2 + 2 * fout
    return total
