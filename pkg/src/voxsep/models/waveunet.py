"""Waveform-domain Wave-U-Net and its shape arithmetic."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from ..nn import functional as F
from .base import ModelGraph

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(__file__), "waveunet_default.json")


@dataclass
class WaveUNetConfig:
    num_levels: int = 12
    down_filter_len: int = 5
    up_filter_len: int = 5
    filters_per_level: int = 24
    context_input_len: int = 57431
    output_len: int = 8197
    leaky_alpha: float = 0.2
    sample_rate: int = 8192

    def channels(self, level):
        """Feature count after down block ``level`` (0-based)."""
        return self.filters_per_level * (level + 1)


def shape_calc(config: WaveUNetConfig, input_len: int):
    """Output length for ``input_len`` samples, or None when infeasible."""
    L = int(input_len)
    skips = []
    for _ in range(config.num_levels):
        if L < config.down_filter_len:
            return None
        L -= config.down_filter_len - 1
        skips.append(L)
        L = (L + 1) // 2
    if L < config.down_filter_len:
        return None
    L -= config.down_filter_len - 1
    for level in reversed(range(config.num_levels)):
        L = 2 * L - 1
        if L < config.up_filter_len or skips[level] < L:
            return None
        L -= config.up_filter_len - 1
    return L if L >= 1 else None


def input_len_for(config: WaveUNetConfig, min_output: int = 1) -> int:
    """Smallest input length whose output has at least ``min_output`` samples."""
    lo, hi = 1, 1
    while (shape_calc(config, hi) or 0) < min_output:
        hi *= 2
        if hi > 1 << 26:
            raise ConfigError("no feasible input length")
    while lo < hi:
        mid = (lo + hi) // 2
        if (shape_calc(config, mid) or 0) >= min_output:
            hi = mid
        else:
            lo = mid + 1
    return lo


def search_config(input_len=57431, output_len=8197, levels=range(8, 14), up_lens=(1, 3, 5),
                  down_filter_len=5, filters_per_level=24):
    """Configs mapping ``input_len`` to ``output_len`` exactly; deepest first."""
    hits = []
    for n in levels:
        for up in up_lens:
            cfg = WaveUNetConfig(n, down_filter_len, up, filters_per_level, input_len, output_len)
            if shape_calc(cfg, input_len) == output_len:
                hits.append(cfg)
    return sorted(hits, key=lambda c: -c.num_levels)


def default_config() -> WaveUNetConfig:
    with open(DEFAULT_CONFIG_PATH) as fh:
        return WaveUNetConfig(**json.load(fh))


def freeze_config(config: WaveUNetConfig, path=DEFAULT_CONFIG_PATH):
    with open(path, "w") as fh:
        json.dump(asdict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


class WaveUNet(ModelGraph):
    """Valid-convolution Wave-U-Net predicting the voice waveform.

    The accompaniment is the cropped mixture minus the voice estimate.
    """

    kind = "waveunet"
    config_type = WaveUNetConfig

    def build(self):
        c = self.config
        if shape_calc(c, c.context_input_len) != c.output_len:
            raise ConfigError(f"config maps {c.context_input_len} samples to "
                              f"{shape_calc(c, c.context_input_len)}, not {c.output_len}")
        gain = np.sqrt(2.0 / (1 + c.leaky_alpha ** 2))
        cin = 1
        for i in range(c.num_levels):
            cout = c.channels(i)
            self._weight(f"down{i}.w", (cout, cin, c.down_filter_len), cin * c.down_filter_len, gain)
            self._zeros(f"down{i}.b", (cout,))
            cin = cout
        cout = c.channels(c.num_levels)
        self._weight("mid.w", (cout, cin, c.down_filter_len), cin * c.down_filter_len, gain)
        self._zeros("mid.b", (cout,))
        for i in reversed(range(c.num_levels)):
            fin = c.channels(i) + c.channels(i + 1)
            self._weight(f"up{i}.w", (c.channels(i), fin, c.up_filter_len), fin * c.up_filter_len, gain)
            self._zeros(f"up{i}.b", (c.channels(i),))
        self._weight("out.w", (1, c.channels(0) + 1, 1), c.channels(0) + 1, 1.0)
        self._zeros("out.b", (1,))

    def forward(self, x, training=False, seed=None):
        """x: [N, 1, L] mixture samples -> [N, 1, shape_calc(L)] voice estimate."""
        c = self.config
        x = self._input(x)
        if x.ndim == 2:
            x = F.reshape(x, (x.shape[0], 1, x.shape[1]))
        h, skips = x, []
        for i in range(c.num_levels):
            h = F.leaky_relu(F.conv1d(h, self.params[f"down{i}.w"], self.params[f"down{i}.b"]), c.leaky_alpha)
            skips.append(h)
            h = F.decimate2(h)
        h = F.leaky_relu(F.conv1d(h, self.params["mid.w"], self.params["mid.b"]), c.leaky_alpha)
        for i in reversed(range(c.num_levels)):
            h = F.crop_concat(skips[i], F.linear_upsample2(h))
            h = F.leaky_relu(F.conv1d(h, self.params[f"up{i}.w"], self.params[f"up{i}.b"]), c.leaky_alpha)
        h = F.crop_concat(x, h)
        return F.tanh(F.conv1d(h, self.params["out.w"], self.params["out.b"]))

    def loss(self, x, y, training=True, seed=None):
        out = self.forward(x, training, seed)
        y = self._input(y)
        if y.ndim == 2:
            y = F.reshape(y, out.shape)
        return F.l1_loss(out, y)


def build_waveunet(config: WaveUNetConfig | None = None, dtype=np.float32, seed=0) -> WaveUNet:
    return WaveUNet(config or default_config(), dtype=dtype, seed=seed)
