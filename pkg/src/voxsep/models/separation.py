"""Whole-track inference for both model kinds."""

from __future__ import annotations

import numpy as np

from .. import dsp
from ..data import AudioClip
from ..errors import ConfigError, StateError


def separate_track(model, mixture: AudioClip, kind=None, batch_size=16) -> AudioClip:
    """Voice estimate for a whole mixture, same length and rate as the input."""
    kind = kind or model.kind
    if kind != model.kind:
        raise ConfigError(f"model is '{model.kind}', asked to run as '{kind}'")
    if not getattr(model, "trained", False):
        raise StateError("model has no trained parameters")
    if kind == "unet":
        return _separate_unet(model, mixture, batch_size)
    if kind == "waveunet":
        return _separate_waveunet(model, mixture, batch_size)
    raise ConfigError(f"unknown model kind '{kind}'")


def _separate_unet(model, mixture, batch_size):
    c = model.config
    spec = dsp.stft(mixture, c.window_size, c.hop)
    X = np.abs(spec.bins[:, :c.input_bins])
    scale = X.max()
    if scale == 0:
        return AudioClip(np.zeros(len(mixture)), mixture.sample_rate)
    patches = dsp.padded_patches(X / scale, c.input_frames)
    outs = []
    for s in range(0, len(patches), batch_size):
        batch = patches[s:s + batch_size, None].astype(model.dtype)
        outs.append(np.asarray(model.predict(batch), dtype=np.float64)[:, 0])
    out = np.concatenate(outs, axis=0)
    if c.mask_output:
        est = out * patches
    else:
        est = out
    Y = dsp.concat_patches(list(est), X.shape[0]) * scale
    clip = dsp.reconstruct_with_mixture_phase(dsp.restore_bins(Y, spec.bins.shape[1]), spec)
    return AudioClip(clip.samples[:len(mixture)], mixture.sample_rate)


def _separate_waveunet(model, mixture, batch_size):
    c = model.config
    n = len(mixture)
    lin, lout = c.context_input_len, c.output_len
    ctx = (lin - lout) // 2
    count = -(-n // lout)
    padded = np.pad(mixture.samples, (ctx, count * lout - n + (lin - lout - ctx)))
    segs = np.stack([padded[i * lout:i * lout + lin] for i in range(count)])
    outs = []
    for s in range(0, count, batch_size):
        batch = segs[s:s + batch_size, None].astype(model.dtype)
        outs.append(np.asarray(model.predict(batch), dtype=np.float64)[:, 0])
    voice = np.concatenate(outs, axis=0).reshape(-1)[:n]
    return AudioClip(voice, mixture.sample_rate)
