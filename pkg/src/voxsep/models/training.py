"""Minibatch Adam training with optional early stopping, and example sampling."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .. import dsp, nn
from ..data import StemTrack, mix
from ..errors import ConfigError, InvalidArgument
from .unet import UNet
from .waveunet import WaveUNet

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-4
    max_epochs: int = 100
    early_stop_patience: int | None = 20
    seed: int = 0
    loss: str = "masked-L1"
    batches_per_epoch: int | None = None
    min_improvement: float = 1e-5

    @classmethod
    def for_waveunet(cls, **kw):
        kw.setdefault("batch_size", 64)
        kw.setdefault("loss", "direct-L1")
        return cls(**kw)


def _step_seed(seed, step):
    return int(np.random.SeedSequence([seed, step]).generate_state(1)[0])


def _batches(n, batch_size, rng, count):
    order = rng.permutation(n)
    full = max(1, n // batch_size)
    for b in range(count):
        k = b % full
        if k == 0 and b > 0:
            order = rng.permutation(n)
        yield order[k * batch_size:(k + 1) * batch_size]


def evaluate_loss(model, data, batch_size=64) -> float:
    x, y = data
    total = 0.0
    with nn.no_grad():
        for s in range(0, len(x), batch_size):
            loss = model.loss(x[s:s + batch_size], y[s:s + batch_size], training=False)
            total += float(loss.data) * len(x[s:s + batch_size])
    return total / len(x)


def train(model, train_data, valid_data=None, tc: TrainConfig | None = None, validate=None, callback=None):
    """Train ``model`` in place and return ``(params, history)``.

    ``train_data``/``valid_data`` are ``(inputs, targets)`` array pairs.
    ``validate`` optionally replaces the validation loss computation: it
    receives ``(model, epoch)`` and returns a float. With neither
    ``valid_data`` nor ``validate`` the run lasts ``max_epochs``.
    """
    tc = tc or TrainConfig()
    x, y = train_data
    n = len(x)
    if n == 0:
        raise InvalidArgument("training set is empty")
    if tc.batch_size > n:
        raise InvalidArgument(f"batch size {tc.batch_size} exceeds dataset size {n}")
    has_valid = validate is not None or (valid_data is not None and len(valid_data[0]) > 0)
    patience = tc.early_stop_patience if has_valid else None
    if validate is None and has_valid:
        def validate(m, epoch):
            return evaluate_loss(m, valid_data, tc.batch_size)

    rng = np.random.default_rng(tc.seed)
    per_epoch = tc.batches_per_epoch or max(1, n // tc.batch_size)
    history, best, best_epoch, best_state, stale = [], np.inf, 0, None, 0
    step = 0
    for epoch in range(1, tc.max_epochs + 1):
        losses = []
        for idx in _batches(n, tc.batch_size, rng, per_epoch):
            model.params.zero_grad()
            loss = model.loss(x[idx], y[idx], training=True, seed=_step_seed(tc.seed, step))
            loss.backward()
            nn.adam_step(model.params, tc.learning_rate)
            losses.append(float(loss.data))
            step += 1
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "valid_loss": None}
        if has_valid:
            v = float(validate(model, epoch))
            row["valid_loss"] = v
            if v < best - tc.min_improvement:
                best, best_epoch, best_state, stale = v, epoch, model.state(), 0
            else:
                stale += 1
        history.append(row)
        if callback is not None:
            callback(row)
        log.debug("epoch %d train %.6f valid %s", epoch, row["train_loss"], row["valid_loss"])
        if patience is not None and stale >= patience:
            log.info("early stop at epoch %d (best epoch %d)", epoch, best_epoch)
            break
    if best_state is not None:
        model.load_state(best_state)
    model.trained = True
    model.best_epoch = best_epoch if has_valid else len(history)
    return model.params, history


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "valid_loss"])
        for row in history:
            v = row["valid_loss"]
            w.writerow([row["epoch"], f"{row['train_loss']:.8g}", "" if v is None else f"{v:.8g}"])


def read_history(path):
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"]),
                         "valid_loss": float(r["valid_loss"]) if r["valid_loss"] else None})
    return rows


# ---------------------------------------------------------------- example sampling

def unet_track_planes(track: StemTrack, window_size=dsp.WINDOW_SIZE, hop=dsp.HOP, bins=dsp.MODEL_BINS):
    """Normalised mixture/voice magnitudes [frames, bins] for one track."""
    X = np.abs(dsp.stft(mix(track), window_size, hop).bins[:, :bins])
    Y = np.abs(dsp.stft(track.stems["voice"], window_size, hop).bins[:, :bins])
    scale = X.max()
    if scale > 0:
        X, Y = X / scale, Y / scale
    return X, Y


def unet_examples(tracks, per_track, seed, patch_frames=dsp.PATCH_FRAMES, bins=dsp.MODEL_BINS,
                  window_size=dsp.WINDOW_SIZE, hop=dsp.HOP, dtype=np.float32):
    """Random ``patch_frames`` crops of mixture / voice magnitude planes."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for track in tracks:
        X, Y = unet_track_planes(track, window_size, hop, bins)
        if X.shape[0] < patch_frames:
            X = np.pad(X, ((0, patch_frames - X.shape[0]), (0, 0)))
            Y = np.pad(Y, ((0, patch_frames - Y.shape[0]), (0, 0)))
        for _ in range(per_track):
            o = rng.integers(0, X.shape[0] - patch_frames + 1)
            xs.append(X[o:o + patch_frames])
            ys.append(Y[o:o + patch_frames])
    return (np.stack(xs)[:, None].astype(dtype), np.stack(ys)[:, None].astype(dtype))


def waveunet_examples(tracks, per_track, seed, input_len, output_len, dtype=np.float32):
    """Random mixture windows with the centered voice segment as target."""
    rng = np.random.default_rng(seed)
    ctx = (input_len - output_len) // 2
    xs, ys = [], []
    for track in tracks:
        m = np.pad(mix(track).samples, (ctx, input_len))
        v = np.pad(track.stems["voice"].samples, (ctx, input_len))
        hi = max(1, len(track) - output_len + 1)
        for _ in range(per_track):
            o = rng.integers(0, hi)
            xs.append(m[o:o + input_len])
            ys.append(v[o + ctx:o + ctx + output_len])
    return (np.stack(xs)[:, None].astype(dtype), np.stack(ys)[:, None].astype(dtype))


def make_examples(model, tracks, per_track, seed):
    if isinstance(model, UNet):
        c = model.config
        return unet_examples(tracks, per_track, seed, c.input_frames, c.input_bins, c.window_size, c.hop,
                             model.dtype)
    if isinstance(model, WaveUNet):
        c = model.config
        return waveunet_examples(tracks, per_track, seed, c.context_input_len, c.output_len, model.dtype)
    raise ConfigError(f"unknown model type {type(model).__name__}")
