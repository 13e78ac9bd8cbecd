"""Command-line front end: ``voxsep augment|train|separate|evaluate|report``.

Settings come from built-in defaults, then the ``VOXSEP_SEED`` environment
variable (seed only), then an optional config file (``[common]`` and the
command's own section, ``key = value``), then command-line flags. The
effective settings are echoed to ``run_config.txt`` in the output
directory; passing that file back with ``--config`` repeats the run.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bss_eval, data, report
from .augment import policy
from .data import ROLE_FILES, ROLES, AudioClip
from .errors import (ConfigError, EmptyEvaluation, EnvelopeUndefined, FormatError, InvalidArgument,
                     MissingStem, StatError, StateError, UndefinedMetric)
from .models import base as model_io
from .models import separation, training
from .models.unet import UNetConfig, build_unet
from .models.waveunet import WaveUNetConfig, build_waveunet, input_len_for, shape_calc

log = logging.getLogger("voxsep")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
REGIMES = ("no-DA", "DA", "DA-F")
MANIFEST = "augment_manifest.tsv"
RUN_CONFIG = "run_config.txt"

COMMON = {
    "seed": "0",
    "sample_rate": "8192",
    "window_size": "1024",
    "hop": "256",
    "jobs": "1",
    "log_level": "INFO",
}

DEFAULTS = {
    "augment": {
        "in": "",
        "out": "",
        "grid": "paper",
        "pitch": ",".join(str(v) for v in policy.PAPER_PITCH),
        "stretch": ",".join(f"{v:g}" for v in policy.PAPER_STRETCH),
        "formant": ",".join(str(v) for v in policy.PAPER_FORMANT),
        # speed: output lasts input / factor; duration: output lasts input * factor
        "stretch_convention": "speed",
    },
    "train": {
        "data": "",
        "augmented": "",
        "out": "",
        "model": "unet",
        "regime": "no-DA",
        "valid_fraction": "0.25",
        "examples_per_track": "8",
        "learning_rate": "1e-4",
        "batch_size": "auto",
        "max_epochs": "100",
        "patience": "20",
        "batches_per_epoch": "",
        "dtype": "float32",
        "num_layers": "6",
        "base_filters": "16",
        "input_frames": "128",
        "input_bins": "512",
        "use_skip": "true",
        "mask_output": "true",
        "dropout_p": "0.5",
        "num_levels": "12",
        "filters_per_level": "24",
        "down_filter_len": "5",
        "up_filter_len": "5",
        "output_len": "8197",
        "context_input_len": "57431",
    },
    "separate": {
        "checkpoint": "",
        "input": "",
        "out": "",
        "kind": "",
        "batch_size": "16",
    },
    "evaluate": {
        "estimates": "",
        "references": "",
        "out": "",
        "filter_len": "512",
        "label": "",
    },
    "report": {
        "runs": "",
        "labels": "",
        "out": "",
        "reference": "false",
        "title": "Separation results",
    },
}

# settings that must not be empty when a command runs
REQUIRED = {
    "augment": ("in", "out"),
    "train": ("data", "out"),
    "separate": ("checkpoint", "input", "out"),
    "evaluate": ("estimates", "references", "out"),
    "report": ("runs", "out"),
}


@dataclass
class RunConfig:
    command: str
    values: dict
    explicit: set = field(default_factory=set)

    def get(self, key) -> str:
        return self.values[key]

    def int(self, key) -> int:
        try:
            return int(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer, got '{self.values[key]}'") from exc

    def float(self, key) -> float:
        try:
            return float(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got '{self.values[key]}'") from exc

    def bool(self, key) -> bool:
        v = self.values[key].strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be true/false, got '{self.values[key]}'")

    def write(self, path):
        cp = configparser.ConfigParser(interpolation=None)
        cp["common"] = {k: self.values[k] for k in COMMON}
        cp[self.command] = {k: self.values[k] for k in DEFAULTS[self.command]}
        with open(path, "w") as fh:
            cp.write(fh)


def load_config(command, path=None, overrides=None) -> RunConfig:
    values = dict(COMMON)
    values.update(DEFAULTS[command])
    explicit = set()
    if os.environ.get("VOXSEP_SEED"):
        values["seed"] = os.environ["VOXSEP_SEED"]
    if path:
        cp = configparser.ConfigParser(interpolation=None)
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section in ("common", command):
            if not cp.has_section(section):
                continue
            for key, val in cp.items(section):
                if key not in values:
                    raise ConfigError(f"unknown setting '{key}' in [{section}] of {path}")
                values[key] = val
                explicit.add(key)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in values:
            raise ConfigError(f"unknown setting '{key}'")
        values[key] = str(val)
        explicit.add(key)
    for key in REQUIRED[command]:
        if not values[key]:
            raise ConfigError(f"'{key}' is required for {command}")
    return RunConfig(command, values, explicit)


def _echo(cfg: RunConfig, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cfg.write(os.path.join(out_dir, RUN_CONFIG))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_track_at(path, rate) -> data.StemTrack:
    track = data.load_track(path)
    if track.sample_rate == rate:
        return track
    stems = {r: data.resample(c, rate) for r, c in track.stems.items()}
    return data.StemTrack(track.id, stems, rate)


# ---------------------------------------------------------------- augment

def _grid(cfg: RunConfig):
    if cfg.get("grid") == "paper":
        pitches, stretches, formants = policy.PAPER_GRID
    elif cfg.get("grid") == "custom":
        pitches = policy.parse_axis(cfg.get("pitch"), int)
        stretches = policy.parse_axis(cfg.get("stretch"), float)
        formants = policy.parse_axis(cfg.get("formant"), int)
    else:
        raise ConfigError(f"grid must be 'paper' or 'custom', got '{cfg.get('grid')}'")
    if any(s <= 0 for s in stretches):
        raise ConfigError("stretch factors must be positive")
    convention = cfg.get("stretch_convention")
    if convention == "duration":
        stretches = tuple(1.0 / s for s in stretches)
    elif convention != "speed":
        raise ConfigError(f"stretch_convention must be 'speed' or 'duration', got '{convention}'")
    return pitches, stretches, formants


def read_manifest(path) -> dict:
    rows = {}
    if not os.path.isfile(path):
        return rows
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh, delimiter="\t"):
            rows[r["variant_id"]] = r
    return rows


def write_manifest(path, rows):
    fields = ["variant_id", "source_id", "pitch", "stretch", "formant"] + [f"sha256_{r}" for r in ROLES]
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, delimiter="\t", lineterminator="\n")
        w.writeheader()
        for key in sorted(rows):
            w.writerow({k: rows[key][k] for k in fields})
    os.replace(tmp, path)


def _variant_complete(out_root, row) -> bool:
    d = os.path.join(out_root, row["variant_id"])
    for role in ROLES:
        p = os.path.join(d, ROLE_FILES[role] + ".wav")
        if not os.path.isfile(p) or sha256_file(p) != row.get(f"sha256_{role}"):
            return False
    return True


def cmd_augment(cfg: RunConfig) -> int:
    src, out = cfg.get("in"), cfg.get("out")
    rate, jobs = cfg.int("sample_rate"), cfg.int("jobs")
    grid = _grid(cfg)
    specs = policy.grid_specs(grid)
    _echo(cfg, out)
    ids = data.list_tracks(src)
    if not ids:
        raise FormatError(f"no tracks found under {src}")
    manifest_path = os.path.join(out, MANIFEST)
    rows = read_manifest(manifest_path)
    made = skipped = 0
    for tid in ids:
        track = _load_track_at(os.path.join(src, tid), rate)
        todo = []
        for spec in specs:
            vid = policy.variant_id(track.id, spec)
            if vid in rows and _variant_complete(out, rows[vid]):
                skipped += 1
            else:
                todo.append(spec)
        for spec, variant in policy.generate_variants(track, specs=todo, jobs=jobs):
            vdir = os.path.join(out, variant.id)
            data.save_track(vdir, variant)
            row = {"variant_id": variant.id, "source_id": track.id, "pitch": str(spec.pitch_cents),
                   "stretch": f"{spec.stretch_factor:g}", "formant": str(spec.formant_cents)}
            for role in ROLES:
                row[f"sha256_{role}"] = sha256_file(os.path.join(vdir, ROLE_FILES[role] + ".wav"))
            rows[variant.id] = row
            write_manifest(manifest_path, rows)
            made += 1
        log.info("%s: %d variants", tid, len(specs))
    write_manifest(manifest_path, rows)
    log.info("augment: %d written, %d already complete", made, skipped)
    return EXIT_OK


# ---------------------------------------------------------------- train

def _model_from_config(cfg: RunConfig):
    kind = cfg.get("model")
    dtype = np.dtype(cfg.get("dtype"))
    seed = cfg.int("seed")
    rate = cfg.int("sample_rate")
    if kind == "unet":
        uc = UNetConfig(num_layers=cfg.int("num_layers"), base_filters=cfg.int("base_filters"),
                        use_skip=cfg.bool("use_skip"), mask_output=cfg.bool("mask_output"),
                        dropout_p=cfg.float("dropout_p"), input_frames=cfg.int("input_frames"),
                        input_bins=cfg.int("input_bins"), window_size=cfg.int("window_size"),
                        hop=cfg.int("hop"), sample_rate=rate)
        return build_unet(uc, dtype=dtype, seed=seed)
    if kind == "waveunet":
        wc = WaveUNetConfig(num_levels=cfg.int("num_levels"), down_filter_len=cfg.int("down_filter_len"),
                            up_filter_len=cfg.int("up_filter_len"), filters_per_level=cfg.int("filters_per_level"),
                            context_input_len=cfg.int("context_input_len"), output_len=cfg.int("output_len"),
                            sample_rate=rate)
        if shape_calc(wc, wc.context_input_len) != wc.output_len:
            # derive the smallest context that yields at least output_len samples
            wc.context_input_len = input_len_for(wc, wc.output_len)
            wc.output_len = shape_calc(wc, wc.context_input_len)
            log.info("waveunet context %d -> output %d", wc.context_input_len, wc.output_len)
        return build_waveunet(wc, dtype=dtype, seed=seed)
    raise ConfigError(f"model must be 'unet' or 'waveunet', got '{kind}'")


def _source_of(variant_id: str) -> str:
    return variant_id.split("__", 1)[0]


def _regime_tracks(cfg: RunConfig):
    regime = cfg.get("regime")
    if regime not in REGIMES:
        raise ConfigError(f"regime must be one of {', '.join(REGIMES)}, got '{regime}'")
    rate = cfg.int("sample_rate")
    root = cfg.get("data")
    ids = data.list_tracks(root)
    if not ids:
        raise FormatError(f"no tracks found under {root}")
    valid_fraction = 0.0 if regime == "DA-F" else cfg.float("valid_fraction")
    split = data.split_dataset(ids, valid_fraction, cfg.int("seed"))
    train_paths = [os.path.join(root, i) for i in split.train]
    valid_paths = [os.path.join(root, i) for i in split.valid]
    if regime in ("DA", "DA-F"):
        aug = cfg.get("augmented")
        if not aug:
            raise ConfigError(f"regime {regime} needs 'augmented' (an augment output directory)")
        train_set, valid_set = set(split.train), set(split.valid)
        for vid in data.list_tracks(aug):
            if vid.endswith("__" + policy.AugmentationSpec().tag()):
                continue  # the identity variant duplicates the original track
            src = _source_of(vid)
            if src in train_set:
                train_paths.append(os.path.join(aug, vid))
            elif src in valid_set:
                valid_paths.append(os.path.join(aug, vid))
    load = lambda paths: [_load_track_at(p, rate) for p in paths]  # noqa: E731
    return split, load(train_paths), load(valid_paths)


def cmd_train(cfg: RunConfig) -> int:
    out = cfg.get("out")
    regime = cfg.get("regime")
    if regime == "DA-F" and "patience" in cfg.explicit:
        log.warning("regime DA-F has no validation set; patience %s ignored", cfg.get("patience"))
    model = _model_from_config(cfg)
    split, train_tracks, valid_tracks = _regime_tracks(cfg)
    patience = None if regime == "DA-F" else cfg.int("patience")
    if patience is not None and not valid_tracks:
        raise ConfigError(f"patience {patience} set but the validation set is empty")
    _echo(cfg, out)
    data.write_split(os.path.join(out, "split.txt"), split)

    per_track = cfg.int("examples_per_track")
    seed = cfg.int("seed")
    train_xy = training.make_examples(model, train_tracks, per_track, seed)
    valid_xy = training.make_examples(model, valid_tracks, per_track, seed + 1) if valid_tracks else None
    bs = cfg.get("batch_size")
    kw = dict(learning_rate=cfg.float("learning_rate"), max_epochs=cfg.int("max_epochs"),
              early_stop_patience=patience, seed=seed,
              batches_per_epoch=cfg.int("batches_per_epoch") if cfg.get("batches_per_epoch") else None)
    if bs != "auto":
        kw["batch_size"] = cfg.int("batch_size")
    tc = training.TrainConfig.for_waveunet(**kw) if model.kind == "waveunet" else training.TrainConfig(**kw)
    tc.batch_size = min(tc.batch_size, len(train_xy[0]))
    log.info("train %s on %d tracks (%d examples), %d valid tracks, %d parameters",
             model.kind, len(train_tracks), len(train_xy[0]), len(valid_tracks), model.parameter_count())

    def progress(row):
        log.info("epoch %d train %.6f valid %s", row["epoch"], row["train_loss"],
                 "-" if row["valid_loss"] is None else f"{row['valid_loss']:.6f}")

    _, history = training.train(model, train_xy, valid_xy, tc, callback=progress)
    if not all(np.isfinite(h["train_loss"]) for h in history):
        raise FloatingPointError("training loss became non-finite")
    model_io.save_model(os.path.join(out, "model.vxm"), model)
    training.write_history(os.path.join(out, "history.csv"), history)
    return EXIT_OK


# ---------------------------------------------------------------- separate

def _mixtures(path, rate):
    """``(id, mixture clip)`` for a wav file, a track directory or a corpus directory."""
    if os.path.isfile(path):
        clip = data.read_wav(path)
        yield os.path.splitext(os.path.basename(path))[0], clip
        return
    if os.path.isfile(os.path.join(path, "vocals.wav")):
        track = _load_track_at(path, rate)
        yield track.id, data.mix(track)
        return
    ids = data.list_tracks(path)
    if not ids:
        raise FormatError(f"no audio found at {path}")
    for tid in ids:
        mixture_path = os.path.join(path, tid, "mixture.wav")
        if os.path.isfile(mixture_path):
            yield tid, data.read_wav(mixture_path)
        else:
            yield tid, data.mix(_load_track_at(os.path.join(path, tid), rate))


def cmd_separate(cfg: RunConfig) -> int:
    model = model_io.load_model(cfg.get("checkpoint"), cfg.get("kind") or None)
    rate = model.config.sample_rate
    out = cfg.get("out")
    _echo(cfg, out)
    for tid, mixture in _mixtures(cfg.get("input"), rate):
        if mixture.sample_rate != rate:
            mixture = data.resample(mixture, rate)
        voice = separation.separate_track(model, mixture, batch_size=cfg.int("batch_size"))
        accomp = AudioClip(mixture.samples - voice.samples, rate)
        d = os.path.join(out, tid)
        os.makedirs(d, exist_ok=True)
        data.write_wav(os.path.join(d, "voice.wav"), voice)
        data.write_wav(os.path.join(d, "accompaniment.wav"), accomp)
        log.info("separated %s (%.2f s)", tid, len(mixture) / rate)
    return EXIT_OK


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(cfg: RunConfig) -> int:
    est_root, ref_root, out = cfg.get("estimates"), cfg.get("references"), cfg.get("out")
    rate = cfg.int("sample_rate")
    ref_ids = set(data.list_tracks(ref_root))
    est_ids = {d for d in os.listdir(est_root) if os.path.isfile(os.path.join(est_root, d, "voice.wav"))}
    ids = sorted(ref_ids & est_ids)
    if not ids:
        raise EmptyEvaluation(f"no track ids shared by {est_root} and {ref_root}")
    _echo(cfg, out)
    pairs = []
    for tid in ids:
        track = _load_track_at(os.path.join(ref_root, tid), rate)
        est = data.read_wav(os.path.join(est_root, tid, "voice.wav"))
        if est.sample_rate != rate:
            est = data.resample(est, rate)
        n = len(track)
        e = est.samples[:n] if len(est) >= n else np.pad(est.samples, (0, n - len(est)))
        refs = bss_eval.voice_references(track.stems["voice"].samples, data.mix(track).samples)
        pairs.append((e, refs, 0, tid))
    results, summary = bss_eval.evaluate_corpus(pairs, cfg.int("filter_len"), cfg.int("jobs"))
    bss_eval.write_scores_csv(os.path.join(out, "scores.csv"), results, summary.skipped_ids)
    bss_eval.write_summary(os.path.join(out, "summary.txt"), summary, cfg.get("label"))
    sys.stdout.write(bss_eval.format_summary(summary, cfg.get("label")))
    return EXIT_OK


# ---------------------------------------------------------------- report

def cmd_report(cfg: RunConfig) -> int:
    runs = [r for r in cfg.get("runs").split(",") if r.strip()]
    labels = [s for s in cfg.get("labels").split(",")] if cfg.get("labels") else []
    if labels and len(labels) != len(runs):
        raise ConfigError(f"{len(labels)} labels for {len(runs)} runs")
    rows = [report.load_run(r.strip(), labels[i].strip() if labels else None) for i, r in enumerate(runs)]
    if cfg.bool("reference"):
        rows += report.reference_rows()
    out = cfg.get("out")
    _echo(cfg, out)
    paths = report.build_report(rows, out, cfg.get("title"))
    with open(paths["csv"]) as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


# ---------------------------------------------------------------- entry point

COMMANDS = {
    "augment": cmd_augment,
    "train": cmd_train,
    "separate": cmd_separate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxsep", description="Singing-voice separation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="config file with [common] and [%s] sections" % name)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int, help="worker processes")
        sp.add_argument("--sample-rate", dest="sample_rate", type=int)
        sp.add_argument("--log-level", dest="log_level")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any setting (repeatable)")
        return sp

    sp = command("augment", "generate pitch/stretch/formant variants of a corpus")
    sp.add_argument("--in", dest="in", help="corpus directory (one sub-directory per track)")
    sp.add_argument("--out", help="output directory for variants and manifest")
    sp.add_argument("--grid", choices=("paper", "custom"))
    sp.add_argument("--pitch", help="comma separated cents (custom grid); write --pitch=-100,0 when "
                                    "the list starts with a negative value")
    sp.add_argument("--stretch", help="comma separated stretch factors (custom grid)")
    sp.add_argument("--formant", help="comma separated cents (custom grid), same '=' form as --pitch")

    sp = command("train", "train a U-Net or Wave-U-Net")
    sp.add_argument("--data", help="corpus directory")
    sp.add_argument("--augmented", help="augment output directory (DA regimes)")
    sp.add_argument("--out", help="run directory")
    sp.add_argument("--model", choices=("unet", "waveunet"))
    sp.add_argument("--regime", choices=REGIMES)
    sp.add_argument("--lr", dest="learning_rate", type=float)
    sp.add_argument("--batch-size", dest="batch_size")
    sp.add_argument("--epochs", dest="max_epochs", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--hop", type=int)

    sp = command("separate", "separate the voice from mixtures")
    sp.add_argument("--checkpoint")
    sp.add_argument("--input", help="wav file, track directory or corpus directory")
    sp.add_argument("--out")
    sp.add_argument("--kind", choices=("unet", "waveunet"))

    sp = command("evaluate", "BSS-eval scores of voice estimates")
    sp.add_argument("--estimates")
    sp.add_argument("--references")
    sp.add_argument("--out")
    sp.add_argument("--label", help="row label, e.g. 'U DA-F'")
    sp.add_argument("--filter-len", dest="filter_len", type=int)

    sp = command("report", "merge run summaries and histories into tables and figures")
    sp.add_argument("--runs", nargs="+", help="run directories or summary files")
    sp.add_argument("--labels", nargs="+")
    sp.add_argument("--out")
    sp.add_argument("--reference", action="store_const", const="true",
                    help="append the published reference rows")
    return p


_NOT_SETTINGS = {"command", "config", "set"}


def _overrides(args) -> dict:
    out = {}
    for key, val in vars(args).items():
        if key in _NOT_SETTINGS or val is None:
            continue
        out[key] = ",".join(val) if isinstance(val, list) else val
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got '{item}'")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, _overrides(args))
        logging.basicConfig(level=getattr(logging, cfg.get("log_level").upper(), logging.INFO),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](cfg)
    except (ConfigError, InvalidArgument, StateError) as exc:
        print(f"voxsep: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, MissingStem, EmptyEvaluation, OSError) as exc:
        print(f"voxsep: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (StatError, UndefinedMetric, EnvelopeUndefined, FloatingPointError) as exc:
        print(f"voxsep: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
