"""Comparison tables and figures across training runs.

A run directory holds any of ``summary.txt`` (from evaluation) and
``history.csv`` (from training). Rows follow the med/MAD layout of
SAR, SIR and SDR; missing values print as ``PLACEHOLDER``.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

from .bss_eval import read_summary  # noqa: E402
from .models.training import read_history  # noqa: E402

PLACEHOLDER = "×"
COLUMNS = ("sar_med", "sar_mad", "sir_med", "sir_mad", "sdr_med", "sdr_mad")
REFERENCE_PATH = os.path.join(os.path.dirname(__file__), "reference_rows.csv")


@dataclass
class ReportRow:
    model: str
    dataset: str
    values: dict = field(default_factory=dict)  # column -> float or None
    history: list = field(default_factory=list)
    source: str = ""

    def label(self) -> str:
        return f"{self.model} {self.dataset}".strip()


def _split_label(label: str, fallback: str):
    parts = label.split(None, 1) if label else []
    if not parts:
        return fallback, ""
    return parts[0], parts[1] if len(parts) > 1 else ""


def load_run(path: str, label: str | None = None) -> ReportRow:
    """Collect summary and history of one run directory (or a summary file)."""
    if os.path.isfile(path):
        summary_path, history_path = path, None
        base = os.path.dirname(path)
    else:
        summary_path = os.path.join(path, "summary.txt")
        history_path = os.path.join(path, "history.csv")
        base = path
    has_summary = os.path.isfile(summary_path)
    has_history = history_path is not None and os.path.isfile(history_path)
    if not (has_summary or has_history):
        raise FileNotFoundError(f"no summary.txt or history.csv under {path}")
    values = {c: None for c in COLUMNS}
    file_label = ""
    if has_summary:
        s = read_summary(summary_path)
        file_label = s.get("label", "")
        for metric in ("SAR", "SIR", "SDR"):
            med, mad = s.get(metric, (None, None))
            values[f"{metric.lower()}_med"], values[f"{metric.lower()}_mad"] = med, mad
    model, dataset = _split_label(label or file_label, os.path.basename(os.path.normpath(base)))
    history = read_history(history_path) if has_history else []
    return ReportRow(model, dataset, values, history, source=path)


def reference_rows(path=REFERENCE_PATH) -> list:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            vals = {c: float(r[c]) if r[c] else None for c in COLUMNS}
            rows.append(ReportRow(r["model"], r["dataset"], vals, source="reference"))
    return rows


def _fmt(v):
    return PLACEHOLDER if v is None else f"{v:.2f}"


def format_markdown(rows) -> str:
    head = ("| Model | Dataset | SAR med | SAR MAD | SIR med | SIR MAD | SDR med | SDR MAD |\n"
            "|---|---|---:|---:|---:|---:|---:|---:|\n")
    body = "".join(f"| {r.model} | {r.dataset} | " + " | ".join(_fmt(r.values.get(c)) for c in COLUMNS) + " |\n"
                   for r in rows)
    return head + body


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "dataset", *COLUMNS])
        for r in rows:
            w.writerow([r.model, r.dataset, *(_fmt(r.values.get(c)) for c in COLUMNS)])


def plot_loss_curves(rows, path) -> bool:
    runs = [r for r in rows if r.history]
    if not runs:
        return False
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i, r in enumerate(runs):
        color = f"C{i % 10}"
        epochs = [h["epoch"] for h in r.history]
        ax.plot(epochs, [h["train_loss"] for h in r.history], color=color, label=f"{r.label()} train")
        valid = [(h["epoch"], h["valid_loss"]) for h in r.history if h["valid_loss"] is not None]
        if valid:
            ax.plot(*zip(*valid), color=color, linestyle="--", label=f"{r.label()} valid")
    ax.set_xlabel("epoch")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_ylabel("L1 loss")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def plot_scores(rows, path) -> bool:
    """Grouped bars of median SAR/SIR/SDR per row, MAD as error bars."""
    scored = [r for r in rows if any(r.values.get(f"{m}_med") is not None for m in ("sar", "sir", "sdr"))]
    if not scored:
        return False
    fig, ax = plt.subplots(figsize=(max(6.4, 0.9 * len(scored) + 2), 4.0))
    width = 0.27
    for k, metric in enumerate(("sar", "sir", "sdr")):
        label = metric.upper()
        for i, r in enumerate(scored):
            med = r.values.get(f"{metric}_med")
            if med is None:
                continue
            published = r.source == "reference"
            ax.bar(i + (k - 1) * width, med, width, yerr=r.values.get(f"{metric}_mad") or 0.0, capsize=2,
                   color=f"C{k}", alpha=0.45 if published else 1.0, hatch="//" if published else None,
                   label=label)
            label = None
    ax.set_xticks(range(len(scored)))
    ax.set_xticklabels([r.label() for r in scored], rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("dB (median, MAD bars; hatched = published)")
    ax.axhline(0, color="k", linewidth=0.6)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def build_report(rows, out_dir, title="Separation results") -> dict:
    """Write report.md, report.csv and figures; return the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {"markdown": os.path.join(out_dir, "report.md"), "csv": os.path.join(out_dir, "report.csv")}
    figures = []
    loss_png = os.path.join(out_dir, "loss_curves.png")
    if plot_loss_curves(rows, loss_png):
        figures.append(loss_png)
    score_png = os.path.join(out_dir, "scores.png")
    if plot_scores(rows, score_png):
        figures.append(score_png)
    write_csv(paths["csv"], rows)
    with open(paths["markdown"], "w") as fh:
        fh.write(f"# {title}\n\n")
        fh.write(format_markdown(rows))
        fh.write(f"\n{PLACEHOLDER} marks a metric that is not available.\n")
        for fig in figures:
            fh.write(f"\n![{os.path.splitext(os.path.basename(fig))[0]}]({os.path.basename(fig)})\n")
    paths["figures"] = figures
    return paths
