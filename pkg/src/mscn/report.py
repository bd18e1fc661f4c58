"""Evaluation reports: plain-text tables, CSV files, and rendered figures.

Every report writer emits the delimited data alongside a matplotlib figure
so results can be read by machines and skimmed by people.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import FP_SCENE_CLASSES, ConfusionMatrix


def _ensure_dir(out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def confusion_figure(cm: ConfusionMatrix, class_names, path) -> None:
    """Row-normalized confusion heatmap with per-cell percentages."""
    norm = cm.row_normalized()
    k = cm.n_classes
    fig, ax = plt.subplots(figsize=(1.0 + 0.7 * k, 0.8 + 0.7 * k))
    shown = np.nan_to_num(norm, nan=0.0)
    ax.imshow(shown, cmap="Blues", vmin=0.0, vmax=1.0)
    for t in range(k):
        for p in range(k):
            if np.isnan(norm[t, p]):
                continue
            ax.text(p, t, f"{100 * norm[t, p]:.0f}", ha="center", va="center",
                    fontsize=8, color="black" if norm[t, p] < 0.6 else "white")
    ax.set_xticks(range(k), class_names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(k), class_names, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    acc = cm.accuracy
    ax.set_title(f"pixel accuracy {100 * acc:.2f}%" if np.isfinite(acc)
                 else "no labeled pixels")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_confusion_report(cm: ConfusionMatrix, class_names, out_dir,
                           stem: str = "confusion") -> dict:
    """Write counts + recall CSVs, a text summary, and the heatmap figure."""
    out_dir = _ensure_dir(out_dir)
    paths = {
        "counts_csv": out_dir / f"{stem}_counts.csv",
        "recall_csv": out_dir / f"{stem}_recall.csv",
        "text": out_dir / f"{stem}.txt",
        "figure": out_dir / f"{stem}.png",
    }
    with open(paths["counts_csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["truth\\pred"] + list(class_names))
        for t, name in enumerate(class_names):
            w.writerow([name] + [int(v) for v in cm.counts[t]])
    recalls = cm.recalls()
    with open(paths["recall_csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "recall", "truth_pixels"])
        for t, name in enumerate(class_names):
            w.writerow([name, f"{recalls[t]:.6f}" if np.isfinite(recalls[t]) else "nan",
                        int(cm.counts[t].sum())])
        w.writerow(["TOTAL_ACCURACY",
                    f"{cm.accuracy:.6f}" if np.isfinite(cm.accuracy) else "nan",
                    cm.total])

    width = max(len(n) for n in class_names) + 2
    lines = [f"evaluated pixels: {cm.total}"]
    acc = cm.accuracy
    lines.append(f"total pixel accuracy: {100 * acc:.2f}%"
                 if np.isfinite(acc) else "total pixel accuracy: undefined (no pixels)")
    lines.append("")
    lines.append("per-class recall:")
    for t, name in enumerate(class_names):
        r = recalls[t]
        lines.append(f"  {name:<{width}} "
                     + (f"{100 * r:6.2f}%" if np.isfinite(r) else "   n/a")
                     + f"  ({int(cm.counts[t].sum())} px)")
    paths["text"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    confusion_figure(cm, class_names, paths["figure"])
    return paths


def write_fp_report(rates_by_model: dict, totals, out_dir,
                    stem: str = "fp_rates") -> dict:
    """False-positive comparison table, CSV, and grouped bar chart.

    rates_by_model: {model label: length-9 rate array}; totals: truth pixel
    counts per scene class (shared across models)."""
    out_dir = _ensure_dir(out_dir)
    paths = {
        "csv": out_dir / f"{stem}.csv",
        "text": out_dir / f"{stem}.txt",
        "figure": out_dir / f"{stem}.png",
    }
    names = list(rates_by_model)
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_class", "truth_pixels"]
                   + [f"fp_rate[{n}]" for n in names])
        for j, cls in enumerate(FP_SCENE_CLASSES):
            row = [cls, int(totals[j])]
            for n in names:
                r = rates_by_model[n][j]
                row.append(f"{r:.6f}" if np.isfinite(r) else "nan")
            w.writerow(row)

    width = max(len(c) for c in FP_SCENE_CLASSES) + 2
    lines = ["false-positive rates over the 9 non-bridge scene classes "
             "(fraction of truth pixels predicted as any bridge component)", ""]
    header = f"  {'class':<{width}}" + "".join(f"{n:>18}" for n in names)
    lines.append(header)
    for j, cls in enumerate(FP_SCENE_CLASSES):
        row = f"  {cls:<{width}}"
        for n in names:
            r = rates_by_model[n][j]
            row += f"{100 * r:17.2f}%" if np.isfinite(r) else f"{'n/a':>18}"
        lines.append(row)
    means = {n: float(np.nanmean(rates_by_model[n])) for n in names}
    lines.append("")
    lines.append(f"  {'mean':<{width}}"
                 + "".join(f"{100 * means[n]:17.2f}%" for n in names))
    paths["text"].write_text("\n".join(lines) + "\n", encoding="utf-8")

    x = np.arange(len(FP_SCENE_CLASSES))
    bar_w = 0.8 / max(1, len(names))
    fig, ax = plt.subplots(figsize=(9, 4))
    for i, n in enumerate(names):
        vals = 100 * np.nan_to_num(rates_by_model[n], nan=0.0)
        ax.bar(x + i * bar_w, vals, width=bar_w, label=n)
    ax.set_xticks(x + 0.4 - bar_w / 2, FP_SCENE_CLASSES, rotation=30, ha="right")
    ax.set_ylabel("false positives [%]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(paths["figure"], dpi=120)
    plt.close(fig)
    return paths
