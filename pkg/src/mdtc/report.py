"""Run reports: matplotlib figures rendered to files next to the
delimited summaries (TSV for humans and tools, JSON for machines)."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .training import StepMetrics

LOSS_KEYS = ("l_c", "l_d", "l_e", "l_uvt", "l_lvt")


def write_metrics_jsonl(path, histories: dict[str, list[StepMetrics]]) -> None:
    """One JSON object per step; the key identifies the fold or run."""
    lines = []
    for run_key, history in histories.items():
        for m in history:
            record = {"run": run_key}
            record.update(m.to_dict())
            lines.append(json.dumps(record, sort_keys=True))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def render_loss_curves(histories: dict[str, list[StepMetrics]], out_path) -> Path:
    """Per-term loss trajectories, one panel per term, one line per run."""
    fig, axes = plt.subplots(1, len(LOSS_KEYS), figsize=(4 * len(LOSS_KEYS), 3.2),
                             sharex=True)
    for ax, key in zip(axes, LOSS_KEYS):
        for run_key, history in histories.items():
            steps = [m.step for m in history if getattr(m, key) is not None]
            values = [getattr(m, key) for m in history if getattr(m, key) is not None]
            if steps:
                ax.plot(steps, values, label=str(run_key), linewidth=0.8)
        ax.set_title(key)
        ax.set_xlabel("step")
    axes[0].set_ylabel("loss")
    if len(histories) > 1:
        axes[-1].legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_eval_curves(histories: dict[str, list[StepMetrics]], out_path) -> Path | None:
    """Held-out accuracy per domain over training, when it was recorded."""
    series: dict[tuple[str, str], tuple[list[int], list[float]]] = {}
    for run_key, history in histories.items():
        for m in history:
            if m.eval_accuracy is None:
                continue
            for domain, acc in m.eval_accuracy.items():
                xs, ys = series.setdefault((run_key, domain), ([], []))
                xs.append(m.step)
                ys.append(acc)
    if not series:
        return None
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for (run_key, domain), (xs, ys) in sorted(series.items()):
        ax.plot(xs, ys, label=f"{run_key}/{domain}", linewidth=0.9)
    ax.set_xlabel("step")
    ax.set_ylabel("held-out accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def summarize_folds(fold_reports: list[dict[str, float]]) -> dict:
    """Mean and std per domain across folds plus the cross-domain average."""
    domains = sorted(fold_reports[0])
    per_domain = {}
    for name in domains:
        vals = [r[name] for r in fold_reports]
        per_domain[name] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    fold_avgs = [float(np.mean([r[name] for name in domains])) for r in fold_reports]
    return {
        "per_domain": per_domain,
        "average": {"mean": float(np.mean(fold_avgs)), "std": float(np.std(fold_avgs))},
        "folds": fold_reports,
    }


def write_summary(summary: dict, out_dir) -> tuple[Path, Path]:
    """summary.json plus a summary.tsv table (domain, mean, std)."""
    out_dir = Path(out_dir)
    json_path = out_dir / "summary.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    rows = ["domain\tmean_accuracy\tstd"]
    for name, stats in sorted(summary["per_domain"].items()):
        rows.append(f"{name}\t{stats['mean']:.6f}\t{stats['std']:.6f}")
    avg = summary["average"]
    rows.append(f"AVG\t{avg['mean']:.6f}\t{avg['std']:.6f}")
    tsv_path = out_dir / "summary.tsv"
    tsv_path.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    return tsv_path, json_path


def render_summary_figure(summary: dict, out_path) -> Path:
    """Bar chart of per-domain accuracy with std whiskers plus the average."""
    names = sorted(summary["per_domain"]) + ["AVG"]
    means = [summary["per_domain"][n]["mean"] for n in names[:-1]]
    stds = [summary["per_domain"][n]["std"] for n in names[:-1]]
    means.append(summary["average"]["mean"])
    stds.append(summary["average"]["std"])
    fig, ax = plt.subplots(figsize=(1.2 * len(names) + 2, 3.6))
    ax.bar(range(len(names)), means, yerr=stds, capsize=3,
           color=["#4878d0"] * (len(names) - 1) + ["#ee854a"])
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def write_comparison(comparison: dict, out_dir) -> tuple[Path, Path]:
    """comparison.json plus comparison.tsv: one row per method."""
    out_dir = Path(out_dir)
    json_path = out_dir / "comparison.json"
    json_path.write_text(json.dumps(comparison, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    domains = sorted(comparison["joint"]["domain_means"])
    header = "method\t" + "\t".join(domains) + "\tAVG\tstd"
    rows = [header]
    for method in ("joint", "marginal"):
        stats = comparison[method]
        cells = [f"{stats['domain_means'][d]:.6f}" for d in domains]
        rows.append(method + "\t" + "\t".join(cells)
                    + f"\t{stats['mean_average']:.6f}\t{stats['std_average']:.6f}")
    tsv_path = out_dir / "comparison.tsv"
    tsv_path.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    return tsv_path, json_path


def render_comparison_figure(comparison: dict, out_path) -> Path:
    domains = sorted(comparison["joint"]["domain_means"]) + ["AVG"]
    width = 0.38
    xs = np.arange(len(domains))
    fig, ax = plt.subplots(figsize=(1.4 * len(domains) + 2, 3.6))
    for i, (method, color) in enumerate((("joint", "#4878d0"), ("marginal", "#d65f5f"))):
        stats = comparison[method]
        vals = [stats["domain_means"][d] for d in domains[:-1]]
        vals.append(stats["mean_average"])
        ax.bar(xs + (i - 0.5) * width, vals, width, label=method, color=color)
    ax.set_xticks(xs, domains, rotation=30, ha="right")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
