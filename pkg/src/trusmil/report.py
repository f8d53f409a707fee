"""Run reports: a results table as markdown and CSV (one row per
backbone/finetuning configuration, ROI-scale rows first) plus one ROC
figure per fold leg with every configuration overlaid."""

import csv
import io as _io
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt

TABLE_COLUMNS = ("auroc", "balanced_accuracy", "sensitivity", "specificity")
COLUMN_TITLES = {
    "auroc": "AUROC",
    "balanced_accuracy": "Bal. Accuracy",
    "sensitivity": "Sensitivity",
    "specificity": "Specificity",
}


class ReportError(RuntimeError):
    pass


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.1f} ± {std:.2f}"


def _sorted_rows(results: list[dict]) -> list[dict]:
    scale_rank = {"roi": 0, "multiscale": 1}
    return sorted(results, key=lambda r: (scale_rank.get(r["scale"], 2),
                                          r["backbone"], r["finetuning"]))


def roc_points(scores, labels):
    """ROC curve vertices (fpr, tpr) swept over score thresholds."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    order = np.argsort(-scores, kind="stable")
    labels = labels[order]
    tps = np.cumsum(labels)
    fps = np.cumsum(1 - labels)
    tpr = np.concatenate([[0.0], tps / max(int(labels.sum()), 1)])
    fpr = np.concatenate([[0.0], fps / max(int((1 - labels).sum()), 1)])
    return fpr, tpr


def _results(run_dir: Path) -> list[dict]:
    metrics_path = run_dir / "metrics" / "metrics.json"
    if not metrics_path.exists():
        raise ReportError(f"no metrics at {metrics_path}; run the evaluate stage")
    results = json.loads(metrics_path.read_text())
    if not results:
        raise ReportError("metrics file contains no configurations")
    n_folds = {len(r["per_fold"]) for r in results}
    if len(n_folds) != 1:
        raise ReportError(f"inconsistent fold counts across configurations: {n_folds}")
    return _sorted_rows(results)


def _markdown_table(results) -> str:
    lines = [
        "| Backbone | Finetuning | AUROC | Bal. Accuracy | Sensitivity | Specificity |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for row in results:
        cells = [format_cell(row["aggregate"][m]["mean"], row["aggregate"][m]["std"])
                 for m in TABLE_COLUMNS]
        lines.append("| " + " | ".join([row["backbone"], row["finetuning"], *cells])
                     + " |")
    return "\n".join(lines) + "\n"


def _csv_table(results) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["backbone", "finetuning"]
                    + [COLUMN_TITLES[m] for m in TABLE_COLUMNS])
    for row in results:
        writer.writerow([row["backbone"], row["finetuning"]]
                        + [format_cell(row["aggregate"][m]["mean"],
                                       row["aggregate"][m]["std"])
                           for m in TABLE_COLUMNS])
    return buf.getvalue()


def _roc_figure(run_dir, results, leg_idx, out_path):
    fig, ax = plt.subplots(figsize=(5, 5))
    any_curve = False
    for row in results:
        template = row.get("predictions_template")
        if template is None:
            template = _default_template(row)
        path = run_dir / template.format(leg=f"leg{leg_idx:02d}")
        if not path.exists():
            continue
        with open(path) as fh:
            preds = [r for r in csv.DictReader(fh) if r["role"] == "test"]
        scores = [float(r["probability"]) for r in preds]
        labels = [int(r["label"]) for r in preds]
        if len(set(labels)) < 2:
            continue
        fpr, tpr = roc_points(scores, labels)
        auc = row["per_fold"][leg_idx]["auroc"]
        ax.plot(fpr, tpr, label=f"{row['backbone']}/{row['finetuning']}"
                                f" ({auc:.1f})")
        any_curve = True
    if not any_curve:
        plt.close(fig)
        return False
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title(f"Test fold {leg_idx}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return True


def _default_template(row) -> str:
    if row["scale"] == "roi":
        return "legs/{leg}/finetune/core_predictions.csv"
    gamma = row["finetuning"].split("gamma=")[-1].rstrip(")") \
        if "gamma=" in row["finetuning"] else "1"
    return f"legs/{{leg}}/multiscale/gamma_{gamma}/core_predictions.csv"


def emit_report(run_dir, roc_plots: bool = True) -> list[Path]:
    """Write report.md, report.csv and (optionally) per-fold ROC figures
    under <run_dir>/report; returns the written paths."""
    run_dir = Path(run_dir)
    results = _results(run_dir)
    out_dir = run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)

    md_path = out_dir / "report.md"
    md_path.write_text("# Results\n\n" + _markdown_table(results))
    csv_path = out_dir / "report.csv"
    csv_path.write_text(_csv_table(results))
    written = [md_path, csv_path]

    if roc_plots:
        n_folds = len(results[0]["per_fold"])
        for leg_idx in range(n_folds):
            out_path = out_dir / f"roc_leg{leg_idx:02d}.png"
            if _roc_figure(run_dir, results, leg_idx, out_path):
                written.append(out_path)
    return written
