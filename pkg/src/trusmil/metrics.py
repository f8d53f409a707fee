"""Classification metrics: AUROC, sensitivity/specificity and their
cross-fold aggregation as mean +/- sample standard deviation."""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

METRIC_NAMES = ("auroc", "balanced_accuracy", "sensitivity", "specificity")


def _validate_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary")
    if labels.min() == labels.max():
        raise ValueError("AUROC undefined: labels contain a single class")
    return scores, labels.astype(int)


def auroc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative,
    ties counted 0.5 (Mann-Whitney U formulation)."""
    scores, labels = _validate_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)   # average ranks on ties
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """Sensitivity, specificity and balanced accuracy at a threshold;
    predictions are positive iff score >= threshold."""
    scores, labels = _validate_binary(scores, labels)
    pred = scores >= threshold
    pos = labels == 1
    neg = ~pos
    sensitivity = float((pred & pos).sum() / pos.sum())
    specificity = float((~pred & neg).sum() / neg.sum())
    return {
        "sensitivity": sensitivity,
        "specificity": specificity,
        "balanced_accuracy": (sensitivity + specificity) / 2.0,
    }


def select_threshold(scores, labels) -> float:
    """Threshold maximizing balanced accuracy on the given (validation)
    scores; candidates are midpoints between adjacent distinct scores.
    Deterministic: the smallest maximizing candidate wins."""
    scores, labels = _validate_binary(scores, labels)
    uniq = np.unique(scores)
    candidates = np.concatenate([
        [uniq[0] - 1e-6],
        (uniq[:-1] + uniq[1:]) / 2.0 if uniq.size > 1 else np.empty(0),
        [0.5],
        [uniq[-1] + 1e-6],
    ])
    candidates = np.unique(candidates)
    best_t, best_ba = 0.5, -1.0
    for t in candidates:
        ba = confusion_metrics(scores, labels, threshold=float(t))["balanced_accuracy"]
        if ba > best_ba + 1e-12:
            best_t, best_ba = float(t), ba
    return best_t


def cross_fold_summary(per_fold: list[dict[str, float]]) -> dict[str, tuple[float, float]]:
    """Mean and sample (N-1) standard deviation per metric across folds.
    A single fold reports std 0."""
    if not per_fold:
        raise ValueError("no folds to summarize")
    keys = per_fold[0].keys()
    out = {}
    for key in keys:
        values = np.array([fold[key] for fold in per_fold], dtype=np.float64)
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        out[key] = (float(values.mean()), std)
    return out


@dataclass
class MetricsReport:
    """Per-fold and aggregated metrics for one model configuration,
    expressed in percent."""

    per_fold: list[dict[str, float]]
    aggregate: dict[str, tuple[float, float]] = field(default_factory=dict)
    threshold: float = 0.5

    def __post_init__(self):
        if not self.aggregate:
            self.aggregate = cross_fold_summary(self.per_fold)
        for fold in self.per_fold:
            for name in METRIC_NAMES:
                if not 0.0 <= fold[name] <= 100.0:
                    raise ValueError(f"{name} out of [0, 100]")
            ba = (fold["sensitivity"] + fold["specificity"]) / 2.0
            if abs(ba - fold["balanced_accuracy"]) > 0.05:
                raise ValueError("balanced accuracy inconsistent with sensitivity/specificity")


def fold_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """All four metrics for one fold, in percent."""
    conf = confusion_metrics(scores, labels, threshold=threshold)
    return {
        "auroc": 100.0 * auroc(scores, labels),
        "balanced_accuracy": 100.0 * conf["balanced_accuracy"],
        "sensitivity": 100.0 * conf["sensitivity"],
        "specificity": 100.0 * conf["specificity"],
    }
