"""Balanced accuracy, AUROC, AUPR and three-seed aggregation."""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

METRICS = ("balanced_accuracy", "auroc", "aupr")


def confusion(y_true, y_pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def balanced_accuracy(y_true, y_pred, n_classes=None):
    """Mean recall over the classes present in ``y_true``."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    k = n_classes or int(max(y_true.max(), y_pred.max())) + 1
    cm = confusion(y_true, y_pred, k)
    support = cm.sum(1)
    present = support > 0
    return float((np.diag(cm)[present] / support[present]).mean())


def auroc(y_true, scores):
    """P(score of a random positive > score of a random negative), ties counted as 1/2.

    Rank-sum form with mid-ranks; ``None`` when only one class is present.
    """
    y = np.asarray(y_true).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def aupr(y_true, scores):
    """Average precision: sum over thresholds of (recall step) x precision."""
    y = np.asarray(y_true).astype(bool)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        return None
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # one operating point per distinct score (ties enter together)
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    precision = tp / (last + 1)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class MetricReport:
    balanced_accuracy: float
    auroc: float | None
    aupr: float | None
    confusion: np.ndarray = field(repr=False, default=None)

    def as_dict(self):
        return {m: getattr(self, m) for m in METRICS}


def report(y_true, probs):
    """Metrics from (N, K) class probabilities. Multi-class AUROC/AUPR are one-vs-rest macro means."""
    probs = np.asarray(probs, dtype=np.float64)
    y_true = np.asarray(y_true)
    k = probs.shape[1]
    pred = probs.argmax(1)
    bal = balanced_accuracy(y_true, pred, k)
    if k == 2:
        roc, pr = auroc(y_true == 1, probs[:, 1]), aupr(y_true == 1, probs[:, 1])
    else:
        rocs = [auroc(y_true == c, probs[:, c]) for c in range(k)]
        prs = [aupr(y_true == c, probs[:, c]) for c in range(k)]
        rocs = [r for r in rocs if r is not None]
        prs = [p for p in prs if p is not None]
        roc = float(np.mean(rocs)) if rocs else None
        pr = float(np.mean(prs)) if prs else None
    if len(np.unique(y_true)) < 2:
        roc = pr = None
    return MetricReport(bal, roc, pr, confusion(y_true, pred, k))


def aggregate(reports):
    """{metric: (mean, std, per-run values)}; absent values stay absent."""
    out = {}
    for m in METRICS:
        vals = [getattr(r, m) for r in reports]
        present = [v for v in vals if v is not None]
        mean = float(np.mean(present)) if present else None
        std = float(np.std(present)) if present else None
        out[m] = (mean, std, vals)
    return out


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def write_csv(path, reports, n_seeds=3):
    """Header ``metric,mean,std,seed0,...``; one row per metric."""
    agg = aggregate(reports)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "std"] + [f"seed{i}" for i in range(n_seeds)])
        for m in METRICS:
            mean, std, vals = agg[m]
            vals = list(vals) + [None] * (n_seeds - len(vals))
            w.writerow([m, _fmt(mean), _fmt(std)] + [_fmt(v) for v in vals[:n_seeds]])
