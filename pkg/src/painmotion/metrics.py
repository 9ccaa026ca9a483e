"""Example-based multi-label metrics and confidence-interval reporting.

All metrics take an (n, l) ground-truth matrix whose positive entries mark
relevant labels (either {-1,+1} or boolean/0-1 coding works) and either a
prediction matrix of the same coding (set metrics) or a real score matrix
(ranking metrics).  Ranks run from 1 (highest score) to l, ties broken by
ascending label index.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np


def _positives(Y):
    return np.asarray(Y) > 0


def _check_shapes(Y, other):
    Y = np.atleast_2d(np.asarray(Y))
    other = np.atleast_2d(np.asarray(other))
    if Y.shape != other.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {other.shape}")
    return Y, other


def ranks_from_scores(scores):
    """Rank positions 1..l per instance, 1 = highest score, ties by index."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    n, l = scores.shape
    ranks = np.empty((n, l), dtype=np.intp)
    idx = np.arange(l)
    for i in range(n):
        order = np.lexsort((idx, -scores[i]))
        ranks[i, order] = idx + 1
    return ranks


def hamming_loss(Y, Y_pred):
    """Fraction of label slots where prediction and truth disagree."""
    Y, Y_pred = _check_shapes(Y, Y_pred)
    return float((_positives(Y) != _positives(Y_pred)).mean())


def coverage(Y, scores):
    """Average depth in the ranked label list needed to reach every
    relevant label, minus one. Instances without relevant labels are
    skipped with a warning."""
    Y, scores = _check_shapes(Y, scores)
    rel = _positives(Y)
    ranks = ranks_from_scores(scores)
    vals = []
    for i in range(Y.shape[0]):
        if not rel[i].any():
            warnings.warn(f"coverage: instance {i} has no relevant labels, skipped")
            continue
        vals.append(ranks[i, rel[i]].max() - 1.0)
    return float(np.mean(vals))


def ranking_loss(Y, scores):
    """Fraction of (relevant, irrelevant) label pairs ranked in the wrong
    order. Instances lacking either set are skipped."""
    Y, scores = _check_shapes(Y, scores)
    rel = _positives(Y)
    ranks = ranks_from_scores(scores)
    vals = []
    for i in range(Y.shape[0]):
        r, ir = np.flatnonzero(rel[i]), np.flatnonzero(~rel[i])
        if r.size == 0 or ir.size == 0:
            continue
        bad = (ranks[i, r][:, None] > ranks[i, ir][None, :]).sum()
        vals.append(bad / (r.size * ir.size))
    return float(np.mean(vals))


def example_based_accuracy(Y, Y_pred):
    """Mean Jaccard index between predicted and true label sets; two empty
    sets count as a perfect match."""
    Y, Y_pred = _check_shapes(Y, Y_pred)
    t, p = _positives(Y), _positives(Y_pred)
    inter = (t & p).sum(axis=1)
    union = (t | p).sum(axis=1)
    return float(np.where(union > 0, inter / np.maximum(union, 1), 1.0).mean())


def f_measure_multilabel(Y, Y_pred):
    """Example-based F measure, in percent."""
    Y, Y_pred = _check_shapes(Y, Y_pred)
    t, p = _positives(Y), _positives(Y_pred)
    inter = (t & p).sum(axis=1)
    denom = t.sum(axis=1) + p.sum(axis=1)
    return float(np.where(denom > 0, 2.0 * inter / np.maximum(denom, 1), 1.0).mean() * 100.0)


def precision_recall_f1_binary(tp, fp, fn):
    """Precision, recall and F1 from counts; zero denominators give 0."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


MULTILABEL_METRICS = ("HL", "Cvg", "Rkl", "EbA", "F1")
BINARY_METRICS = ("Precision", "Recall", "F1")


def multilabel_report(Y, Y_pred, scores):
    """All five example-based metrics as a dict."""
    return {
        "HL": hamming_loss(Y, Y_pred),
        "Cvg": coverage(Y, scores),
        "Rkl": ranking_loss(Y, scores),
        "EbA": example_based_accuracy(Y, Y_pred),
        "F1": f_measure_multilabel(Y, Y_pred),
    }


def binary_report(y_true, y_pred):
    """Precision/recall/F1 (fractions) for boolean predictions."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    tp = int((y_true & y_pred).sum())
    fp = int((~y_true & y_pred).sum())
    fn = int((y_true & ~y_pred).sum())
    p, r, f1 = precision_recall_f1_binary(tp, fp, fn)
    return {"Precision": p, "Recall": r, "F1": f1}


@dataclass
class EvalReport:
    """Per-metric mean and 95% half-width over repetitions, plus raw values."""

    metric_names: tuple
    per_repetition: dict  # name -> list of per-repetition values
    repetitions: int = 0
    degenerate_ci: bool = False
    mean: dict = field(default_factory=dict)
    half_width: dict = field(default_factory=dict)

    @classmethod
    def from_repetitions(cls, rows):
        """``rows`` is a list of per-repetition metric dicts."""
        if not rows:
            raise ValueError("no repetitions to aggregate")
        names = tuple(rows[0])
        per = {name: [float(r[name]) for r in rows] for name in names}
        r = len(rows)
        report = cls(metric_names=names, per_repetition=per, repetitions=r, degenerate_ci=r < 2)
        for name, vals in per.items():
            arr = np.asarray(vals)
            report.mean[name] = float(arr.mean())
            if r < 2 or np.ptp(arr) == 0.0:
                report.half_width[name] = 0.0
            else:
                report.half_width[name] = float(1.96 * arr.std(ddof=1) / np.sqrt(r))
        return report

    def row(self, label):
        """Flat CSV row: label then mean/half-width per metric."""
        out = [label]
        for name in self.metric_names:
            out.append(self.mean[name])
            out.append(self.half_width[name])
        return out

    def to_dict(self):
        return {
            "repetitions": self.repetitions,
            "degenerate_ci": self.degenerate_ci,
            "metrics": {
                name: {
                    "mean": self.mean[name],
                    "half_width_95": self.half_width[name],
                    "per_repetition": self.per_repetition[name],
                }
                for name in self.metric_names
            },
        }
