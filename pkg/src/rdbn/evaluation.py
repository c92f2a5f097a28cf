"""Held-out link prediction and ranking metrics."""
from dataclasses import dataclass
import csv

import numpy as np
from scipy.stats import rankdata

from .errors import RDBNError
from .inference import SampleCollection, heldout_survival


class MetricError(RDBNError, ValueError):
    exit_code = 2


@dataclass
class PredictionReport:
    entries: np.ndarray  # (H, 3) rows (t, i, j)
    labels: np.ndarray
    probs: np.ndarray
    auc: float
    avg_precision: float
    n_samples_used: int

    def __len__(self):
        return len(self.labels)

    def summary(self):
        return {"auc": self.auc, "avg_precision": self.avg_precision,
                "n_entries": len(self), "n_samples": self.n_samples_used}


def predict_probs(samples, mask):
    """Link probability ``1 - mean_s exp(-rate_s)`` at every held-out dyad.

    ``samples`` is a :class:`SampleCollection` (its running sums are used
    directly) or a sequence of states.
    """
    dyads = np.asarray(mask.dyads if hasattr(mask, "dyads") else mask, dtype=np.int64).reshape(-1, 3)
    if isinstance(samples, SampleCollection):
        if samples.n_samples < 1:
            raise RDBNError("no posterior samples to predict from")
        order = _align(samples.heldout, dyads)
        return 1.0 - samples.survival_mean[order], samples.n_samples
    samples = list(samples)
    if not samples:
        raise RDBNError("no posterior samples to predict from")
    total = np.zeros(len(dyads))
    for s in samples:
        total += heldout_survival(s, dyads)
    return 1.0 - total / len(samples), len(samples)


def _align(stored, wanted):
    """Index into ``stored`` for each row of ``wanted`` (orientation-insensitive)."""
    if stored.shape == wanted.shape and np.array_equal(stored, wanted):
        return np.arange(len(wanted))
    n = int(max(stored.max(initial=0), wanted.max(initial=0))) + 1

    def key(a):
        return (a[:, 0] * n + a[:, 1]) * n + a[:, 2]

    sk = key(stored)
    order = np.argsort(sk)
    pos = np.searchsorted(sk[order], key(wanted))
    pos = np.minimum(pos, len(sk) - 1)
    hit = sk[order][pos] == key(wanted)
    if not hit.all():
        swapped = wanted[:, [0, 2, 1]]
        pos2 = np.minimum(np.searchsorted(sk[order], key(swapped)), len(sk) - 1)
        hit2 = sk[order][pos2] == key(swapped)
        if not np.all(hit | hit2):
            raise RDBNError("mask contains dyads that were not held out during fitting")
        pos = np.where(hit, pos, pos2)
    return order[pos]


def auc(labels, scores):
    """Area under the ROC curve via midranks (ties count one half)."""
    y = np.asarray(labels).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auc is undefined without both positive and negative labels")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(labels, scores):
    """Mean of precision at the rank of each positive; ties keep input order."""
    y = np.asarray(labels).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("average_precision is undefined without positive labels")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, n_pos + 1) / ranks))


def evaluate(samples, mask):
    probs, used = predict_probs(samples, mask)
    labels = np.asarray(mask.labels, dtype=np.int64)
    return PredictionReport(entries=np.asarray(mask.dyads), labels=labels, probs=probs,
                            auc=auc(labels, probs), avg_precision=average_precision(labels, probs),
                            n_samples_used=int(used))


def write_report(report, path, summary_path=None):
    """Per-entry CSV ``t,i,j,label,prob``; the summary line goes to ``summary_path``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "label", "prob"])
        for (t, i, j), lab, p in zip(report.entries.tolist(), report.labels.tolist(), report.probs):
            w.writerow([t, i, j, lab, "%.17g" % p])
    if summary_path is not None:
        write_summary(report, summary_path)


def write_summary(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["auc", "avg_precision", "n_entries", "n_samples"])
        w.writerow(["%.17g" % report.auc, "%.17g" % report.avg_precision, len(report),
                    report.n_samples_used])


def read_predictions(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    entries = np.array([[int(r["t"]), int(r["i"]), int(r["j"])] for r in rows], dtype=np.int64).reshape(-1, 3)
    labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)
    probs = np.array([float(r["prob"]) for r in rows])
    return entries, labels, probs
