"""Threshold-independent evaluation of per-timestep anomaly scores.

Both metrics treat timesteps as an unordered bag of (score, label) pairs.
Ties are handled as blocks: all timesteps sharing a score value cross any
threshold together.

AUC-ROC is computed as the Mann-Whitney statistic,
P(score_pos > score_neg) + 0.5 P(tie), via average ranks.

AUC-PR integrates the precision-recall curve with precision held constant
between recall steps, sweeping thresholds in descending score order.  The
curve starts at the first threshold's point; no synthetic (0, 1) anchor is
prepended, so reported values are directly comparable across tools using
the same convention.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .validation import ensure_vector


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given labels."""


def _check_labeled(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = ensure_vector(scores, "scores")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != scores.shape[0]:
        raise ValueError(
            f"labels must match scores in length, got {labels.shape} vs {scores.shape}"
        )
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary (0 or 1)")
    return scores, labels.astype(bool)


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve; ties counted half."""
    scores, labels = _check_labeled(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            "AUC-ROC is undefined: both classes must be present"
        )
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    # average ranks over tie blocks (ranks are 1-based)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = float(ranks[labels].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_pr(scores, labels) -> float:
    """Area under the precision-recall step curve."""
    scores, labels = _check_labeled(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUC-PR is undefined: no positive labels")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    area = 0.0
    tp = 0
    seen = 0
    prev_recall = 0.0
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i : j + 1].sum())
        seen += j - i + 1
        recall = tp / n_pos
        precision = tp / seen
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return area


@dataclass(frozen=True)
class SeriesEval:
    """Metric values for one test series.

    ``vus_pr`` and ``pate`` are reserved for externally computed values and
    are never produced by this toolkit; they merge into reports for
    comparison tables.
    """

    series_id: str
    auc_roc: float
    auc_pr: float
    vus_pr: float | None = None
    pate: float | None = None


@dataclass(frozen=True)
class EvalReport:
    """Per-series metric values plus their unweighted means."""

    series: tuple[SeriesEval, ...]
    mean_auc_roc: float
    mean_auc_pr: float
    mean_vus_pr: float | None = None
    mean_pate: float | None = None

    def to_dict(self) -> dict:
        d = {
            "series": [
                {
                    k: v
                    for k, v in {
                        "series_id": s.series_id,
                        "auc_roc": s.auc_roc,
                        "auc_pr": s.auc_pr,
                        "vus_pr": s.vus_pr,
                        "pate": s.pate,
                    }.items()
                    if v is not None
                }
                for s in self.series
            ],
            "mean": {"auc_roc": self.mean_auc_roc, "auc_pr": self.mean_auc_pr},
        }
        if self.mean_vus_pr is not None:
            d["mean"]["vus_pr"] = self.mean_vus_pr
        if self.mean_pate is not None:
            d["mean"]["pate"] = self.mean_pate
        return d


def evaluate_series(scores, labels, series_id: str) -> SeriesEval:
    return SeriesEval(
        series_id=series_id,
        auc_roc=auc_roc(scores, labels),
        auc_pr=auc_pr(scores, labels),
    )


def mean_over_series(series: list[SeriesEval]) -> EvalReport:
    """Unweighted arithmetic mean across series."""
    if not series:
        raise ValueError("no series to average")
    mean_vus = None
    if all(s.vus_pr is not None for s in series):
        mean_vus = float(np.mean([s.vus_pr for s in series]))
    mean_pate = None
    if all(s.pate is not None for s in series):
        mean_pate = float(np.mean([s.pate for s in series]))
    return EvalReport(
        series=tuple(series),
        mean_auc_roc=float(np.mean([s.auc_roc for s in series])),
        mean_auc_pr=float(np.mean([s.auc_pr for s in series])),
        mean_vus_pr=mean_vus,
        mean_pate=mean_pate,
    )


def report_to_csv(report: EvalReport) -> str:
    """Tidy CSV of per-series values plus a final mean row."""
    has_vus = report.mean_vus_pr is not None
    has_pate = report.mean_pate is not None
    cols = ["series_id", "auc_roc", "auc_pr"]
    if has_vus:
        cols.append("vus_pr")
    if has_pate:
        cols.append("pate")
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")

    def row(sid, *values):
        buf.write(sid + "," + ",".join(repr(float(v)) for v in values) + "\n")

    for s in report.series:
        values = [s.auc_roc, s.auc_pr]
        if has_vus:
            values.append(s.vus_pr)
        if has_pate:
            values.append(s.pate)
        row(s.series_id, *values)
    mean_values = [report.mean_auc_roc, report.mean_auc_pr]
    if has_vus:
        mean_values.append(report.mean_vus_pr)
    if has_pate:
        mean_values.append(report.mean_pate)
    row("mean", *mean_values)
    return buf.getvalue()
