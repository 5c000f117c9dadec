"""Multi-label evaluation: F1 / PR-AUC / ROC-AUC, thresholds, confusion matrices.

Conventions that downstream comparisons depend on:
  * ROC-AUC uses midranks for tied scores (equals trapezoidal ROC).
  * PR-AUC is average precision where tied scores share one threshold bucket.
  * F1 binarizes with ``score >= threshold``.
  * Macro AUCs exclude degenerate classes (no positives / no negatives) and
    report them; macro F1 keeps every class, scoring 0 where undefined.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


class MetricError(Exception):
    """Raised when a metric is undefined for the whole input."""


@dataclass(frozen=True)
class MetricReport:
    f1_macro: float
    f1_micro: float
    prauc_macro: float
    prauc_micro: float
    rocauc_macro: float
    rocauc_micro: float
    thresholds: tuple[float, ...]
    n_tracks: int
    n_classes: int
    excluded: dict[str, tuple[int, ...]] = field(default_factory=dict)

    METRIC_FIELDS = ("f1_macro", "f1_micro", "prauc_macro", "prauc_micro", "rocauc_macro", "rocauc_micro")

    def values(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.METRIC_FIELDS}

    def to_json(self) -> str:
        payload = {
            **self.values(),
            "thresholds": list(self.thresholds),
            "n_tracks": self.n_tracks,
            "n_classes": self.n_classes,
            "excluded": {k: list(v) for k, v in self.excluded.items()},
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        raw = json.loads(text)
        return cls(
            f1_macro=raw["f1_macro"],
            f1_micro=raw["f1_micro"],
            prauc_macro=raw["prauc_macro"],
            prauc_micro=raw["prauc_micro"],
            rocauc_macro=raw["rocauc_macro"],
            rocauc_micro=raw["rocauc_micro"],
            thresholds=tuple(raw["thresholds"]),
            n_tracks=raw["n_tracks"],
            n_classes=raw["n_classes"],
            excluded={k: tuple(v) for k, v in raw.get("excluded", {}).items()},
        )

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # [n_classes, n_classes] int64, rows = true class
    normalized: np.ndarray  # rows sum to 1 except flagged all-zero rows
    flagged_rows: tuple[int, ...]


def _as_binary(labels: np.ndarray) -> np.ndarray:
    return np.asarray(labels) > 0.5


def _binary_roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = _as_binary(labels)
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC-AUC undefined: needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _binary_average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = _as_binary(labels).astype(np.float64)
    n_pos = pos.sum()
    if n_pos == 0:
        raise MetricError("PR-AUC undefined: no positives")
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="mergesort")
    sorted_scores = np.asarray(scores, dtype=np.float64)[order]
    sorted_pos = pos[order]
    # Bucket boundaries: last index of each run of equal scores.
    boundary = np.nonzero(np.diff(sorted_scores))[0]
    ends = np.concatenate([boundary, [len(sorted_scores) - 1]])
    tp = np.cumsum(sorted_pos)[ends]
    total = ends + 1.0
    precision = tp / total
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def _per_class(scores: np.ndarray, labels: np.ndarray, fn) -> tuple[list[float], list[int]]:
    values: list[float] = []
    excluded: list[int] = []
    for c in range(scores.shape[1]):
        try:
            values.append(fn(scores[:, c], labels[:, c]))
        except MetricError:
            excluded.append(c)
    return values, excluded


def _auc(scores: np.ndarray, labels: np.ndarray, averaging: str, fn, name: str) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape != labels.shape:
        raise ValueError("scores and labels must both be [n_tracks, n_classes]")
    if averaging == "micro":
        return fn(scores.ravel(), labels.ravel())
    if averaging == "macro":
        values, excluded = _per_class(scores, labels, fn)
        if not values:
            raise MetricError(f"{name}: every class is degenerate")
        if excluded:
            warnings.warn(f"{name} macro: excluded degenerate classes {excluded}", stacklevel=3)
        return float(np.mean(values))
    raise ValueError(f"unknown averaging {averaging!r}")


def roc_auc(scores: np.ndarray, labels: np.ndarray, averaging: str = "macro") -> float:
    return _auc(scores, labels, averaging, _binary_roc_auc, "roc_auc")


def pr_auc(scores: np.ndarray, labels: np.ndarray, averaging: str = "macro") -> float:
    return _auc(scores, labels, averaging, _binary_average_precision, "pr_auc")


def _binary_f1(tp: float, fp: float, fn: float) -> float:
    denom = 2.0 * tp + fp + fn
    return float(2.0 * tp / denom) if denom > 0 else 0.0


def select_thresholds(val_scores: np.ndarray, val_labels: np.ndarray) -> np.ndarray:
    """Per class, the F1-maximizing threshold on validation.

    The decision rule is ``score >= threshold``. Among equally good buckets
    the larger threshold wins; the returned value is the midpoint between
    the chosen bucket's score and the next distinct score below it, so the
    boundary sits between observed scores. Classes without validation
    positives fall back to 0.5.
    """
    val_scores = np.asarray(val_scores, dtype=np.float64)
    val_labels = _as_binary(val_labels)
    if val_scores.size == 0:
        raise ValueError("empty validation set")
    n_classes = val_scores.shape[1]
    thresholds = np.full(n_classes, 0.5)
    for c in range(n_classes):
        s, y = val_scores[:, c], val_labels[:, c]
        n_pos = int(y.sum())
        if n_pos == 0:
            warnings.warn(f"class {c}: no validation positives, threshold falls back to 0.5", stacklevel=2)
            continue
        uniq = np.unique(s)[::-1]  # descending
        order = np.argsort(-s, kind="mergesort")
        ends = np.searchsorted(-s[order], -uniq, side="right") - 1
        tp = np.cumsum(y[order].astype(np.float64))[ends]
        total = ends + 1.0
        f1_at = 2.0 * tp / (total + n_pos)  # == 2tp / (2tp + fp + fn)
        best = int(np.argmax(f1_at))  # argmax takes the first (largest-threshold) maximum
        if best + 1 < len(uniq):
            thresholds[c] = 0.5 * (uniq[best] + uniq[best + 1])
        else:
            thresholds[c] = uniq[best]
    return thresholds


def f1(scores: np.ndarray, labels: np.ndarray, thresholds: np.ndarray | Sequence[float], averaging: str = "macro") -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = _as_binary(labels)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.shape != (scores.shape[1],):
        raise ValueError("need one threshold per class")
    pred = scores >= thresholds[None, :]
    tp = (pred & labels).sum(axis=0).astype(np.float64)
    fp = (pred & ~labels).sum(axis=0).astype(np.float64)
    fn = (~pred & labels).sum(axis=0).astype(np.float64)
    if averaging == "macro":
        return float(np.mean([_binary_f1(*t) for t in zip(tp, fp, fn)]))
    if averaging == "micro":
        return _binary_f1(tp.sum(), fp.sum(), fn.sum())
    raise ValueError(f"unknown averaging {averaging!r}")


def metric_report(scores: np.ndarray, labels: np.ndarray, thresholds: np.ndarray | Sequence[float]) -> MetricReport:
    """All six summary numbers plus the thresholds and exclusions behind them."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    excluded: dict[str, tuple[int, ...]] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, roc_excl = _per_class(scores, labels, _binary_roc_auc)
        _, pr_excl = _per_class(scores, labels, _binary_average_precision)
        if roc_excl:
            excluded["rocauc_macro"] = tuple(roc_excl)
        if pr_excl:
            excluded["prauc_macro"] = tuple(pr_excl)
        return MetricReport(
            f1_macro=f1(scores, labels, thresholds, "macro"),
            f1_micro=f1(scores, labels, thresholds, "micro"),
            prauc_macro=pr_auc(scores, labels, "macro"),
            prauc_micro=pr_auc(scores, labels, "micro"),
            rocauc_macro=roc_auc(scores, labels, "macro"),
            rocauc_micro=roc_auc(scores, labels, "micro"),
            thresholds=tuple(float(t) for t in np.asarray(thresholds, dtype=np.float64)),
            n_tracks=scores.shape[0],
            n_classes=scores.shape[1],
            excluded=excluded,
        )


def reports_to_csv(rows: Sequence[tuple[str, MetricReport]]) -> str:
    """CSV with one method per row and metric x averaging columns."""
    header = "model,f1_macro,f1_micro,pr_auc_macro,pr_auc_micro,roc_auc_macro,roc_auc_micro"
    lines = [header]
    for name, report in rows:
        vals = report.values()
        lines.append(
            f"{name},{vals['f1_macro']:.6f},{vals['f1_micro']:.6f},{vals['prauc_macro']:.6f},"
            f"{vals['prauc_micro']:.6f},{vals['rocauc_macro']:.6f},{vals['rocauc_micro']:.6f}"
        )
    return "\n".join(lines) + "\n"


def confusion(predicted_class: np.ndarray, true_class: np.ndarray, n_classes: int) -> ConfusionMatrix:
    """Row-normalized single-label confusion; empty true classes are flagged."""
    predicted_class = np.asarray(predicted_class, dtype=np.int64)
    true_class = np.asarray(true_class, dtype=np.int64)
    if predicted_class.shape != true_class.shape:
        raise ValueError("predicted and true class arrays must align")
    for name, arr in (("predicted", predicted_class), ("true", true_class)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} class index out of range [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true_class, predicted_class), 1)
    row_sums = counts.sum(axis=1, keepdims=True)
    flagged = tuple(int(i) for i in np.nonzero(row_sums[:, 0] == 0)[0])
    normalized = counts / np.maximum(row_sums, 1)
    return ConfusionMatrix(counts=counts, normalized=normalized, flagged_rows=flagged)
