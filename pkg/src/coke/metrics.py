"""Directed-edge precision, recall and F1 against a reference graph."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1_from(precision: float, recall: float) -> float:
    s = precision + recall
    return 2.0 * precision * recall / s if s > 0 else 0.0


@dataclass(frozen=True)
class EdgeMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "EdgeMetrics":
        p = _ratio(tp, tp + fp)
        r = _ratio(tp, tp + fn)
        return cls(int(tp), int(fp), int(fn), p, r, f1_from(p, r))

    def to_dict(self) -> dict:
        return asdict(self)


def edge_confusion(pred, truth) -> EdgeMetrics:
    """Strictly directed matching: a reversed edge is one fp and one fn."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"dimension mismatch: {pred.shape} vs {truth.shape}")
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return EdgeMetrics.from_counts(tp, fp, fn)


def edge_set_confusion(pred_edges, truth_edges) -> EdgeMetrics:
    pred, truth = set(pred_edges), set(truth_edges)
    return EdgeMetrics.from_counts(len(pred & truth), len(pred - truth), len(truth - pred))


def compare_runs(runs: Sequence[tuple[str, EdgeMetrics]]) -> str:
    """Plain-text table ordered by F1 (descending), then label."""
    if not runs:
        return ""
    ranked = sorted(runs, key=lambda r: (-r[1].f1, r[0]))
    width = max(5, max(len(label) for label, _ in ranked))
    lines = [f"{'label':<{width}}  precision  recall     f1"]
    for label, m in ranked:
        lines.append(f"{label:<{width}}  {m.precision:9.4f}  {m.recall:6.4f}  {m.f1:6.4f}")
    return "\n".join(lines)


def ranked_labels(runs: Sequence[tuple[str, EdgeMetrics]]) -> list[str]:
    return [label for label, _ in sorted(runs, key=lambda r: (-r[1].f1, r[0]))]
