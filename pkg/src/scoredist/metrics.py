"""Evaluation metrics for predicted score distributions.

Mirrors the usual quality-assessment report: Pearson linear correlation
and Spearman rank correlation between predicted and ground-truth means
(and, separately, standard deviations), two-class accuracy at a cutoff
score, and the average r=1 CDF distance between predicted and ground-truth
distributions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import ScoreDistribution, emd
from .errors import DegenerateInputError, ScaleMismatchError


def _paired_arrays(x, y) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or ya.ndim != 1:
        raise ValueError("inputs must be 1-D sequences")
    if xa.shape[0] != ya.shape[0]:
        raise ValueError(f"length mismatch: {xa.shape[0]} vs {ya.shape[0]}")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise ValueError("inputs must be finite")
    return xa, ya


def lcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson linear correlation coefficient.

    Invariant under positive affine transforms of either argument; flips
    sign under negative scaling. Constant inputs have no defined
    correlation and raise `DegenerateInputError`.
    """
    xa, ya = _paired_arrays(x, y)
    if xa.shape[0] < 2:
        raise ValueError("need at least 2 points")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sx = float(np.dot(xc, xc))
    sy = float(np.dot(yc, yc))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("correlation undefined for zero-variance input")
    r = float(np.dot(xc, yc)) / np.sqrt(sx * sy)
    return min(1.0, max(-1.0, r))


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their positions."""
    xa = np.asarray(x, dtype=np.float64)
    _, inverse, counts = np.unique(xa, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    group_rank = (starts + 1 + ends) / 2.0
    return group_rank[inverse]


def srcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks.

    Invariant under strictly increasing transforms of either argument.
    Inputs with fewer than two distinct values raise
    `DegenerateInputError`.
    """
    xa, ya = _paired_arrays(x, y)
    if xa.shape[0] < 2:
        raise ValueError("need at least 2 points")
    return lcc(average_ranks(xa), average_ranks(ya))


def two_class_accuracy(
    pred_means: Sequence[float], gt_means: Sequence[float], cutoff: float
) -> float:
    """Fraction of examples classified the same way by both mean scores.

    An example is "high quality" when its mean is strictly above the
    cutoff; values exactly at the cutoff fall in the low class.
    """
    pa, ga = _paired_arrays(pred_means, gt_means)
    if pa.shape[0] < 1:
        raise ValueError("need at least 1 point")
    return float(np.mean((pa > cutoff) == (ga > cutoff)))


@dataclass(frozen=True)
class EvalReport:
    """One evaluation run over a test set, in the usual table layout."""

    accuracy_two_class: float
    lcc_mean: float
    srcc_mean: float
    lcc_std: float
    srcc_std: float
    mean_emd_r1: float
    n_examples: int

    _FLOAT_FIELDS = (
        "accuracy_two_class",
        "lcc_mean",
        "srcc_mean",
        "lcc_std",
        "srcc_std",
        "mean_emd_r1",
    )

    def to_text(self) -> str:
        lines = [f"{name} = {getattr(self, name):.6f}" for name in self._FLOAT_FIELDS]
        lines.append(f"n_examples = {self.n_examples}")
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        out = {name: round(getattr(self, name), 6) for name in self._FLOAT_FIELDS}
        out["n_examples"] = self.n_examples
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def evaluate(
    pred: Sequence[ScoreDistribution],
    gt: Sequence[ScoreDistribution],
    cutoff: float = 5.0,
) -> EvalReport:
    """Score a list of predicted distributions against ground truth.

    Correlations are computed over per-example means and (separately)
    per-example standard deviations; accuracy classifies the means at
    `cutoff`; the distribution distance is the average r=1 CDF distance.
    """
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gt)} references")
    if len(pred) == 0:
        raise ValueError("need at least 1 example")
    emds = []
    for i, (p, g) in enumerate(zip(pred, gt)):
        try:
            emds.append(emd(p, g, 1.0))
        except ScaleMismatchError as exc:
            raise ScaleMismatchError(f"example {i}: {exc}") from exc
    pred_means = [p.mean() for p in pred]
    gt_means = [g.mean() for g in gt]
    pred_stds = [p.std_dev() for p in pred]
    gt_stds = [g.std_dev() for g in gt]

    def corr(fn, x, y, what):
        try:
            return fn(x, y)
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"{what}: {exc}") from exc

    return EvalReport(
        accuracy_two_class=two_class_accuracy(pred_means, gt_means, cutoff),
        lcc_mean=corr(lcc, pred_means, gt_means, "correlation of means"),
        srcc_mean=corr(srcc, pred_means, gt_means, "rank correlation of means"),
        lcc_std=corr(lcc, pred_stds, gt_stds, "correlation of std-devs"),
        srcc_std=corr(srcc, pred_stds, gt_stds, "rank correlation of std-devs"),
        mean_emd_r1=float(np.mean(emds)),
        n_examples=len(pred),
    )
