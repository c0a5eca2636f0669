"""Detection metrics with OOD as the positive class and ``score >= t`` as the detection rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .errors import MetricsError


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    is_ood: np.ndarray

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64).reshape(-1)
        y = np.array(self.is_ood, dtype=bool).reshape(-1)
        if s.shape != y.shape:
            raise MetricsError("scores and labels differ in length")
        if not np.all(np.isfinite(s)):
            raise MetricsError("scores must be finite")
        s.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "is_ood", y)

    @property
    def ood_scores(self) -> np.ndarray:
        return self.scores[self.is_ood]

    @property
    def id_scores(self) -> np.ndarray:
        return self.scores[~self.is_ood]


def _scored(s, is_ood=None) -> ScoredSet:
    out = s if isinstance(s, ScoredSet) else ScoredSet(s, is_ood)
    n_ood = int(out.is_ood.sum())
    if n_ood == 0 or n_ood == out.is_ood.size:
        raise MetricsError("need at least one ID and one OOD sample")
    return out


def auroc(s, is_ood=None) -> float:
    """Mann-Whitney estimate of P(score_OOD > score_ID), ties counted as 1/2."""
    s = _scored(s, is_ood)
    ranks = rankdata(s.scores)
    n1 = int(s.is_ood.sum())
    n0 = s.scores.size - n1
    u = ranks[s.is_ood].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def tpr_threshold(s, is_ood=None, tpr: float = 0.95) -> float:
    """Largest threshold that still flags at least ``tpr`` of the OOD samples."""
    s = _scored(s, is_ood)
    if not 0.0 <= tpr <= 1.0:
        raise MetricsError("tpr must lie in [0, 1]")
    pos = np.sort(s.ood_scores)[::-1]
    k = math.ceil(tpr * pos.size - 1e-9)
    if k <= 0:
        return math.inf
    return float(pos[k - 1])


def fpr_at_tpr(s, is_ood=None, tpr: float = 0.95) -> float:
    s = _scored(s, is_ood)
    t = tpr_threshold(s, tpr=tpr)
    return float(np.mean(s.id_scores >= t))


def aucpr(s, is_ood=None) -> float:
    """Average precision: sum over descending distinct thresholds of precision x recall step."""
    s = _scored(s, is_ood)
    order = np.argsort(-s.scores, kind="mergesort")
    scores = s.scores[order]
    pos = s.is_ood[order].astype(np.float64)
    tp = np.cumsum(pos)
    fp = np.cumsum(1.0 - pos)
    # last index of each run of tied scores
    last = np.r_[np.flatnonzero(np.diff(scores) != 0), scores.size - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / tp[-1]
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


def threshold_mass(s, is_ood=None, tpr: float = 0.95) -> dict[str, float]:
    """Fractions of ID / OOD samples on each side of the TPR threshold."""
    s = _scored(s, is_ood)
    t = tpr_threshold(s, tpr=tpr)
    id_over = float(np.mean(s.id_scores >= t))
    ood_over = float(np.mean(s.ood_scores >= t))
    return {
        "threshold": t,
        "id_over": id_over,
        "id_under": float(np.mean(s.id_scores < t)),
        "ood_over": ood_over,
        "ood_under": float(np.mean(s.ood_scores < t)),
    }


def metric_report(s, is_ood=None) -> dict[str, float]:
    s = _scored(s, is_ood)
    return {"auroc": auroc(s), "fpr95": fpr_at_tpr(s, tpr=0.95), "aucpr": aucpr(s)}


def interval_gap(base, other, is_ood, n_intervals: int = 5, region: str = "all",
                 tpr: float = 0.95) -> list[dict]:
    """OOD-minus-ID mean gaps of ``other`` and ``base`` within equal-width bins of ``base``.

    ``region`` restricts the samples to those below (predicted ID) or at/above
    (predicted OOD) the base score's TPR threshold before binning.  A gap is
    ``None`` when its bin lacks ID or OOD samples.
    """
    base = np.asarray(base, dtype=np.float64).reshape(-1)
    other = np.asarray(other, dtype=np.float64).reshape(-1)
    y = np.asarray(is_ood, dtype=bool).reshape(-1)
    if not (base.shape == other.shape == y.shape):
        raise MetricsError("base, other and labels must be aligned arrays of equal length")
    if region not in ("all", "below", "above"):
        raise MetricsError(f"unknown region {region!r}")
    if n_intervals < 1:
        raise MetricsError("need at least one interval")
    if region != "all":
        t = tpr_threshold(base, y, tpr=tpr)
        keep = base < t if region == "below" else base >= t
        base, other, y = base[keep], other[keep], y[keep]
    if base.size == 0:
        raise MetricsError("no samples in the selected region")
    lo, hi = float(base.min()), float(base.max())
    edges = np.linspace(lo, hi, n_intervals + 1)
    bins = np.clip(np.searchsorted(edges, base, side="right") - 1, 0, n_intervals - 1)
    report = []
    for j in range(n_intervals):
        in_bin = bins == j
        ood, idm = in_bin & y, in_bin & ~y
        both = ood.any() and idm.any()
        report.append({
            "interval": j,
            "lo": float(edges[j]),
            "hi": float(edges[j + 1]),
            "n_id": int(idm.sum()),
            "n_ood": int(ood.sum()),
            "other_gap": float(other[ood].mean() - other[idm].mean()) if both else None,
            "base_gap": float(base[ood].mean() - base[idm].mean()) if both else None,
        })
    return report


def score_correlation(columns: Mapping[str, object]) -> tuple[list[str], np.ndarray]:
    """Pearson correlation matrix of named, equally long score columns."""
    names = list(columns)
    if len(names) < 2:
        raise MetricsError("need at least two score columns")
    data = [np.asarray(columns[n], dtype=np.float64).reshape(-1) for n in names]
    length = data[0].size
    if any(d.size != length for d in data) or length < 3:
        raise MetricsError("score columns must have equal length of at least 3")
    for name, d in zip(names, data):
        if not np.all(np.isfinite(d)):
            raise MetricsError(f"column {name!r} has non-finite values")
        if np.ptp(d) == 0:
            raise MetricsError(f"column {name!r} has zero variance")
    corr = np.corrcoef(np.vstack(data))
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    return names, corr
