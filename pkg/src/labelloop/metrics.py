"""Evaluation metrics: UA recall, one-vs-rest ROC AUC, Cohen's kappa,
Cronbach's alpha."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, SingleClass, ZeroVariance


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix, rows = ground truth, columns = prediction."""

    class_ids: tuple[int, ...]
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_ids)
        if counts.shape != (k, k):
            raise ValueError(f"counts must be {k}x{k}")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_ids", tuple(self.class_ids))

    def recalls(self) -> dict[int, float | None]:
        """Per-class recall; None when the class never occurs in the truth."""
        out = {}
        for i, cid in enumerate(self.class_ids):
            row = self.counts[i].sum()
            out[cid] = float(self.counts[i, i] / row) if row else None
        return out

    def ua_recall(self) -> float:
        """Unweighted mean of defined per-class recalls."""
        defined = [r for r in self.recalls().values() if r is not None]
        if not defined:
            raise ZeroDivisionError("no class present in the truth")
        return float(np.mean(defined))

    def format_table(self, labels: dict[int, str] | None = None) -> str:
        names = [(labels or {}).get(cid, str(cid)) for cid in self.class_ids]
        width = max(7, *(len(n) for n in names))
        head = " " * width + "".join(f"{n:>{width + 2}}" for n in names) + f"{'recall':>9}"
        lines = [head]
        recalls = self.recalls()
        for i, cid in enumerate(self.class_ids):
            cells = "".join(f"{int(v):>{width + 2}}" for v in self.counts[i])
            rec = recalls[cid]
            rec_txt = f"{rec:8.3f}" if rec is not None else "       -"
            lines.append(f"{names[i]:>{width}}" + cells + " " + rec_txt)
        return "\n".join(lines)


def _as_label_array(seq) -> np.ndarray:
    ids = getattr(seq, "class_ids", seq)
    return np.asarray(ids, dtype=np.int64)


def confusion_and_recall(truth, pred, class_ids=None):
    """Frame-level confusion matrix plus per-class recall and UA recall.

    truth/pred may be FrameLabels or plain id sequences on the same grid.
    Classes absent from the truth keep a row of zeros and are excluded from
    the UA average.
    """
    t = _as_label_array(truth)
    p = _as_label_array(pred)
    if t.shape != p.shape:
        raise LengthMismatch(f"truth has {t.shape[0]} frames, prediction {p.shape[0]}")
    if class_ids is None:
        class_ids = sorted(set(t.tolist()) | set(p.tolist()))
    index = {cid: i for i, cid in enumerate(class_ids)}
    counts = np.zeros((len(class_ids), len(class_ids)), dtype=np.int64)
    np.add.at(counts, ([index[v] for v in t.tolist()], [index[v] for v in p.tolist()]), 1)
    matrix = ConfusionMatrix(class_ids=tuple(class_ids), counts=counts)
    return matrix, matrix.recalls(), matrix.ua_recall()


def roc_auc_binary(truth_positive: np.ndarray, scores: np.ndarray) -> float:
    """Rank-statistic AUC; tied scores contribute one half."""
    pos = int(truth_positive.sum())
    neg = truth_positive.size - pos
    if pos == 0 or neg == 0:
        raise SingleClass("AUC needs both positives and negatives")
    ranks = rankdata(scores)
    return float((ranks[truth_positive].sum() - pos * (pos + 1) / 2) / (pos * neg))


def roc_auc_ovr(truth, scores: np.ndarray, class_ids) -> tuple[dict[int, float | None], float]:
    """Per-class one-vs-rest AUC and their unweighted average (UAAUC).

    scores columns follow class_ids. Classes without both positives and
    negatives in the truth get None and are skipped; if every class is
    skipped the AUC is undefined and SingleClass is raised.
    """
    t = _as_label_array(truth)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != t.shape[0]:
        raise LengthMismatch(f"{t.shape[0]} frames vs {scores.shape[0]} score rows")
    if scores.shape[1] != len(class_ids):
        raise LengthMismatch(f"{len(class_ids)} classes vs {scores.shape[1]} score columns")
    per_class: dict[int, float | None] = {}
    for col, cid in enumerate(class_ids):
        positive = t == cid
        try:
            per_class[cid] = roc_auc_binary(positive, scores[:, col])
        except SingleClass:
            per_class[cid] = None
    defined = [v for v in per_class.values() if v is not None]
    if not defined:
        raise SingleClass("no class has both positives and negatives")
    return per_class, float(np.mean(defined))


def cohens_kappa(a, b) -> float:
    """Chance-corrected agreement between two label sequences on one grid."""
    x = _as_label_array(a)
    y = _as_label_array(b)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.shape[0]} vs {y.shape[0]} frames")
    if x.size == 0:
        raise LengthMismatch("empty sequences")
    p_observed = float(np.mean(x == y))
    labels = sorted(set(x.tolist()) | set(y.tolist()))
    p_chance = sum(
        float(np.mean(x == lab)) * float(np.mean(y == lab)) for lab in labels
    )
    if p_chance >= 1.0:
        return 1.0  # both raters constant and identical
    return (p_observed - p_chance) / (1.0 - p_chance)


def cronbachs_alpha(ratings: np.ndarray) -> float:
    """Internal consistency of a raters x items matrix of real scores.

    alpha = K/(K-1) * (1 - sum of per-rater variances / variance of the
    per-item total), variances computed with denominator N-1.
    """
    ratings = np.asarray(ratings, dtype=np.float64)
    if ratings.ndim != 2 or ratings.shape[0] < 2 or ratings.shape[1] < 2:
        raise ValueError("need at least 2 raters and 2 items")
    k = ratings.shape[0]
    rater_vars = ratings.var(axis=1, ddof=1)
    total_var = ratings.sum(axis=0).var(ddof=1)
    if total_var == 0:
        raise ZeroVariance("total scores do not vary across items")
    return float(k / (k - 1) * (1.0 - rater_vars.sum() / total_var))
