"""Multi-label evaluation metrics.

All metrics take the gold label matrix, the thresholded prediction matrix,
and the raw score matrix (POIs x tags).  Rankings are the deterministic
total order: score descending, tag id ascending on ties.

0/0 conventions, pinned by tests: per-tag precision with no predictions,
per-POI precision with an empty accepted set, and F1 with P=R=0 all count
as 0 and stay in the average.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


def _as_bool(a) -> np.ndarray:
    a = np.asarray(a)
    return a.astype(bool)


def rankings_from_scores(scores: np.ndarray) -> np.ndarray:
    """Per-POI tag permutation: score desc, id asc on ties. (n, L) -> (n, L)."""
    scores = np.asarray(scores, dtype=float)
    n, L = scores.shape
    ids = np.tile(np.arange(L), (n, 1))
    return np.lexsort((ids, -scores), axis=1)


def _safe_div(num, den):
    num, den = np.asarray(num, float), np.asarray(den, float)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def macro_prf(y_true, y_pred) -> tuple[float, float, float]:
    """Tag-centric precision/recall/F1, averaged over tags."""
    y_true, y_pred = _as_bool(y_true), _as_bool(y_pred)
    tp = (y_true & y_pred).sum(axis=0)
    fp = (~y_true & y_pred).sum(axis=0)
    fn = (y_true & ~y_pred).sum(axis=0)
    p = _safe_div(tp, tp + fp)
    r = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * p * r, p + r)
    return float(p.mean()), float(r.mean()), float(f1.mean())


def example_prf(y_true, y_pred) -> tuple[float, float, float]:
    """POI-centric precision/recall/F1, averaged over POIs."""
    y_true, y_pred = _as_bool(y_true), _as_bool(y_pred)
    inter = (y_true & y_pred).sum(axis=1)
    p = _safe_div(inter, y_pred.sum(axis=1))
    r = _safe_div(inter, y_true.sum(axis=1))
    f1 = _safe_div(2 * p * r, p + r)
    return float(p.mean()), float(r.mean()), float(f1.mean())


def hamming_loss(y_true, y_pred) -> float:
    """Mean per-label disagreement rate; 0 iff predictions are perfect."""
    y_true, y_pred = _as_bool(y_true), _as_bool(y_pred)
    return float((y_true ^ y_pred).mean())


def ranking_metrics(y_true, scores) -> tuple[float, float, float]:
    """(mAP, OneError, RankingLoss) over POIs with at least one gold tag."""
    y_true = _as_bool(y_true)
    scores = np.asarray(scores, dtype=float)
    order = rankings_from_scores(scores)
    aps, one_errs, rls = [], [], []
    for gold, rank in zip(y_true, order):
        n_gold = int(gold.sum())
        if n_gold == 0:
            warnings.warn("POI with zero gold tags excluded from ranking metrics")
            continue
        ranked_gold = gold[rank]
        hits = np.cumsum(ranked_gold)
        positions = np.flatnonzero(ranked_gold) + 1
        aps.append(float((hits[positions - 1] / positions).mean()))
        one_errs.append(0.0 if ranked_gold[0] else 1.0)
        n_neg = len(gold) - n_gold
        if n_neg == 0:
            rls.append(0.0)
        else:
            # non-gold items ranked above each gold item
            wrong = (positions - np.arange(1, n_gold + 1)).sum()
            rls.append(float(wrong) / (n_gold * n_neg))
    if not aps:
        return 0.0, 0.0, 0.0
    return float(np.mean(aps)), float(np.mean(one_errs)), float(np.mean(rls))


def topk_precision(y_true, scores, k: int) -> float:
    """Mean fraction of the top-k ranked tags that are gold."""
    y_true = _as_bool(y_true)
    scores = np.asarray(scores, dtype=float)
    if not 1 <= k <= y_true.shape[1]:
        raise ValueError(f"k={k} outside [1, {y_true.shape[1]}]")
    order = rankings_from_scores(scores)[:, :k]
    hits = np.take_along_axis(y_true, order, axis=1).sum(axis=1)
    return float((hits / k).mean())


@dataclass
class EvalReport:
    macro_p: float
    macro_r: float
    macro_f1: float
    example_p: float
    example_r: float
    example_f1: float
    hls: float
    map: float
    one_error: float
    ranking_loss: float
    topk: dict[int, float]

    def to_dict(self) -> dict:
        d = {
            "M-P": self.macro_p, "M-R": self.macro_r, "M-F1": self.macro_f1,
            "P-e": self.example_p, "R-e": self.example_r, "F1-e": self.example_f1,
            "HLS": self.hls, "mAP": self.map, "OneError": self.one_error,
            "RankingLoss": self.ranking_loss,
        }
        for k, v in self.topk.items():
            d[f"P@{k}"] = v
        return d

    def format(self) -> str:
        return "\n".join(f"{k:12s} {v:.4f}" for k, v in self.to_dict().items())


def evaluate(y_true, y_pred, scores, topk=(3, 5)) -> EvalReport:
    """All metrics for one model on one split."""
    mp, mr, mf1 = macro_prf(y_true, y_pred)
    ep, er, ef1 = example_prf(y_true, y_pred)
    m_ap, one_err, rl = ranking_metrics(y_true, scores)
    L = np.asarray(y_true).shape[1]
    ks = {k: topk_precision(y_true, scores, k) for k in topk if k <= L}
    return EvalReport(mp, mr, mf1, ep, er, ef1,
                      hamming_loss(y_true, y_pred), m_ap, one_err, rl, ks)
