"""Independent reference implementations used to verify the package.

Everything here is written in deliberately plain, slow, straight-line style
so it cannot share a bug with the vectorized code under test: explicit
loops, float64 accumulation, and textbook formulas only.
"""

from __future__ import annotations

import math

import numpy as np
import torch


# ----- numerics -----------------------------------------------------------

def exp_normalize(logits) -> np.ndarray:
    """Softmax via explicit exponentiation with log-sum-exp stabilization."""
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.max()
    e = np.array([math.exp(x - m) for x in logits])
    return e / e.sum()


def finite_diff_grad(fn, params: list[torch.Tensor], eps: float = 1e-5):
    """Central-difference gradient of scalar fn() w.r.t. each tensor.

    fn must read the tensors' current values; all arithmetic is float64.
    """
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p, dtype=torch.float64)
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = float(fn())
                flat[i] = orig - eps
                lo = float(fn())
                flat[i] = orig
                gflat[i] = (hi - lo) / (2 * eps)
            grads.append(g)
    return grads


def check_grad_sampled(fn, params: list[torch.Tensor], rng: np.random.Generator,
                       n_per_tensor: int = 4, eps: float = 1e-5,
                       rtol: float = 1e-4) -> None:
    """Compare autograd against central differences on sampled entries.

    fn() must build the scalar loss from the tensors' current values.
    Tensors should be float64 for the tolerance to be meaningful.
    """
    loss = fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    with torch.no_grad():
        for p, g in zip(params, grads):
            n = min(n_per_tensor, p.numel())
            flat_idx = rng.choice(p.numel(), size=n, replace=False)
            for i in flat_idx:
                # multi-index assignment works for non-contiguous tensors too
                pos = tuple(int(v) for v in np.unravel_index(int(i), p.shape))
                orig = p[pos].item()
                p[pos] = orig + eps
                hi = float(fn())
                p[pos] = orig - eps
                lo = float(fn())
                p[pos] = orig
                numeric = (hi - lo) / (2 * eps)
                analytic = 0.0 if g is None else float(g[pos])
                denom = max(abs(analytic), abs(numeric), 1e-3)
                rel = abs(analytic - numeric) / denom
                assert rel < rtol, (
                    f"gradient mismatch at entry {i} of a {tuple(p.shape)} "
                    f"tensor: analytic {analytic}, numeric {numeric}"
                )


def assert_grads_close(analytic: list[torch.Tensor], numeric: list[torch.Tensor],
                       rtol: float = 1e-4):
    """Relative comparison with a small absolute floor for near-zero entries."""
    for a, n in zip(analytic, numeric):
        a = a.detach().double()
        denom = torch.maximum(torch.maximum(a.abs(), n.abs()),
                              torch.full_like(n, 1e-3))
        rel = ((a - n).abs() / denom).max().item()
        assert rel < rtol, f"gradient mismatch: max relative error {rel}"


# ----- TIF ----------------------------------------------------------------

def refine_oracle(emb: np.ndarray, gate_w: np.ndarray, gate_b: np.ndarray,
                  centroids: np.ndarray) -> np.ndarray:
    """Double-loop gated residuals for one embedding: (D, K)."""
    D = emb.shape[0]
    K = centroids.shape[0]
    logits = [float(gate_w[k] @ emb + gate_b[k]) for k in range(K)]
    alpha = exp_normalize(logits)
    out = np.zeros((D, K))
    for i in range(D):
        for k in range(K):
            out[i, k] = alpha[k] * (emb[i] - centroids[k])
    return out


# ----- losses -------------------------------------------------------------

def binary_ce_oracle(probs, labels) -> float:
    total = 0.0
    for p, y in zip(probs, labels):
        p = min(max(float(p), 1e-12), 1 - 1e-12)
        total += -(y * math.log(p) + (1 - y) * math.log(1 - p))
    return total


def contrastive_oracle(a: np.ndarray, b: np.ndarray, tau: float) -> float:
    """Symmetric InfoNCE over row-aligned positives, sum reduction."""
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        sa = exp_normalize([float(a[i] @ b[j]) / tau for j in range(n)])
        sb = exp_normalize([float(b[i] @ a[j]) / tau for j in range(n)])
        total += -0.5 * (math.log(sa[i]) + math.log(sb[i]))
    return total


# ----- metrics ------------------------------------------------------------

def ranking_oracle(scores_row, n_tags: int) -> list[int]:
    """Tag ids sorted by score descending, ties by ascending id."""
    return sorted(range(n_tags), key=lambda j: (-float(scores_row[j]), j))


def macro_prf_oracle(y_true, y_pred):
    n_pois, n_tags = y_true.shape
    ps, rs, fs = [], [], []
    for t in range(n_tags):
        tp = fp = fn = 0
        for i in range(n_pois):
            if y_pred[i][t] and y_true[i][t]:
                tp += 1
            elif y_pred[i][t]:
                fp += 1
            elif y_true[i][t]:
                fn += 1
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        ps.append(p); rs.append(r); fs.append(f)
    return sum(ps) / n_tags, sum(rs) / n_tags, sum(fs) / n_tags


def example_prf_oracle(y_true, y_pred):
    ps, rs, fs = [], [], []
    for truth, pred in zip(y_true, y_pred):
        gold = {j for j, v in enumerate(truth) if v}
        acc = {j for j, v in enumerate(pred) if v}
        inter = len(gold & acc)
        p = inter / len(acc) if acc else 0.0
        r = inter / len(gold) if gold else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        ps.append(p); rs.append(r); fs.append(f)
    n = len(ps)
    return sum(ps) / n, sum(rs) / n, sum(fs) / n


def hamming_oracle(y_true, y_pred):
    n_pois, n_tags = len(y_true), len(y_true[0])
    total = 0.0
    for truth, pred in zip(y_true, y_pred):
        diff = sum(1 for a, b in zip(truth, pred) if bool(a) != bool(b))
        total += diff / n_tags
    return total / n_pois


def average_precision_oracle(gold: set, ranking: list[int]) -> float:
    hits = 0
    total = 0.0
    for pos, tag in enumerate(ranking, start=1):
        if tag in gold:
            hits += 1
            total += hits / pos
    return total / len(gold)


def one_error_oracle(golds, rankings) -> float:
    miss = sum(1 for g, r in zip(golds, rankings) if r[0] not in g)
    return miss / len(golds)


def ranking_loss_oracle(golds, rankings) -> float:
    total = 0.0
    for gold, ranking in zip(golds, rankings):
        pos_of = {t: i for i, t in enumerate(ranking)}
        neg = [t for t in ranking if t not in gold]
        if not neg:
            continue
        bad = 0
        for g in gold:
            for n in neg:
                if pos_of[g] > pos_of[n]:
                    bad += 1
        total += bad / (len(gold) * len(neg))
    return total / len(golds)


def topk_oracle(golds, rankings, k: int) -> float:
    total = 0.0
    for gold, ranking in zip(golds, rankings):
        total += sum(1 for t in ranking[:k] if t in gold) / k
    return total / len(golds)
