"""The four training loss terms and the toggleable total objective.

All distances are squared Euclidean.  Every term reduces by the mean
over its batch so the margin keeps its meaning at any batch size.
Gradient bundles are dicts keyed by slot name ("V_s", "V_i",
"classifier.weight", "dec_i.bias", "semantics", ...); the trainer
merges them and chains embedding gradients through the encoders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LossInputError
from .net import Affine

TERMS = ("ce", "iii", "dl", "cpl")

GradDict = dict[str, np.ndarray]


@dataclass(frozen=True)
class LossConfig:
    margin: float = 1.0
    enabled: frozenset[str] = frozenset(TERMS)
    weights: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "enabled", frozenset(self.enabled))
        if self.margin < 0:
            raise LossInputError(f"margin must be >= 0, got {self.margin}")
        bad = set(self.enabled) - set(TERMS)
        if bad:
            raise LossInputError(f"unknown loss terms: {sorted(bad)}")
        if not self.enabled:
            raise LossInputError("at least one loss term must be enabled")

    def weight(self, term: str) -> float:
        return self.weights.get(term, 1.0)


@dataclass(frozen=True)
class LossReport:
    ce: float = 0.0
    iii: float = 0.0
    dl: float = 0.0
    cpl: float = 0.0
    total: float = 0.0

    def json_line(self, step: int) -> str:
        import json

        return json.dumps(
            {"step": step, "ce": self.ce, "iii": self.iii,
             "dl": self.dl, "cpl": self.cpl, "total": self.total}
        )


def ce_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy; grad = (softmax - onehot) / B."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    b, n = logits.shape
    if labels.min() < 0 or labels.max() >= n:
        raise LossInputError(
            f"label out of range for {n} classes: {labels.min()}..{labels.max()}"
        )
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    # a zero probability yields inf, which the trainer's divergence
    # detector is meant to see; silence only the warning
    with np.errstate(divide="ignore"):
        value = float(-np.mean(np.log(probs[np.arange(b), labels])))
    grad = probs.copy()
    grad[np.arange(b), labels] -= 1.0
    return value, grad / b


def cross_triplet_loss(
    anchor: np.ndarray, positive: np.ndarray, negative: np.ndarray, alpha: float
) -> tuple[float, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Hinge on squared distances: max(|a-p|^2 - |a-n|^2 + alpha, 0).

    Subgradient at the hinge boundary is 0 (inactive side).
    """
    a = np.asarray(anchor, dtype=np.float64)
    p = np.asarray(positive, dtype=np.float64)
    n = np.asarray(negative, dtype=np.float64)
    if not (a.shape == p.shape == n.shape):
        raise LossInputError("triplet members must share a dimension")
    ap = a - p
    an = a - n
    arg = float(ap @ ap - an @ an + alpha)
    if arg <= 0:
        zero = np.zeros_like(a)
        return 0.0, (zero, zero.copy(), zero.copy())
    return arg, (2.0 * (n - p), -2.0 * ap, 2.0 * an)


def batch_triplet_loss(
    v_s: np.ndarray,
    v_i: np.ndarray,
    sketch_anchored: tuple[np.ndarray, np.ndarray, np.ndarray],
    image_anchored: tuple[np.ndarray, np.ndarray, np.ndarray],
    alpha: float,
) -> tuple[float, GradDict]:
    """Sum of the per-family mean hinge losses.

    ``sketch_anchored`` holds (anchor, positive, negative) row indices:
    anchors index ``v_s``, positives/negatives index ``v_i``; the
    image-anchored family is the mirror image.  Gradients accumulate
    across triplets that reference the same row.
    """
    dv_s = np.zeros_like(v_s)
    dv_i = np.zeros_like(v_i)
    total = 0.0
    families = (
        (sketch_anchored, v_s, v_i, dv_s, dv_i),
        (image_anchored, v_i, v_s, dv_i, dv_s),
    )
    n_empty = 0
    for (ai, pi, ni), va, vo, dva, dvo in families:
        ai = np.asarray(ai, dtype=np.intp)
        pi = np.asarray(pi, dtype=np.intp)
        ni = np.asarray(ni, dtype=np.intp)
        t = ai.shape[0]
        if t == 0:
            n_empty += 1
            continue
        a = va[ai]
        p = vo[pi]
        n = vo[ni]
        ap = a - p
        an = a - n
        arg = (ap * ap).sum(axis=1) - (an * an).sum(axis=1) + alpha
        active = arg > 0
        total += float(arg[active].sum()) / t
        scale = active[:, None] * (2.0 / t)
        np.add.at(dva, ai, scale * (n - p))
        np.add.at(dvo, pi, scale * -ap)
        np.add.at(dvo, ni, scale * an)
    if n_empty == 2:
        raise LossInputError("triplet batch is empty")
    return total, {"V_s": dv_s, "V_i": dv_i}


def decoder_loss(
    v_s: np.ndarray, v_i: np.ndarray, dec_i: Affine, dec_s: Affine
) -> tuple[float, GradDict]:
    """Cross reconstruction between class-matched embedding rows.

    Row r of ``v_s`` and ``v_i`` must come from the same class; the
    image-side decoder maps sketch embeddings onto image embeddings and
    vice versa.  Mean squared Frobenius over rows, both directions.
    """
    if v_s.shape != v_i.shape:
        raise LossInputError(
            f"decoder loss needs matched batches, got {v_s.shape} vs {v_i.shape}"
        )
    n = v_s.shape[0]
    e_i = v_s @ dec_i.weight.T + dec_i.bias - v_i
    e_s = v_i @ dec_s.weight.T + dec_s.bias - v_s
    value = float((e_i * e_i).sum() + (e_s * e_s).sum()) / n
    g_i = 2.0 * e_i / n
    g_s = 2.0 * e_s / n
    grads = {
        "V_s": g_i @ dec_i.weight - g_s,
        "V_i": g_s @ dec_s.weight - g_i,
        "dec_i.weight": g_i.T @ v_s,
        "dec_i.bias": g_i.sum(axis=0),
        "dec_s.weight": g_s.T @ v_i,
        "dec_s.bias": g_s.sum(axis=0),
    }
    return value, grads


def projection_loss(
    v: np.ndarray, labels: np.ndarray, semantic_rows: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean squared pull of each embedding toward its class vector.

    Returns (value, dV, dSemantic) where dSemantic has one row per
    class in ``semantic_rows`` (zero for classes absent from the batch);
    in the latent variant the trainer chains it into the projection.
    """
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= semantic_rows.shape[0]):
        raise LossInputError("label indexes a missing semantic vector")
    if v.shape[1] != semantic_rows.shape[1]:
        raise LossInputError(
            f"embedding dim {v.shape[1]} != semantic dim {semantic_rows.shape[1]}"
        )
    b = v.shape[0]
    diff = v - semantic_rows[labels]
    value = float((diff * diff).sum()) / b
    dv = 2.0 * diff / b
    dsem = np.zeros_like(semantic_rows)
    np.add.at(dsem, labels, -dv)
    return value, dv, dsem


def total_loss(
    cfg: LossConfig, components: dict[str, tuple[float, GradDict]]
) -> tuple[LossReport, GradDict]:
    """Weighted sum of the enabled terms; disabled terms contribute nothing."""
    missing = cfg.enabled - set(components)
    if missing:
        raise LossInputError(f"enabled terms missing inputs: {sorted(missing)}")
    values = {t: 0.0 for t in TERMS}
    merged: GradDict = {}
    total = 0.0
    for term in TERMS:
        if term not in cfg.enabled:
            continue
        value, grads = components[term]
        w = cfg.weight(term)
        values[term] = value
        total += w * value
        for key, g in grads.items():
            if key in merged:
                merged[key] = merged[key] + w * g
            else:
                merged[key] = w * g if w != 1.0 else g.copy()
    return LossReport(total=total, **values), merged
