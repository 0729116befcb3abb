"""Triplet and binary cross-entropy losses plus semi-hard mining."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, clip, log, mul, relu, sub, tmean, tsum

BCE_CLAMP = 1e-7


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))


def _pair_sq_dist(a: Tensor, b: Tensor) -> Tensor:
    diff = sub(a, b)
    return tsum(mul(diff, diff), axis=-1)


def triplet_loss(anchor, positive, negative, margin: float = 0.2) -> Tensor:
    """Hinge on squared Euclidean distances:
    mean(max(0, d(a,p) - d(a,n) + margin)).

    Accepts single vectors or (k, dim) batches, arrays or Tensors.
    """
    a, p, n = _as_tensor(anchor), _as_tensor(positive), _as_tensor(negative)
    d_ap = _pair_sq_dist(a, p)
    d_an = _pair_sq_dist(a, n)
    slack = sub(d_ap, d_an) + Tensor(np.asarray(margin, dtype=a.data.dtype))
    hinge = relu(slack)
    if hinge.data.ndim == 0:
        return hinge
    return tmean(hinge)


def bce_loss(y, target) -> Tensor:
    """Binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    y_t = _as_tensor(y)
    t = np.asarray(target, dtype=y_t.data.dtype)
    y_c = clip(y_t, BCE_CLAMP, 1.0 - BCE_CLAMP)
    one = Tensor(np.ones_like(y_c.data))
    loss = sub(
        mul(Tensor(-t), log(y_c)),
        mul(Tensor(1.0 - t), log(sub(one, y_c))),
    )
    if loss.data.ndim == 0:
        return loss
    return tmean(loss)


def squared_distances(embeddings: np.ndarray) -> np.ndarray:
    """Dense pairwise squared Euclidean distance matrix."""
    sq = (embeddings**2).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * embeddings @ embeddings.T
    return np.maximum(d, 0.0)


def mine_semi_hard(
    embeddings: np.ndarray, labels: np.ndarray, margin: float = 0.2
) -> list[tuple[int, int, int]]:
    """Semi-hard triplet selection over a batch.

    For every ordered same-class pair (a, p) pick the negative minimizing
    d(a, n) subject to d(a, p) < d(a, n) < d(a, p) + margin.  If no
    semi-hard negative exists, fall back to the largest d(a, n) below
    d(a, p) + margin; skip the pair when nothing qualifies.
    """
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        return []
    dist = squared_distances(np.asarray(embeddings, dtype=np.float64))
    n = len(labels)
    triplets: list[tuple[int, int, int]] = []
    for a in range(n):
        neg_mask = labels != labels[a]
        if not neg_mask.any():
            continue
        d_neg = dist[a]
        for p in range(n):
            if p == a or labels[p] != labels[a]:
                continue
            d_ap = dist[a, p]
            semi = neg_mask & (d_neg > d_ap) & (d_neg < d_ap + margin)
            if semi.any():
                candidates = np.where(semi)[0]
                neg = candidates[np.argmin(d_neg[candidates])]
            else:
                inside = neg_mask & (d_neg < d_ap + margin)
                if not inside.any():
                    continue
                candidates = np.where(inside)[0]
                neg = candidates[np.argmax(d_neg[candidates])]
            triplets.append((a, p, int(neg)))
    return triplets
