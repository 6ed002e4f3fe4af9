"""InfoNCE objectives over multiple views.

Node level contrasts the same node's projected embeddings across view
pairs; graph level contrasts a node against neighborhood summaries. Both
sum over ordered view pairs and divide by v(v-1), so the two-view case is
the familiar (ctr(z1,z2) + ctr(z2,z1)) / 2. Gradients are analytic:
with P = row-softmax(QK^T/tau), dL/dQ = (P - I)K / (N tau) and
dL/dK = (P - I)^T Q / (N tau).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

LOSS_LEVELS = ("node", "graph")


@dataclass(frozen=True)
class LossConfig:
    level: str = "node"
    tau: float = 0.5

    def validate(self) -> "LossConfig":
        if self.level not in LOSS_LEVELS:
            raise DataError(f"unknown loss level {self.level!r}; expected one of {LOSS_LEVELS}")
        if not self.tau > 0:
            raise DataError(f"temperature must be positive, got {self.tau}")
        return self


def infonce(q: np.ndarray, k: np.ndarray, tau: float):
    """Contrastive cross-entropy with in-batch negatives.

    Row i of q and k describe the same item, so the positive logits sit on
    the diagonal of q @ k.T / tau and every other row of k is a negative.
    Returns (loss, grad_q, grad_k).
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 2:
        raise ValueError(f"q and k must be equal-shape 2-d arrays, got {q.shape} and {k.shape}")
    n = q.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")

    logits = (q @ k.T) / tau
    m = logits.max(axis=1, keepdims=True)  # max-subtract for stable exp
    ex = np.exp(logits - m)
    denom = ex.sum(axis=1)
    log_prob = np.diagonal(logits) - m[:, 0] - np.log(denom)
    loss = -log_prob.mean()

    coeff = ex / denom[:, None]
    np.fill_diagonal(coeff, coeff.diagonal() - 1.0)
    coeff /= n * tau
    return loss, coeff @ k, coeff.T @ q


def _check_aligned(embeddings) -> int:
    if len(embeddings) < 2:
        raise ValueError(f"need at least 2 views, got {len(embeddings)}")
    first = embeddings[0]
    for emb in embeddings[1:]:
        if emb.node_z.shape != first.node_z.shape:
            raise ValueError("views disagree on embedding shape")
        if not np.array_equal(emb.node_index, first.node_index):
            raise ValueError("views have misaligned rows: node_index differs")
    return first.node_z.shape[0]


def multi_view_loss(embeddings, cfg: LossConfig):
    """Average InfoNCE over all ordered view pairs at the configured level.

    Returns (loss, zgrads) where zgrads[i] = (grad_node_z, grad_neigh_z or
    None) for view i, ready for the embedding backward pass.
    """
    cfg.validate()
    _check_aligned(embeddings)
    v = len(embeddings)
    pairs = v * (v - 1)

    g_node = [np.zeros_like(e.node_z) for e in embeddings]
    if cfg.level == "graph":
        for i, e in enumerate(embeddings):
            if e.neigh_z is None:
                raise ValueError(f"view {i} lacks neighborhood embeddings required at graph level")
        g_neigh = [np.zeros_like(e.neigh_z) for e in embeddings]
    else:
        g_neigh = [None] * v

    total = 0.0
    for qi in range(v):
        for ki in range(v):
            if ki == qi:
                continue
            if cfg.level == "node":
                loss, gq, gk = infonce(embeddings[qi].node_z, embeddings[ki].node_z, cfg.tau)
                g_node[ki] += gk
            else:
                loss, gq, gk = infonce(embeddings[qi].node_z, embeddings[ki].neigh_z, cfg.tau)
                g_neigh[ki] += gk
            g_node[qi] += gq
            total += loss

    scale = 1.0 / pairs
    total *= scale
    zgrads = []
    for i in range(v):
        gn = g_node[i] * scale
        gg = None if g_neigh[i] is None else g_neigh[i] * scale
        zgrads.append((gn, gg))
    return total, zgrads
