"""Loss functions with hand-derived gradients.

Three objectives cover the whole engine: cross-entropy for the vanilla and
hyperdimensional classification heads, supervised contrastive loss for the
embedding heads, and cosine-softmax cross-entropy against class prototypes
for the online refinement steps.  Each returns its gradient with respect to
every input it is differentiable in; finite-difference tests pin all of them.
"""

from __future__ import annotations

import numpy as np


def ce_loss(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of one logit vector; gradient is softmax minus one-hot."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.size:
        raise ValueError(f"label {label} out of range for {logits.size} classes")
    z = logits - np.max(logits)
    log_probs = z - np.log(np.sum(np.exp(z)))
    grad = np.exp(log_probs)
    grad[label] -= 1.0
    return float(-log_probs[label]), grad


def ce_loss_batch(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows; gradient has the same shape as logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError("label out of range")
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def sup_con_loss(
    embeddings: np.ndarray,
    labels: np.ndarray,
    temperature: float,
) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss over a batch of unit embeddings.

    For each anchor i with positive set P(i) (same label, not itself):

        l_i = -(1/|P(i)|) * sum_{p in P(i)} log( exp(z_i.z_p / t)
                                                 / sum_{a != i} exp(z_i.z_a / t) )

    The loss is the mean of l_i over anchors that have at least one positive;
    anchors without positives contribute nothing (but still appear in other
    anchors' denominators).  Returns (loss, d loss / d embeddings).
    """
    z = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    n = z.shape[0]
    if n < 2:
        raise ValueError("supervised contrastive loss needs >= 2 embeddings")
    norms = np.linalg.norm(z, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("embeddings must be unit-norm")

    sim = (z @ z.T) / temperature
    off_diag = ~np.eye(n, dtype=bool)
    pos = (labels[:, None] == labels[None, :]) & off_diag
    n_pos = pos.sum(axis=1)
    anchors = n_pos > 0
    if not np.any(anchors):
        return 0.0, np.zeros_like(z)

    # log denominator per anchor, over a != i, max-stabilized
    masked = np.where(off_diag, sim, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    exp_s = np.where(off_diag, np.exp(sim - row_max), 0.0)
    denom = exp_s.sum(axis=1, keepdims=True)
    log_denom = np.log(denom) + row_max

    per_anchor = np.zeros(n)
    per_anchor[anchors] = -(
        (sim * pos).sum(axis=1)[anchors] / n_pos[anchors]
        - log_denom[anchors, 0]
    )
    n_anchors = int(anchors.sum())
    loss = per_anchor[anchors].mean()

    # dL/dsim: softmax weights from the denominators minus averaged positives
    w = exp_s / denom
    g = np.zeros((n, n))
    g[anchors] = w[anchors] - pos[anchors] / n_pos[anchors, None]
    g /= n_anchors
    grad = (g + g.T) @ z / temperature
    return float(loss), grad


def cosine_softmax_loss(
    embeddings: np.ndarray,
    protos: np.ndarray,
    label_idx: np.ndarray,
    temperature: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-entropy of temperature-scaled cosine logits against prototypes.

    embeddings: (n, d) projected pseudo-features, protos: (c, d) one row per
    class, label_idx: (n,) row indices into protos.  Returns the mean loss
    and gradients for both embeddings and prototypes, using the full cosine
    derivative (valid even if a prototype drifts off unit norm mid-step).
    """
    e = np.asarray(embeddings, dtype=np.float64)
    p = np.asarray(protos, dtype=np.float64)
    n = e.shape[0]
    e_norm = np.linalg.norm(e, axis=1, keepdims=True)
    p_norm = np.linalg.norm(p, axis=1, keepdims=True)
    if np.any(e_norm == 0.0) or np.any(p_norm == 0.0):
        raise ValueError("zero-norm vector in cosine logits")

    cos = (e @ p.T) / (e_norm * p_norm.T)  # (n, c)
    loss, dcos = ce_loss_batch(cos / temperature, label_idx)
    dcos /= temperature

    # d cos_ic / d e_i = p_c/(|e||p|) - cos_ic * e_i/|e|^2, and symmetrically for p
    d_embed = (dcos / p_norm.T) @ p / e_norm - (
        (dcos * cos).sum(axis=1, keepdims=True) * e / e_norm**2
    )
    d_protos = (dcos / e_norm).T @ e / p_norm - (
        (dcos * cos).sum(axis=0)[:, None] * p / p_norm**2
    )
    return loss, d_embed, d_protos
