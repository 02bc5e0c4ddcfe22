"""Training objective: centroid contrast, cross-entropy, and their blend.

The contrastive term for one sample with unit feature f is

    -log( exp(f.c+ / tau) / (exp(f.c+ / tau) + sum_neg exp(f.c- / tau)) )

where c+ is the centroid of the sample's own class and the negatives are the
centroids of every *other seen* class. Unseen classes hold placeholder rows
and never enter the softmax. The blended batch objective is

    total = mean_ce + alpha * mean_cont

with both means taken over the full batch. Softmax-type expressions subtract
the max term before exponentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .centroids import CentroidBank
from .errors import StateError


@dataclass(frozen=True)
class LossBreakdown:
    """Batch-mean loss components; total == ce + alpha * cont."""

    ce: float
    cont: float
    total: float
    alpha: float
    tau: float


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """Negative log softmax probability of ``label``, max-subtracted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError(f"logits must be 1-D, got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise ValueError("logits contain non-finite values")
    label = int(label)
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range [0, {logits.shape[0]})")
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def cross_entropy_grad(logits: np.ndarray, label: int) -> np.ndarray:
    """d cross_entropy / d logits = softmax(logits) - onehot(label)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError(f"logits must be 1-D, got shape {logits.shape}")
    if not np.isfinite(logits).all():
        raise ValueError("logits contain non-finite values")
    label = int(label)
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range [0, {logits.shape[0]})")
    grad = softmax(logits)
    grad[label] -= 1.0
    return grad


def _contrast_context(bank: CentroidBank, own_class: int, tau: float):
    """Validated (seen indices, seen centroids, position of own class)."""
    if tau <= 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    own_class = int(own_class)
    if not 0 <= own_class < bank.num_classes:
        raise ValueError(f"own_class {own_class} out of range [0, {bank.num_classes})")
    if not bank.seen[own_class]:
        raise StateError(f"class {own_class} has no centroid yet")
    seen_idx = bank.seen_classes()
    if seen_idx.size < 2:
        raise StateError("contrast needs at least one seen negative class")
    own_pos = int(np.searchsorted(seen_idx, own_class))
    return seen_idx, bank.centroids[seen_idx], own_pos


def contrastive_loss(f: np.ndarray, bank: CentroidBank, own_class: int, tau: float) -> float:
    """Centroid-contrast loss of a single unit feature vector."""
    f = np.asarray(f, dtype=np.float64)
    _, cents, own_pos = _contrast_context(bank, own_class, tau)
    sims = cents @ f / tau
    shifted = sims - sims.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[own_pos])


def contrastive_loss_grad(
    f: np.ndarray, bank: CentroidBank, own_class: int, tau: float
) -> np.ndarray:
    """Gradient of contrastive_loss with respect to f (normalization chain
    rule not included): (1/tau) * (sum_k p_k c_k - c+), softmax p over seen
    classes at temperature tau."""
    f = np.asarray(f, dtype=np.float64)
    _, cents, own_pos = _contrast_context(bank, own_class, tau)
    p = softmax(cents @ f / tau)
    return (p @ cents - cents[own_pos]) / tau


def combined_loss(
    features: np.ndarray,
    logits: np.ndarray,
    labels: np.ndarray,
    bank: CentroidBank,
    alpha: float,
    tau: float,
) -> LossBreakdown:
    """Batch-mean cross-entropy plus alpha times batch-mean contrast loss."""
    breakdown, _, _ = combined_loss_and_grads(features, logits, labels, bank, alpha, tau)
    return breakdown


def combined_loss_and_grads(
    features: np.ndarray,
    logits: np.ndarray,
    labels: np.ndarray,
    bank: CentroidBank,
    alpha: float,
    tau: float,
) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """Blended batch loss plus its gradients.

    Returns (breakdown, d_total/d_features, d_total/d_logits); the gradient
    arrays carry the 1/B batch-mean factor and the alpha weight, so they feed
    the model backward pass directly. ``features`` must be the l2-normalized
    rows the contrast branch sees.

    Cold start: while a sample's class (or every possible negative) is still
    unseen, that sample contributes cross-entropy only; its contrast term and
    gradient are zero.
    """
    features = np.asarray(features, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if tau <= 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError(f"features must be a non-empty 2-D array, got shape {features.shape}")
    batch = features.shape[0]
    if logits.ndim != 2 or logits.shape[0] != batch:
        raise ValueError(f"logits shape {logits.shape} does not match batch size {batch}")
    if not np.isfinite(logits).all():
        bad = np.flatnonzero(~np.isfinite(logits).all(axis=1))
        raise ValueError(f"non-finite logits in sample(s) {bad.tolist()}")
    if not np.issubdtype(labels.dtype, np.integer) or labels.shape != (batch,):
        raise ValueError("labels must be a 1-D integer array matching the batch")
    num_classes = logits.shape[1]
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")

    # cross-entropy branch
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    sums = exps.sum(axis=1)
    ce_terms = np.log(sums) - shifted[np.arange(batch), labels]
    ce = float(ce_terms.mean())
    d_logits = exps / sums[:, None]
    d_logits[np.arange(batch), labels] -= 1.0
    d_logits /= batch

    # contrast branch
    cont = 0.0
    d_features = np.zeros_like(features)
    if alpha > 0.0:
        if features.shape[1] != bank.feature_dim:
            raise ValueError(
                f"feature dim {features.shape[1]} does not match bank dim {bank.feature_dim}"
            )
        if labels.max() >= bank.num_classes:
            raise ValueError(f"labels exceed bank classes {bank.num_classes}")
        seen_idx = bank.seen_classes()
        if seen_idx.size >= 2:
            active = bank.seen[labels]
            if active.any():
                rows = np.flatnonzero(active)
                cents = bank.centroids[seen_idx]
                sims = features[rows] @ cents.T / tau
                sims_shifted = sims - sims.max(axis=1, keepdims=True)
                sims_exp = np.exp(sims_shifted)
                sims_sum = sims_exp.sum(axis=1)
                own_pos = np.searchsorted(seen_idx, labels[rows])
                cont_terms = np.log(sims_sum) - sims_shifted[np.arange(rows.size), own_pos]
                cont = float(cont_terms.sum() / batch)
                p = sims_exp / sims_sum[:, None]
                d_features[rows] = (p @ cents - cents[own_pos]) * (alpha / (tau * batch))

    total = ce + alpha * cont
    return LossBreakdown(ce=ce, cont=cont, total=total, alpha=float(alpha), tau=float(tau)), d_features, d_logits
