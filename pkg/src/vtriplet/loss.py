"""Triplet ranking cost on descriptor triples and its analytic gradient.

For a query descriptor hi, a same-place descriptor hj, and a different-place
descriptor hk, the cost is

    C = max{0, 1 - ||hi - hk|| / (margin + ||hi - hj||)}

which is zero exactly when the dissimilar pair is farther apart than the
similar pair by at least the margin, and never exceeds 1.
"""

import numpy as np

from .errors import ConfigError, ShapeError, UsageError


def _check_triple(hi, hj, hk, margin):
    if margin <= 0:
        raise ConfigError(f"margin must be > 0, got {margin}")
    if hi.shape != hj.shape or hi.shape != hk.shape or hi.ndim != 1:
        raise ShapeError(f"descriptor lengths differ: {hi.shape}, {hj.shape}, {hk.shape}")


def triplet_cost(hi, hj, hk, margin):
    """Ranking cost in [0, 1]; exactly 0 iff ||hi-hk|| >= margin + ||hi-hj||."""
    hi, hj, hk = np.asarray(hi), np.asarray(hj), np.asarray(hk)
    _check_triple(hi, hj, hk, margin)
    dp = float(np.linalg.norm(hi - hj))
    dn = float(np.linalg.norm(hi - hk))
    return max(0.0, 1.0 - dn / (margin + dp))


def triplet_cost_grad(hi, hj, hk, margin):
    """Gradient of triplet_cost with respect to each descriptor.

    In the clamped region (cost 0) all three gradients are zero. Where a
    pair coincides (dp = 0 or dn = 0) the undefined unit direction is
    replaced by the zero vector, keeping the subgradient bounded.
    """
    hi, hj, hk = np.asarray(hi, dtype=np.float64), np.asarray(hj, dtype=np.float64), np.asarray(hk, dtype=np.float64)
    _check_triple(hi, hj, hk, margin)
    diff_p = hi - hj
    diff_n = hi - hk
    dp = float(np.linalg.norm(diff_p))
    dn = float(np.linalg.norm(diff_n))
    s = margin + dp
    zero = np.zeros_like(hi)
    if dn >= s:
        return zero, zero.copy(), zero.copy()
    u_p = diff_p / dp if dp > 0 else zero
    u_n = diff_n / dn if dn > 0 else zero
    grad_hi = -u_n / s + (dn / s**2) * u_p
    grad_hj = -(dn / s**2) * u_p
    grad_hk = u_n / s
    return grad_hi, grad_hj, grad_hk


def cost_matrix(anchors, positives, negatives, margin):
    """Vectorized triplet_cost over stacked descriptor rows (B, D) -> (B,)."""
    dp = np.linalg.norm(anchors - positives, axis=1)
    dn = np.linalg.norm(anchors - negatives, axis=1)
    return np.maximum(0.0, 1.0 - dn / (margin + dp))


def regularization_term(params, weight_decay, include_biases=False):
    """weight_decay * ||w||^2 over trainable weights (biases off by default)."""
    if weight_decay == 0.0:
        return 0.0
    total = 0.0
    for lp in params.layers:
        if lp.weights is None:
            continue
        total += float(np.sum(lp.weights.astype(np.float64) ** 2))
        if include_biases:
            total += float(np.sum(lp.bias.astype(np.float64) ** 2))
    return weight_decay * total


def batch_objective(triples, params, margin, weight_decay, include_biases=False):
    """Sum of triplet costs over a batch plus the parameter-norm penalty.

    `triples` is a non-empty list of (hi, hj, hk) descriptor triples.
    """
    if not triples:
        raise UsageError("batch_objective needs a non-empty batch of triplets")
    total = sum(triplet_cost(hi, hj, hk, margin) for hi, hj, hk in triples)
    return total + regularization_term(params, weight_decay, include_biases)
