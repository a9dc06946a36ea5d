"""Embedding readout and the bidirectional in-batch contrastive loss.

Reference implementation used to validate logged losses and to generate
analytic fixtures; it never touches a transformer. Cross entropies use the
natural logarithm with mean reduction, and softmaxes are stabilised by max
subtraction. In-batch negatives only; there is no hard-negative pathway.
"""

import numpy as np

from .errors import ValidationError

DEFAULT_TEMPERATURE = 0.025


def mean_pool(states) -> np.ndarray:
    """Average a (n_tokens, dim) stack of hidden states into one embedding."""
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[0] < 1:
        raise ValidationError(f"states must be a non-empty (n, m) array, got shape {states.shape}")
    return states.mean(axis=0)


def _cosine_matrix(queries: np.ndarray, values: np.ndarray) -> np.ndarray:
    q_norm = np.linalg.norm(queries, axis=1)
    v_norm = np.linalg.norm(values, axis=1)
    for label, norms in (("query", q_norm), ("value", v_norm)):
        bad = np.flatnonzero(norms == 0.0)
        if bad.size:
            raise ValidationError(f"{label} vector at index {bad[0]} has zero norm; cosine undefined")
    return (queries / q_norm[:, None]) @ (values / v_norm[:, None]).T


def _mean_cross_entropy(logits: np.ndarray) -> float:
    """Mean over rows of -log softmax(row)[row_index], labels 0..n-1."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - np.diag(shifted)))


def contrastive_loss(queries, values, temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Bidirectional contrastive loss over n (query, value) pairs.

    logits[i, j] = cosine(q_i, v_j) * exp(temperature); the loss is the mean
    of the row-wise and column-wise cross entropies against labels 0..n-1.
    """
    queries = np.asarray(queries, dtype=float)
    values = np.asarray(values, dtype=float)
    if queries.ndim != 2 or values.ndim != 2:
        raise ValidationError("queries and values must be (n, m) arrays")
    if queries.shape != values.shape:
        raise ValidationError(
            f"queries and values must match in shape, got {queries.shape} vs {values.shape}"
        )
    if queries.shape[0] < 1:
        raise ValidationError("batch must contain at least one pair")
    with np.errstate(over="ignore"):
        scale = np.exp(temperature)
    if not np.isfinite(scale):
        raise ValidationError(f"exp(temperature) must be finite, got temperature={temperature}")
    logits = _cosine_matrix(queries, values) * scale
    return 0.5 * (_mean_cross_entropy(logits) + _mean_cross_entropy(logits.T))
