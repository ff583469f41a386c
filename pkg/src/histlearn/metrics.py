"""Accuracy metric for cardinality estimates."""

from __future__ import annotations

import numpy as np


def avg_rel_error(truths, estimates) -> float:
    """Average relative error in percent.

    Each term is ``|s - s_hat| / max(100, s)``; the floor keeps tiny
    cardinalities from dominating the mean.
    """
    s = np.asarray(truths, dtype=float).ravel()
    e = np.asarray(estimates, dtype=float).ravel()
    if s.shape != e.shape:
        raise ValueError(f"length mismatch: {s.size} truths vs {e.size} estimates")
    if s.size == 0:
        raise ValueError("need at least one test query")
    return float(np.mean(np.abs(s - e) / np.maximum(100.0, s)) * 100.0)
