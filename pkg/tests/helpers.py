"""Shared oracle helpers for the test suite.

These deliberately avoid the library's own code paths: finite differences
for gradients, quadratic-time recounting for ranking metrics.
"""

import numpy as np


def central_difference(fn, arrays, step=1e-5):
    """Gradient of scalar fn(list_of_arrays) by central differences.

    Returns one array per input, same shapes. fn must not mutate its inputs.
    """
    grads = []
    for i, arr in enumerate(arrays):
        g = np.zeros_like(arr, dtype=np.float64)
        flat = g.reshape(-1)
        for j in range(arr.size):
            bumped = [a.copy() for a in arrays]
            bumped[i].reshape(-1)[j] += step
            hi = fn(bumped)
            bumped = [a.copy() for a in arrays]
            bumped[i].reshape(-1)[j] -= step
            lo = fn(bumped)
            flat[j] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest |a - n| / max(|a|, |n|) over entries where either exceeds floor."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        scale = np.maximum(np.abs(a), np.abs(n))
        mask = scale > floor
        if not np.any(mask):
            continue
        rel = np.abs(a - n)[mask] / scale[mask]
        worst = max(worst, float(rel.max()))
    return worst


def average_precision_reference(scores, truths, tie_ids=None):
    """Quadratic-time AP: precision at every rank, recounted from scratch.

    Sorts by descending score with ascending id as the tie-break. Returns
    None when there are no positive truths.
    """
    scores = list(map(float, scores))
    truths = [int(t) for t in truths]
    n = len(scores)
    ids = list(range(n)) if tie_ids is None else list(tie_ids)
    order = sorted(range(n), key=lambda i: (-scores[i], ids[i]))
    positives = sum(truths)
    if positives == 0:
        return None
    total = 0.0
    for k in range(1, n + 1):
        if truths[order[k - 1]] != 1:
            continue
        hits = 0
        for j in range(k):
            if truths[order[j]] == 1:
                hits += 1
        total += hits / k
    return total / positives
