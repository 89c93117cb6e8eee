"""Independent reference implementations used by the test-suite.

Everything here is written straight from the definitions with plain loops
and is never imported by the package itself.
"""
import math

import numpy as np


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def directional_check(f, grad, x, rng, h=1e-6):
    """Relative error between the analytic directional derivative along a
    random unit probe and its central-difference estimate."""
    x = np.asarray(x, dtype=np.float64)
    probe = unit(rng.standard_normal(x.shape).ravel()).reshape(x.shape)
    analytic = float(np.sum(grad * probe))
    numeric = (f(x + h * probe) - f(x - h * probe)) / (2 * h)
    return abs(analytic - numeric) / (abs(analytic) + 1e-8)


def embed_straight_line(W, b, r):
    v = [sum(W[i][j] * r[j] for j in range(len(r))) + b[i] for i in range(len(b))]
    n = math.sqrt(sum(t * t for t in v))
    return np.array([t / n for t in v])


def brute_knn(query, candidates, k, eps=None):
    """Full sort by (-similarity, id) then cut at k, then threshold."""
    scored = [(float(np.dot(query, v)), i) for i, v in candidates]
    scored.sort(key=lambda t: (-t[0], t[1]))
    top = scored[:k]
    if eps is not None:
        top = [t for t in top if t[0] > eps]
    return [(i, s) for s, i in top]


def brute_weights(query_id, own, neighbors):
    total = own + sum(max(s, 0.0) for _, s in neighbors)
    row = {query_id: own / total}
    for j, s in neighbors:
        row[j] = max(s, 0.0) / total
    return row


def brute_retrieval(desc, identity, camera, max_rank=20):
    """Per-query loops over the gallery, sorted with Python's sort."""
    n = len(identity)
    cmc = [0.0] * max_rank
    aps = []
    for q in range(n):
        if identity[q] < 0:
            continue
        gallery = [g for g in range(n) if camera[g] != camera[q]]
        if not any(identity[g] == identity[q] for g in gallery):
            continue
        ranked = sorted(gallery, key=lambda g: (-float(np.dot(desc[q], desc[g])), g))
        hits, precisions = 0, []
        first = None
        for pos, g in enumerate(ranked):
            if identity[g] == identity[q]:
                hits += 1
                precisions.append(hits / (pos + 1))
                if first is None:
                    first = pos
        for r in range(max_rank):
            if first <= r:
                cmc[r] += 1
        aps.append(sum(precisions) / len(precisions))
    cmc = [c / len(aps) for c in cmc]
    return np.array(cmc), float(np.mean(aps)), np.array(aps)
