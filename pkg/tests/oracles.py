"""Independent reference implementations used to check the real ones.

Everything here is written the dumb way on purpose: per-pair python
arithmetic, explicit loops, no shared code with the package internals.
"""
from __future__ import annotations

import math

import numpy as np


def dbscan_reference(vectors: np.ndarray, epsilon: float, min_points: int) -> list[int]:
    """Plain O(n^2) DBSCAN over cosine distance.

    Returns one label per row (-1 for noise); clusters are numbered in
    order of the first core point found scanning rows in order.
    """
    n = len(vectors)

    def dist(i: int, j: int) -> float:
        a = vectors[i]
        b = vectors[j]
        na = math.sqrt(float(sum(x * x for x in a)))
        nb = math.sqrt(float(sum(x * x for x in b)))
        dot = float(sum(x * y for x, y in zip(a, b)))
        return 1.0 - dot / (na * nb)

    neighbors = [[j for j in range(n) if dist(i, j) <= epsilon] for i in range(n)]
    core = [len(neighbors[i]) >= min_points for i in range(n)]
    labels = [-1] * n
    next_label = 0
    for start in range(n):
        if labels[start] != -1 or not core[start]:
            continue
        labels[start] = next_label
        queue = [start]
        while queue:
            p = queue.pop(0)
            if not core[p]:
                continue
            for q in neighbors[p]:
                if labels[q] == -1:
                    labels[q] = next_label
                    queue.append(q)
        next_label += 1
    return labels


def pairwise_cosine_distances(vectors: np.ndarray) -> list[float]:
    out = []
    n = len(vectors)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = vectors[i], vectors[j]
            na = math.sqrt(float(sum(x * x for x in a)))
            nb = math.sqrt(float(sum(x * x for x in b)))
            out.append(1.0 - float(sum(x * y for x, y in zip(a, b))) / (na * nb))
    return out


def fuzzy_reference(
    query: np.ndarray, curated: dict[str, list[np.ndarray]]
) -> dict[str, float]:
    """Per-intent max cosine via an exhaustive scan."""
    qn = math.sqrt(float(sum(x * x for x in query)))
    best: dict[str, float] = {}
    for intent_id, vectors in curated.items():
        top = -2.0
        for v in vectors:
            vn = math.sqrt(float(sum(x * x for x in v)))
            if vn == 0.0 or qn == 0.0:
                sim = 0.0
            else:
                sim = float(sum(a * b for a, b in zip(query, v))) / (qn * vn)
            if sim > top:
                top = sim
        best[intent_id] = top
    return best


def effectiveness_reference(pairs: list[tuple[float, float]]) -> float:
    """Sum of (1 - D) * W computed with plain accumulation."""
    total = 0.0
    for d, w in pairs:
        total += (1.0 - d) * w
    return total


def numeric_gradient(f, params: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    grad = np.zeros_like(params)
    for i in range(params.size):
        up = params.copy()
        up[i] += step
        down = params.copy()
        down[i] -= step
        grad[i] = (f(up) - f(down)) / (2.0 * step)
    return grad


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
