"""Tracklet association: top-k neighbours filtered by a similarity threshold,
within one camera or across cameras, plus the L1-normalised weights."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .memory import MemoryBank

__all__ = [
    "NeighborSet",
    "knn",
    "epsilon_knn",
    "association_weights",
    "build_per_camera_neighbors",
    "build_cross_camera_neighbors",
    "weight_matrix",
    "write_neighbor_dump",
]

PER_CAMERA = "per-camera"
CROSS_CAMERA = "cross-camera"


@dataclass(frozen=True)
class NeighborSet:
    query: int
    members: tuple  # ((tracklet_id, similarity), ...) by descending similarity
    scope: str = PER_CAMERA

    def __len__(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> list[int]:
        return [j for j, _ in self.members]

    @property
    def similarities(self) -> list[float]:
        return [s for _, s in self.members]


def _top_k(ids: np.ndarray, sims: np.ndarray, k: int) -> np.ndarray:
    """Indices of the top-k similarities, ties broken by lower id."""
    if k <= 0 or ids.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((ids, -sims))
    return order[:k]


def knn(query: np.ndarray, candidates: Sequence, k: int, query_id: int = -1, scope: str = PER_CAMERA) -> NeighborSet:
    """Top-``k`` candidates by dot product. ``candidates`` is a sequence of
    ``(id, vector)``; the caller leaves the query itself out."""
    return epsilon_knn(query, candidates, k, None, query_id=query_id, scope=scope)


def epsilon_knn(
    query: np.ndarray,
    candidates: Sequence,
    k: int,
    epsilon: Optional[float],
    query_id: int = -1,
    scope: str = PER_CAMERA,
) -> NeighborSet:
    """Top-``k`` candidates whose similarity is strictly above ``epsilon``.

    ``epsilon=None`` disables the threshold (plain k-NN).
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if epsilon is not None and not -1.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [-1, 1], got {epsilon}")
    if len(candidates) == 0:
        return NeighborSet(query_id, (), scope)
    ids = np.array([c[0] for c in candidates], dtype=np.int64)
    vecs = np.array([c[1] for c in candidates], dtype=np.float64)
    sims = vecs @ np.asarray(query, dtype=np.float64)
    return _select(query_id, ids, sims, k, epsilon, scope)


def _select(query_id, ids, sims, k, epsilon, scope) -> NeighborSet:
    top = _top_k(ids, sims, k)
    members = tuple(
        (int(ids[i]), float(sims[i])) for i in top if epsilon is None or sims[i] > epsilon
    )
    return NeighborSet(int(query_id), members, scope)


def association_weights(query_id: int, own_similarity: float, neighbors: NeighborSet) -> dict[int, float]:
    """L1-normalised similarity weights over the query's own tracklet plus its
    neighbours. Ids absent from the result have weight 0.

    Negative neighbour similarities (possible only without a threshold) are
    clipped to 0 so every weight stays non-negative.
    """
    sims = [max(s, 0.0) for s in neighbors.similarities]
    total = own_similarity + sum(sims)
    row = {int(query_id): own_similarity / total}
    for j, s in zip(neighbors.ids, sims):
        row[j] = row.get(j, 0.0) + s / total
    return row


def build_per_camera_neighbors(bank: MemoryBank, camera: int, k: int, epsilon: Optional[float]) -> list[NeighborSet]:
    """Neighbour set for every tracklet of ``camera`` among the camera's other tracklets."""
    ids = bank.members[camera]
    z = bank.z[ids]
    sims = z @ z.T
    out = []
    for a, qid in enumerate(ids.tolist()):
        keep = np.arange(len(ids)) != a
        out.append(_select(qid, ids[keep], sims[a, keep], k, epsilon, PER_CAMERA))
    return out


def build_cross_camera_neighbors(bank: MemoryBank, camera: int, k: int, epsilon: Optional[float]) -> list[NeighborSet]:
    """Neighbour set for every tracklet of ``camera`` among all other cameras."""
    ids = bank.members[camera]
    others = np.flatnonzero(bank.camera != camera)
    sims = bank.z[ids] @ bank.z[others].T
    return [
        _select(qid, others, sims[a], k, epsilon, CROSS_CAMERA)
        for a, qid in enumerate(ids.tolist())
    ]


def weight_matrix(bank: MemoryBank, camera: int, neighbor_sets: Iterable[NeighborSet], own_similarity: float = 1.0) -> np.ndarray:
    """Dense ``(N^m, N^m)`` weight table for one camera, rows and columns in
    label order."""
    ids = bank.members[camera]
    pos = {tid: a for a, tid in enumerate(ids.tolist())}
    w = np.zeros((len(ids), len(ids)))
    for ns in neighbor_sets:
        for j, v in association_weights(ns.query, own_similarity, ns).items():
            w[pos[ns.query], pos[j]] = v
    return w


def write_neighbor_dump(rows: Iterable[tuple], path) -> None:
    """CSV of ``(epoch, scope, query_id, member_id, similarity)``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "scope", "query_id", "member_id", "similarity"])
        for epoch, scope, q, j, s in rows:
            writer.writerow([epoch, scope, q, j, repr(float(s))])
