"""Cross-camera tracklet retrieval metrics and the ablation runner."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import DISTRACTOR, TrackletDataset
from .embed import EmbedModel, forward
from .memory import _normalize_rows
from .trainer import TrainConfig, run_training

__all__ = [
    "RetrievalResult",
    "tracklet_descriptor",
    "tracklet_descriptors",
    "evaluate_retrieval",
    "rank_metrics",
    "run_ablation",
    "AblationRow",
]

MAX_RANK = 20


@dataclass
class RetrievalResult:
    cmc: np.ndarray  # cmc[k-1] is rank-k accuracy
    map: float
    ap: np.ndarray
    query_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def rank1(self) -> float:
        return float(self.cmc[0])

    def to_dict(self) -> dict:
        return {
            "num_queries": int(len(self.ap)),
            "map": float(self.map),
            "cmc": {str(k + 1): float(v) for k, v in enumerate(self.cmc)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def tracklet_descriptor(model: EmbedModel, frames: np.ndarray) -> np.ndarray:
    """Normalised mean of the frame embeddings of one tracklet."""
    emb = forward(model, np.atleast_2d(frames))
    return _normalize_rows(emb.mean(axis=0, keepdims=True))[0]


def tracklet_descriptors(model: EmbedModel, ds: TrackletDataset) -> np.ndarray:
    emb = forward(model, ds.features)
    sums = np.zeros((len(ds), emb.shape[1]))
    np.add.at(sums, ds.frame_tracklet, emb)
    counts = np.bincount(ds.frame_tracklet, minlength=len(ds))
    return _normalize_rows(sums / counts[:, None])


def rank_metrics(matches_in_order: np.ndarray, max_rank: int = MAX_RANK):
    """CMC row and AP for one query given its ranked 0/1 match vector."""
    hits = np.flatnonzero(matches_in_order)
    cmc = np.zeros(max_rank)
    cmc[hits[0]:] = 1.0
    precision_at_hits = np.arange(1, len(hits) + 1) / (hits + 1)
    return cmc, float(precision_at_hits.mean())


def evaluate_retrieval(model: EmbedModel, ds: TrackletDataset, max_rank: int = MAX_RANK) -> RetrievalResult:
    """Each tracklet with a same-identity tracklet in another camera queries
    the gallery of all tracklets from other cameras, ranked by cosine
    similarity (ties by lower id)."""
    gt = ds.ground_truth()
    desc = tracklet_descriptors(model, ds)
    return _evaluate(desc, gt.identity, gt.camera, max_rank)


def _evaluate(desc, identity, camera, max_rank) -> RetrievalResult:
    n = len(identity)
    ids = np.arange(n)
    sims = desc @ desc.T
    cmc_rows, aps, queries = [], [], []
    for q in range(n):
        if identity[q] == DISTRACTOR:
            continue
        gallery = ids[camera != camera[q]]
        match = identity[gallery] == identity[q]
        if not match.any():
            continue
        order = np.lexsort((gallery, -sims[q, gallery]))
        c, ap = rank_metrics(match[order], max_rank)
        cmc_rows.append(c)
        aps.append(ap)
        queries.append(q)
    if not queries:
        raise ValueError("no valid queries: no identity appears in two cameras")
    aps = np.array(aps)
    return RetrievalResult(np.mean(cmc_rows, axis=0), float(aps.mean()), aps, np.array(queries))


@dataclass
class AblationRow:
    overrides: dict
    rank1: Optional[float]
    map: Optional[float]
    cmc: Optional[list] = None
    error: Optional[str] = None

    @property
    def key(self) -> str:
        return ",".join(f"{k}={v}" for k, v in sorted(self.overrides.items())) or "base"


def run_ablation(ds: TrackletDataset, base_cfg: TrainConfig, grid: Sequence[dict]) -> list[AblationRow]:
    """Train and evaluate one model per override mapping, all with the base seed."""
    configs = [base_cfg.with_overrides(**o) for o in grid]  # validate everything up front
    gt = ds.ground_truth()
    rows = []
    for overrides, cfg in zip(grid, configs):
        model, _ = run_training(ds, cfg, gt)
        res = evaluate_retrieval(model, ds)
        rows.append(AblationRow(dict(overrides), res.rank1, res.map, res.cmc.tolist()))
    return rows


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config", "rank1", "rank5", "rank10", "map", "status"])
    for r in rows:
        if r.error is not None:
            w.writerow([r.key, "", "", "", "", f"failed: {r.error}"])
            continue
        w.writerow([r.key, repr(r.rank1), repr(r.cmc[4]), repr(r.cmc[9]), repr(r.map), "ok"])
    return buf.getvalue()
