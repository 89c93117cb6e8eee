"""Two-stage training loop: per-camera selective matching first, then the
cross-camera matching term on top."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .assoc import (
    CROSS_CAMERA,
    PER_CAMERA,
    NeighborSet,
    build_cross_camera_neighbors,
    build_per_camera_neighbors,
    weight_matrix,
)
from .core import GroundTruth, TrackletDataset
from .embed import EmbedModel, backward_cached, forward_cached
from .loss import CameraClassifier, LossParams, ce_loss_batch, pcm_loss_batch
from .memory import MemoryBank, init_bank

__all__ = [
    "LOSS_MODES",
    "TrainConfig",
    "EpochStats",
    "TrainReport",
    "TrainingError",
    "run_training",
    "assoc_diagnostics",
]

log = logging.getLogger(__name__)

LOSS_MODES = ("stl", "ce_baseline", "pcm_only", "knn_only")


@dataclass(frozen=True)
class TrainConfig:
    """All training hyperparameters. Defaults are the full-scale regime;
    desk-scale runs usually use a smaller ``batch_size`` and a larger
    ``learning_rate``."""

    seed: int
    epochs: int = 20
    stage2_start_epoch: int = 10
    batch_size: int = 384
    learning_rate: float = 3e-5
    k: int = 1
    epsilon: float = 0.7
    tau: float = 0.1
    lam: float = 10.0
    loss_mode: str = "stl"
    embed_dim: int = 128
    hidden: int = 0
    train_bias: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.epochs and not 1 <= self.stage2_start_epoch <= self.epochs:
            raise ValueError(
                f"stage2_start_epoch must be in [1, epochs={self.epochs}], got {self.stage2_start_epoch}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if not -1.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [-1, 1], got {self.epsilon}")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.embed_dim < 1 or self.hidden < 0:
            raise ValueError("embed_dim must be >= 1 and hidden >= 0")
        LossParams(self.tau, self.lam)

    @property
    def loss_params(self) -> LossParams:
        return LossParams(self.tau, self.lam)

    @property
    def threshold(self) -> Optional[float]:
        """Association threshold, or None when running plain k-NN."""
        return None if self.loss_mode == "knn_only" else self.epsilon

    @property
    def uses_ccm(self) -> bool:
        return self.loss_mode in ("stl", "knn_only")

    def in_stage2(self, epoch: int) -> bool:
        return self.uses_ccm and epoch >= self.stage2_start_epoch

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **overrides) -> "TrainConfig":
        unknown = set(overrides) - self.field_names()
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return replace(self, **overrides)

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass
class EpochStats:
    epoch: int
    stage: int
    loss: float
    pcm_loss: float
    ccm_loss: float
    cross_pairs: int
    cross_precision: Optional[float]
    percam_pairs: int
    percam_precision: Optional[float]


CSV_FIELDS = [f.name for f in fields(EpochStats)]


@dataclass
class TrainReport:
    """Per-epoch statistics and the neighbourhood dump.

    ``pcm_loss`` holds the per-camera loss of the active mode (the CE loss
    under ``ce_baseline``). Precisions are ``None`` when there are no pairs
    or no ground truth.
    """

    epochs: list = field(default_factory=list)
    neighbor_rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for e in self.epochs:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in asdict(e).values()])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"epochs": [asdict(e) for e in self.epochs]}, indent=1) + "\n"

    def column(self, name: str) -> list:
        return [getattr(e, name) for e in self.epochs]


class TrainingError(RuntimeError):
    """Non-finite loss; ``state`` carries a snapshot for post-mortem."""

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


def assoc_diagnostics(neighbor_sets, ground_truth: GroundTruth):
    """Number of (query, member) pairs and the fraction sharing a true identity.

    Distractors never count as correct. Precision is ``None`` for zero pairs.
    """
    count = correct = 0
    for ns in neighbor_sets:
        for j in ns.ids:
            count += 1
            correct += ground_truth.same_identity(ns.query, j)
    return count, (correct / count if count else None)


class _Association:
    """Neighbourhoods and weight tables frozen at an epoch head."""

    def __init__(self, bank: MemoryBank, cfg: TrainConfig, stage2: bool):
        eps = cfg.threshold
        self.per_camera: list[NeighborSet] = []
        self.weights = []
        for m in range(bank.cameras):
            sets = build_per_camera_neighbors(bank, m, cfg.k, eps)
            self.per_camera.extend(sets)
            self.weights.append(weight_matrix(bank, m, sets))
        self.cross: list[NeighborSet] = []
        n = len(bank)
        width = max(cfg.k, 1)
        self.cross_idx = np.zeros((n, width), dtype=np.int64)
        self.cross_mask = np.zeros((n, width))
        if stage2:
            for m in range(bank.cameras):
                self.cross.extend(build_cross_camera_neighbors(bank, m, cfg.k, eps))
            for ns in self.cross:
                for a, j in enumerate(ns.ids):
                    self.cross_idx[ns.query, a] = j
                    self.cross_mask[ns.query, a] = 1.0


def _sgd(params: dict, grads: dict, lr: float, frozen=()) -> None:
    for name, g in grads.items():
        if name not in frozen:
            params[name] -= lr * g


def run_training(
    ds: TrackletDataset,
    cfg: TrainConfig,
    ground_truth: Optional[GroundTruth] = None,
    model: Optional[EmbedModel] = None,
):
    """Train an embedding head on ``ds``.

    ``ground_truth`` only feeds the association diagnostics in the report; it
    never influences the optimisation. Returns ``(model, report)``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = EmbedModel.init(ds.dim, cfg.embed_dim, cfg.hidden or None, rng)
    else:
        model = model.copy()
    report = TrainReport()
    if cfg.epochs == 0 or ds.num_frames == 0:
        return model, report

    bank = init_bank(ds, model)
    tau, lam = cfg.tau, cfg.lam
    clf = None
    if cfg.loss_mode == "ce_baseline":
        clf = CameraClassifier.init(ds.tracklets_per_camera, model.d_out, rng)
    frame_tid = ds.frame_tracklet
    frame_cam = ds.tracklet_camera[frame_tid]
    frame_label = ds.tracklet_label[frame_tid]
    params = model.params()
    # the output bias is a direction shared by every embedding; left free, the
    # cross-camera pull inflates it until all similarities clear epsilon
    frozen = () if cfg.train_bias else ("bias",)

    for epoch in range(cfg.epochs):
        stage2 = cfg.in_stage2(epoch)
        assoc = _Association(bank, cfg, stage2)
        for ns in assoc.per_camera:
            report.neighbor_rows.extend((epoch, PER_CAMERA, ns.query, j, s) for j, s in ns.members)
        for ns in assoc.cross:
            report.neighbor_rows.extend((epoch, CROSS_CAMERA, ns.query, j, s) for j, s in ns.members)

        order = rng.permutation(ds.num_frames)
        sum_pcm = sum_ccm = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            b = len(idx)
            cache = forward_cached(model, ds.features[idx])
            X = cache.out
            tids = frame_tid[idx]
            bank.update_many(tids, X)

            grad_x = np.zeros_like(X)
            pcm = np.zeros(b)
            for m in np.unique(frame_cam[idx]).tolist():
                rows = np.flatnonzero(frame_cam[idx] == m)
                labels = frame_label[idx][rows]
                if clf is not None:
                    l, g, gW = ce_loss_batch(X[rows], clf[m], labels)
                    clf.weights[m] -= cfg.learning_rate * gW / b
                else:
                    l, g = pcm_loss_batch(X[rows], bank.camera_bank(m), assoc.weights[m][labels], tau)
                pcm[rows] = l
                grad_x[rows] = g

            ccm = np.zeros(b)
            if stage2:
                mask = assoc.cross_mask[tids]
                zsum = np.einsum("bk,bkd->bd", mask, bank.z[assoc.cross_idx[tids]])
                ccm = mask.sum(axis=1) - np.sum(zsum * X, axis=1)
                grad_x -= lam * zsum

            batch_loss = float(np.mean(pcm + lam * ccm))
            if not np.isfinite(batch_loss) or not np.all(np.isfinite(grad_x)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}",
                    {
                        "epoch": epoch,
                        "batch_start": start,
                        "frame_indices": idx.tolist(),
                        "pcm": pcm.tolist(),
                        "ccm": ccm.tolist(),
                        "params": {n: p.tolist() for n, p in params.items()},
                    },
                )
            grads, _ = backward_cached(model, cache, grad_x / b)
            _sgd(params, grads, cfg.learning_rate, frozen)
            sum_pcm += float(pcm.sum())
            sum_ccm += float(ccm.sum())

        n = ds.num_frames
        cross_pairs, cross_prec = sum(len(s) for s in assoc.cross), None
        percam_pairs, percam_prec = sum(len(s) for s in assoc.per_camera), None
        if ground_truth is not None:
            cross_pairs, cross_prec = assoc_diagnostics(assoc.cross, ground_truth)
            percam_pairs, percam_prec = assoc_diagnostics(assoc.per_camera, ground_truth)
        stats = EpochStats(
            epoch=epoch,
            stage=2 if stage2 else 1,
            loss=(sum_pcm + lam * sum_ccm) / n,
            pcm_loss=sum_pcm / n,
            ccm_loss=sum_ccm / n,
            cross_pairs=cross_pairs,
            cross_precision=cross_prec,
            percam_pairs=percam_pairs,
            percam_precision=percam_prec,
        )
        report.epochs.append(stats)
        log.info(
            "epoch %d stage %d loss %.4f pcm %.4f ccm %.4f cross pairs %d",
            epoch, stats.stage, stats.loss, stats.pcm_loss, stats.ccm_loss, cross_pairs,
        )
    return model, report
