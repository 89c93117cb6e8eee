"""Per-tracklet representation memory maintained by a halving moving average."""
from __future__ import annotations

import numpy as np

from .core import TrackletDataset
from .embed import DEGENERATE_NORM, EmbedModel, forward

__all__ = ["MemoryBank", "init_bank", "update_tracklet_rep"]


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    out = v / np.where(norm < DEGENERATE_NORM, 1.0, norm)
    bad = norm[..., 0] < DEGENERATE_NORM
    if np.any(bad):
        out[bad] = 0.0
        out[bad, 0] = 1.0
    return out


class MemoryBank:
    """Unit-norm tracklet representations partitioned by camera.

    ``z`` holds one row per tracklet (global id). ``members[m]`` lists the
    tracklet ids of camera ``m`` in label order, so ``z[members[m]]`` is the
    camera's softmax bank.
    """

    def __init__(self, z: np.ndarray, tracklet_camera: np.ndarray, cameras: int):
        self.z = np.array(z, dtype=np.float64)
        self.camera = np.asarray(tracklet_camera, dtype=np.int64)
        self.cameras = int(cameras)
        self.members = [np.flatnonzero(self.camera == m) for m in range(self.cameras)]
        self.last_norm = np.ones(len(self.z))

    def __len__(self) -> int:
        return self.z.shape[0]

    def camera_bank(self, m: int) -> np.ndarray:
        return self.z[self.members[m]]

    def update(self, tracklet_id: int, x: np.ndarray) -> None:
        update_tracklet_rep(self, tracklet_id, x)

    def update_many(self, tracklet_ids, xs: np.ndarray) -> None:
        """Sequential updates in the given order."""
        for tid, x in zip(np.asarray(tracklet_ids).tolist(), xs):
            update_tracklet_rep(self, tid, x)


def init_bank(ds: TrackletDataset, model: EmbedModel) -> MemoryBank:
    """Each entry is the normalised mean of its tracklet's frame embeddings."""
    if model.d_in != ds.dim:
        raise ValueError(f"model d_in {model.d_in} != dataset dim {ds.dim}")
    emb = forward(model, ds.features) if ds.num_frames else np.zeros((0, model.d_out))
    sums = np.zeros((len(ds), model.d_out))
    np.add.at(sums, ds.frame_tracklet, emb)
    counts = np.bincount(ds.frame_tracklet, minlength=len(ds)).astype(np.float64)
    means = sums / np.maximum(counts, 1.0)[:, None]
    return MemoryBank(_normalize_rows(means), ds.tracklet_camera, ds.cameras)


def update_tracklet_rep(bank: MemoryBank, tracklet_id: int, x: np.ndarray) -> None:
    """``z <- normalize((z + x) / 2)`` for one tracklet; nothing else changes."""
    if not 0 <= tracklet_id < len(bank):
        raise KeyError(f"unknown tracklet id {tracklet_id}")
    avg = 0.5 * (bank.z[tracklet_id] + np.asarray(x, dtype=np.float64))
    norm = float(np.linalg.norm(avg))
    bank.last_norm[tracklet_id] = norm
    bank.z[tracklet_id] = _normalize_rows(avg[None, :])[0]
