"""Tracklet dataset container and its on-disk format.

A dataset on disk is a JSON manifest plus an adjacent flat payload of
little-endian float32 frame features (same stem, ``.bin`` suffix)::

    {"version": 1, "dim": 4, "cameras": 2,
     "tracklets": [{"camera": 0, "num_frames": 3, "identity": 5}, ...]}

Frames are concatenated in manifest order, ``dim`` floats per frame.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

FORMAT_VERSION = 1
DISTRACTOR = -1
PAYLOAD_SUFFIX = ".bin"
MANIFEST_NAME = "tracklets.json"

__all__ = [
    "DISTRACTOR",
    "DatasetError",
    "Frame",
    "GroundTruth",
    "Tracklet",
    "TrackletDataset",
    "load_dataset",
    "save_dataset",
]


class DatasetError(ValueError):
    """Raised for malformed manifests or payloads."""


@dataclass(frozen=True)
class Frame:
    raw: np.ndarray
    tracklet_id: int


@dataclass(frozen=True)
class Tracklet:
    """One tracklet: a contiguous run of frames ``[start, stop)`` in the dataset.

    ``label`` is the automatically assigned per-camera class index. Identity
    is deliberately absent; see :meth:`TrackletDataset.ground_truth`.
    """

    id: int
    camera: int
    label: int
    start: int
    stop: int

    @property
    def num_frames(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class GroundTruth:
    """Evaluation-only view of tracklet identities.

    ``identity[i]`` is the identity of tracklet ``i``; ``DISTRACTOR`` marks
    non-person tracklets, which never count as a correct match.
    """

    identity: np.ndarray
    camera: np.ndarray

    def same_identity(self, i: int, j: int) -> bool:
        a, b = self.identity[i], self.identity[j]
        return bool(a == b and a != DISTRACTOR)


class TrackletDataset:
    """Immutable multi-camera tracklet collection.

    Parameters
    ----------
    features : array (n_frames, dim)
        Raw frame inputs, tracklets stored contiguously in order.
    cameras : int
        Number of cameras ``M``.
    tracklet_cameras : sequence of int
        Camera index of each tracklet.
    num_frames : sequence of int
        Frame count of each tracklet (all >= 1).
    identities : sequence of int, optional
        Ground-truth identity per tracklet, evaluation only.
    """

    def __init__(
        self,
        features: np.ndarray,
        cameras: int,
        tracklet_cameras: Sequence[int],
        num_frames: Sequence[int],
        identities: Optional[Sequence[int]] = None,
    ):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise DatasetError("features contain non-finite values")
        cameras = int(cameras)
        if cameras < 1:
            raise DatasetError(f"cameras must be >= 1, got {cameras}")
        cams = np.asarray(tracklet_cameras, dtype=np.int64).reshape(-1)
        counts = np.asarray(num_frames, dtype=np.int64).reshape(-1)
        if cams.shape != counts.shape:
            raise DatasetError("tracklet_cameras and num_frames differ in length")
        if np.any(counts < 1):
            raise DatasetError("every tracklet needs at least one frame")
        if np.any((cams < 0) | (cams >= cameras)):
            bad = int(cams[(cams < 0) | (cams >= cameras)][0])
            raise DatasetError(f"camera index {bad} out of range [0, {cameras})")
        if int(counts.sum()) != features.shape[0]:
            raise DatasetError(
                f"manifest declares {int(counts.sum())} frames, payload has {features.shape[0]}"
            )
        if identities is not None:
            identities = np.asarray(identities, dtype=np.int64).reshape(-1)
            if identities.shape != cams.shape:
                raise DatasetError("identities and tracklet_cameras differ in length")

        features.setflags(write=False)
        self.features = features
        self.cameras = cameras
        self.dim = features.shape[1]

        stops = np.cumsum(counts)
        starts = stops - counts
        next_label = [0] * cameras
        tracklets = []
        for i, (m, a, b) in enumerate(zip(cams.tolist(), starts.tolist(), stops.tolist())):
            tracklets.append(Tracklet(i, m, next_label[m], a, b))
            next_label[m] += 1
        self.tracklets: tuple[Tracklet, ...] = tuple(tracklets)

        self.tracklet_camera = cams
        self.tracklet_label = np.array([t.label for t in tracklets], dtype=np.int64)
        self.frame_tracklet = np.repeat(np.arange(len(tracklets)), counts)
        self.camera_members = [np.flatnonzero(cams == m) for m in range(cameras)]
        for arr in (self.tracklet_camera, self.tracklet_label, self.frame_tracklet):
            arr.setflags(write=False)
        self._identity = identities

    def __len__(self) -> int:
        return len(self.tracklets)

    def __repr__(self) -> str:
        return (
            f"TrackletDataset(cameras={self.cameras}, tracklets={len(self)}, "
            f"frames={self.num_frames}, dim={self.dim})"
        )

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def tracklets_per_camera(self) -> list[int]:
        return [len(m) for m in self.camera_members]

    @property
    def has_ground_truth(self) -> bool:
        return self._identity is not None

    def frames(self, tracklet_id: int) -> np.ndarray:
        t = self.tracklets[tracklet_id]
        return self.features[t.start : t.stop]

    def iter_frames(self) -> Iterator[Frame]:
        for i, tid in enumerate(self.frame_tracklet.tolist()):
            yield Frame(self.features[i], tid)

    def ground_truth(self) -> GroundTruth:
        if self._identity is None:
            raise DatasetError("dataset carries no ground-truth identities")
        return GroundTruth(self._identity.copy(), np.asarray(self.tracklet_camera).copy())

    @classmethod
    def from_arrays(
        cls,
        X: np.ndarray,
        tracklet_ids: Sequence[int],
        cameras: Sequence[int],
        identities: Optional[Sequence[int]] = None,
    ) -> "TrackletDataset":
        """Build a dataset from per-frame arrays.

        Frames sharing a tracklet id must share a camera; tracklets are ordered
        by first appearance and frames are regrouped stably.
        """
        X = np.asarray(X, dtype=np.float64)
        tids = np.asarray(tracklet_ids).reshape(-1)
        cams = np.asarray(cameras, dtype=np.int64).reshape(-1)
        if not (X.shape[0] == tids.shape[0] == cams.shape[0]):
            raise DatasetError("X, tracklet_ids and cameras must have equal length")
        uniq, first, inverse = np.unique(tids, return_index=True, return_inverse=True)
        order_of_uniq = np.argsort(first, kind="stable")
        rank = np.empty_like(order_of_uniq)
        rank[order_of_uniq] = np.arange(len(uniq))
        frame_rank = rank[inverse]
        perm = np.argsort(frame_rank, kind="stable")
        per_tracklet_cam = cams[first[order_of_uniq]]
        if np.any(cams != per_tracklet_cam[frame_rank]):
            raise DatasetError("frames of one tracklet span several cameras")
        counts = np.bincount(frame_rank, minlength=len(uniq))
        ids = None
        if identities is not None:
            ident = np.asarray(identities, dtype=np.int64).reshape(-1)
            ids = ident[first[order_of_uniq]]
        n_cams = int(cams.max()) + 1 if cams.size else 1
        return cls(X[perm], n_cams, per_tracklet_cam, counts, ids)


def _resolve_paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.is_dir() or path.suffix != ".json":
        path = path / MANIFEST_NAME
    return path, path.with_suffix(PAYLOAD_SUFFIX)


def save_dataset(ds: TrackletDataset, path) -> Path:
    """Write ``ds`` as manifest + payload. ``path`` is a directory or a ``.json`` file."""
    manifest_path, payload_path = _resolve_paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    identity = ds._identity
    entries = []
    for t in ds.tracklets:
        entry = {"camera": t.camera, "num_frames": t.num_frames}
        if identity is not None:
            entry["identity"] = int(identity[t.id])
        entries.append(entry)
    manifest = {
        "version": FORMAT_VERSION,
        "dim": ds.dim,
        "cameras": ds.cameras,
        "tracklets": entries,
    }
    payload = np.ascontiguousarray(ds.features, dtype="<f4").tobytes()
    payload_path.write_bytes(payload)
    manifest_path.write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest_path


def load_dataset(path) -> TrackletDataset:
    manifest_path, payload_path = _resolve_paths(path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError as exc:
        raise DatasetError(f"manifest not found: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest is not valid JSON: {exc}") from exc

    for key in ("version", "dim", "cameras", "tracklets"):
        if key not in manifest:
            raise DatasetError(f"manifest missing field {key!r}")
    if manifest["version"] != FORMAT_VERSION:
        raise DatasetError(f"unsupported manifest version {manifest['version']}")
    dim = int(manifest["dim"])
    if dim < 1:
        raise DatasetError(f"dim must be positive, got {dim}")
    entries = manifest["tracklets"]
    cams = [int(e["camera"]) for e in entries]
    counts = [int(e["num_frames"]) for e in entries]
    with_id = [e for e in entries if "identity" in e]
    if with_id and len(with_id) != len(entries):
        raise DatasetError("identity must be given for all tracklets or none")
    identities = [int(e["identity"]) for e in entries] if with_id else None

    n_frames = sum(counts)
    expected = n_frames * dim * 4
    if not payload_path.exists():
        raise DatasetError(f"payload not found: {payload_path}")
    size = os.path.getsize(payload_path)
    if size != expected:
        raise DatasetError(
            f"payload is {size} bytes, manifest implies {expected} ({n_frames} frames x {dim} dims)"
        )
    data = np.fromfile(payload_path, dtype="<f4").astype(np.float64).reshape(n_frames, dim)
    return TrackletDataset(data, manifest["cameras"], cams, counts, identities)
