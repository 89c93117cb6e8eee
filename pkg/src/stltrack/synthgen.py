"""Synthetic multi-camera tracklet generator with tracker-style corruptions."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Tuple

import numpy as np

from .core import DISTRACTOR, TrackletDataset

__all__ = ["GenConfig", "generate", "slerp"]

OCCLUSION_NOISE_FACTOR = 5.0


@dataclass(frozen=True)
class GenConfig:
    """Generator settings.

    Defaults reproduce the desk-scale reference dataset except for ``seed``,
    which is always required. Corruption rates are per-tracklet probabilities.
    """

    seed: int
    cameras: int = 4
    identities: int = 50
    dim: int = 32
    tracklets_per_camera: Tuple[int, int] = (1, 3)
    frames_per_tracklet: Tuple[int, int] = (5, 15)
    noise: float = 0.1
    camera_shift: float = 0.6
    camera_subspace: float = 0.3
    id_switch: float = 0.1
    distractor: float = 0.1
    multi_person: float = 0.1
    occlusion: float = 0.1
    unmatched_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "tracklets_per_camera", tuple(int(v) for v in self.tracklets_per_camera))
        object.__setattr__(self, "frames_per_tracklet", tuple(int(v) for v in self.frames_per_tracklet))
        self.validate()

    def validate(self) -> None:
        if self.cameras < 2:
            raise ValueError(f"cameras must be >= 2, got {self.cameras}")
        if self.identities < 2:
            raise ValueError(f"identities must be >= 2, got {self.identities}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        for name in ("camera_shift", "camera_subspace"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        lo, hi = self.tracklets_per_camera
        if not (len(self.tracklets_per_camera) == 2 and 0 <= lo <= hi and hi >= 1):
            raise ValueError(f"bad tracklets_per_camera range {self.tracklets_per_camera}")
        lo, hi = self.frames_per_tracklet
        if not (len(self.frames_per_tracklet) == 2 and 1 <= lo <= hi):
            raise ValueError(f"bad frames_per_tracklet range {self.frames_per_tracklet}")
        for name in ("id_switch", "distractor", "multi_person", "occlusion", "unmatched_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tracklets_per_camera"] = list(self.tracklets_per_camera)
        d["frames_per_tracklet"] = list(self.frames_per_tracklet)
        return d

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _random_unit(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    return _unit(v)


def slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation from unit vector ``a`` (t=0) to ``b`` (t=1)."""
    cos = float(np.clip(a @ b, -1.0, 1.0))
    theta = np.arccos(cos)
    if theta < 1e-9:
        return a.copy()
    s = np.sin(theta)
    return (np.sin((1.0 - t) * theta) * a + np.sin(t * theta) * b) / s


@dataclass
class _Plan:
    camera: int
    identity: int
    num_frames: int
    mode: str  # clean | distractor
    switch_to: int = -1
    switch_at: int = 0
    partner: int = -1
    occluded: bool = False


def _plan(cfg: GenConfig, rng: np.random.Generator) -> list[_Plan]:
    lo, hi = cfg.tracklets_per_camera
    M, C = cfg.cameras, cfg.identities
    counts = np.zeros((C, M), dtype=np.int64)
    unmatched = rng.random(C) < cfg.unmatched_fraction
    for c in range(C):
        if unmatched[c]:
            counts[c, rng.integers(M)] = rng.integers(max(lo, 1), hi + 1)
            continue
        # matched identities must show up in at least two cameras
        while True:
            row = rng.integers(lo, hi + 1, size=M)
            if np.count_nonzero(row) >= 2:
                break
        counts[c] = row

    plans = []
    flo, fhi = cfg.frames_per_tracklet
    for m in range(M):
        cam_plans = []
        for c in range(C):
            for _ in range(counts[c, m]):
                n = int(rng.integers(flo, fhi + 1))
                p = _Plan(camera=m, identity=c, num_frames=n, mode="clean")
                others = [o for o in range(C) if o != c]
                if rng.random() < cfg.distractor:
                    p.mode = "distractor"
                    p.identity = DISTRACTOR
                else:
                    if n >= 2 and rng.random() < cfg.id_switch:
                        p.switch_to = int(rng.choice(others))
                        p.switch_at = int(rng.integers(1, n))
                    if rng.random() < cfg.multi_person:
                        p.partner = int(rng.choice(others))
                    if rng.random() < cfg.occlusion:
                        p.occluded = True
                cam_plans.append(p)
        order = rng.permutation(len(cam_plans))
        plans.extend(cam_plans[i] for i in order)
    return plans


def _camera_rotations(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    """One orthogonal map per camera: identity outside a shared random
    subspace of ``round(camera_subspace * dim)`` dimensions, an independent
    random rotation inside it."""
    d = cfg.dim
    ds = int(round(cfg.camera_subspace * d))
    basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
    sub = basis[:, :ds]
    rots = np.empty((cfg.cameras, d, d))
    for m in range(cfg.cameras):
        q, r = np.linalg.qr(rng.standard_normal((ds, ds)))
        q = q * np.sign(np.diag(r))
        rots[m] = np.eye(d) - sub @ sub.T + sub @ q @ sub.T
    return rots


def _render(cfg, plan, index, protos, cam_vecs, cam_rots) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    n, d = plan.num_frames, cfg.dim

    def base(identity):
        # a non-person object: its own random appearance, consistent over frames
        p = _random_unit(rng, 1, d)[0] if identity == DISTRACTOR else protos[identity]
        if plan.partner >= 0:
            p = slerp(p, protos[plan.partner], 0.5)
        return view(p)

    def view(p):
        return slerp(cam_rots[plan.camera] @ p, cam_vecs[plan.camera], cfg.camera_shift)

    centers = np.tile(base(plan.identity), (n, 1))
    if plan.switch_to >= 0:
        centers[plan.switch_at :] = view(protos[plan.switch_to])
    sigma = np.full((n, 1), cfg.noise)
    if plan.occluded:
        hit = rng.random(n) < 0.5
        if not hit.any():
            hit[rng.integers(n)] = True
        sigma[hit] *= OCCLUSION_NOISE_FACTOR
    frames = centers + sigma * rng.standard_normal((n, d))
    norms = np.linalg.norm(frames, axis=1, keepdims=True)
    # a noise draw cancelling the center exactly is measure-zero; guard anyway
    frames = np.where(norms > 1e-12, frames / np.maximum(norms, 1e-12), centers)
    return frames


def generate(cfg: GenConfig) -> TrackletDataset:
    """Generate a dataset; a pure function of ``cfg``.

    Features are rounded to float32 so that a save/load round trip is exact.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    protos = _random_unit(rng, cfg.identities, cfg.dim)
    cam_vecs = _random_unit(rng, cfg.cameras, cfg.dim)
    cam_rots = _camera_rotations(cfg, rng)
    plans = _plan(cfg, rng)
    if plans:
        feats = np.concatenate(
            [_render(cfg, p, i, protos, cam_vecs, cam_rots) for i, p in enumerate(plans)]
        )
    else:
        feats = np.zeros((0, cfg.dim))
    feats = feats.astype(np.float32).astype(np.float64)
    return TrackletDataset(
        feats,
        cfg.cameras,
        [p.camera for p in plans],
        [p.num_frames for p in plans],
        [p.identity for p in plans],
    )
