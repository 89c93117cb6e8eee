"""scikit-learn compatible wrapper around the training loop."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import TrackletDataset
from .embed import forward
from .evaluation import _evaluate, tracklet_descriptors
from .trainer import TrainConfig, run_training

__all__ = ["TrackletEmbedder"]


class TrackletEmbedder(TransformerMixin, BaseEstimator):
    """Learn a unit-norm embedding of per-frame features from tracklet labels.

    Parameters mirror :class:`~stltrack.trainer.TrainConfig`. ``fit`` needs the
    tracklet id and camera of every frame; ``y`` (true identities) is optional
    and only feeds the association diagnostics and :meth:`score`.

    Attributes
    ----------
    model_ : EmbedModel
    report_ : TrainReport
    n_features_in_ : int
    """

    def __init__(
        self,
        *,
        seed=0,
        epochs=20,
        stage2_start_epoch=10,
        batch_size=384,
        learning_rate=3e-5,
        k=1,
        epsilon=0.7,
        tau=0.1,
        lam=10.0,
        loss_mode="stl",
        embed_dim=128,
        hidden=0,
        train_bias=False,
    ):
        self.seed = seed
        self.epochs = epochs
        self.stage2_start_epoch = stage2_start_epoch
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.k = k
        self.epsilon = epsilon
        self.tau = tau
        self.lam = lam
        self.loss_mode = loss_mode
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.train_bias = train_bias

    def _config(self) -> TrainConfig:
        return TrainConfig(**self.get_params())

    def _dataset(self, X, tracklet_ids, cameras, y=None) -> TrackletDataset:
        X = check_array(X, dtype=np.float64)
        if tracklet_ids is None or cameras is None:
            raise ValueError("tracklet_ids and cameras are required")
        return TrackletDataset.from_arrays(X, tracklet_ids, cameras, y)

    def fit(self, X, y=None, *, tracklet_ids=None, cameras=None):
        """Train on frames ``X`` of shape (n_frames, n_features)."""
        cfg = self._config()
        ds = self._dataset(X, tracklet_ids, cameras, y)
        gt = ds.ground_truth() if y is not None else None
        self.model_, self.report_ = run_training(ds, cfg, gt)
        self.n_features_in_ = ds.dim
        return self

    def transform(self, X):
        """Frame embeddings, shape (n_frames, embed_dim)."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return forward(self.model_, X)

    def score(self, X, y, *, tracklet_ids, cameras):
        """Cross-camera retrieval rank-1 accuracy of tracklet descriptors."""
        check_is_fitted(self, "model_")
        ds = self._dataset(X, tracklet_ids, cameras, y)
        gt = ds.ground_truth()
        desc = tracklet_descriptors(self.model_, ds)
        return _evaluate(desc, gt.identity, gt.camera, 20).rank1
