import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from stltrack.estimator import TrackletEmbedder
from stltrack.synthgen import GenConfig, generate
from stltrack.trainer import TrainConfig, run_training


@pytest.fixture(scope="module")
def frames():
    ds = generate(GenConfig(seed=5, cameras=3, identities=10, dim=12))
    tids = ds.frame_tracklet
    return ds, ds.features, tids, ds.tracklet_camera[tids], ds.ground_truth().identity[tids]


def _est(**kw):
    base = dict(seed=2, epochs=3, stage2_start_epoch=1, batch_size=32, learning_rate=1e-3, embed_dim=16)
    base.update(kw)
    return TrackletEmbedder(**base)


def test_params_mirror_train_config():
    assert set(TrackletEmbedder().get_params()) == TrainConfig.field_names()
    est = clone(_est(tau=0.5))
    assert est.get_params()["tau"] == 0.5


def test_fit_transform_matches_trainer(frames):
    ds, X, tids, cams, y = frames
    est = _est()
    Z = est.fit_transform(X, y, tracklet_ids=tids, cameras=cams)
    assert Z.shape == (len(X), 16)
    np.testing.assert_allclose(np.linalg.norm(Z, axis=1), 1.0, atol=1e-12)
    model, _ = run_training(ds, est._config())
    np.testing.assert_array_equal(est.model_.weight, model.weight)
    assert len(est.report_.epochs) == 3 and est.n_features_in_ == 12


def test_score_is_rank1(frames):
    _, X, tids, cams, y = frames
    est = _est().fit(X, tracklet_ids=tids, cameras=cams)
    s = est.score(X, y, tracklet_ids=tids, cameras=cams)
    assert 0.0 <= s <= 1.0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        TrackletEmbedder().transform(np.ones((2, 3)))


def test_input_validation(frames):
    _, X, tids, cams, _ = frames
    with pytest.raises(ValueError):
        _est().fit(X)
    with pytest.raises(ValueError):
        _est(loss_mode="bogus").fit(X, tracklet_ids=tids, cameras=cams)
    est = _est().fit(X, tracklet_ids=tids, cameras=cams)
    with pytest.raises(ValueError):
        est.transform(X[:, :5])
    with pytest.raises(ValueError):
        est.transform(np.full((1, 12), np.nan))
