import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import directional_check, unit
from stltrack.assoc import NeighborSet
from stltrack.loss import (
    CameraClassifier,
    LossParams,
    ccm_loss,
    ce_loss,
    ce_loss_batch,
    matching_distribution,
    pcm_loss,
    pcm_loss_batch,
    stl_loss,
)

# e^9 / (e^9 + e^1) evaluated at 30 significant digits
HIGH_PRECISION_P0 = 0.999664649869533521896121672171


def _bank_with_dots(dots):
    """Unit bank rows whose dot with e0 are the given values."""
    rows = [[d, np.sqrt(1 - d * d)] + [0.0] * len(dots) for d in dots]
    rows = np.array(rows)
    for i in range(len(dots)):
        rows[i, 2 + i] = rows[i, 1]
        rows[i, 1] = 0.0
    return np.eye(rows.shape[1])[0], rows


def test_single_tracklet_distribution():
    np.testing.assert_array_equal(matching_distribution(np.array([1.0, 0.0]), np.array([[0.0, 1.0]]), 0.1), [1.0])


def test_uniform_for_orthogonal_query():
    bank = np.eye(5)[1:]
    np.testing.assert_allclose(matching_distribution(np.eye(5)[0], bank, 0.1), [0.25] * 4, atol=1e-15)


def test_two_dots_at_low_temperature():
    x, bank = _bank_with_dots([0.9, 0.1])
    p = matching_distribution(x, bank, 0.1)
    assert abs(p[0] - HIGH_PRECISION_P0) < 1e-12
    assert abs(p[1] - (1 - HIGH_PRECISION_P0)) < 1e-12


def test_empty_bank_rejected():
    with pytest.raises(ValueError):
        matching_distribution(np.ones(3), np.zeros((0, 3)), 0.1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.sampled_from([1.0, 0.5, 0.2, 0.1, 0.05, 1e-3]))
def test_distribution_normalised(seed, n, tau):
    rng = np.random.default_rng(seed)
    p = matching_distribution(unit(rng.standard_normal(8)), unit(rng.standard_normal((n, 8))), tau)
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.all(p >= 0)


def test_lower_temperature_is_sharper(rng):
    x = unit(rng.standard_normal(6))
    bank = unit(rng.standard_normal((7, 6)))
    best = int(np.argmax(bank @ x))
    peaks = [matching_distribution(x, bank, t)[best] for t in (1.0, 0.5, 0.2, 0.1, 0.05)]
    assert all(a < b for a, b in zip(peaks, peaks[1:]))


def test_permutation_and_shift_invariance(rng):
    x = unit(rng.standard_normal(6))
    bank = unit(rng.standard_normal((7, 6)))
    perm = rng.permutation(7)
    p = matching_distribution(x, bank, 0.1)
    np.testing.assert_allclose(matching_distribution(x, bank[perm], 0.1), p[perm], atol=1e-15)
    # huge logits must not overflow
    p_big = matching_distribution(1e4 * x, bank, 1e-3)
    assert np.all(np.isfinite(p_big)) and abs(p_big.sum() - 1) < 1e-12


def test_pcm_perfect_single_match():
    loss, grad = pcm_loss(np.array([1.0, 0.0]), np.array([[1.0, 0.0]]), [1.0], 0.1)
    assert loss == 0.0
    np.testing.assert_array_equal(grad, [0.0, 0.0])


def test_pcm_stationary_when_weights_equal_distribution(rng):
    x = unit(rng.standard_normal(4))
    bank = unit(rng.standard_normal((5, 4)))
    p = matching_distribution(x, bank, 0.5)
    loss, grad = pcm_loss(x, bank, p, 0.5)
    assert np.max(np.abs(grad)) < 1e-14
    assert loss == pytest.approx(-np.sum(p * np.log(p)), abs=1e-12)


def test_pcm_direct_evaluation_and_gradient(rng):
    x = unit(rng.standard_normal(6))
    bank = unit(rng.standard_normal((5, 6)))
    w = rng.random(5)
    w /= w.sum()
    loss, grad = pcm_loss(x, bank, w, 0.1)
    logits = bank @ x / 0.1
    logp = logits - np.log(np.sum(np.exp(logits)))
    assert abs(loss + np.sum(w * logp)) < 1e-12
    f = lambda v: pcm_loss(v, bank, w, 0.1)[0]
    assert directional_check(f, grad, x, rng) < 1e-5


def test_pcm_mapping_weights_and_bounds():
    bank = np.eye(3)
    x = np.eye(3)[0]
    assert pcm_loss(x, bank, {0: 0.5, 2: 0.5}, 1.0)[0] == pytest.approx(
        pcm_loss(x, bank, [0.5, 0.0, 0.5], 1.0)[0], abs=1e-15
    )
    with pytest.raises(IndexError):
        pcm_loss(x, bank, {3: 1.0}, 1.0)


def test_pcm_batch_matches_rows(rng):
    X = unit(rng.standard_normal((6, 5)))
    bank = unit(rng.standard_normal((4, 5)))
    W = rng.random((6, 4))
    W /= W.sum(axis=1, keepdims=True)
    losses, grads = pcm_loss_batch(X, bank, W, 0.2)
    for i in range(6):
        l, g = pcm_loss(X[i], bank, W[i], 0.2)
        assert abs(losses[i] - l) < 1e-12
        np.testing.assert_allclose(grads[i], g, atol=1e-12)


def test_ccm_examples():
    x = np.array([1.0, 0.0])
    assert ccm_loss(x, [], np.zeros((0, 2)))[0] == 0.0
    assert ccm_loss(x, [0], np.array([[1.0, 0.0]]))[0] == 0.0
    bank = np.array([[0.6, 0.8], [0.8, 0.6]])
    loss, grad = ccm_loss(x, NeighborSet(5, ((0, 0.6), (1, 0.8))), bank)
    assert loss == pytest.approx(0.6, abs=1e-15)
    np.testing.assert_allclose(grad, -bank.sum(axis=0))


def test_ccm_gradient(rng):
    x = unit(rng.standard_normal(7))
    bank = unit(rng.standard_normal((5, 7)))
    loss, grad = ccm_loss(x, [1, 3], bank)
    assert directional_check(lambda v: ccm_loss(v, [1, 3], bank)[0], grad, x, rng) < 1e-5


def test_stl_combination():
    assert stl_loss(1.0, 0.5, 10.0) == 6.0
    assert stl_loss(0.7, 123.0, 0.0) == 0.7
    with pytest.raises(ValueError):
        stl_loss(1.0, 1.0, -1.0)


@settings(max_examples=50)
@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
def test_stl_arithmetic(pcm, ccm, lam):
    assert stl_loss(pcm, ccm, lam) == pcm + lam * ccm


def test_ce_single_class_is_zero(rng):
    clf = CameraClassifier([rng.standard_normal((1, 4))])
    loss, gx, gW = ce_loss(unit(rng.standard_normal(4)), clf, 0, 0)
    assert loss == pytest.approx(0.0, abs=1e-15)
    assert np.max(np.abs(gx)) < 1e-15 and np.max(np.abs(gW)) < 1e-15


def test_ce_alignment_dominance():
    W = np.eye(4)[:3]
    clf = CameraClassifier([W])
    losses = [ce_loss(W[1], clf, 0, lab)[0] for lab in range(3)]
    assert losses[1] < losses[0] and losses[1] < losses[2]


def test_ce_label_out_of_range():
    with pytest.raises(IndexError):
        ce_loss(np.ones(2), CameraClassifier([np.eye(2)]), 0, 2)


def test_ce_gradients(rng):
    W = rng.standard_normal((5, 6))
    x = unit(rng.standard_normal(6))
    clf = CameraClassifier([W])
    loss, gx, gW = ce_loss(x, clf, 0, 2)
    assert directional_check(lambda v: ce_loss(v, clf, 0, 2)[0], gx, x, rng) < 1e-5
    f = lambda M: ce_loss(x, CameraClassifier([M]), 0, 2)[0]
    assert directional_check(f, gW, W, rng) < 1e-5


def test_ce_batch_matches_rows(rng):
    W = rng.standard_normal((4, 5))
    X = unit(rng.standard_normal((6, 5)))
    labels = rng.integers(0, 4, size=6)
    losses, gX, gW = ce_loss_batch(X, W, labels)
    clf = CameraClassifier([W])
    total = np.zeros_like(W)
    for i in range(6):
        l, gx, gw = ce_loss(X[i], clf, 0, int(labels[i]))
        assert abs(losses[i] - l) < 1e-12
        np.testing.assert_allclose(gX[i], gx, atol=1e-12)
        total += gw
    np.testing.assert_allclose(gW, total, atol=1e-12)


def test_loss_params_validation():
    with pytest.raises(ValueError):
        LossParams(tau=0.0)
    with pytest.raises(ValueError):
        LossParams(lam=-1.0)
