import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from airfl.baselines import SELECT_ALL
from airfl.estimators import OTAFederatedClassifier, PDDScheduler
from airfl.fltrain.data import N_FEATURES
from airfl.ota import OtaConfig
from airfl.surrogate import objective_r

from conftest import los_instance


def test_scheduler_params_round_trip():
    est = PDDScheduler(max_inner=20, layout_mode="per-user")
    assert est.get_params()["max_inner"] == 20
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert twin.set_params(max_outer=5).max_outer == 5


def test_scheduler_fit_predict_score():
    ch = los_instance(3, users=4, antennas=2)
    est = PDDScheduler(max_outer=20).fit(ch)
    mask = est.predict(ch)
    assert mask.dtype == bool and mask.shape == (4,)
    np.testing.assert_array_equal(mask, est.selection_)
    assert np.linalg.norm(est.beamformer_) == pytest.approx(1.0, abs=1e-10)
    r = objective_r(est.beamformer_, est.selection_, ch.at_layout(est.layout_),
                    ch.sample_counts, OtaConfig.from_dbm(0.0, -20.0))
    assert est.score(ch) == pytest.approx(-r, rel=1e-12)
    assert est.r_ == pytest.approx(r, rel=1e-9)


def test_scheduler_predict_resolves_new_user_count():
    est = PDDScheduler(max_outer=10).fit(los_instance(1, users=3, antennas=2))
    assert est.predict(los_instance(2, users=5, antennas=2)).shape == (5,)
    with pytest.raises(ValueError):
        est.score(los_instance(2, users=5, antennas=2))


def test_scheduler_requires_fit_and_channels():
    with pytest.raises(NotFittedError):
        PDDScheduler().predict(los_instance(0))
    with pytest.raises(TypeError):
        PDDScheduler().fit(np.zeros((3, 2)))


def blobs(n, seed=0):
    """Ten well-separated classes in pixel space."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 10, n)
    X = 0.1 * rng.random((n, N_FEATURES))
    X[np.arange(n), 50 * y] += 0.9
    return X, y


def test_classifier_fit_predict_score():
    X, y = blobs(200)
    est = OTAFederatedClassifier(scheme=SELECT_ALL, rounds=30, learning_rate=2.0, n_users=4,
                                 n_antennas=2, noise_power_dbm=float("-inf"))
    est.fit(X, y)
    assert len(est.history_) == 30
    proba = est.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert est.predict(X).shape == (200,)
    assert est.score(X, y) > 0.9
    assert est.score(X, y) == pytest.approx(est.history_[-1].test_acc)


def test_classifier_is_deterministic_and_clonable():
    X, y = blobs(60, seed=1)
    est = OTAFederatedClassifier(scheme=SELECT_ALL, rounds=3, n_users=3, n_antennas=2)
    a = est.fit(X, y).coef_.copy()
    b = clone(est).fit(X, y).coef_
    np.testing.assert_array_equal(a, b)


def test_classifier_input_validation():
    est = OTAFederatedClassifier(rounds=1, n_users=2)
    with pytest.raises(ValueError):
        est.fit(np.zeros((4, 3)), np.zeros(4, dtype=int))
    with pytest.raises(ValueError):
        est.fit(np.zeros((4, N_FEATURES)), np.full(4, 11))
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((1, N_FEATURES)))
