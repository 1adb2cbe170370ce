import numpy as np
import pytest
from pytest import approx

from ctxtrack.core import Detection, StateEstimate
from ctxtrack.models import (
    CvModelConfig,
    cv_predict,
    kalman_update,
    measurement_predict,
    predict_arrays,
    process_noise,
)

CFG = CvModelConfig()


def test_zero_dt_is_identity():
    st = StateEstimate([1, 2, 3, 4], np.diag([1.0, 2, 3, 4]))
    out = cv_predict(st, 0.0, CFG)
    assert np.array_equal(out.mean, st.mean)
    assert np.array_equal(out.covariance, st.covariance)


def test_kinematic_propagation():
    out = cv_predict(StateEstimate([0, 1, 0, 0], np.eye(4)), 2.0, CFG)
    assert out.mean == approx([2, 1, 0, 0])


def test_process_noise_position_variance():
    q = process_noise(1.25, CFG)
    assert q[0, 0] == approx(0.64 * 1.25 ** 3 / 3)
    assert q[2, 2] == approx(0.41666666666666, rel=1e-12)
    assert q[0, 1] == approx(0.64 * 1.25 ** 2 / 2)
    assert q[1, 1] == approx(0.64 * 1.25)


def test_negative_dt_raises():
    with pytest.raises(ValueError):
        cv_predict(StateEstimate(np.zeros(4), np.eye(4)), -0.1, CFG)


def test_sigma_acc_must_be_positive():
    with pytest.raises(ValueError):
        CvModelConfig(0.0)


def test_batched_predict_matches_single(rng):
    means = rng.normal(size=(5, 4))
    a = rng.normal(size=(5, 4, 4))
    covs = a @ np.swapaxes(a, 1, 2) + np.eye(4)
    bm, bp = predict_arrays(means, covs, 0.7, CFG)
    for i in range(5):
        single = cv_predict(StateEstimate(means[i], covs[i]), 0.7, CFG)
        assert bm[i] == approx(single.mean)
        assert bp[i] == approx(single.covariance)


@pytest.mark.parametrize("p, r, expected", [
    (np.eye(4), np.eye(2), 2 * np.eye(2)),
    (np.diag([100.0, 225, 100, 225]), np.diag([0.25, 0.25]), np.diag([100.25, 100.25])),
])
def test_innovation_covariance(p, r, expected):
    pred = measurement_predict(StateEstimate([5, 0, 7, 0], p), r)
    assert pred.z_pred == approx([5, 7])
    assert pred.innovation_cov == approx(expected)


def test_uninformative_measurement_leaves_state():
    st = StateEstimate([3, 1, -2, 0.5], np.diag([4.0, 1, 4, 1]))
    det = Detection([3, -2], np.eye(2) * 1e12, "radar")
    out = kalman_update(st, det)
    assert out.mean == approx(st.mean, abs=1e-6)
    assert out.covariance == approx(st.covariance, abs=1e-6)


def test_scalar_kalman_algebra():
    out = kalman_update(StateEstimate(np.zeros(4), np.eye(4)), Detection([0, 0], np.eye(2), "radar"))
    assert out.covariance[0, 0] == approx(0.5)
    assert out.covariance[2, 2] == approx(0.5)
    assert out.covariance[1, 1] == approx(1.0)


def test_update_keeps_covariance_symmetric(rng):
    a = rng.normal(size=(4, 4))
    st = StateEstimate(rng.normal(size=4), a @ a.T + np.eye(4))
    out = kalman_update(st, Detection(rng.normal(size=2), np.diag([0.3, 2.0]), "radar"))
    assert np.max(np.abs(out.covariance - out.covariance.T)) == 0.0
    assert np.all(np.linalg.eigvalsh(out.covariance) > 0)
