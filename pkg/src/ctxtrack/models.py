"""Constant-velocity motion model and linear position measurement model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import CovarianceError, Detection, StateEstimate, _cholesky, symmetrize

H = np.array([[1.0, 0.0, 0.0, 0.0],
              [0.0, 0.0, 1.0, 0.0]])
H.setflags(write=False)


@dataclass(frozen=True)
class CvModelConfig:
    """Continuous white-noise acceleration intensity, per axis."""

    sigma_acc: float = 0.8

    def __post_init__(self):
        if not self.sigma_acc > 0:
            raise ValueError("sigma_acc must be positive")


@dataclass(frozen=True)
class MeasurementModel:
    projection: np.ndarray = H


def transition_matrix(dt: float) -> np.ndarray:
    f = np.eye(4)
    f[0, 1] = f[2, 3] = dt
    return f


def process_noise(dt: float, config: CvModelConfig) -> np.ndarray:
    """Continuous white-noise acceleration discretisation (dt^3/3 form)."""
    q_axis = config.sigma_acc ** 2 * np.array([[dt ** 3 / 3.0, dt ** 2 / 2.0],
                                               [dt ** 2 / 2.0, dt]])
    q = np.zeros((4, 4))
    q[:2, :2] = q_axis
    q[2:, 2:] = q_axis
    return q


def _check_dt(dt: float) -> None:
    if dt < 0:
        raise ValueError(f"negative prediction interval dt={dt}; retrodiction is not supported")


def cv_predict(state: StateEstimate, dt: float, config: CvModelConfig) -> StateEstimate:
    _check_dt(dt)
    if dt == 0:
        return state
    f = transition_matrix(dt)
    cov = f @ state.covariance @ f.T + process_noise(dt, config)
    return StateEstimate(f @ state.mean, symmetrize(cov))


def predict_arrays(means: np.ndarray, covs: np.ndarray, dt: float,
                   config: CvModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`cv_predict` over ``(N, 4)`` means and ``(N, 4, 4)`` covariances."""
    _check_dt(dt)
    if dt == 0:
        return means, covs
    f = transition_matrix(dt)
    means = means @ f.T
    covs = f @ covs @ f.T + process_noise(dt, config)
    return means, symmetrize(covs)


class MeasurementPrediction(NamedTuple):
    z_pred: np.ndarray
    innovation_cov: np.ndarray
    cross_cov: np.ndarray


def measurement_predict(state: StateEstimate, meas_cov: np.ndarray) -> MeasurementPrediction:
    """Predicted measurement, innovation covariance and ``P H^T``."""
    z_pred = H @ state.mean
    cross = state.covariance @ H.T
    s = symmetrize(H @ cross + np.asarray(meas_cov, dtype=float))
    _cholesky(s)
    return MeasurementPrediction(z_pred, s, cross)


def kalman_update(state: StateEstimate, detection: Detection) -> StateEstimate:
    """Kalman update with the Joseph-form covariance."""
    r = detection.covariance
    _cholesky(r)
    z_pred, s, cross = measurement_predict(state, r)
    try:
        gain = np.linalg.solve(s, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("singular innovation covariance") from exc
    mean = state.mean + gain @ (detection.position - z_pred)
    i_kh = np.eye(4) - gain @ H
    cov = i_kh @ state.covariance @ i_kh.T + gain @ r @ gain.T
    return StateEstimate(mean, symmetrize(cov))
