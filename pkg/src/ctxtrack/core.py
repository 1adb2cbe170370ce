"""Shared domain types and Gaussian helpers.

All geometry lives in one 2-D scenario-local Cartesian frame and time is
expressed as seconds since scenario start.  States are ``[x, vx, y, vy]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Hashable, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from .context import DetectorContext, SensorPose

Timestamp = float

_LOG_2PI = np.log(2.0 * np.pi)


class CovarianceError(ValueError):
    """Raised when a covariance matrix is singular or not positive definite."""


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Return ``(M + M^T) / 2`` over the last two axes."""
    return 0.5 * (matrix + np.swapaxes(matrix, -1, -2))


def _cholesky(covariance: np.ndarray) -> np.ndarray:
    covariance = np.asarray(covariance, dtype=float)
    if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
        raise CovarianceError(f"covariance must be square, got shape {covariance.shape}")
    if not np.all(np.isfinite(covariance)):
        raise CovarianceError("covariance contains non-finite entries")
    asym = np.max(np.abs(covariance - covariance.T))
    if asym > 1e-9 * max(1.0, np.max(np.abs(covariance))):
        raise CovarianceError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance is not positive definite") from exc


def mahalanobis_distance(residual: Sequence[float], covariance: np.ndarray) -> float:
    """Mahalanobis length ``sqrt(r^T C^-1 r)`` of ``residual``.

    A singular or indefinite ``covariance`` raises :class:`CovarianceError`;
    no pseudo-inverse is ever substituted.
    """
    chol = _cholesky(covariance)
    residual = np.asarray(residual, dtype=float)
    whitened = np.linalg.solve(chol, residual)
    return float(np.sqrt(whitened @ whitened))


def gaussian_density(residual: Sequence[float], covariance: np.ndarray) -> float:
    """Zero-mean multivariate normal density evaluated at ``residual``."""
    chol = _cholesky(covariance)
    residual = np.asarray(residual, dtype=float)
    whitened = np.linalg.solve(chol, residual)
    k = residual.shape[0]
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(np.exp(-0.5 * (whitened @ whitened) - 0.5 * (k * _LOG_2PI + log_det)))


def _frozen(array: Any) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StateEstimate:
    """Gaussian estimate of ``[x, vx, y, vy]``."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "covariance", _frozen(self.covariance))

    @property
    def position(self) -> np.ndarray:
        return self.mean[[0, 2]]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[[1, 3]]


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    state: StateEstimate
    label: Hashable


@dataclass(frozen=True)
class Detection:
    """A single 2-D position measurement.

    ``extent_area`` is the lidar segmentation area in m^2; radar detections
    carry ``None``.
    """

    position: np.ndarray
    covariance: np.ndarray
    sensor_id: str
    extent_area: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position))
        object.__setattr__(self, "covariance", _frozen(self.covariance))
        if self.extent_area is not None and self.extent_area < 0:
            raise ValueError("extent_area must be non-negative")


@dataclass(frozen=True)
class SensorScan:
    """Every detection one sensor produced at one timestamp.

    ``context`` is the per-scan observability handle the trackers query;
    ``pose`` is the sensor pose it was built from, kept so that a stream can
    be re-wired with a different context family.
    """

    sensor_id: str
    timestamp: Timestamp
    detections: tuple[Detection, ...]
    context: Optional["DetectorContext"] = None
    pose: Optional["SensorPose"] = None
    kind: str = ""

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        for det in self.detections:
            if det.sensor_id != self.sensor_id:
                raise ValueError(
                    f"detection from {det.sensor_id!r} in scan of {self.sensor_id!r}")


@dataclass(frozen=True)
class Track:
    label: Hashable
    points: tuple[tuple[Timestamp, StateEstimate], ...]

    def __post_init__(self):
        points = tuple(self.points)
        if not points:
            raise ValueError("a track needs at least one point")
        times = [t for t, _ in points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("track timestamps must be strictly increasing")
        object.__setattr__(self, "points", points)

    @property
    def times(self) -> list[Timestamp]:
        return [t for t, _ in self.points]


@dataclass(frozen=True)
class GroundTruthTrack:
    """Piecewise-linear truth trajectory sampled at ``times``.

    The object exists on ``[birth, death]`` (the first and last sample) and
    is queried anywhere in between by linear interpolation.
    """

    label: Hashable
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray = field(default=None)

    def __post_init__(self):
        times = _frozen(self.times)
        positions = _frozen(self.positions).reshape(-1, 2)
        if times.ndim != 1 or len(times) != len(positions) or len(times) == 0:
            raise ValueError("times and positions must be aligned and non-empty")
        if np.any(np.diff(times) <= 0):
            raise ValueError("ground-truth times must be strictly increasing")
        if self.velocities is None:
            if len(times) > 1:
                vel = np.gradient(positions, times, axis=0)
            else:
                vel = np.zeros_like(positions)
        else:
            vel = self.velocities
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "velocities", _frozen(vel).reshape(-1, 2))

    @property
    def birth(self) -> float:
        return float(self.times[0])

    @property
    def death(self) -> float:
        return float(self.times[-1])

    def alive(self, t: float) -> bool:
        return self.birth <= t <= self.death

    def position_at(self, t: float) -> np.ndarray:
        if not self.alive(t):
            raise ValueError(f"{self.label!r} does not exist at t={t}")
        return np.array([np.interp(t, self.times, self.positions[:, i]) for i in range(2)])

    def velocity_at(self, t: float) -> np.ndarray:
        if not self.alive(t):
            raise ValueError(f"{self.label!r} does not exist at t={t}")
        return np.array([np.interp(t, self.times, self.velocities[:, i]) for i in range(2)])
