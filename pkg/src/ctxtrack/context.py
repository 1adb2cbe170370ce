"""Per-scan observability: detection probability and clutter intensity.

A :class:`DetectorContext` is attached to each :class:`~ctxtrack.core.SensorScan`
and answers two questions for the tracker during hypothesis formation:

* ``detection_probability(state)`` -- how likely this sensor is to see a target
  at the state's (mean) position during this scan;
* ``clutter_intensity(detection)`` -- the false-alarm density at a detection,
  in m^-2 of the Cartesian measurement space.

The observability models themselves (``lidar_pd``, ``lidar_clutter``,
``radar_pd``, ``radar_clutter``) return the tabulated values verbatim.  Those
clutter values are intensities per range-bearing cell (m^-1 rad^-1, the
sensors' native measurement space); contexts convert them to a Cartesian
density by dividing by range (the polar area Jacobian) unless configured with
``clutter_frame="cartesian"``, in which case they are used as m^-2 directly.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Detection, StateEstimate

RANGE_BEARING = "range_bearing"
CARTESIAN = "cartesian"
CLUTTER_FRAMES = (RANGE_BEARING, CARTESIAN)

# Range floor for the polar Jacobian; keeps the density finite at the sensor.
MIN_JACOBIAN_RANGE = 1.0


def wrap_angle(angle):
    """Map angles to (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


@dataclass(frozen=True)
class SensorPose:
    position: np.ndarray
    heading: float = 0.0

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(2)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "heading", wrap_angle(self.heading))


def relative_range_bearing(pose: SensorPose, point) -> tuple[float, float]:
    """Range and bearing of ``point`` in the sensor frame (0 = dead ahead, CCW positive)."""
    r, theta = relative_range_bearing_many(pose, np.asarray(point, dtype=float).reshape(1, 2))
    return float(r[0]), float(theta[0])


def relative_range_bearing_many(pose: SensorPose, points: np.ndarray):
    d = np.asarray(points, dtype=float).reshape(-1, 2) - pose.position
    r = np.hypot(d[:, 0], d[:, 1])
    theta = np.where(r > 0, wrap_angle(np.arctan2(d[:, 1], d[:, 0]) - pose.heading), 0.0)
    return r, theta


@dataclass(frozen=True)
class LidarContextConfig:
    r_reliable: float = 50.0
    r_max: float = 80.0
    pd_reliable: float = 0.95
    pd_degraded: float = 0.2
    area_threshold: float = 10.0
    lambda_small: float = 1e-1
    lambda_large: float = 1e-3

    def __post_init__(self):
        if not 0 < self.r_reliable < self.r_max:
            raise ValueError("need 0 < r_reliable < r_max")
        for p in (self.pd_reliable, self.pd_degraded):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class RadarContextConfig:
    r_min: float = 50.0
    r_max: float = 1612.0
    pd_in: float = 0.4
    blind_center: float = math.pi
    blind_half_width: float = math.radians(32.5)
    r_clutter_knee: float = 1000.0
    lambda_near: float = 1e-3
    lambda_far: float = 1e-2

    def __post_init__(self):
        if not self.r_min < self.r_clutter_knee < self.r_max:
            raise ValueError("need r_min < r_clutter_knee < r_max")
        if not 0 < self.blind_half_width < math.pi:
            raise ValueError("blind_half_width must lie in (0, pi)")


@dataclass(frozen=True)
class UniformContextConfig:
    pd: float = 0.4
    lam: float = 1e-3

    def __post_init__(self):
        if not 0 <= self.pd <= 1:
            raise ValueError("pd must lie in [0, 1]")


def lidar_pd(r, config: LidarContextConfig = LidarContextConfig()):
    r = np.asarray(r, dtype=float)
    out = np.where(r < config.r_reliable, config.pd_reliable,
                   np.where(r < config.r_max, config.pd_degraded, 0.0))
    # r == 0 is outside the first band as written (0 < r < r_reliable).
    out = np.where(r <= 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def lidar_clutter(detection: Detection, config: LidarContextConfig = LidarContextConfig()) -> float:
    if detection.extent_area is None:
        raise ValueError("lidar detections must carry extent_area")
    return config.lambda_small if detection.extent_area < config.area_threshold else config.lambda_large


def radar_pd(r, theta_rel, config: RadarContextConfig = RadarContextConfig()):
    r = np.asarray(r, dtype=float)
    offset = np.abs(wrap_angle(np.asarray(theta_rel, dtype=float) - config.blind_center))
    covered = (r > config.r_min) & (r < config.r_max) & (offset >= config.blind_half_width)
    out = np.where(covered, config.pd_in, 0.0)
    return float(out) if out.ndim == 0 else out


def radar_clutter_at_range(r, config: RadarContextConfig = RadarContextConfig()):
    r = np.asarray(r, dtype=float)
    out = np.where(r < config.r_clutter_knee, config.lambda_near, config.lambda_far)
    return float(out) if out.ndim == 0 else out


def radar_clutter(detection: Detection, pose: SensorPose,
                  config: RadarContextConfig = RadarContextConfig()) -> float:
    r, _ = relative_range_bearing(pose, detection.position)
    return radar_clutter_at_range(r, config)


class DetectorContext(abc.ABC):
    """Observability of one sensor during one scan.

    Subclasses implement the batched ``pd_at`` and ``clutter_at``; the scalar
    queries are thin wrappers over them.  Both must be pure.
    """

    @abc.abstractmethod
    def pd_at(self, positions: np.ndarray) -> np.ndarray:
        """Detection probability at each row of an ``(N, 2)`` position array."""

    @abc.abstractmethod
    def clutter_at(self, detections: Sequence[Detection]) -> np.ndarray:
        """Cartesian clutter density (m^-2) at each detection."""

    def detection_probability(self, state: StateEstimate) -> float:
        return float(self.pd_at(state.position.reshape(1, 2))[0])

    def clutter_intensity(self, detection: Detection) -> float:
        return float(self.clutter_at([detection])[0])


def _to_cartesian(native: np.ndarray, positions: np.ndarray, pose, frame: str) -> np.ndarray:
    if frame == CARTESIAN:
        return native
    if pose is None:
        raise ValueError("range-bearing clutter conversion needs a sensor pose")
    r, _ = relative_range_bearing_many(pose, positions)
    return native / np.maximum(r, MIN_JACOBIAN_RANGE)


def _positions(detections: Sequence[Detection]) -> np.ndarray:
    if not detections:
        return np.zeros((0, 2))
    return np.array([d.position for d in detections])


@dataclass(frozen=True)
class UniformContext(DetectorContext):
    """Globally constant P_D and clutter intensity."""

    config: UniformContextConfig = UniformContextConfig()
    pose: SensorPose | None = None
    clutter_frame: str = RANGE_BEARING

    def pd_at(self, positions):
        return np.full(len(positions), self.config.pd)

    def clutter_at(self, detections):
        native = np.full(len(detections), self.config.lam)
        return _to_cartesian(native, _positions(detections), self.pose, self.clutter_frame)


@dataclass(frozen=True)
class LidarContext(DetectorContext):
    pose: SensorPose
    config: LidarContextConfig = LidarContextConfig()
    clutter_frame: str = RANGE_BEARING

    def pd_at(self, positions):
        r, _ = relative_range_bearing_many(self.pose, positions)
        return np.atleast_1d(lidar_pd(r, self.config))

    def clutter_at(self, detections):
        native = np.array([lidar_clutter(d, self.config) for d in detections], dtype=float)
        return _to_cartesian(native, _positions(detections), self.pose, self.clutter_frame)


@dataclass(frozen=True)
class RadarContext(DetectorContext):
    pose: SensorPose
    config: RadarContextConfig = RadarContextConfig()
    clutter_frame: str = RANGE_BEARING

    def pd_at(self, positions):
        r, theta = relative_range_bearing_many(self.pose, positions)
        return np.atleast_1d(radar_pd(r, theta, self.config))

    def clutter_at(self, detections):
        positions = _positions(detections)
        r, _ = relative_range_bearing_many(self.pose, positions)
        native = np.atleast_1d(radar_clutter_at_range(r, self.config))
        return _to_cartesian(native, positions, self.pose, self.clutter_frame)


@dataclass(frozen=True)
class CompositeContext(DetectorContext):
    """P_D from one context, clutter from another (e.g. state-dependent P_D, constant clutter)."""

    pd_source: DetectorContext
    clutter_source: DetectorContext

    def pd_at(self, positions):
        return self.pd_source.pd_at(positions)

    def clutter_at(self, detections):
        return self.clutter_source.clutter_at(detections)


def detection_probability(context: DetectorContext, state: StateEstimate) -> float:
    return context.detection_probability(state)


def clutter_intensity(context: DetectorContext, detection: Detection) -> float:
    return context.clutter_intensity(detection)
