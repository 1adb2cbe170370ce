"""Asynchronous radar/lidar scenario simulator.

Two scenario analogs are provided: a mixed-range traffic picture around a
nearly stationary ego vessel (:func:`scenario_one`) and a close formation with
medium-range traffic that ducks in and out of the radar's stern blind sector
(:func:`scenario_two`).  :func:`simulate_stream` turns a scenario into a
time-ordered list of :class:`~ctxtrack.core.SensorScan` objects, each carrying
the context-aware :class:`~ctxtrack.context.DetectorContext` for its pose.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .context import (
    LidarContext,
    LidarContextConfig,
    RadarContext,
    RadarContextConfig,
    SensorPose,
    lidar_pd,
    radar_pd,
    relative_range_bearing,
    wrap_angle,
)
from .core import Detection, GroundTruthTrack, SensorScan

RADAR = "radar"
LIDAR = "lidar"
SCENARIOS = ("one", "two")


@dataclass(frozen=True)
class SensorSpec:
    sensor_id: str
    kind: str
    rate: float
    phase: float = 0.0
    noise_std: float = 1.0
    clutter_mean: float = 0.0
    # lidar: fraction of clutter segments smaller than the area threshold
    small_clutter_fraction: float = 0.8
    # radar: clutter density multiplier beyond the clutter knee
    far_clutter_boost: float = 3.0
    # true observability used for sampling detections
    lidar: LidarContextConfig = LidarContextConfig()
    radar: RadarContextConfig = RadarContextConfig()

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("sensor rate must be positive")
        if self.kind not in (RADAR, LIDAR):
            raise ValueError(f"unknown sensor kind {self.kind!r}")

    @property
    def meas_cov(self) -> np.ndarray:
        return np.eye(2) * self.noise_std ** 2

    def true_pd(self, pose: SensorPose, point) -> float:
        r, theta = relative_range_bearing(pose, point)
        if self.kind == LIDAR:
            return lidar_pd(r, self.lidar)
        return radar_pd(r, theta, self.radar)

    def scan_times(self, duration: float) -> np.ndarray:
        # half-open [phase, duration): 480 s at 0.8 Hz is 384 scans
        n = int(math.ceil((duration - self.phase) * self.rate - 1e-9))
        k = np.arange(max(n, 0))
        return self.phase + k / self.rate


# True radar detection rate for vessels and markers inside coverage.  The
# trackers' 0.4 is a conservative modelling assumption, not the sensor's rate.
TRUE_RADAR_PD = 0.85


def default_sensors() -> tuple[SensorSpec, ...]:
    return (
        SensorSpec(RADAR, RADAR, rate=0.8, phase=0.0, noise_std=10.0, clutter_mean=5.0,
                   radar=RadarContextConfig(pd_in=TRUE_RADAR_PD)),
        SensorSpec(LIDAR, LIDAR, rate=10.0, phase=0.03, noise_std=0.5, clutter_mean=3.0),
    )


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    ego: GroundTruthTrack
    ego_heading: np.ndarray
    targets: tuple[GroundTruthTrack, ...]
    statics: tuple[tuple[float, float], ...]
    sensors: tuple[SensorSpec, ...]
    seed: int
    statics_as_truth: bool = True

    def ego_pose(self, t: float) -> SensorPose:
        heading = np.interp(t, self.ego.times, np.unwrap(self.ego_heading))
        return SensorPose(self.ego.position_at(t), float(wrap_angle(heading)))

    @property
    def static_tracks(self) -> tuple[GroundTruthTrack, ...]:
        return tuple(
            GroundTruthTrack(f"static{i}", np.array([0.0, self.duration]), np.array([p, p]),
                             np.zeros((2, 2)))
            for i, p in enumerate(self.statics))

    @property
    def truth(self) -> tuple[GroundTruthTrack, ...]:
        """Objects counted by the evaluation."""
        return self.targets + (self.static_tracks if self.statics_as_truth else ())


def _track(label, times, xy) -> GroundTruthTrack:
    return GroundTruthTrack(label, times, np.column_stack(xy))


def _rotate(v: np.ndarray, heading: np.ndarray) -> np.ndarray:
    """Rotate ego-frame offsets (x forward, y to port) into the scenario frame."""
    c, s = np.cos(heading), np.sin(heading)
    return np.column_stack((c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1]))


def scenario_one(seed: int = 0, sensors: Sequence[SensorSpec] | None = None) -> Scenario:
    """Mixed-range traffic: two inbound vessels from ~1.5 km, one close loop, static markers."""
    rng = np.random.default_rng([seed, 1])
    duration = 480.0
    t = np.arange(0.0, duration + 1.0, 1.0)

    # ego drifts a few metres and yaws slightly around north
    ph = rng.uniform(0, 2 * np.pi, 2)
    ego_xy = (3.0 * np.sin(2 * np.pi * t / 400 + ph[0]), 2.0 * np.sin(2 * np.pi * t / 300 + ph[1]))
    ego = _track("ego", t, ego_xy)
    heading = np.pi / 2 + 0.05 * np.sin(2 * np.pi * t / 200 + ph[0])

    def inbound(label, bearing_deg, r0, r1, lateral):
        b = np.radians(bearing_deg + rng.uniform(-3, 3))
        u = np.array([np.cos(b), np.sin(b)])
        n = np.array([-u[1], u[0]])
        frac = t / duration
        r = r0 + (r1 - r0) * frac
        off = lateral * np.sin(np.pi * frac)
        xy = r[:, None] * u + off[:, None] * n
        return _track(label, t, (xy[:, 0], xy[:, 1]))

    a = inbound("vessel_a", 60.0, 1500.0 + rng.uniform(-30, 30), 300.0, 80.0)
    b = inbound("vessel_b", 150.0, 1450.0 + rng.uniform(-30, 30), 320.0, -60.0)

    # close loop: one full turn around the ego, closest approach ~30 m at mid-run
    ang0 = np.radians(rng.uniform(-20, 20))
    r_loop = 170.0 - 140.0 * np.sin(np.pi * t / duration)
    ang = ang0 + 2 * np.pi * t / duration
    loop = _track("loop", t, (r_loop * np.cos(ang), r_loop * np.sin(ang)))

    statics = ((25.0, 32.0), (-58.0, 35.0), (240.0, 380.0), (-520.0, 610.0), (830.0, 940.0))
    return Scenario("one", duration, ego, heading, (a, b, loop), statics,
                    _sensor_suite(sensors), seed)


def scenario_two(seed: int = 0, sensors: Sequence[SensorSpec] | None = None) -> Scenario:
    """Close formation with a companion at ~30 m and medium-range traffic crossing astern."""
    rng = np.random.default_rng([seed, 2])
    duration = 360.0
    t = np.arange(0.0, duration + 1.0, 1.0)

    speed = 3.0
    heading = np.pi / 2 + 0.6 * np.sin(np.pi * t / duration) + rng.uniform(-0.05, 0.05)
    vel = speed * np.column_stack((np.cos(heading), np.sin(heading)))
    ego_xy = np.vstack([np.zeros(2), np.cumsum(0.5 * (vel[1:] + vel[:-1]) * np.diff(t)[:, None], axis=0)])
    ego = GroundTruthTrack("ego", t, ego_xy)

    def ego_relative(label, offsets):
        return GroundTruthTrack(label, t, ego_xy + _rotate(offsets, heading))

    ph = rng.uniform(0, 2 * np.pi, 3)
    companion_off = np.column_stack((3.0 * np.sin(2 * np.pi * t / 90 + ph[0]),
                                     -30.0 + 2.5 * np.sin(2 * np.pi * t / 70 + ph[1])))
    companion = ego_relative("companion", companion_off)

    # weaves back and forth across the stern blind sector at ~300 m
    rel_b = np.pi + 0.9 * np.sin(2 * np.pi * t / 120 + ph[2])
    rel_r = 300.0 + 40.0 * np.sin(2 * np.pi * t / 150)
    astern = ego_relative("astern", np.column_stack((rel_r * np.cos(rel_b), rel_r * np.sin(rel_b))))

    # crossing traffic ahead, with a turn
    x0 = ego_xy[0] + np.array([-600.0, 500.0 + rng.uniform(-20, 20)])
    cross_v = np.column_stack((4.0 * np.cos(0.4 * np.sin(np.pi * t / duration)),
                               1.5 * np.sin(2 * np.pi * t / duration)))
    cross_xy = x0 + np.vstack([np.zeros(2), np.cumsum(cross_v[1:] * np.diff(t)[:, None], axis=0)])
    crossing = GroundTruthTrack("crossing", t, cross_xy)

    # overtaking vessel on the port side at medium range
    over_off = np.column_stack((-200.0 + 1.2 * t, 120.0 + 30.0 * np.sin(2 * np.pi * t / 200)))
    overtaker = ego_relative("overtaker", over_off)

    end = ego_xy[-1]
    statics = ((ego_xy[60, 0] + 45.0, ego_xy[60, 1] + 10.0),
               (ego_xy[200, 0] - 60.0, ego_xy[200, 1] + 20.0),
               (end[0] + 400.0, end[1] + 300.0))
    return Scenario("two", duration, ego, heading, (companion, astern, crossing, overtaker),
                    statics, _sensor_suite(sensors), seed)


def _sensor_suite(sensors) -> tuple[SensorSpec, ...]:
    return tuple(sensors) if sensors is not None else default_sensors()


def make_scenario(name: str, seed: int) -> Scenario:
    if name == "one":
        return scenario_one(seed)
    if name == "two":
        return scenario_two(seed)
    raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def _sample_annulus_r(rng, r_lo, r_hi):
    return math.sqrt(rng.uniform(r_lo ** 2, r_hi ** 2))


def _radar_clutter(rng, spec: SensorSpec, pose: SensorPose) -> list[np.ndarray]:
    cfg = spec.radar
    count = rng.poisson(spec.clutter_mean)
    near = cfg.r_clutter_knee ** 2 - cfg.r_min ** 2
    far = (cfg.r_max ** 2 - cfg.r_clutter_knee ** 2) * spec.far_clutter_boost
    p_far = far / (near + far)
    open_width = 2 * math.pi - 2 * cfg.blind_half_width
    points = []
    for _ in range(count):
        if rng.random() < p_far:
            r = _sample_annulus_r(rng, cfg.r_clutter_knee, cfg.r_max)
        else:
            r = _sample_annulus_r(rng, cfg.r_min, cfg.r_clutter_knee)
        # relative bearing uniform over the sector outside the blind wedge
        theta = cfg.blind_center + cfg.blind_half_width + rng.random() * open_width
        b = pose.heading + theta
        points.append(pose.position + r * np.array([math.cos(b), math.sin(b)]))
    return points


def _lidar_clutter(rng, spec: SensorSpec, pose: SensorPose) -> list[tuple[np.ndarray, float]]:
    cfg = spec.lidar
    out = []
    for _ in range(rng.poisson(spec.clutter_mean)):
        r = _sample_annulus_r(rng, 0.0, cfg.r_max)
        b = rng.uniform(-math.pi, math.pi)
        out.append((pose.position + r * np.array([math.cos(b), math.sin(b)]), _clutter_area(rng, spec)))
    return out


def _clutter_area(rng, spec: SensorSpec) -> float:
    if rng.random() < spec.small_clutter_fraction:
        return rng.uniform(1.0, spec.lidar.area_threshold)
    return rng.uniform(spec.lidar.area_threshold, 30.0)


def simulate_stream(scenario: Scenario) -> list[SensorScan]:
    """All sensors' scans for ``scenario``, merged in time order (radar first on ties)."""
    objects = scenario.targets + scenario.static_tracks
    scans = []
    for index, spec in enumerate(scenario.sensors):
        rng = np.random.default_rng([scenario.seed, 1000 + index])
        cov = spec.meas_cov
        chol = np.linalg.cholesky(cov) if np.any(cov) else np.zeros((2, 2))
        for t in spec.scan_times(scenario.duration):
            t = float(t)
            pose = scenario.ego_pose(t)
            detections = []
            for obj in objects:
                if not obj.alive(t):
                    continue
                truth = obj.position_at(t)
                if rng.random() >= spec.true_pd(pose, truth):
                    continue
                pos = truth + chol @ rng.standard_normal(2)
                area = rng.uniform(20.0, 100.0) if spec.kind == LIDAR else None
                detections.append(Detection(pos, cov, spec.sensor_id, area))
            if spec.kind == RADAR:
                detections += [Detection(p, cov, spec.sensor_id) for p in _radar_clutter(rng, spec, pose)]
            else:
                detections += [Detection(p, cov, spec.sensor_id, a)
                               for p, a in _lidar_clutter(rng, spec, pose)]
            # trackers see the nominal models, not the simulator's truth
            context = RadarContext(pose) if spec.kind == RADAR else LidarContext(pose)
            scans.append(SensorScan(spec.sensor_id, t, detections, context, pose, spec.kind))
    kind_order = {RADAR: 0, LIDAR: 1}
    scans.sort(key=lambda s: (s.timestamp, kind_order[s.kind], s.sensor_id))
    return scans


# --- serialisation -----------------------------------------------------------

STREAM_FORMAT = "ctxtrack-stream/1"
TRUTH_FORMAT = "ctxtrack-truth/1"


class StreamFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def scan_to_record(scan: SensorScan) -> dict:
    dets = []
    for d in scan.detections:
        rec = {"p": [float(v) for v in d.position], "cov": [float(v) for v in d.covariance.ravel()]}
        if d.extent_area is not None:
            rec["area"] = float(d.extent_area)
        dets.append(rec)
    pose = scan.pose
    return {
        "sensor_id": scan.sensor_id,
        "kind": scan.kind,
        "t": float(scan.timestamp),
        "pose": None if pose is None else [float(pose.position[0]), float(pose.position[1]), float(pose.heading)],
        "detections": dets,
    }


def record_to_scan(rec: dict, contexts=None) -> SensorScan:
    pose = None if rec.get("pose") is None else SensorPose(rec["pose"][:2], rec["pose"][2])
    sensor_id = rec["sensor_id"]
    dets = tuple(
        Detection(np.array(d["p"], dtype=float), np.array(d["cov"], dtype=float).reshape(2, 2),
                  sensor_id, d.get("area"))
        for d in rec["detections"])
    kind = rec.get("kind", "")
    context = None
    if pose is not None and kind == RADAR:
        context = RadarContext(pose)
    elif pose is not None and kind == LIDAR:
        context = LidarContext(pose)
    return SensorScan(sensor_id, float(rec["t"]), dets, context, pose, kind)


def dumps_stream(scans: Iterable[SensorScan], meta: dict | None = None) -> str:
    lines = [json.dumps({"format": STREAM_FORMAT, **(meta or {})}, sort_keys=True)]
    lines += [json.dumps(scan_to_record(s), sort_keys=True) for s in scans]
    return "\n".join(lines) + "\n"


def write_stream(path, scans: Iterable[SensorScan], meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_stream(scans, meta))


def iter_stream(lines: Iterable[str]) -> Iterator[tuple[int, dict]]:
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamFormatError(lineno, f"not valid JSON ({exc.msg})") from None


def loads_stream(text: str) -> tuple[dict, list[SensorScan]]:
    meta: dict = {}
    scans = []
    for lineno, rec in iter_stream(text.splitlines()):
        if "format" in rec:
            if rec["format"] != STREAM_FORMAT:
                raise StreamFormatError(lineno, f"unsupported format {rec['format']!r}")
            meta = rec
            continue
        try:
            scans.append(record_to_scan(rec))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise StreamFormatError(lineno, f"malformed scan record ({exc})") from None
    return meta, scans


def read_stream(path) -> tuple[dict, list[SensorScan]]:
    with open(path, encoding="utf-8") as fh:
        return loads_stream(fh.read())


def dumps_truth(scenario: Scenario) -> str:
    lines = [json.dumps({"format": TRUTH_FORMAT, "scenario": scenario.name, "seed": scenario.seed,
                         "duration": scenario.duration}, sort_keys=True)]
    for trk in scenario.truth:
        lines.append(json.dumps({
            "label": str(trk.label),
            "t": [float(v) for v in trk.times],
            "p": [[float(x), float(y)] for x, y in trk.positions],
            "v": [[float(x), float(y)] for x, y in trk.velocities],
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_truth(path, scenario: Scenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_truth(scenario))


def read_truth(path) -> tuple[dict, list[GroundTruthTrack]]:
    meta: dict = {}
    tracks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, rec in iter_stream(fh):
            if "format" in rec:
                meta = rec
                continue
            try:
                tracks.append(GroundTruthTrack(rec["label"], np.array(rec["t"]),
                                               np.array(rec["p"]), np.array(rec["v"])))
            except (KeyError, ValueError) as exc:
                raise StreamFormatError(lineno, f"malformed truth record ({exc})") from None
    return meta, tracks
