"""Variant wiring, tracker runs, evaluation and the multi-seed comparison.

Every GM-PHD variant runs the same :class:`~ctxtrack.gmphd.GmphdTracker`; the
variants differ only in which :class:`~ctxtrack.context.DetectorContext` each
scan carries (and radar-only drops the lidar scans).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .context import (
    CLUTTER_FRAMES,
    CompositeContext,
    LidarContext,
    LidarContextConfig,
    RadarContext,
    RadarContextConfig,
    UniformContext,
    UniformContextConfig,
)
from .core import GroundTruthTrack, SensorScan, StateEstimate, Track
from .gmphd import GmphdConfig, GmphdTracker
from .jpda import JpdaConfig, JpdaTracker
from .metrics import (
    GospaConfig,
    HotaConfig,
    HotaCounts,
    build_frames,
    gospa_rms,
    gospa_series,
    hota_counts,
)
from .models import CvModelConfig
from .sim import LIDAR, RADAR, iter_stream, make_scenario, simulate_stream

log = logging.getLogger(__name__)

VARIANTS = ("jpda", "gmphd-uniform", "gmphd-radar-only", "gmphd-pd-aware", "gmphd-context-aware")
TRACKS_FORMAT = "ctxtrack-tracks/1"


@dataclass(frozen=True)
class RunConfig:
    motion: CvModelConfig = CvModelConfig()
    gmphd: GmphdConfig = GmphdConfig()
    jpda: JpdaConfig = JpdaConfig()
    uniform: UniformContextConfig = UniformContextConfig()
    lidar: LidarContextConfig = LidarContextConfig()
    radar: RadarContextConfig = RadarContextConfig()
    gospa: GospaConfig = GospaConfig()
    hota: HotaConfig = HotaConfig()
    clutter_frame: str = "range_bearing"

    def __post_init__(self):
        if self.clutter_frame not in CLUTTER_FRAMES:
            raise ValueError(f"clutter_frame must be one of {CLUTTER_FRAMES}")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if hasattr(value, "__dataclass_fields__"):
                out[f.name] = {g.name: _plain(getattr(value, g.name)) for g in fields(value)}
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        cfg = cls()
        data = data or {}
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown configuration sections: {', '.join(sorted(unknown))}")
        updates = {}
        for name, value in data.items():
            current = getattr(cfg, name)
            if hasattr(current, "__dataclass_fields__"):
                known = {g.name for g in fields(current)}
                bad = set(value or {}) - known
                if bad:
                    raise ValueError(f"unknown keys in [{name}]: {', '.join(sorted(bad))}")
                value = {k: tuple(v) if isinstance(v, list) else v for k, v in (value or {}).items()}
                updates[name] = replace(current, **value)
            else:
                updates[name] = value
        return replace(cfg, **updates)


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        return RunConfig.from_dict(yaml.safe_load(fh))


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


# --- wiring --------------------------------------------------------------------

def context_for(scan: SensorScan, variant: str, config: RunConfig):
    frame = config.clutter_frame
    uniform = UniformContext(config.uniform, scan.pose, frame)
    if variant in ("gmphd-uniform", "gmphd-radar-only"):
        return uniform
    if scan.kind == RADAR:
        aware = RadarContext(scan.pose, config.radar, frame)
    elif scan.kind == LIDAR:
        aware = LidarContext(scan.pose, config.lidar, frame)
    else:
        raise ValueError(f"scan from {scan.sensor_id!r} has unknown sensor kind {scan.kind!r}")
    if variant == "gmphd-pd-aware":
        return CompositeContext(aware, uniform)
    if variant == "gmphd-context-aware":
        return aware
    raise ValueError(f"unknown variant {variant!r}")


def wire(scans: Iterable[SensorScan], variant: str, config: RunConfig) -> list[SensorScan]:
    """Attach the variant's contexts; radar-only also drops every non-radar scan."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    scans = list(scans)
    if variant == "gmphd-radar-only":
        scans = [s for s in scans if s.kind == RADAR]
    if variant == "jpda":
        return scans
    return [replace(s, context=context_for(s, variant, config)) for s in scans]


def run_tracker(scans: Sequence[SensorScan], variant: str, config: RunConfig):
    """Per-scan tracker output ``[(scan, [(label, state), ...]), ...]``."""
    wired = wire(scans, variant, config)
    if variant == "jpda":
        jpda_cfg = replace(config.jpda, clutter_frame=config.clutter_frame)
        tracker = JpdaTracker(jpda_cfg, config.motion)
    else:
        tracker = GmphdTracker(config.gmphd, config.motion)
    return [(scan, tracker.step(scan)) for scan in wired]


# --- tracks file ---------------------------------------------------------------

def dumps_tracks(outputs, meta: dict | None = None) -> str:
    lines = [json.dumps({"format": TRACKS_FORMAT, **(meta or {})}, sort_keys=True)]
    for scan, estimates in outputs:
        lines.append(json.dumps({
            "t": float(scan.timestamp),
            "sensor_id": scan.sensor_id,
            "kind": scan.kind,
            "estimates": [{"label": int(label), "mean": [float(v) for v in st.mean],
                           "cov": [float(v) for v in st.covariance.ravel()]}
                          for label, st in estimates],
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ScanOutput:
    timestamp: float
    sensor_id: str
    kind: str
    estimates: tuple


def read_tracks(path) -> tuple[dict, list[ScanOutput]]:
    from .sim import StreamFormatError

    meta: dict = {}
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, rec in iter_stream(fh):
            if "format" in rec:
                if rec["format"] != TRACKS_FORMAT:
                    raise StreamFormatError(lineno, f"unsupported format {rec['format']!r}")
                meta = rec
                continue
            try:
                ests = tuple((e["label"], StateEstimate(e["mean"], np.reshape(e["cov"], (4, 4))))
                             for e in rec["estimates"])
                out.append(ScanOutput(float(rec["t"]), rec["sensor_id"], rec["kind"], ests))
            except (KeyError, TypeError, ValueError) as exc:
                raise StreamFormatError(lineno, f"malformed track record ({exc})") from None
    return meta, out


def tracks_from_outputs(outputs: Sequence[ScanOutput], kind: str | None = RADAR) -> list[Track]:
    """Tracks built from the outputs of scans of one sensor kind (all scans if ``kind`` is None)."""
    points: dict[int, dict[float, StateEstimate]] = {}
    for rec in outputs:
        if kind is not None and rec.kind != kind:
            continue
        for label, state in rec.estimates:
            points.setdefault(label, {}).setdefault(rec.timestamp, state)
    return [Track(label, tuple(sorted(pts.items()))) for label, pts in sorted(points.items())]


# --- evaluation ----------------------------------------------------------------

class TimestampMismatch(ValueError):
    pass


@dataclass
class SequenceMetrics:
    """Per-sequence sufficient statistics; combine by pooling."""

    hota: HotaCounts
    gospa_totals: list
    gospa_terms: np.ndarray   # summed (localization, missed, false)

    @property
    def n_steps(self) -> int:
        return len(self.gospa_totals)


def evaluate_sequence(truth: Sequence[GroundTruthTrack], outputs: Sequence[ScanOutput],
                      radar_times: Sequence[float], config: RunConfig) -> SequenceMetrics:
    """Metrics at radar timestamps from the tracker's radar-scan outputs."""
    out_times = [o.timestamp for o in outputs if o.kind == RADAR]
    if len(out_times) != len(radar_times) or not np.allclose(out_times, radar_times, rtol=0, atol=1e-9):
        raise TimestampMismatch(
            f"tracks file has {len(out_times)} radar outputs but the stream has {len(radar_times)} radar scans "
            "(or their timestamps differ)")
    tracks = tracks_from_outputs(outputs, RADAR)
    frames = build_frames(truth, tracks, radar_times)
    series = gospa_series(frames, config.gospa)
    terms = np.array([[g.localization, g.missed, g.false] for g in series]).sum(axis=0) if series else np.zeros(3)
    return SequenceMetrics(hota_counts(frames, config.hota), [g.total for g in series], terms)


def summarize(parts: Sequence[SequenceMetrics]) -> dict:
    """HOTA (%) from pooled counts and GOSPA RMS over all pooled timesteps."""
    counts = HotaCounts.zeros(len(parts[0].hota.tp))
    totals: list = []
    terms = np.zeros(3)
    for p in parts:
        counts = counts + p.hota
        totals += list(p.gospa_totals)
        terms = terms + p.gospa_terms
    n = max(1, len(totals))
    return {
        "hota": 100.0 * float(np.mean(counts.hota_per_threshold)),
        "deta": 100.0 * float(np.mean(counts.det_a)),
        "assa": 100.0 * float(np.mean(counts.ass_a)),
        "gospa_rms": gospa_rms(totals) if totals else 0.0,
        "gospa_localization": float(terms[0] / n),
        "gospa_missed": float(terms[1] / n),
        "gospa_false": float(terms[2] / n),
        "steps": len(totals),
    }


# --- one full run ----------------------------------------------------------------

def simulate(scenario: str, seed: int):
    sc = make_scenario(scenario, seed)
    return sc, simulate_stream(sc)


def run_one(scenario: str, seed: int, variant: str, config: RunConfig,
            scans: Sequence[SensorScan] | None = None, truth=None) -> SequenceMetrics:
    if scans is None or truth is None:
        sc, scans = simulate(scenario, seed)
        truth = sc.truth
    outputs = run_tracker(scans, variant, config)
    recs = [ScanOutput(s.timestamp, s.sensor_id, s.kind, tuple(e)) for s, e in outputs]
    radar_times = [s.timestamp for s in scans if s.kind == RADAR]
    return evaluate_sequence(truth, recs, radar_times, config)


def _cache_key(scenario: str, seed: int, variant: str, config: RunConfig) -> str:
    import hashlib

    digest = hashlib.sha256(dump_config(config).encode()).hexdigest()[:12]
    return f"{scenario}-s{seed}-{variant}-{digest}.json"


def _metrics_to_json(m: SequenceMetrics) -> dict:
    return {"tp": m.hota.tp.tolist(), "fn": m.hota.fn.tolist(), "fp": m.hota.fp.tolist(),
            "ass_sum": m.hota.ass_sum.tolist(), "gospa": list(map(float, m.gospa_totals)),
            "terms": m.gospa_terms.tolist()}


def _metrics_from_json(d: dict) -> SequenceMetrics:
    counts = HotaCounts(*(np.array(d[k]) for k in ("tp", "fn", "fp", "ass_sum")))
    return SequenceMetrics(counts, d["gospa"], np.array(d["terms"]))


def _compare_task(args):
    scenario, seed, variants, config, cache_dir = args
    results = {}
    pending = []
    for v in variants:
        path = Path(cache_dir) / _cache_key(scenario, seed, v, config) if cache_dir else None
        if path is not None and path.exists():
            results[v] = _metrics_from_json(json.loads(path.read_text()))
        else:
            pending.append((v, path))
    if pending:
        sc, scans = simulate(scenario, seed)
        for v, path in pending:
            m = run_one(scenario, seed, v, config, scans, sc.truth)
            results[v] = m
            if path is not None:
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps(_metrics_to_json(m)))
                tmp.replace(path)
    return scenario, seed, results


def compare(seeds: Sequence[int], scenarios: Sequence[str] = ("one", "two"),
            variants: Sequence[str] = VARIANTS, config: RunConfig = RunConfig(),
            jobs: int = 1, cache_dir: str | os.PathLike | None = None) -> dict:
    """Run every (variant, scenario, seed) and aggregate over seeds.

    Returns ``{variant: {column: {"mean", "std", "values"}}}`` where columns
    are ``combined``, and one per scenario, each with HOTA and GOSPA.
    """
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(sc, seed, tuple(variants), config, cache_dir) for sc in scenarios for seed in seeds]
    if jobs > 1:
        from joblib import Parallel, delayed

        done = Parallel(n_jobs=jobs)(delayed(_compare_task)(t) for t in tasks)
    else:
        done = [_compare_task(t) for t in tasks]
    per: dict = {(sc, seed): res for sc, seed, res in done}

    table: dict = {}
    for v in variants:
        cols: dict[str, dict[str, list]] = {}
        for seed in seeds:
            parts = [per[(sc, seed)][v] for sc in scenarios]
            entries = {"combined": summarize(parts)}
            for sc, part in zip(scenarios, parts):
                entries[sc] = summarize([part])
            for col, summary in entries.items():
                for metric in ("hota", "gospa_rms"):
                    cols.setdefault(col, {}).setdefault(metric, []).append(summary[metric])
        table[v] = {col: {metric: {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "values": vals}
                          for metric, vals in metrics.items()}
                    for col, metrics in cols.items()}
    return table


def format_table(table: dict, scenarios: Sequence[str] = ("one", "two")) -> str:
    cols = ["combined"] + [c for c in scenarios]
    names = {"combined": "Combined", "one": "Scenario 1", "two": "Scenario 2"}
    head1 = f"{'Method':<22}" + "".join(f"{names.get(c, c):^30}" for c in cols)
    head2 = f"{'':<22}" + "".join(f"{'HOTA (%)':>15}{'GOSPA':>15}" for _ in cols)
    lines = [head1, head2, "-" * len(head2)]
    for v in VARIANTS:
        if v not in table:
            continue
        row = f"{v:<22}"
        for c in cols:
            h = table[v][c]["hota"]
            g = table[v][c]["gospa_rms"]
            row += f"{h['mean']:>8.1f} ±{h['std']:>5.1f}{g['mean']:>8.1f} ±{g['std']:>5.1f}"
        lines.append(row)
    return "\n".join(lines)
