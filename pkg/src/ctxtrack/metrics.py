"""GOSPA and HOTA for point targets, evaluated at radar timestamps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import GroundTruthTrack, Track

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class GospaConfig:
    c: float = 30.0
    p: float = 2.0
    alpha: float = 2.0

    def __post_init__(self):
        if not (self.c > 0 and self.p >= 1 and 0 < self.alpha <= 2):
            raise ValueError("need c > 0, p >= 1 and 0 < alpha <= 2")


class GospaResult(NamedTuple):
    """``total`` is the GOSPA distance; the other three are its p-th power terms."""

    total: float
    localization: float
    missed: float
    false: float


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    return arr.reshape(-1, 2) if arr.size else np.zeros((0, 2))


def gospa(truth, estimates, config: GospaConfig = GospaConfig()) -> GospaResult:
    """GOSPA between two finite point sets.

    Only alpha = 2 admits the missed/false decomposition; other alphas raise.
    """
    if config.alpha != 2:
        raise NotImplementedError("only alpha=2 is supported")
    x, y = _as_points(truth), _as_points(estimates)
    c_p = config.c ** config.p
    n, m = len(x), len(y)
    loc = 0.0
    n_assigned = 0
    if n and m:
        d = np.linalg.norm(x[:, None] - y[None], axis=2)
        cost = np.minimum(d, config.c) ** config.p
        rows, cols = linear_sum_assignment(cost)
        real = d[rows, cols] < config.c
        loc = float(np.sum(cost[rows, cols][real]))
        n_assigned = int(np.count_nonzero(real))
    missed = c_p / 2 * (n - n_assigned)
    false = c_p / 2 * (m - n_assigned)
    total = (loc + missed + false) ** (1.0 / config.p)
    return GospaResult(total, loc, missed, false)


def gospa_rms(totals: Sequence[float]) -> float:
    totals = np.asarray(totals, dtype=float)
    if totals.size == 0:
        raise ValueError("GOSPA RMS of an empty series is undefined")
    return float(np.sqrt(np.mean(totals ** 2)))


@dataclass(frozen=True)
class HotaConfig:
    full_similarity: float = 5.0
    zero_similarity: float = 30.0
    thresholds: tuple = tuple(np.round(np.arange(0.05, 0.99, 0.05), 2))

    def __post_init__(self):
        if not 0 < self.full_similarity < self.zero_similarity:
            raise ValueError("need 0 < full_similarity < zero_similarity")


def similarity(d, config: HotaConfig = HotaConfig()):
    """1 up to the full-similarity distance, linear down to 0 at the zero-similarity distance."""
    d = np.asarray(d, dtype=float)
    span = config.zero_similarity - config.full_similarity
    out = np.clip((config.zero_similarity - d) / span, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


class Frame(NamedTuple):
    gt_ids: list
    gt_pos: np.ndarray
    tr_ids: list
    tr_pos: np.ndarray


@dataclass
class HotaCounts:
    """Per-threshold totals that pool across sequences."""

    tp: np.ndarray
    fn: np.ndarray
    fp: np.ndarray
    ass_sum: np.ndarray

    @classmethod
    def zeros(cls, k: int):
        return cls(np.zeros(k), np.zeros(k), np.zeros(k), np.zeros(k))

    def __add__(self, other: "HotaCounts") -> "HotaCounts":
        return HotaCounts(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp,
                          self.ass_sum + other.ass_sum)

    @property
    def det_a(self) -> np.ndarray:
        return self.tp / np.maximum(1.0, self.tp + self.fn + self.fp)

    @property
    def ass_a(self) -> np.ndarray:
        return self.ass_sum / np.maximum(1.0, self.tp)

    @property
    def hota_per_threshold(self) -> np.ndarray:
        return np.sqrt(self.det_a * self.ass_a)


class HotaResult(NamedTuple):
    hota: float
    det_a: float
    ass_a: float
    counts: HotaCounts


def _result(counts: HotaCounts) -> HotaResult:
    return HotaResult(float(np.mean(counts.hota_per_threshold)), float(np.mean(counts.det_a)),
                      float(np.mean(counts.ass_a)), counts)


def hota_counts(frames: Sequence[Frame], config: HotaConfig = HotaConfig()) -> HotaCounts:
    """HOTA sufficient statistics for one sequence.

    Matching per frame maximises similarity weighted by the global alignment
    score of each (truth id, track id) pair, as in the HOTA reference
    implementation, then keeps only pairs at or above each threshold.
    """
    alphas = np.asarray(config.thresholds, dtype=float)
    k = len(alphas)
    counts = HotaCounts.zeros(k)
    gt_index = {g: i for i, g in enumerate(sorted({g for f in frames for g in f.gt_ids}, key=str))}
    tr_index = {t: i for i, t in enumerate(sorted({t for f in frames for t in f.tr_ids}, key=str))}
    n_gt_dets = sum(len(f.gt_ids) for f in frames)
    n_tr_dets = sum(len(f.tr_ids) for f in frames)
    if n_tr_dets == 0:
        counts.fn[:] = n_gt_dets
        return counts
    if n_gt_dets == 0:
        counts.fp[:] = n_tr_dets
        return counts

    sims = []
    potential = np.zeros((len(gt_index), len(tr_index)))
    gt_count = np.zeros((len(gt_index), 1))
    tr_count = np.zeros((1, len(tr_index)))
    for f in frames:
        gi = np.array([gt_index[g] for g in f.gt_ids], dtype=int)
        ti = np.array([tr_index[t] for t in f.tr_ids], dtype=int)
        if len(gi) and len(ti):
            d = np.linalg.norm(_as_points(f.gt_pos)[:, None] - _as_points(f.tr_pos)[None], axis=2)
            sim = similarity(d, config).reshape(len(gi), len(ti))
            denom = sim.sum(0)[None, :] + sim.sum(1)[:, None] - sim
            iou = np.zeros_like(sim)
            mask = denom > EPS
            iou[mask] = sim[mask] / denom[mask]
            potential[gi[:, None], ti[None, :]] += iou
        else:
            sim = np.zeros((len(gi), len(ti)))
        sims.append((gi, ti, sim))
        gt_count[gi] += 1
        tr_count[0, ti] += 1

    global_align = potential / (gt_count + tr_count - potential)
    matches = np.zeros((k, len(gt_index), len(tr_index)))
    for gi, ti, sim in sims:
        if len(gi) == 0:
            counts.fp += len(ti)
            continue
        if len(ti) == 0:
            counts.fn += len(gi)
            continue
        score = global_align[gi[:, None], ti[None, :]] * sim
        rows, cols = linear_sum_assignment(-score)
        matched_sim = sim[rows, cols]
        for a, alpha in enumerate(alphas):
            ok = matched_sim >= alpha - EPS
            n_match = int(np.count_nonzero(ok))
            counts.tp[a] += n_match
            counts.fn[a] += len(gi) - n_match
            counts.fp[a] += len(ti) - n_match
            if n_match:
                matches[a, gi[rows[ok]], ti[cols[ok]]] += 1

    for a in range(k):
        mc = matches[a]
        ass = mc / np.maximum(1.0, gt_count + tr_count - mc)
        counts.ass_sum[a] = np.sum(mc * ass)
    return counts


def hota(frames: Sequence[Frame], config: HotaConfig = HotaConfig()) -> HotaResult:
    return _result(hota_counts(frames, config))


def hota_combined(sequences: Sequence[Sequence[Frame]], config: HotaConfig = HotaConfig()) -> HotaResult:
    """HOTA over several sequences with counts pooled before any ratio is taken."""
    total = HotaCounts.zeros(len(config.thresholds))
    for frames in sequences:
        total = total + hota_counts(frames, config)
    return _result(total)


def _same_time(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def sample_tracks_at(tracks: Sequence[Track], timestamps: Sequence[float]) -> list[list[tuple[Hashable, np.ndarray]]]:
    """Estimates each track reported at exactly each evaluation timestamp."""
    lookup = []
    for trk in tracks:
        times = np.array(trk.times)
        lookup.append((trk, times))
    out = []
    for t in timestamps:
        frame = []
        for trk, times in lookup:
            i = int(np.searchsorted(times, t - 1e-9))
            if i < len(times) and _same_time(times[i], t):
                frame.append((trk.label, trk.points[i][1].position))
        out.append(frame)
    return out


def sample_truth_at(truth: Sequence[GroundTruthTrack], timestamps: Sequence[float]) -> list[list[tuple[Hashable, np.ndarray]]]:
    return [[(g.label, g.position_at(t)) for g in truth if g.alive(t)] for t in timestamps]


def build_frames(truth: Sequence[GroundTruthTrack], tracks: Sequence[Track],
                 timestamps: Sequence[float]) -> list[Frame]:
    frames = []
    for gt, est in zip(sample_truth_at(truth, timestamps), sample_tracks_at(tracks, timestamps)):
        frames.append(Frame([g for g, _ in gt], _as_points([p for _, p in gt]),
                            [e for e, _ in est], _as_points([p for _, p in est])))
    return frames


def gospa_series(frames: Sequence[Frame], config: GospaConfig = GospaConfig()) -> list[GospaResult]:
    return [gospa(f.gt_pos, f.tr_pos, config) for f in frames]
