"""Gaussian-mixture PHD filter driven by per-scan detector contexts.

The update is the textbook GM-PHD recursion except that the detection
probability of each component and the clutter intensity at each detection come
from ``scan.context``.  Components carry integer labels: detection and
missed-detection copies inherit the prior label, births get fresh ones, and a
merge keeps the label of its heaviest member.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
from numba import njit

from .core import GaussianComponent, SensorScan, StateEstimate, Track, symmetrize
from .models import CvModelConfig, predict_arrays

log = logging.getLogger(__name__)

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GmphdConfig:
    gate_mahalanobis: float = 3.0
    birth_weight: float = 1e-4
    survival_prob: float = 1.0
    prune_threshold: float = 1e-6
    merge_mahalanobis: float = 4.0
    extraction_threshold: float = 0.85
    birth_covariance: tuple = (10.0 ** 2, 15.0 ** 2, 10.0 ** 2, 15.0 ** 2)

    def __post_init__(self):
        for name in ("gate_mahalanobis", "birth_weight", "prune_threshold",
                     "merge_mahalanobis", "extraction_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.survival_prob <= 1:
            raise ValueError("survival_prob must lie in [0, 1]")
        if not self.extraction_threshold > self.prune_threshold:
            raise ValueError("extraction_threshold must exceed prune_threshold")

    @property
    def birth_cov_matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.birth_covariance, dtype=float))


@dataclass(frozen=True)
class GaussianMixture:
    """Labelled Gaussian mixture stored as stacked arrays.

    ``next_label`` is the first unused label, so the mixture alone determines
    the labels handed out by subsequent births.
    """

    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    covs: np.ndarray = field(default_factory=lambda: np.zeros((0, 4, 4)))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    timestamp: float = 0.0
    next_label: int = 0

    def __len__(self):
        return len(self.weights)

    @classmethod
    def from_components(cls, components: Iterable[GaussianComponent], timestamp: float = 0.0):
        components = list(components)
        if not components:
            return cls(timestamp=timestamp)
        labels = np.array([c.label for c in components], dtype=np.int64)
        return cls(
            weights=np.array([c.weight for c in components], dtype=float),
            means=np.array([c.state.mean for c in components]),
            covs=np.array([c.state.covariance for c in components]),
            labels=labels,
            timestamp=timestamp,
            next_label=int(labels.max()) + 1,
        )

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(w), StateEstimate(m, p), int(l))
                for w, m, p, l in zip(self.weights, self.means, self.covs, self.labels)]

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def label_weight(self, label: int) -> float:
        return float(np.sum(self.weights[self.labels == label]))


def predict(mixture: GaussianMixture, dt: float, motion: CvModelConfig,
            config: GmphdConfig) -> GaussianMixture:
    if dt < 0:
        raise ValueError(f"negative prediction interval dt={dt}")
    if dt == 0 or len(mixture) == 0:
        return replace(mixture, timestamp=mixture.timestamp + dt)
    means, covs = predict_arrays(mixture.means, mixture.covs, dt, motion)
    weights = mixture.weights * config.survival_prob if config.survival_prob != 1 else mixture.weights
    return replace(mixture, weights=weights, means=means, covs=covs,
                   timestamp=mixture.timestamp + dt)


def _inv2(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form inverse and determinant of a stack of 2x2 SPD matrices."""
    a, b, c, d = s[..., 0, 0], s[..., 0, 1], s[..., 1, 0], s[..., 1, 1]
    det = a * d - b * c
    if np.any(det <= 0):
        raise np.linalg.LinAlgError("innovation covariance is not positive definite")
    inv = np.empty_like(s)
    inv[..., 0, 0] = d / det
    inv[..., 0, 1] = -b / det
    inv[..., 1, 0] = -c / det
    inv[..., 1, 1] = a / det
    return inv, det


def update(mixture: GaussianMixture, scan: SensorScan, config: GmphdConfig) -> GaussianMixture:
    """GM-PHD measurement update with P_D and clutter queried from ``scan.context``."""
    context = scan.context
    if context is None:
        raise ValueError(f"scan at t={scan.timestamp} from {scan.sensor_id!r} has no detector context")

    n = len(mixture)
    dets = scan.detections
    m = len(dets)
    weights, means, covs, labels = mixture.weights, mixture.means, mixture.covs, mixture.labels

    pd = context.pd_at(means[:, [0, 2]]) if n else np.zeros(0)
    out_w = [weights * (1.0 - pd)]
    out_m = [means]
    out_p = [covs]
    out_l = [labels]

    if m and n:
        z = np.array([d.position for d in dets])
        r = np.array([d.covariance for d in dets])
        lam = context.clutter_at(dets)

        hph = covs[:, [0, 2]][:, :, [0, 2]]                    # (n, 2, 2)
        s = hph[:, None] + r[None]                              # (n, m, 2, 2)
        s_inv, s_det = _inv2(s)
        nu = z[None] - means[:, None][..., [0, 2]]              # (n, m, 2)
        maha2 = np.einsum("nmi,nmij,nmj->nm", nu, s_inv, nu)
        gated = (maha2 < config.gate_mahalanobis ** 2) & (pd[:, None] > 0)
        q = np.where(gated, np.exp(-0.5 * maha2) / (_TWO_PI * np.sqrt(s_det)), 0.0)
        unnorm = (pd * weights)[:, None] * q                    # (n, m)
        norm = lam + unnorm.sum(axis=0)                          # (m,)
        with np.errstate(invalid="ignore", divide="ignore"):
            post = np.where(unnorm > 0, unnorm / norm[None], 0.0)

        ii, jj = np.nonzero(gated)
        if len(ii):
            p = covs[ii]
            pht = p[:, :, [0, 2]]                               # P H^T, (k, 4, 2)
            gain = pht @ s_inv[ii, jj]                          # (k, 4, 2)
            upd_m = means[ii] + np.einsum("kij,kj->ki", gain, nu[ii, jj])
            i_kh = np.broadcast_to(np.eye(4), p.shape).copy()
            i_kh[:, :, [0, 2]] -= gain
            upd_p = i_kh @ p @ np.swapaxes(i_kh, 1, 2) + gain @ r[jj] @ np.swapaxes(gain, 1, 2)
            out_w.append(post[ii, jj])
            out_m.append(upd_m)
            out_p.append(symmetrize(upd_p))
            out_l.append(labels[ii])

    next_label = mixture.next_label
    if m:
        z = np.array([d.position for d in dets])
        births_m = np.zeros((m, 4))
        births_m[:, 0] = z[:, 0]
        births_m[:, 2] = z[:, 1]
        out_w.append(np.full(m, config.birth_weight))
        out_m.append(births_m)
        out_p.append(np.broadcast_to(config.birth_cov_matrix, (m, 4, 4)).copy())
        out_l.append(np.arange(next_label, next_label + m, dtype=np.int64))
        next_label += m

    return GaussianMixture(
        weights=np.concatenate(out_w),
        means=np.concatenate(out_m),
        covs=np.concatenate(out_p),
        labels=np.concatenate(out_l),
        timestamp=scan.timestamp,
        next_label=next_label,
    )


def prune_merge(mixture: GaussianMixture, config: GmphdConfig) -> GaussianMixture:
    """Drop light components, then greedily merge near-duplicates heaviest first.

    A candidate joins the current heaviest component when their mean
    difference is within the merge distance under both covariances.  Testing
    only one side lets a broad component either swallow or be swallowed by a
    tight one, which destroys a confirmed track.  Merged components are
    moment matched and keep the label of their heaviest constituent.
    """
    keep = mixture.weights >= config.prune_threshold
    if not np.any(keep):
        return replace(mixture, weights=np.zeros(0), means=np.zeros((0, 4)),
                       covs=np.zeros((0, 4, 4)), labels=np.zeros(0, dtype=np.int64))
    # stable sort so ties resolve by original order
    order = np.argsort(-mixture.weights[keep], kind="stable")
    w = mixture.weights[keep][order]
    mu = mixture.means[keep][order]
    p = mixture.covs[keep][order]
    lab = mixture.labels[keep][order]

    thresh2 = config.merge_mahalanobis ** 2
    close = _close_pairs(mu, p, thresh2)
    # the relation is symmetric, so an isolated component neither absorbs nor is absorbed
    isolated = close.sum(axis=1) == 1
    merged = np.zeros(len(w), dtype=bool)
    new_w, new_m, new_p, new_l = [], [], [], []
    remaining = ~isolated
    for i in np.flatnonzero(~isolated):
        if not remaining[i]:
            continue
        members = np.flatnonzero(close[i] & remaining)
        remaining[members] = False
        merged[i] = True
        wm = w[members]
        total = wm.sum()
        mean = wm @ mu[members] / total
        spread = mu[members] - mean
        cov = (np.einsum("k,kij->ij", wm, p[members])
               + np.einsum("k,ki,kj->ij", wm, spread, spread)) / total
        new_w.append(total)
        new_m.append(mean)
        new_p.append(symmetrize(cov))
        new_l.append(lab[i])

    # heads of merged groups are in descending weight order, as are isolated ones;
    # interleave them back by the weight of each group's heaviest member
    heads = np.flatnonzero(isolated | merged)
    out_w, out_m, out_p = w[heads].copy(), mu[heads].copy(), p[heads].copy()
    if new_w:
        at = np.searchsorted(heads, np.flatnonzero(merged))
        out_w[at] = new_w
        out_m[at] = new_m
        out_p[at] = new_p
        lab_heads = lab[heads].copy()
        lab_heads[at] = new_l
    else:
        lab_heads = lab[heads]
    return replace(mixture, weights=out_w, means=out_m, covs=out_p, labels=lab_heads)


def _close_pairs(mu: np.ndarray, p: np.ndarray, thresh2: float) -> np.ndarray:
    """Symmetric boolean matrix of pairs within ``thresh2`` under both covariances."""
    p = np.ascontiguousarray(p)
    return _close_pairs_kernel(np.ascontiguousarray(mu), np.linalg.inv(p),
                               thresh2 * p[:, 0, 0], thresh2 * p[:, 2, 2], thresh2)


@njit(cache=True)
def _close_pairs_kernel(mu, p_inv, var_x, var_y, thresh2):
    # a one-dimensional marginal never exceeds the full squared Mahalanobis
    # distance, so the per-axis tests reject most pairs cheaply
    n, dim = mu.shape
    close = np.zeros((n, n), dtype=np.bool_)
    for i in range(n):
        close[i, i] = True
        for k in range(i + 1, n):
            dx = mu[i, 0] - mu[k, 0]
            if dx * dx >= var_x[i] or dx * dx >= var_x[k]:
                continue
            dy = mu[i, 2] - mu[k, 2]
            if dy * dy >= var_y[i] or dy * dy >= var_y[k]:
                continue
            d_i = 0.0
            d_k = 0.0
            for a in range(dim):
                da = mu[i, a] - mu[k, a]
                for b in range(dim):
                    db = mu[i, b] - mu[k, b]
                    d_i += da * p_inv[i, a, b] * db
                    d_k += da * p_inv[k, a, b] * db
            if d_i < thresh2 and d_k < thresh2:
                close[i, k] = True
                close[k, i] = True
    return close


def extract(mixture: GaussianMixture, config: GmphdConfig) -> list[tuple[int, StateEstimate]]:
    """One estimate per label whose heaviest component weighs more than the threshold."""
    best: dict[int, int] = {}
    for i in np.flatnonzero(mixture.weights > config.extraction_threshold):
        label = int(mixture.labels[i])
        if label not in best or mixture.weights[i] > mixture.weights[best[label]]:
            best[label] = i
    return [(label, StateEstimate(mixture.means[i], mixture.covs[i]))
            for label, i in sorted(best.items())]


@dataclass
class GmphdTracker:
    """Sequential driver: predict to each scan, update, prune/merge, extract."""

    config: GmphdConfig = field(default_factory=GmphdConfig)
    motion: CvModelConfig = field(default_factory=CvModelConfig)
    mixture: GaussianMixture | None = None

    def step(self, scan: SensorScan) -> list[tuple[int, StateEstimate]]:
        if self.mixture is None:
            self.mixture = GaussianMixture(timestamp=scan.timestamp)
        dt = scan.timestamp - self.mixture.timestamp
        if dt < 0:
            raise ValueError(f"scan at t={scan.timestamp} arrived out of order")
        mixture = predict(self.mixture, dt, self.motion, self.config)
        mixture = update(mixture, scan, self.config)
        self.mixture = prune_merge(mixture, self.config)
        return extract(self.mixture, self.config)

    def run(self, scans: Iterable[SensorScan]) -> list[tuple[SensorScan, list[tuple[int, StateEstimate]]]]:
        return [(scan, self.step(scan)) for scan in scans]


def outputs_to_tracks(outputs) -> list[Track]:
    """Group per-scan ``(scan, [(label, state)])`` outputs into tracks.

    When several scans share a timestamp the first output at that time wins.
    """
    points: dict[int, dict[float, StateEstimate]] = {}
    for scan, estimates in outputs:
        for label, state in estimates:
            points.setdefault(label, {}).setdefault(scan.timestamp, state)
    return [Track(label, tuple(sorted(pts.items(), key=lambda kv: kv[0])))
            for label, pts in sorted(points.items())]
