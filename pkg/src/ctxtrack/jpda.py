"""JPDA tracker with globally constant P_D and clutter, and count-based track management.

Marginal association probabilities are exact.  Tracks are split into clusters
that share gated detections; within a cluster the sum over feasible joint
events is evaluated by dynamic programming over subsets of the cluster's
detections, which gives the same numbers as enumerating every event but stays
tractable when many tentative tracks overlap a handful of detections.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.stats import chi2

from .context import RANGE_BEARING, UniformContext, UniformContextConfig
from .core import SensorScan, StateEstimate, symmetrize
from .models import CvModelConfig, predict_arrays

TENTATIVE = "tentative"
CONFIRMED = "confirmed"


class AssociationCapacityError(RuntimeError):
    """A gated cluster is too large for exact evaluation."""


@dataclass(frozen=True)
class JpdaConfig:
    gate_probability: float = 0.95
    pd: float = 0.4
    lam: float = 1e-3
    init_min_detections: int = 3
    deletion_miss_count: int = 30
    init_covariance: tuple = (10.0 ** 2, 15.0 ** 2, 10.0 ** 2, 15.0 ** 2)
    max_events: float = 1e6
    clutter_frame: str = RANGE_BEARING

    def __post_init__(self):
        if not 0 < self.gate_probability < 1:
            raise ValueError("gate_probability must lie in (0, 1)")
        if self.init_min_detections < 1 or self.deletion_miss_count < 1:
            raise ValueError("track management counts must be positive")

    @property
    def gate_threshold(self) -> float:
        """Squared-Mahalanobis gate for 2-D innovations."""
        return float(chi2.ppf(self.gate_probability, df=2))


@dataclass(frozen=True)
class JpdaTrack:
    label: int
    state: StateEstimate
    status: str = TENTATIVE
    hit_count: int = 1
    consecutive_misses: int = 0

    @property
    def confirmed(self) -> bool:
        return self.status == CONFIRMED




@dataclass(frozen=True)
class Innovations:
    nu: np.ndarray        # (T, M, 2)
    s: np.ndarray         # (T, M, 2, 2)
    s_inv: np.ndarray
    maha2: np.ndarray     # (T, M)
    q: np.ndarray         # (T, M) Gaussian innovation likelihood


def _innovations(means: np.ndarray, covs: np.ndarray, scan: SensorScan) -> Innovations:
    t, m = len(means), len(scan.detections)
    if t == 0 or m == 0:
        z = np.zeros((t, m))
        return Innovations(np.zeros((t, m, 2)), np.zeros((t, m, 2, 2)), np.zeros((t, m, 2, 2)), z, z)
    z = np.array([d.position for d in scan.detections])
    r = np.array([d.covariance for d in scan.detections])
    s = covs[:, [0, 2]][:, :, [0, 2]][:, None] + r[None]
    s_inv = np.linalg.inv(s)
    det = np.linalg.det(s)
    nu = z[None] - means[:, None][..., [0, 2]]
    maha2 = np.einsum("tmi,tmij,tmj->tm", nu, s_inv, nu)
    q = np.exp(-0.5 * maha2) / (2 * np.pi * np.sqrt(det))
    return Innovations(nu, s, s_inv, maha2, q)


def _stack(tracks: Sequence[JpdaTrack]) -> tuple[np.ndarray, np.ndarray]:
    if not tracks:
        return np.zeros((0, 4)), np.zeros((0, 4, 4))
    return (np.array([t.state.mean for t in tracks]), np.array([t.state.covariance for t in tracks]))


def innovations(tracks: Sequence[JpdaTrack], scan: SensorScan) -> Innovations:
    return _innovations(*_stack(tracks), scan)


def gate(tracks: Sequence[JpdaTrack], scan: SensorScan, config: JpdaConfig,
         innov: Innovations | None = None) -> np.ndarray:
    """Boolean (track x detection) validation matrix."""
    innov = innov if innov is not None else innovations(tracks, scan)
    return innov.maha2 < config.gate_threshold


def clutter_densities(scan: SensorScan, config: JpdaConfig) -> np.ndarray:
    ctx = UniformContext(UniformContextConfig(config.pd, config.lam), scan.pose, config.clutter_frame)
    return ctx.clutter_at(scan.detections)


def _clusters(gated: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Connected components of the bipartite gate graph, restricted to tracks with a gated detection."""
    n_t, n_m = gated.shape
    ti, dj = np.nonzero(gated)
    if len(ti) == 0:
        return []
    graph = coo_matrix((np.ones(len(ti)), (ti, n_t + dj)), shape=(n_t + n_m, n_t + n_m))
    _, comp = connected_components(graph, directed=False)
    out = []
    for c in np.unique(comp[ti]):
        members = np.flatnonzero(comp == c)
        out.append((members[members < n_t], members[members >= n_t] - n_t))
    return out


def _zeta(values: np.ndarray, n_bits: int) -> np.ndarray:
    """Subset-sum transform: out[S] = sum of values[T] over T subset of S."""
    out = values.copy()
    for b in range(n_bits):
        bit = 1 << b
        idx = np.flatnonzero(np.arange(len(out)) & bit)
        out[idx] += out[idx ^ bit]
    return out


def _cluster_marginals(ratio: np.ndarray, gated: np.ndarray, miss: float) -> np.ndarray:
    """Exact marginals for one cluster.

    ``ratio[t, j]`` is ``pd * q / lambda_j`` (event weights divided by the
    all-clutter product) and ``miss`` is ``1 - pd``.  Returns ``(T, D + 1)``
    with the miss column last.
    """
    n_t, n_d = ratio.shape
    if n_t == 1 or n_d == 1:
        return _simple_marginals(ratio, miss)
    size = 1 << n_d
    masks = np.arange(size)
    full = size - 1

    def step(f, t):
        g = f * miss
        for j in np.flatnonzero(gated[t]):
            bit = 1 << j
            src = masks[(masks & bit) == 0]
            g[src | bit] += f[src] * ratio[t, j]
        return g

    fwd = [np.zeros(size)]
    fwd[0][0] = 1.0
    for t in range(n_t):
        fwd.append(step(fwd[-1], t))
    bwd = [None] * (n_t + 1)
    bwd[n_t] = np.zeros(size)
    bwd[n_t][0] = 1.0
    for t in range(n_t - 1, -1, -1):
        bwd[t] = step(bwd[t + 1], t)

    total = fwd[n_t].sum()
    beta = np.zeros((n_t, n_d + 1))
    comp = full ^ masks
    for t in range(n_t):
        f = fwd[t]
        b_hat = _zeta(bwd[t + 1], n_d)
        beta[t, n_d] = miss * np.dot(f, b_hat[comp]) / total
        for j in np.flatnonzero(gated[t]):
            bit = 1 << j
            sel = (masks & bit) == 0
            beta[t, j] = ratio[t, j] * np.dot(f[sel], b_hat[comp[sel] & ~bit]) / total
    return beta


def _simple_marginals(ratio: np.ndarray, miss: float) -> np.ndarray:
    """Closed form for a cluster with a single track or a single detection."""
    n_t, n_d = ratio.shape
    beta = np.zeros((n_t, n_d + 1))
    if n_t == 1:
        denom = miss + ratio[0].sum()
        beta[0, :n_d] = ratio[0] / denom
        beta[0, n_d] = miss / denom
        return beta
    # one detection shared by several tracks: at most one of them takes it
    col = ratio[:, 0]
    denom = miss + col.sum()
    beta[:, 0] = col / denom
    beta[:, 1] = (denom - col) / denom
    return beta


def _marginals(gated: np.ndarray, q: np.ndarray, lam: np.ndarray, config: JpdaConfig) -> np.ndarray:
    n_t, n_m = gated.shape
    beta = np.zeros((n_t, n_m + 1))
    beta[:, n_m] = 1.0
    if n_t == 0 or n_m == 0:
        return beta
    for t_idx, d_idx in _clusters(gated):
        if 2.0 ** len(d_idx) > config.max_events:
            raise AssociationCapacityError(
                f"cluster with {len(t_idx)} tracks and {len(d_idx)} detections exceeds the "
                f"association cap ({config.max_events:g}); tighten the gate")
        sub_gate = gated[np.ix_(t_idx, d_idx)]
        ratio = np.where(sub_gate, config.pd * q[np.ix_(t_idx, d_idx)] / lam[d_idx], 0.0)
        sub = _cluster_marginals(ratio, sub_gate, 1.0 - config.pd)
        beta[np.ix_(t_idx, d_idx)] = sub[:, :-1]
        beta[t_idx, n_m] = sub[:, -1]
    return beta


def association_probabilities(tracks: Sequence[JpdaTrack], scan: SensorScan, gate_matrix: np.ndarray,
                              config: JpdaConfig, innov: Innovations | None = None) -> np.ndarray:
    """Marginal association probabilities, shape ``(T, M + 1)`` with the miss column last."""
    n_t, n_m = len(tracks), len(scan.detections)
    if n_t == 0 or n_m == 0:
        beta = np.zeros((n_t, n_m + 1))
        beta[:, n_m] = 1.0
        return beta
    innov = innov if innov is not None else innovations(tracks, scan)
    return _marginals(np.asarray(gate_matrix, dtype=bool), innov.q, clutter_densities(scan, config), config)


def _pda(means: np.ndarray, covs: np.ndarray, beta: np.ndarray,
         innov: Innovations) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """PDA moment-matched update of every track; returns (means, covs, missed)."""
    n_t, n_m1 = beta.shape
    n_m = n_m1 - 1
    if n_m == 0:
        return means, covs, np.ones(n_t, dtype=bool)
    b_det, b_miss = beta[:, :n_m], beta[:, n_m]
    missed = b_miss >= b_det.max(axis=1)
    upd = np.flatnonzero(b_miss < 1.0)
    means, covs = means.copy(), covs.copy()
    if len(upd) == 0:
        return means, covs, missed
    # one sensor per scan: the innovation covariance of any used detection serves
    j0 = np.argmax(b_det[upd] > 0, axis=1)
    s = innov.s[upd, j0]
    s_inv = innov.s_inv[upd, j0]
    p = covs[upd]
    gain = p[:, :, [0, 2]] @ s_inv                                  # (U, 4, 2)
    bs = b_det[upd]
    nus = np.where(bs[..., None] > 0, innov.nu[upd], 0.0)
    nu = np.einsum("um,umk->uk", bs, nus)
    b0 = b_miss[upd][:, None, None]
    p_c = p - gain @ s @ np.swapaxes(gain, 1, 2)
    spread = np.einsum("um,umk,uml->ukl", bs, nus, nus) - nu[:, :, None] * nu[:, None, :]
    means[upd] = means[upd] + np.einsum("uij,uj->ui", gain, nu)
    covs[upd] = symmetrize(b0 * p + (1.0 - b0) * p_c + gain @ spread @ np.swapaxes(gain, 1, 2))
    return means, covs, missed


def update_tracks(tracks: Sequence[JpdaTrack], scan: SensorScan, beta: np.ndarray,
                  config: JpdaConfig, innov: Innovations | None = None) -> list[JpdaTrack]:
    """PDA state update and hit/miss bookkeeping."""
    innov = innov if innov is not None else innovations(tracks, scan)
    means, covs, missed = _pda(*_stack(tracks), np.asarray(beta, dtype=float), innov)
    out = []
    for trk, m, p, miss in zip(tracks, means, covs, missed):
        if miss:
            out.append(replace(trk, state=StateEstimate(m, p), consecutive_misses=trk.consecutive_misses + 1))
        else:
            out.append(replace(trk, state=StateEstimate(m, p), hit_count=trk.hit_count + 1,
                               consecutive_misses=0))
    return out


def manage(tracks: Sequence[JpdaTrack], unassociated: Iterable, config: JpdaConfig,
           next_label: int) -> tuple[list[JpdaTrack], int]:
    """Confirm, delete, and start tentative tracks from unassociated detections."""
    kept = []
    for trk in tracks:
        if trk.consecutive_misses >= config.deletion_miss_count:
            continue
        if trk.status == TENTATIVE and trk.hit_count >= config.init_min_detections:
            trk = replace(trk, status=CONFIRMED)
        kept.append(trk)
    init_cov = np.diag(np.asarray(config.init_covariance, dtype=float))
    for det in unassociated:
        mean = np.array([det.position[0], 0.0, det.position[1], 0.0])
        kept.append(JpdaTrack(next_label, StateEstimate(mean, init_cov)))
        next_label += 1
    return kept, next_label


@dataclass
class JpdaTracker:
    """Sequential JPDA driver.

    Track state lives in stacked arrays; :attr:`tracks` materialises
    :class:`JpdaTrack` objects on demand.  Each step predicts, gates,
    computes exact marginals, applies the PDA update, and then runs
    :func:`manage`'s rules: delete, confirm, and start tentative tracks from
    detections no track gated.
    """

    config: JpdaConfig = field(default_factory=JpdaConfig)
    motion: CvModelConfig = field(default_factory=CvModelConfig)
    timestamp: float | None = None
    next_label: int = 0

    def __post_init__(self):
        self.labels = np.zeros(0, dtype=np.int64)
        self.means = np.zeros((0, 4))
        self.covs = np.zeros((0, 4, 4))
        self.confirmed = np.zeros(0, dtype=bool)
        self.hits = np.zeros(0, dtype=np.int64)
        self.misses = np.zeros(0, dtype=np.int64)
        self._init_cov = np.diag(np.asarray(self.config.init_covariance, dtype=float))

    @property
    def tracks(self) -> list[JpdaTrack]:
        return [JpdaTrack(int(l), StateEstimate(m, p), CONFIRMED if c else TENTATIVE, int(h), int(k))
                for l, m, p, c, h, k in zip(self.labels, self.means, self.covs, self.confirmed,
                                            self.hits, self.misses)]

    def step(self, scan: SensorScan) -> list[tuple[int, StateEstimate]]:
        if self.timestamp is not None and scan.timestamp < self.timestamp:
            raise ValueError(f"scan at t={scan.timestamp} arrived out of order")
        dt = 0.0 if self.timestamp is None else scan.timestamp - self.timestamp
        if dt > 0 and len(self.labels):
            self.means, self.covs = predict_arrays(self.means, self.covs, dt, self.motion)
        self.timestamp = scan.timestamp

        n_m = len(scan.detections)
        innov = _innovations(self.means, self.covs, scan)
        gated = innov.maha2 < self.config.gate_threshold
        if n_m and len(self.labels):
            beta = _marginals(gated, innov.q, clutter_densities(scan, self.config), self.config)
        else:
            beta = np.zeros((len(self.labels), n_m + 1))
            beta[:, n_m] = 1.0
        self.means, self.covs, missed = _pda(self.means, self.covs, beta, innov)
        self.hits = self.hits + ~missed
        self.misses = np.where(missed, self.misses + 1, 0)

        keep = self.misses < self.config.deletion_miss_count
        self.labels, self.means, self.covs = self.labels[keep], self.means[keep], self.covs[keep]
        self.hits, self.misses = self.hits[keep], self.misses[keep]
        self.confirmed = self.confirmed[keep] | (self.hits >= self.config.init_min_detections)

        free = np.flatnonzero(~gated.any(axis=0)) if n_m else np.zeros(0, dtype=int)
        if len(free):
            z = np.array([scan.detections[j].position for j in free])
            born = np.zeros((len(free), 4))
            born[:, 0], born[:, 2] = z[:, 0], z[:, 1]
            self.labels = np.concatenate([self.labels, np.arange(self.next_label, self.next_label + len(free))])
            self.next_label += len(free)
            self.means = np.concatenate([self.means, born])
            self.covs = np.concatenate([self.covs, np.broadcast_to(self._init_cov, (len(free), 4, 4))])
            self.confirmed = np.concatenate([self.confirmed, np.zeros(len(free), dtype=bool)])
            self.hits = np.concatenate([self.hits, np.ones(len(free), dtype=np.int64)])
            self.misses = np.concatenate([self.misses, np.zeros(len(free), dtype=np.int64)])
        return [(int(l), StateEstimate(m, p)) for l, m, p in
                zip(self.labels[self.confirmed], self.means[self.confirmed], self.covs[self.confirmed])]
