"""
Per-snapshot MPC clustering with k-power-means

The feature space is delay only. The objective is
    J = Σ_i P_i · (τ_i − c_{a(i)})²
with c_j the power-weighted centroid of cluster j.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from exceptions import ClusteringError
from semantic_core import make_id
from sounding_dsp import Mpc

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100
# DB index at or above this means no partition separates better than the spreads overlap
DB_SEPARATION_LIMIT = 1.0


@dataclass(frozen=True)
class Cluster:
    id: str
    snapshot_time: float
    members: Tuple[Mpc, ...]
    centroid_delay: float
    total_power: float
    rms_delay_spread: float
    peak_power: float

    @classmethod
    def from_members(cls, cluster_id: str, snapshot_time: float,
                     members: Sequence[Mpc]) -> 'Cluster':
        if not members:
            raise ClusteringError("A cluster needs at least one member")
        members = tuple(sorted(members, key=lambda m: (m.delay, m.power)))
        total = sum(m.power for m in members)
        if total > 0:
            centroid = sum(m.power * m.delay for m in members) / total
            spread = math.sqrt(sum(m.power * (m.delay - centroid) ** 2 for m in members) / total)
        else:
            centroid = sum(m.delay for m in members) / len(members)
            spread = 0.0
        return cls(id=cluster_id, snapshot_time=snapshot_time, members=members,
                   centroid_delay=centroid, total_power=total, rms_delay_spread=spread,
                   peak_power=max(m.power for m in members))


@dataclass(frozen=True)
class ClusterParams:
    """Intra-cluster parameters; decay is None below two distinct delays"""
    centroid_delay: float
    total_power: float
    rms_delay_spread: float
    peak_power: float
    decay_db_per_ns: Optional[float]
    n_members: int


@dataclass
class PartitionResult:
    labels: np.ndarray
    objective: float
    history: List[float]
    restart: int


def power_means_objective(clusters: Sequence[Cluster]) -> float:
    """J of a clustering, in s²·(linear power)"""
    return sum(m.power * (m.delay - c.centroid_delay) ** 2 for c in clusters for m in c.members)


def _weighted_centroids(x: np.ndarray, w: np.ndarray, labels: np.ndarray, k: int,
                        previous: Optional[np.ndarray] = None) -> np.ndarray:
    centroids = np.zeros(k) if previous is None else previous.copy()
    for j in range(k):
        mask = labels == j
        if not mask.any():
            continue
        weight = w[mask].sum()
        centroids[j] = (w[mask] @ x[mask]) / weight if weight > 0 else x[mask].mean()
    return centroids


def _objective(x: np.ndarray, w: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(w @ (x - centroids[labels]) ** 2)


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin keeps the lowest centroid index on ties
    return np.argmin((x[:, None] - centroids[None, :]) ** 2, axis=1)


def _repair_empty(x: np.ndarray, w: np.ndarray, labels: np.ndarray,
                  centroids: np.ndarray, k: int) -> None:
    """Move the farthest point (power-weighted) of a multi-member cluster into each empty one"""
    for j in range(k):
        if (labels == j).any():
            continue
        counts = np.bincount(labels, minlength=k)
        movable = counts[labels] > 1
        cost = np.where(movable, w * (x - centroids[labels]) ** 2, -np.inf)
        i = int(np.argmax(cost))
        labels[i] = j
        centroids[j] = x[i]


def _contiguous_seed(x: np.ndarray, w: np.ndarray, k: int) -> np.ndarray:
    """Exact minimum-J partition of sorted 1-D data into k contiguous runs (dynamic programming)"""
    n = len(x)
    cw = np.concatenate([[0.0], np.cumsum(w)])
    cx = np.concatenate([[0.0], np.cumsum(w * x)])
    cxx = np.concatenate([[0.0], np.cumsum(w * x * x)])

    def cost(i: int, j: int) -> float:
        # points i..j-1
        weight = cw[j] - cw[i]
        if weight <= 0:
            return 0.0
        s = cx[j] - cx[i]
        return max(float(cxx[j] - cxx[i] - s * s / weight), 0.0)

    best = np.full((k + 1, n + 1), np.inf)
    cut = np.zeros((k + 1, n + 1), dtype=int)
    best[0, 0] = 0.0
    for m in range(1, k + 1):
        for j in range(m, n - (k - m) + 1):
            for i in range(m - 1, j):
                value = best[m - 1, i] + cost(i, j)
                if value < best[m, j]:
                    best[m, j] = value
                    cut[m, j] = i
    labels = np.zeros(n, dtype=int)
    j = n
    for m in range(k, 0, -1):
        i = cut[m, j]
        labels[i:j] = m - 1
        j = i
    return labels


def _plus_plus_seed(x: np.ndarray, w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Power-weighted k-means++ seeding"""
    n = len(x)
    total = w.sum()
    p = w / total if total > 0 else np.full(n, 1.0 / n)
    chosen = [int(rng.choice(n, p=p))]
    while len(chosen) < k:
        d2 = np.min((x[:, None] - x[chosen][None, :]) ** 2, axis=1)
        score = w * d2
        score[chosen] = 0.0
        if score.sum() <= 0:
            remaining = np.setdiff1d(np.arange(n), chosen)
            chosen.append(int(rng.choice(remaining)))
        else:
            chosen.append(int(rng.choice(n, p=score / score.sum())))
    return np.sort(x[chosen])


def _lloyd(x: np.ndarray, w: np.ndarray, centroids: np.ndarray, k: int,
           labels: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    if labels is None:
        labels = _assign(x, centroids)
        _repair_empty(x, w, labels, centroids, k)
    centroids = _weighted_centroids(x, w, labels, k, centroids)
    history = [_objective(x, w, labels, centroids)]
    for _ in range(MAX_ITERATIONS):
        new_labels = _assign(x, centroids)
        _repair_empty(x, w, new_labels, centroids, k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centroids = _weighted_centroids(x, w, labels, k, centroids)
        history.append(_objective(x, w, labels, centroids))
    return labels, centroids, history


def partition(delays: np.ndarray, powers: np.ndarray, k: int, seed: int = 0,
              restarts: int = 10) -> PartitionResult:
    """Best of `restarts` k-power-means runs on delay-sorted data.

    Restart 0 starts from the exact contiguous optimum, the others from
    power-weighted k-means++ seeds drawn from `default_rng([seed, restart])`.
    The earliest restart wins ties.
    """
    n = len(delays)
    if n == 0:
        raise ClusteringError("Cannot cluster an empty MPC set")
    if not 1 <= k <= n:
        raise ClusteringError(f"k={k} out of range [1, {n}]")
    if restarts < 1:
        raise ClusteringError(f"restarts must be >= 1, got {restarts}")

    # centred nanoseconds keep the squared distances well-conditioned
    x = (np.asarray(delays, dtype=float) - float(np.mean(delays))) * 1e9
    w = np.asarray(powers, dtype=float)

    best: Optional[PartitionResult] = None
    for r in range(restarts):
        if r == 0:
            seed_labels = _contiguous_seed(x, w, k)
            centroids = _weighted_centroids(x, w, seed_labels, k)
            labels, centroids, history = _lloyd(x, w, centroids, k, labels=seed_labels)
        else:
            rng = np.random.default_rng([seed, r])
            labels, centroids, history = _lloyd(x, w, _plus_plus_seed(x, w, k, rng), k)
        result = PartitionResult(labels=labels, objective=history[-1], history=history, restart=r)
        if best is None or result.objective < best.objective:
            best = result
    return best


def _sorted_mpcs(mpcs: Sequence[Mpc]) -> List[Mpc]:
    return sorted(mpcs, key=lambda m: (m.delay, m.power))


def k_power_means(mpcs: Sequence[Mpc], k: int, seed: int = 0, restarts: int = 10) -> List[Cluster]:
    """Partition the MPCs of one snapshot into exactly k clusters, ordered by centroid delay"""
    if not mpcs:
        raise ClusteringError("Cannot cluster an empty MPC set")
    ordered = _sorted_mpcs(mpcs)
    result = partition(np.array([m.delay for m in ordered]), np.array([m.power for m in ordered]),
                       k, seed=seed, restarts=restarts)

    groups: Dict[int, List[Mpc]] = {}
    for mpc, label in zip(ordered, result.labels):
        groups.setdefault(int(label), []).append(mpc)
    snapshot_time = ordered[0].snapshot_time
    provisional = [Cluster.from_members("", snapshot_time, members) for members in groups.values()]
    provisional.sort(key=lambda c: (c.centroid_delay, c.members[0].delay))
    return [Cluster.from_members(make_id("cluster", snapshot_time, i), snapshot_time, c.members)
            for i, c in enumerate(provisional)]


def davies_bouldin(clusters: Sequence[Cluster], min_spread: float = 0.0) -> float:
    """Davies–Bouldin index with power-weighted rms spreads as cluster scatter.

    Spreads are floored at `min_spread`; a cluster narrower than the delay
    resolution is not tighter than one bin.
    """
    if len(clusters) < 2:
        return math.inf
    spreads = [max(c.rms_delay_spread, min_spread) for c in clusters]
    scores = []
    for i, a in enumerate(clusters):
        worst = 0.0
        for j, b in enumerate(clusters):
            if i == j:
                continue
            separation = abs(a.centroid_delay - b.centroid_delay)
            if separation <= 0:
                return math.inf
            worst = max(worst, (spreads[i] + spreads[j]) / separation)
        scores.append(worst)
    return float(np.mean(scores))


def select_k(mpcs: Sequence[Mpc], k_max: int, seed: int = 0, restarts: int = 10,
             min_spread: float = 0.0) -> int:
    """Number of clusters minimizing the Davies–Bouldin index over k = 2..min(k_max, n).

    Partitions into singletons only are skipped. With `min_spread` at the delay
    resolution, splitting one scatterer's paths into single-bin clusters no longer
    wins the index. If the best index shows overlapping clusters, one cluster is
    kept; if no candidate remains, the k with the largest relative drop of J wins.
    """
    if not mpcs:
        raise ClusteringError("Cannot select k for an empty MPC set")
    if k_max < 1:
        raise ClusteringError(f"k_max must be >= 1, got {k_max}")
    n = len(mpcs)
    k_hi = min(k_max, n)
    if k_hi == 1:
        return 1

    objectives = {}
    scores = {}
    for k in range(1, k_hi + 1):
        clusters = k_power_means(mpcs, k, seed=seed, restarts=restarts)
        objectives[k] = power_means_objective(clusters)
        if k >= 2 and k < n:
            score = davies_bouldin(clusters, min_spread)
            if math.isfinite(score):
                scores[k] = score

    if scores:
        best_k = min(scores, key=lambda k: (scores[k], k))
        return best_k if scores[best_k] < DB_SEPARATION_LIMIT else 1

    if objectives[1] <= 0:
        return 1
    drops = {k: (objectives[k - 1] - objectives[k]) / objectives[k - 1]
             for k in range(2, k_hi + 1) if objectives[k - 1] > 0}
    if not drops:
        return 1
    return max(drops, key=lambda k: (drops[k], -k))


def intra_cluster_params(cluster: Cluster) -> ClusterParams:
    decay = None
    delays_ns = np.array([m.delay for m in cluster.members]) * 1e9
    if len(np.unique(delays_ns)) >= 2:
        powers_db = 10.0 * np.log10(np.maximum([m.power for m in cluster.members],
                                               np.finfo(float).tiny))
        decay = float(np.polyfit(delays_ns, powers_db, 1)[0])
    return ClusterParams(centroid_delay=cluster.centroid_delay, total_power=cluster.total_power,
                         rms_delay_spread=cluster.rms_delay_spread, peak_power=cluster.peak_power,
                         decay_db_per_ns=decay, n_members=len(cluster.members))


def cluster_snapshot(mpcs: Sequence[Mpc], k: Optional[int] = None, k_max: int = 8,
                     seed: int = 0, restarts: int = 10,
                     min_spread: float = 0.0) -> List[Cluster]:
    """Cluster one snapshot with a fixed k or an automatically selected one"""
    if not mpcs:
        return []
    if k is None:
        k = select_k(mpcs, k_max, seed=seed, restarts=restarts, min_spread=min_spread)
    elif k > len(mpcs):
        logger.debug(f"k={k} exceeds {len(mpcs)} MPCs at t={mpcs[0].snapshot_time:.3f} s, clamping")
        k = len(mpcs)
    return k_power_means(mpcs, k, seed=seed, restarts=restarts)
