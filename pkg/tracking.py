"""
Cluster tracking across snapshots

Greedy nearest-neighbour association on centroid delay, with a delay gate and a
miss budget before a trajectory is closed.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from clustering import Cluster
from semantic_core import make_id

logger = logging.getLogger(__name__)

DEFAULT_GATE = 5e-9
DEFAULT_MAX_GAP = 3


@dataclass(frozen=True)
class TrackSample:
    snapshot_time: float
    cluster_id: str
    centroid_delay: float
    total_power: float

    @classmethod
    def of(cls, cluster: Cluster) -> 'TrackSample':
        return cls(cluster.snapshot_time, cluster.id, cluster.centroid_delay, cluster.total_power)


@dataclass
class Trajectory:
    """One cluster followed over time; `missed` counts consecutive unmatched snapshots"""
    id: str
    samples: List[TrackSample] = field(default_factory=list)
    missed: int = 0
    gap_count: int = 0
    closed: bool = False

    @property
    def last(self) -> TrackSample:
        return self.samples[-1]

    @property
    def birth_time(self) -> float:
        return self.samples[0].snapshot_time

    @property
    def death_time(self) -> float:
        return self.samples[-1].snapshot_time

    @property
    def lifetime(self) -> float:
        return self.death_time - self.birth_time

    @property
    def cluster_ids(self) -> List[str]:
        return [s.cluster_id for s in self.samples]


@dataclass(frozen=True)
class TrajectoryStats:
    trajectory: str
    lifetime: float
    drift_ns_s: Optional[float]
    fading_db_s: Optional[float]
    n_samples: int
    gap_count: int


def associate(prev: List[Trajectory], current: Sequence[Cluster], gate: float = DEFAULT_GATE,
              max_gap: int = DEFAULT_MAX_GAP) -> List[Trajectory]:
    """Extend open trajectories with the clusters of the next snapshot.

    Candidate pairs within the gate are taken in ascending |Δ delay| order
    (ties by trajectory then cluster position), each side used at most once.
    Unmatched clusters start new trajectories; a trajectory missing more than
    `max_gap` consecutive snapshots is closed. Open trajectories are updated in
    place; the returned list is `prev` plus the newborn trajectories.
    """
    if not gate > 0:
        raise ValueError(f"gate must be > 0, got {gate}")
    open_idx = [i for i, tr in enumerate(prev) if not tr.closed]

    pairs: List[Tuple[float, int, int]] = []
    for ti in open_idx:
        last = prev[ti].last.centroid_delay
        for ci, cluster in enumerate(current):
            distance = abs(cluster.centroid_delay - last)
            if distance <= gate:
                pairs.append((distance, ti, ci))
    pairs.sort()

    matched_tr, matched_cl = set(), set()
    for _, ti, ci in pairs:
        if ti in matched_tr or ci in matched_cl:
            continue
        tr = prev[ti]
        if tr.missed:
            tr.gap_count += 1
        tr.samples.append(TrackSample.of(current[ci]))
        tr.missed = 0
        matched_tr.add(ti)
        matched_cl.add(ci)

    for ti in open_idx:
        if ti in matched_tr:
            continue
        tr = prev[ti]
        tr.missed += 1
        if tr.missed > max_gap:
            tr.closed = True

    updated = list(prev)
    for ci, cluster in enumerate(current):
        if ci not in matched_cl:
            updated.append(Trajectory(id=make_id("trajectory", cluster.id),
                                      samples=[TrackSample.of(cluster)]))
    return updated


def track_clusters(snapshots: Sequence[Sequence[Cluster]], gate: float = DEFAULT_GATE,
                   max_gap: int = DEFAULT_MAX_GAP, progress: bool = False) -> List[Trajectory]:
    """Associate every snapshot in order; all trajectories are closed at the end"""
    trajectories: List[Trajectory] = []
    for clusters in tqdm(snapshots, desc="Tracking", unit="snap", disable=not progress):
        trajectories = associate(trajectories, clusters, gate, max_gap)
    for tr in trajectories:
        tr.closed = True
    logger.debug(f"Tracked {sum(len(s) for s in snapshots)} clusters into "
                 f"{len(trajectories)} trajectories")
    return trajectories


def _slope(t: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(t, y, 1)[0])


def trajectory_stats(tr: Trajectory) -> TrajectoryStats:
    """Lifetime, delay drift [ns/s] and fading [dB/s] by least squares over all samples"""
    if not tr.samples:
        raise ValueError(f"Trajectory {tr.id} has no samples")
    drift = fading = None
    if len(tr.samples) >= 2:
        t = np.array([s.snapshot_time for s in tr.samples])
        delays_ns = np.array([s.centroid_delay for s in tr.samples]) * 1e9
        powers_db = 10.0 * np.log10(np.maximum([s.total_power for s in tr.samples],
                                               np.finfo(float).tiny))
        drift = _slope(t, delays_ns)
        fading = _slope(t, powers_db)
    return TrajectoryStats(trajectory=tr.id, lifetime=tr.lifetime, drift_ns_s=drift,
                           fading_db_s=fading, n_samples=len(tr.samples), gap_count=tr.gap_count)


def cluster_index(trajectories: Sequence[Trajectory]) -> Dict[str, str]:
    """cluster id -> trajectory id"""
    return {s.cluster_id: tr.id for tr in trajectories for s in tr.samples}
