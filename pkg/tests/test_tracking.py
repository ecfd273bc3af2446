import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from clustering import Cluster
from conftest import mpcs_at
from tracking import (
    Trajectory, TrackSample, associate, cluster_index, track_clusters, trajectory_stats,
)


def cluster_at(delay_ns, t=0.0, power=1.0, idx=0):
    return Cluster.from_members(f"c-{t}-{idx}", t, mpcs_at([delay_ns], [power], t=t))


def snapshot(delays_ns, t):
    return [cluster_at(d, t, idx=i) for i, d in enumerate(delays_ns)]


def open_trajectory(delay_ns, t=0.0):
    c = cluster_at(delay_ns, t, idx=99)
    return Trajectory(id=f"tr-{delay_ns}", samples=[TrackSample.of(c)])


def random_script(rng, n_snapshots=20):
    """Scatterers drifting linearly in delay, occasionally dropping out"""
    n = int(rng.integers(1, 6))
    starts = np.sort(rng.uniform(10, 100, n)) + np.arange(n) * 30.0
    drifts = rng.uniform(-0.3, 0.3, n)
    script = []
    for step in range(n_snapshots):
        t = step * 0.064
        visible = [s + d * step for s, d, keep in zip(starts, drifts, rng.random(n) > 0.1)
                   if keep]
        script.append(snapshot(visible, t))
    return script


def test_close_cluster_extends_trajectory():
    tr = open_trajectory(20.0)
    updated = associate([tr], [cluster_at(21.0, 0.064)], gate=5e-9)
    assert len(updated) == 1
    assert len(tr.samples) == 2


def test_far_cluster_starts_new_trajectory():
    tr = open_trajectory(20.0)
    updated = associate([tr], [cluster_at(45.0, 0.064)], gate=5e-9, max_gap=0)
    assert len(updated) == 2
    assert tr.closed
    assert len(updated[1].samples) == 1


def test_miss_budget_before_closing():
    tr = open_trajectory(20.0)
    trajectories = [tr]
    for step in range(1, 4):
        trajectories = associate(trajectories, [], gate=5e-9, max_gap=3)
        assert not tr.closed
    associate(trajectories, [], gate=5e-9, max_gap=3)
    assert tr.closed


def test_rematch_after_gap_counts_gap():
    tr = open_trajectory(20.0)
    trajectories = associate([tr], [], gate=5e-9)
    associate(trajectories, [cluster_at(20.5, 0.128)], gate=5e-9)
    assert tr.gap_count == 1
    assert tr.missed == 0


def test_gate_must_be_positive():
    with pytest.raises(ValueError):
        associate([], [], gate=0.0)


def test_nearest_pair_wins_greedy_order():
    a, b = open_trajectory(20.0), open_trajectory(24.0)
    associate([a, b], [cluster_at(23.0, 0.064, idx=0), cluster_at(21.0, 0.064, idx=1)],
              gate=5e-9)
    assert a.last.centroid_delay == pytest.approx(21e-9)
    assert b.last.centroid_delay == pytest.approx(23e-9)


def test_drift_of_two_samples():
    tr = Trajectory(id="tr", samples=[TrackSample(0.0, "a", 20e-9, 1.0),
                                      TrackSample(1.0, "b", 25e-9, 1.0)])
    stats = trajectory_stats(tr)
    assert stats.drift_ns_s == pytest.approx(5.0)
    assert stats.fading_db_s == pytest.approx(0.0, abs=1e-12)
    assert stats.lifetime == 1.0


def test_single_sample_has_no_rates():
    stats = trajectory_stats(open_trajectory(20.0))
    assert stats.drift_ns_s is None
    assert stats.fading_db_s is None
    assert stats.lifetime == 0.0


def test_approach_drift_from_forty_to_fifteen_ns():
    samples = [TrackSample(t, f"c{i}", (40.0 - 2.5 * (t - 17.0)) * 1e-9, 1.0)
               for i, t in enumerate(np.linspace(17.0, 27.0, 157))]
    assert trajectory_stats(Trajectory("tr", samples)).drift_ns_s == pytest.approx(-2.5)


def test_tracking_conserves_clusters():
    rng = np.random.default_rng(11)
    for _ in range(100):
        script = random_script(rng)
        trajectories = track_clusters(script)
        ids = [cid for tr in trajectories for cid in tr.cluster_ids]
        assert sorted(ids) == sorted(c.id for snap in script for c in snap)
        assert all(tr.closed for tr in trajectories)
        assert len(cluster_index(trajectories)) == len(ids)


def test_larger_gate_never_adds_trajectories():
    rng = np.random.default_rng(12)
    for _ in range(100):
        script = random_script(rng)
        counts = [len(track_clusters(script, gate=g * 1e-9)) for g in (0.5, 1.0, 2.0, 5.0, 10.0)]
        assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_time_reversal_negates_drift():
    rng = np.random.default_rng(13)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        starts = np.sort(rng.uniform(10, 300, n))
        starts += np.arange(n) * 20.0
        drifts = rng.uniform(-0.5, 0.5, n)
        times = np.arange(15) * 0.064
        total = times[-1]
        forward = [snapshot(starts + drifts * k, t) for k, t in enumerate(times)]
        backward = [snapshot(starts + drifts * k, total - t)
                    for k, t in reversed(list(enumerate(times)))]
        fwd = sorted(track_clusters(forward), key=lambda tr: tr.samples[0].centroid_delay)
        bwd = sorted(track_clusters(backward), key=lambda tr: tr.samples[-1].centroid_delay)
        assert len(fwd) == len(bwd) == n
        for a, b in zip(fwd, bwd):
            assert [s.centroid_delay for s in a.samples] == [s.centroid_delay
                                                             for s in reversed(b.samples)]
            assert trajectory_stats(a).drift_ns_s == pytest.approx(
                -trajectory_stats(b).drift_ns_s, abs=1e-9)


def test_greedy_matches_optimal_assignment_when_well_separated():
    rng = np.random.default_rng(14)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        base = np.sort(rng.uniform(0, 50, n)) + np.arange(n) * 12.0
        moved = base + rng.uniform(-1.5, 1.5, n)
        trajectories = [open_trajectory(d) for d in base]
        current = [cluster_at(d, 0.064, idx=i) for i, d in enumerate(rng.permutation(moved))]
        associate(trajectories, current, gate=5e-9)
        cost = np.abs(np.array([[c.centroid_delay for c in current]]).T
                      - np.array([tr.samples[0].centroid_delay for tr in trajectories]))
        rows, cols = linear_sum_assignment(cost.T)
        for r, c in zip(rows, cols):
            assert trajectories[r].last.cluster_id == current[c].id
