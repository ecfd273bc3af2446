import json

import numpy as np
import pytest

from clustering import Cluster
from config import BehaviorConfig
from conftest import mpcs_at
from exceptions import ConfigurationError, RuleError
from scene_sim import GroundTruthPath
from semantic_core import (
    BehaviorKind, BehaviorSemantic, SemanticMap, StatusSemantic, event_hull, validate_map,
)
from semantics_engine import (
    UNKNOWN_LABEL, EventRule, LabelMap, behavior_label, build_semantic_map, characterize_status,
    classify_behavior, compose_events, label_map_from_list, load_label_map, load_rules,
    rules_from_list,
)
from tracking import Trajectory, TrackSample

DT = 0.064
CAMPAIGN_LABELS = [
    {"label": "median barrier", "distance": [3.0, 3.6]},
    {"label": "ground", "distance": [12.0, 12.5]},
    {"label": "vehicles", "distance": [25.0, 25.6]},
    {"label": "trees", "distance": [36.6, 37.2]},
    {"label": "buildings", "distance": [45.5, 46.2]},
]
SWAPPED = {
    BehaviorKind.APPROACH: BehaviorKind.MOVE_AWAY,
    BehaviorKind.MOVE_AWAY: BehaviorKind.APPROACH,
    BehaviorKind.APPEAR: BehaviorKind.DISAPPEAR,
    BehaviorKind.DISAPPEAR: BehaviorKind.APPEAR,
    BehaviorKind.STATIC: BehaviorKind.STATIC,
}


def cluster_at(delay_ns, t=0.0, cluster_id="c"):
    return Cluster.from_members(cluster_id, t, mpcs_at([delay_ns], t=t))


def scripted_trajectory(times, delays_ns, tag="tr"):
    clusters = [cluster_at(d, float(t), f"{tag}-c{i}")
                for i, (t, d) in enumerate(zip(times, delays_ns))]
    statuses = {c.id: characterize_status(c, None) for c in clusters}
    return Trajectory(id=tag, samples=[TrackSample.of(c) for c in clusters]), statuses


def turn_in_delays(t):
    """40 ns until 17 s, linear down to 15 ns at 27 s, then steady"""
    return np.clip(40.0 - 2.5 * (t - 17.0), 15.0, 40.0)


def round_trip_delays(t):
    """Steady, approach over 5-15 s, steady, move away over 20-28 s, steady"""
    return np.piecewise(t, [t < 5, (t >= 5) & (t < 15), (t >= 15) & (t < 20),
                            (t >= 20) & (t < 28), t >= 28],
                        [40.0, lambda x: 40.0 - 2.5 * (x - 5), 15.0,
                         lambda x: 15.0 + 3.125 * (x - 20), 40.0])


def behavior_with_status(bid, label, kind, start, end, delay_ns=20.0):
    status = StatusSemantic(id=f"s-{bid}", label=label, delays=(delay_ns * 1e-9,),
                            amplitudes=(0.1,), source_cluster=f"c-{bid}", snapshot_time=start)
    behavior = BehaviorSemantic(id=bid, kind=kind, start_time=start, duration=end - start,
                                delay_start=delay_ns * 1e-9, delay_coverage=0.0,
                                statuses=(status.id,), trajectory=f"tr-{bid}")
    return behavior, status


def road_scenario():
    """Behaviors that satisfy every default rule once, in order"""
    pairs = [
        behavior_with_status("b1", "median barrier", BehaviorKind.APPROACH, 4.0, 10.0),
        behavior_with_status("b2", "vehicles", BehaviorKind.APPROACH, 3.0, 9.0),
        behavior_with_status("b3", "vehicles", BehaviorKind.MOVE_AWAY, 12.0, 14.0),
        behavior_with_status("b4", "median barrier", BehaviorKind.STATIC, 10.0, 20.0),
        behavior_with_status("b5", "median barrier", BehaviorKind.MOVE_AWAY, 22.0, 30.0),
        behavior_with_status("b6", "vehicles", BehaviorKind.MOVE_AWAY, 22.0, 30.0),
    ]
    behaviors = [b for b, _ in pairs]
    statuses = {s.id: s for _, s in pairs}
    return behaviors, statuses


# Status

def test_campaign_distances_map_to_labels():
    label_map = label_map_from_list(CAMPAIGN_LABELS)
    barrier = characterize_status(cluster_at(22.13), label_map)
    assert barrier.label == "median barrier"
    assert barrier.distance == pytest.approx(3.32, abs=0.01)
    assert characterize_status(cluster_at(305.7), label_map).label == "buildings"


def test_no_association_gives_unknown():
    assert characterize_status(cluster_at(50.0), LabelMap()).label == UNKNOWN_LABEL
    assert characterize_status(cluster_at(50.0), None).label == UNKNOWN_LABEL


def test_ground_truth_association_respects_gate():
    truth = [GroundTruthPath(0, "vehicles", 168.8e-9, 0.1), GroundTruthPath(1, "trees", 246e-9, 0.1)]
    assert characterize_status(cluster_at(170.0), truth).label == "vehicles"
    assert characterize_status(cluster_at(180.0), truth).label == UNKNOWN_LABEL


def test_status_is_deterministic_and_carries_cluster_data():
    cluster = Cluster.from_members("c", 1.0, mpcs_at([20, 26], [1.0, 0.1], t=1.0))
    a = characterize_status(cluster, None)
    assert a == characterize_status(cluster, None)
    assert a.delays == (20e-9, 26e-9)
    assert a.source_cluster == "c"
    assert a.total_power == pytest.approx(1.1)


def test_label_map_first_entry_wins_and_time_windows_apply():
    label_map = label_map_from_list([
        {"label": "early", "delay": [10e-9, 30e-9], "time": [0.0, 10.0]},
        {"label": "wide", "delay": [0.0, 100e-9]},
        {"label": "shadowed", "delay": [10e-9, 30e-9]},
    ])
    assert label_map.lookup(20e-9, 5.0) == "early"
    assert label_map.lookup(20e-9, 20.0) == "wide"
    assert label_map.lookup(200e-9, 20.0) is None


def test_malformed_label_maps_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        label_map_from_list([{"label": "x"}])
    with pytest.raises(ConfigurationError):
        label_map_from_list([{"label": "x", "distance": [5.0, 1.0]}])
    with pytest.raises(ConfigurationError):
        label_map_from_list([{"label": "", "distance": [1.0, 5.0]}])
    path = tmp_path / "labels.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_label_map(path)
    with pytest.raises(FileNotFoundError):
        load_label_map(tmp_path / "missing.json")


def test_label_map_loads_from_file(tmp_path):
    path = tmp_path / "labels.json"
    path.write_text(json.dumps(CAMPAIGN_LABELS), encoding="utf-8")
    assert len(load_label_map(path).entries) == 5


# Behaviors

def test_turn_in_is_one_approach():
    t = np.arange(10.0, 34.0, DT)
    tr, statuses = scripted_trajectory(t, turn_in_delays(t))
    approaches = [b for b in classify_behavior(tr, statuses)
                  if b.kind == BehaviorKind.APPROACH]
    assert len(approaches) == 1
    (approach,) = approaches
    assert approach.start_time == pytest.approx(17.0, abs=0.5)
    assert approach.duration == pytest.approx(10.0, abs=1.0)
    assert approach.delay_start == pytest.approx(15e-9, abs=0.1e-9)
    assert approach.delay_coverage == pytest.approx(25e-9, abs=0.1e-9)


def test_turn_out_is_one_move_away():
    t = np.arange(45.0, 62.0, DT)
    delays = np.clip(15.0 + 3.5 * (t - 51.0), 15.0, 50.0)
    tr, statuses = scripted_trajectory(t, delays)
    (away,) = [b for b in classify_behavior(tr, statuses) if b.kind == BehaviorKind.MOVE_AWAY]
    assert away.start_time == pytest.approx(51.0, abs=0.5)
    assert away.delay_start == pytest.approx(15e-9, abs=0.1e-9)
    assert away.delay_coverage == pytest.approx(35e-9, abs=0.1e-9)


def test_constant_delay_is_static_between_appear_and_disappear():
    t = np.arange(0.0, 5.0, DT)
    tr, statuses = scripted_trajectory(t, np.full(len(t), 30.0))
    behaviors = classify_behavior(tr, statuses, snapshot_interval=DT)
    assert [b.kind for b in behaviors] == [BehaviorKind.APPEAR, BehaviorKind.STATIC,
                                           BehaviorKind.DISAPPEAR]
    appear, static, disappear = behaviors
    assert appear.start_time == t[0]
    assert appear.duration == DT
    assert static.start_time == t[0]
    assert static.end_time == pytest.approx(t[-1])
    assert disappear.end_time == pytest.approx(t[-1])


def test_single_sample_trajectory():
    tr, statuses = scripted_trajectory([2.0], [30.0])
    kinds = [b.kind for b in classify_behavior(tr, statuses, snapshot_interval=DT)]
    assert sorted(k.value for k in kinds) == ["appear", "disappear", "static"]


def test_speed_change_emits_rate_annotations():
    t = np.arange(0.0, 12.0, DT)
    # drift grows by 1.5 ns/s every second
    delays = 20.0 + 1.0 * t + 0.75 * t ** 2
    tr, statuses = scripted_trajectory(t, delays)
    kinds = {b.kind for b in classify_behavior(tr, statuses)}
    assert BehaviorKind.ACCELERATE in kinds
    assert BehaviorKind.DECELERATE not in kinds


def test_emitted_behaviors_pass_containment_and_do_not_overlap_per_kind():
    t = np.arange(0.0, 30.0, DT)
    tr, statuses = scripted_trajectory(t, round_trip_delays(t))
    behaviors = classify_behavior(tr, statuses)
    report = validate_map(SemanticMap(behaviors=tuple(behaviors),
                                      statuses=tuple(statuses.values())))
    assert report.ok, report.violations
    for kind in BehaviorKind:
        spans = sorted((b.start_time, b.end_time) for b in behaviors if b.kind == kind)
        assert all(a[1] <= b[0] + 1e-9 for a, b in zip(spans, spans[1:]))
    assert [b.start_time for b in behaviors] == sorted(b.start_time for b in behaviors)


def test_time_reversal_swaps_behavior_kinds():
    t = np.arange(470) * DT
    total = float(t[-1])
    delays = round_trip_delays(t)
    forward, fwd_status = scripted_trajectory(t, delays, "fwd")
    backward, bwd_status = scripted_trajectory(total - t[::-1], delays[::-1], "bwd")
    skip = {BehaviorKind.ACCELERATE, BehaviorKind.DECELERATE}

    def spans(behaviors, mirror):
        out = []
        for b in behaviors:
            if b.kind in skip:
                continue
            if mirror:
                out.append((SWAPPED[b.kind].value, total - b.end_time, total - b.start_time))
            else:
                out.append((b.kind.value, b.start_time, b.end_time))
        return sorted(out)

    expected = spans(classify_behavior(forward, fwd_status, snapshot_interval=DT), mirror=True)
    actual = spans(classify_behavior(backward, bwd_status, snapshot_interval=DT), mirror=False)
    assert [k for k, _, _ in actual] == [k for k, _, _ in expected]
    for (_, a0, a1), (_, e0, e1) in zip(actual, expected):
        assert a0 == pytest.approx(e0, abs=1e-9)
        assert a1 == pytest.approx(e1, abs=1e-9)


def test_behavior_config_thresholds_are_used():
    t = np.arange(0.0, 5.0, DT)
    tr, statuses = scripted_trajectory(t, 30.0 + 0.3 * t)

    def kinds(cfg):
        return {b.kind for b in classify_behavior(tr, statuses, cfg)}

    assert BehaviorKind.STATIC in kinds(BehaviorConfig())
    assert BehaviorKind.MOVE_AWAY in kinds(BehaviorConfig(epsilon_ns_s=0.1))


# Events

def test_concurrent_approaches_fire_turn_onto_road(default_rules):
    behaviors, statuses = road_scenario()
    events = compose_events(behaviors, statuses, default_rules)
    (turn,) = [e for e in events if e.label == "turn onto road"]
    assert turn.level == 0
    assert set(turn.behaviors) == {"b1", "b2"}
    assert (turn.start_time, turn.end_time) == (3.0, 10.0)


def test_sequence_fires_driving_through_road(default_rules):
    behaviors, statuses = road_scenario()
    events = compose_events(behaviors, statuses, default_rules)
    by_id = {e.id: e for e in events}
    (drive,) = [e for e in events if e.label == "driving through road"]
    assert drive.level == 1
    assert [by_id[i].label for i in drive.sub_events] == [
        "turn onto road", "yield to other vehicles", "turn right to exit road"]
    assert (drive.start_time, drive.duration) == event_hull([by_id[i] for i in drive.sub_events])
    assert (drive.start_time, drive.end_time) == (3.0, 30.0)

    yield_event = next(e for e in events if e.label == "yield to other vehicles")
    assert (yield_event.start_time, yield_event.end_time) == (10.0, 20.0)

    semantic_map = SemanticMap(events=tuple(events), behaviors=tuple(behaviors),
                               statuses=tuple(statuses.values()))
    assert validate_map(semantic_map).ok


def test_no_behaviors_no_events(default_rules):
    assert compose_events([], {}, default_rules) == []


def test_short_overlap_does_not_fire(default_rules):
    pairs = [behavior_with_status("a", "median barrier", BehaviorKind.APPROACH, 0.0, 5.0),
             behavior_with_status("b", "vehicles", BehaviorKind.APPROACH, 4.5, 9.0)]
    events = compose_events([b for b, _ in pairs], {s.id: s for _, s in pairs}, default_rules)
    assert events == []


def test_sequence_gap_limit(default_rules):
    behaviors, statuses = road_scenario()
    strict = [r for r in default_rules if r.level == 0] + [
        EventRule("drive", 1, ("turn onto road", "yield to other vehicles",
                               "turn right to exit road"), max_seq_gap=1.0)]
    assert not [e for e in compose_events(behaviors, statuses, strict) if e.level == 1]


def test_adding_rules_never_removes_events(default_rules):
    behaviors, statuses = road_scenario()
    previous = set()
    for n in range(1, len(default_rules) + 1):
        fired = {e.id for e in compose_events(behaviors, statuses, default_rules[:n])}
        assert previous <= fired
        previous = fired


def test_behavior_label_majority_with_tie_break():
    statuses = {f"s{i}": StatusSemantic(id=f"s{i}", label=label, delays=(1e-8,), amplitudes=(1.0,),
                                        source_cluster=f"c{i}", snapshot_time=float(i))
                for i, label in enumerate(["trees", "ground", "trees", "ground"])}
    b = BehaviorSemantic(id="b", kind=BehaviorKind.STATIC, start_time=0.0, duration=3.0,
                         delay_start=1e-8, delay_coverage=0.0, statuses=tuple(statuses),
                         trajectory="tr")
    assert behavior_label(b, statuses) == "ground"


def test_malformed_rules_rejected(tmp_path):
    level0 = {"name": "a", "level": 0, "pattern": [{"label": "x", "kind": "approach"}]}
    with pytest.raises(RuleError):
        rules_from_list([level0, dict(level0)])
    with pytest.raises(RuleError):
        rules_from_list([{"name": "a", "level": 0,
                          "pattern": [{"label": "x", "kind": "teleport"}]}])
    with pytest.raises(RuleError):
        rules_from_list([level0, {"name": "b", "level": 1, "pattern": ["missing"]}])
    with pytest.raises(RuleError):
        rules_from_list([level0, {"name": "b", "level": 2, "pattern": ["a"]}])
    with pytest.raises(RuleError):
        rules_from_list([{"name": "a", "level": 0}])
    path = tmp_path / "rules.json"
    path.write_text("[", encoding="utf-8")
    with pytest.raises(RuleError):
        load_rules(path)
    with pytest.raises(FileNotFoundError):
        load_rules(tmp_path / "missing.json")


def test_default_rules_load(default_rules):
    assert [r.level for r in default_rules] == [0, 0, 0, 1]
    assert default_rules[3].pattern == ("turn onto road", "yield to other vehicles",
                                        "turn right to exit road")


# Map assembly

def test_empty_input_builds_empty_valid_map(default_rules):
    semantic_map = build_semantic_map([], [], [], default_rules)
    assert semantic_map.counts() == {"events": 0, "behaviors": 0, "statuses": 0}
    assert validate_map(semantic_map).ok


def test_build_map_links_every_cluster(default_rules):
    t = np.arange(0.0, 3.0, DT)
    snapshots = [[cluster_at(22.13, float(ti), f"c{i}")] for i, ti in enumerate(t)]
    tr = Trajectory(id="tr", samples=[TrackSample.of(s[0]) for s in snapshots])
    label_map = label_map_from_list(CAMPAIGN_LABELS)
    semantic_map = build_semantic_map(snapshots, [tr], [label_map] * len(snapshots),
                                      default_rules)
    assert len(semantic_map.statuses) == len(t)
    assert {s.label for s in semantic_map.statuses} == {"median barrier"}
    assert {b.trajectory for b in semantic_map.behaviors} == {"tr"}
    with pytest.raises(ValueError):
        build_semantic_map(snapshots, [tr], [], default_rules)
