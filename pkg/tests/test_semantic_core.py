import pytest

from exceptions import TraceFormatError
from semantic_core import (
    BehaviorKind, BehaviorSemantic, EventSemantic, MapMeta, SemanticMap, StatusSemantic,
    dumps_map, loads_map, make_id, read_map, validate_map, write_map,
)


def status(sid, t, delays=(20e-9,), label="median barrier"):
    return StatusSemantic(id=sid, label=label, delays=tuple(delays),
                          amplitudes=tuple(0.1 for _ in delays), source_cluster=f"c-{sid}",
                          snapshot_time=t)


def behavior(bid, kind, start, duration, statuses, delay_start=15e-9, coverage=30e-9):
    return BehaviorSemantic(id=bid, kind=kind, start_time=start, duration=duration,
                            delay_start=delay_start, delay_coverage=coverage,
                            statuses=tuple(statuses), trajectory="tr")


def small_map():
    s1, s2 = status("s1", 17.0), status("s2", 27.0, delays=(15e-9,))
    b1 = behavior("b1", BehaviorKind.APPROACH, 17.0, 10.0, ["s1", "s2"])
    e0 = EventSemantic(id="e0", label="turn onto road", level=0, start_time=17.0,
                       duration=10.0, behaviors=("b1",))
    e1 = EventSemantic(id="e1", label="driving through road", level=1, start_time=17.0,
                       duration=10.0, sub_events=("e0",))
    return SemanticMap(events=(e0, e1), behaviors=(b1,), statuses=(s1, s2),
                       meta=MapMeta(trace_id="unit", snapshot_rate=15.625))


def test_valid_map_has_empty_report():
    assert validate_map(small_map()).ok


def test_empty_map_is_valid():
    assert validate_map(SemanticMap()).ok


def test_status_shape_mismatch_reported():
    bad = StatusSemantic(id="s", label="x", delays=(1e-9, 2e-9), amplitudes=(0.1,),
                         source_cluster="c", snapshot_time=0.0)
    report = validate_map(SemanticMap(statuses=(bad,)))
    assert report.codes() == ["status-shape"]
    assert report.violations[0].record_id == "s"


def test_unordered_delays_reported():
    bad = status("s", 0.0, delays=(2e-9, 1e-9))
    assert "status-order" in validate_map(SemanticMap(statuses=(bad,))).codes()


def test_status_outside_behavior_window_reported():
    s = status("s1", 30.0)
    b = behavior("b1", BehaviorKind.APPROACH, 17.0, 10.0, ["s1"])
    assert "behavior-time-window" in validate_map(SemanticMap(behaviors=(b,), statuses=(s,))).codes()


def test_status_delay_outside_behavior_coverage_reported():
    s = status("s1", 20.0, delays=(60e-9,))
    b = behavior("b1", BehaviorKind.APPROACH, 17.0, 10.0, ["s1"])
    assert "behavior-delay-window" in validate_map(SemanticMap(behaviors=(b,), statuses=(s,))).codes()


def test_unresolved_reference_reported():
    b = behavior("b1", BehaviorKind.STATIC, 0.0, 1.0, ["missing"])
    report = validate_map(SemanticMap(behaviors=(b,)))
    assert "closure" in report.codes()


def test_event_span_must_equal_hull():
    m = small_map()
    e0 = m.events[0]
    wrong = EventSemantic(id=e0.id, label=e0.label, level=0, start_time=16.0,
                          duration=11.0, behaviors=e0.behaviors)
    report = validate_map(SemanticMap(events=(wrong, m.events[1]), behaviors=m.behaviors,
                                      statuses=m.statuses))
    assert "event-hull" in report.codes()


def test_level_one_event_needs_level_zero_sub_event():
    m = small_map()
    lone = EventSemantic(id="e1", label="x", level=1, start_time=0.0, duration=1.0)
    assert "event-empty" in validate_map(SemanticMap(events=(lone,))).codes()
    wrong_level = EventSemantic(id="e2", label="x", level=2, start_time=17.0, duration=10.0,
                                sub_events=("e0",))
    report = validate_map(SemanticMap(events=(m.events[0], wrong_level),
                                      behaviors=m.behaviors, statuses=m.statuses))
    assert "event-level" in report.codes()


def test_event_cycle_detected():
    a = EventSemantic(id="a", label="a", level=1, start_time=0.0, duration=1.0, sub_events=("b",))
    b = EventSemantic(id="b", label="b", level=1, start_time=0.0, duration=1.0, sub_events=("a",))
    assert "event-cycle" in validate_map(SemanticMap(events=(a, b))).codes()


def test_duplicate_identifier_reported():
    s = status("dup", 0.0)
    assert "duplicate-id" in validate_map(SemanticMap(statuses=(s, s))).codes()


def test_map_survives_jsonl_round_trip(tmp_path):
    original = small_map()
    path = write_map(original, tmp_path / "map.jsonl")
    restored = read_map(path)
    assert restored == original
    assert validate_map(restored).ok
    assert dumps_map(restored) == dumps_map(original)


def test_meta_line_comes_first():
    first = dumps_map(small_map()).splitlines()[0]
    assert '"record_type": "meta"' in first


def test_version_mismatch_rejected():
    text = dumps_map(small_map()).replace('"format_version": 1', '"format_version": 99')
    with pytest.raises(TraceFormatError):
        loads_map(text)


def test_garbage_line_rejected():
    with pytest.raises(TraceFormatError):
        loads_map("{not json\n")


def test_unknown_behavior_kind_rejected():
    text = dumps_map(small_map()).replace('"kind": "approach"', '"kind": "hover"')
    with pytest.raises(TraceFormatError):
        loads_map(text)


def test_unknown_meta_key_rejected():
    text = dumps_map(small_map()).replace('"trace_id"', '"scene"', 1)
    with pytest.raises(TraceFormatError):
        loads_map(text)


def test_non_object_line_rejected():
    with pytest.raises(TraceFormatError):
        loads_map("[1, 2]\n")


def test_reversed_kinds_are_involutive():
    for kind in BehaviorKind:
        assert kind.reversed().reversed() is kind
    assert BehaviorKind.APPROACH.reversed() is BehaviorKind.MOVE_AWAY
    assert BehaviorKind.STATIC.reversed() is BehaviorKind.STATIC


def test_make_id_is_deterministic():
    assert make_id("cluster", 1.25, 3) == make_id("cluster", 1.25, 3)
    assert make_id("cluster", 1.25, 3) != make_id("cluster", 1.25, 4)
