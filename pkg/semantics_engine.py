"""
Semantics engine: clusters and trajectories -> status, behavior and event semantics

Status labels come from a LabelMap (delay or distance windows) or from
simulator ground truth. Behaviors come from a sliding-window drift
classifier over each trajectory. Events come from declarative rules.
"""
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from clustering import Cluster
from config import BehaviorConfig
from exceptions import ConfigurationError, InvalidMapError, RuleError
from scene_sim import GroundTruthPath, one_way_distance
from semantic_core import (
    BehaviorKind, BehaviorSemantic, EventSemantic, MapMeta, SemanticMap, StatusSemantic,
    event_hull, make_id, validate_map,
)
from tracking import DEFAULT_GATE, Trajectory
from validators import validate_label_map, validate_rules

logger = logging.getLogger(__name__)

UNKNOWN_LABEL = "unknown"


# Association

@dataclass(frozen=True)
class LabelEntry:
    """Label for clusters whose delay [s] or one-way distance [m] and time fall in the windows"""
    label: str
    lo: float
    hi: float
    domain: str = "distance"
    t_lo: float = -math.inf
    t_hi: float = math.inf

    def matches(self, delay: float, distance: float, t: float) -> bool:
        value = delay if self.domain == "delay" else distance
        return self.lo <= value <= self.hi and self.t_lo <= t <= self.t_hi


@dataclass(frozen=True)
class LabelMap:
    entries: Tuple[LabelEntry, ...] = ()

    def lookup(self, delay: float, t: float) -> Optional[str]:
        """First entry containing the point, in file order"""
        distance = one_way_distance(delay)
        for entry in self.entries:
            if entry.matches(delay, distance, t):
                return entry.label
        return None


def label_map_from_list(data: Sequence[dict]) -> LabelMap:
    try:
        entries = []
        for item in data:
            if "distance" in item:
                domain, window = "distance", item["distance"]
            else:
                domain, window = "delay", item["delay"]
            time_window = item.get("time", [-math.inf, math.inf])
            entries.append(LabelEntry(label=str(item["label"]), lo=float(window[0]),
                                      hi=float(window[1]), domain=domain,
                                      t_lo=float(time_window[0]), t_hi=float(time_window[1])))
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise ConfigurationError(f"Malformed label map: {e}")
    validate_label_map(entries)
    return LabelMap(tuple(entries))


def load_label_map(path: Union[str, Path]) -> LabelMap:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot read label map {path}: {e}")
    return label_map_from_list(data)


Association = Union[LabelMap, Sequence[GroundTruthPath], None]


def _nearest_truth(delay: float, truth: Sequence[GroundTruthPath], gate: float) -> Optional[str]:
    best = None
    for path in truth:
        distance = abs(path.delay - delay)
        if distance <= gate and (best is None or distance < best[0]):
            best = (distance, path.label)
    return None if best is None else best[1]


def characterize_status(cluster: Cluster, assoc: Association,
                        gate: float = DEFAULT_GATE) -> StatusSemantic:
    """StatusSemantic of one cluster; "unknown" when nothing associates"""
    if not cluster.members:
        raise ValueError(f"Cluster {cluster.id} has no members")
    label = None
    if isinstance(assoc, LabelMap):
        label = assoc.lookup(cluster.centroid_delay, cluster.snapshot_time)
    elif assoc is not None:
        label = _nearest_truth(cluster.centroid_delay, assoc, gate)
    return StatusSemantic(
        id=make_id("status", cluster.id),
        label=label or UNKNOWN_LABEL,
        delays=tuple(m.delay for m in cluster.members),
        amplitudes=tuple(m.amplitude for m in cluster.members),
        source_cluster=cluster.id,
        snapshot_time=cluster.snapshot_time,
        distance=one_way_distance(cluster.centroid_delay),
        total_power=cluster.total_power,
        rms_delay_spread=cluster.rms_delay_spread,
    )


# Behaviors

def _window_drifts(t: np.ndarray, delays_ns: np.ndarray, window: int) -> np.ndarray:
    """Least-squares drift [ns/s] over a window centred on each sample, shrunk at the ends"""
    n = len(t)
    half = max(window // 2, 1)
    drifts = np.zeros(n)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        if hi - lo >= 2:
            drifts[i] = np.polyfit(t[lo:hi], delays_ns[lo:hi], 1)[0]
    return drifts


def _drift_kind(drift: float, epsilon: float) -> BehaviorKind:
    if drift < -epsilon:
        return BehaviorKind.APPROACH
    if drift > epsilon:
        return BehaviorKind.MOVE_AWAY
    return BehaviorKind.STATIC


def _runs(values: Sequence) -> List[Tuple[int, int]]:
    """Inclusive (first, last) index ranges of equal consecutive values"""
    runs = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] != values[start]:
            runs.append((start, i - 1))
            start = i
    return runs


def _make_behavior(kind: BehaviorKind, tr: Trajectory, members: Sequence[StatusSemantic],
                   start: float, duration: float) -> BehaviorSemantic:
    delays = [d for s in members for d in s.delays]
    lo, hi = min(delays), max(delays)
    return BehaviorSemantic(
        id=make_id("behavior", tr.id, kind.value, start),
        kind=kind,
        start_time=start,
        duration=duration,
        delay_start=lo,
        delay_coverage=hi - lo,
        statuses=tuple(s.id for s in members),
        trajectory=tr.id,
    )


def _span_behavior(kind: BehaviorKind, tr: Trajectory, members: Sequence[StatusSemantic],
                   t: np.ndarray, first: int, last: int, dt: float) -> BehaviorSemantic:
    return _make_behavior(kind, tr, members[first:last + 1], float(t[first]),
                          max(float(t[last] - t[first]), dt))


def _rate_annotations(tr: Trajectory, members: Sequence[StatusSemantic], t: np.ndarray,
                      delays_ns: np.ndarray, first: int, last: int, cfg: BehaviorConfig,
                      dt: float) -> List[BehaviorSemantic]:
    """Accelerate / decelerate over blocks of a monotone run whose |drift| changes by more than δ"""
    blocks = [(i, min(i + cfg.window, last + 1) - 1) for i in range(first, last + 1, cfg.window)]
    if len(blocks) > 1 and blocks[-1][1] - blocks[-1][0] < 1:
        blocks[-2] = (blocks[-2][0], blocks[-1][1])
        blocks.pop()
    blocks = [b for b in blocks if b[1] > b[0]]
    if len(blocks) < 2:
        return []

    speeds = [abs(np.polyfit(t[a:b + 1], delays_ns[a:b + 1], 1)[0]) for a, b in blocks]
    centres = [float(np.mean(t[a:b + 1])) for a, b in blocks]
    kinds: List[Optional[BehaviorKind]] = [None]
    for j in range(1, len(blocks)):
        rate = (speeds[j] - speeds[j - 1]) / (centres[j] - centres[j - 1])
        if rate > cfg.delta_ns_s2:
            kinds.append(BehaviorKind.ACCELERATE)
        elif rate < -cfg.delta_ns_s2:
            kinds.append(BehaviorKind.DECELERATE)
        else:
            kinds.append(None)

    annotations = []
    for a, b in _runs(kinds):
        if kinds[a] is None:
            continue
        annotations.append(_span_behavior(kinds[a], tr, members, t,
                                          blocks[a][0], blocks[b][1], dt))
    return annotations


def classify_behavior(tr: Trajectory, statuses: Mapping[str, StatusSemantic],
                      cfg: Optional[BehaviorConfig] = None,
                      snapshot_interval: Optional[float] = None) -> List[BehaviorSemantic]:
    """Segment one trajectory into behaviors.

    `statuses` maps cluster id -> StatusSemantic for (at least) the trajectory's
    clusters. Appear spans the first snapshot interval after birth and disappear
    the one before death.
    """
    cfg = cfg or BehaviorConfig()
    if not tr.samples:
        raise ValueError(f"Trajectory {tr.id} has no samples")
    members = [statuses[s.cluster_id] for s in tr.samples]
    t = np.array([s.snapshot_time for s in tr.samples])
    delays_ns = np.array([s.centroid_delay for s in tr.samples]) * 1e9
    if snapshot_interval is None:
        snapshot_interval = float(np.median(np.diff(t))) if len(t) > 1 else 1.0
    dt = snapshot_interval

    behaviors = [_make_behavior(BehaviorKind.APPEAR, tr, members[:1], float(t[0]), dt)]

    kinds = [_drift_kind(d, cfg.epsilon_ns_s) for d in _window_drifts(t, delays_ns, cfg.window)]
    for first, last in _runs(kinds):
        kind = kinds[first]
        behaviors.append(_span_behavior(kind, tr, members, t, first, last, dt))
        if kind in (BehaviorKind.APPROACH, BehaviorKind.MOVE_AWAY):
            behaviors.extend(_rate_annotations(tr, members, t, delays_ns, first, last, cfg, dt))

    behaviors.append(_make_behavior(BehaviorKind.DISAPPEAR, tr, members[-1:],
                                    float(t[-1]) - dt, dt))
    behaviors.sort(key=lambda b: (b.start_time, b.kind.value, b.id))
    return behaviors


# Events

@dataclass(frozen=True)
class EventRule:
    """Level 0: `pattern` holds (status label, behavior kind) pairs that must co-occur.
    Level >= 1: `pattern` holds rule names that must occur in order."""
    name: str
    level: int
    pattern: Tuple
    min_overlap: float = 0.0
    max_seq_gap: float = math.inf
    produces: Optional[str] = None

    @property
    def label(self) -> str:
        return self.produces or self.name


def rules_from_list(data: Sequence[dict]) -> List[EventRule]:
    rules = []
    try:
        for item in data:
            level = int(item["level"])
            if level == 0:
                pattern = tuple((str(p["label"]), str(p["kind"])) for p in item["pattern"])
            else:
                pattern = tuple(str(name) for name in item["pattern"])
            gap = item.get("max_seq_gap")
            rules.append(EventRule(
                name=str(item["name"]),
                level=level,
                pattern=pattern,
                min_overlap=float(item.get("min_overlap", 0.0)),
                max_seq_gap=math.inf if gap is None else float(gap),
                produces=item.get("produces"),
            ))
    except (KeyError, TypeError, ValueError) as e:
        raise RuleError(f"Malformed rule set: {e}")
    validate_rules(rules)
    return rules


def load_rules(path: Union[str, Path]) -> List[EventRule]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as e:
        raise RuleError(f"Cannot read rules {path}: {e}")
    return rules_from_list(data)


def behavior_label(behavior: BehaviorSemantic, statuses: Mapping[str, StatusSemantic]) -> str:
    """Majority status label of a behavior's members; ties go to the smaller label"""
    counts = Counter(statuses[sid].label for sid in behavior.statuses if sid in statuses)
    if not counts:
        return UNKNOWN_LABEL
    return min(counts, key=lambda label: (-counts[label], label))


Interval = Tuple[float, float]


def _union(intervals: Sequence[Interval]) -> List[Interval]:
    merged: List[List[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def _intersect(a: Sequence[Interval], b: Sequence[Interval]) -> List[Interval]:
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo, hi = max(a[i][0], b[j][0]), min(a[i][1], b[j][1])
        if hi > lo:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def _overlaps(b: BehaviorSemantic, interval: Interval) -> bool:
    return min(b.end_time, interval[1]) - max(b.start_time, interval[0]) > 0


def _fire_concurrency(rule: EventRule, behaviors: Sequence[BehaviorSemantic],
                      labels: Mapping[str, str]) -> List[EventSemantic]:
    """One event per maximal interval where every pattern pair is active"""
    by_pair: Dict[Tuple[str, str], List[BehaviorSemantic]] = {}
    for label, kind in rule.pattern:
        by_pair[(label, kind)] = [b for b in behaviors
                                  if labels[b.id] == label and BehaviorKind(b.kind).value == kind]

    common: Optional[List[Interval]] = None
    for members in by_pair.values():
        spans = _union([(b.start_time, b.end_time) for b in members])
        common = spans if common is None else _intersect(common, spans)
    if not common:
        return []

    events = []
    for interval in common:
        if interval[1] - interval[0] < rule.min_overlap:
            continue
        contributing = {b.id: b for members in by_pair.values() for b in members
                        if _overlaps(b, interval)}
        ordered = sorted(contributing.values(), key=lambda b: (b.start_time, b.id))
        start, duration = event_hull(ordered)
        events.append(EventSemantic(
            id=make_id("event", rule.name, interval[0]),
            label=rule.label,
            level=0,
            start_time=start,
            duration=duration,
            behaviors=tuple(b.id for b in ordered),
        ))
    return events


def _fire_sequence(rule: EventRule, fired: Mapping[str, List[EventSemantic]]) -> List[EventSemantic]:
    """Earliest-first, non-overlapping occurrences of the named events in order"""
    first_name, rest = rule.pattern[0], rule.pattern[1:]
    events = []
    resume_at = -math.inf
    for head in fired.get(first_name, []):
        if head.start_time < resume_at:
            continue
        chain = [head]
        for name in rest:
            prev = chain[-1]
            nxt = next((e for e in fired.get(name, [])
                        if e.start_time >= prev.start_time and e not in chain
                        and max(0.0, e.start_time - prev.end_time) <= rule.max_seq_gap), None)
            if nxt is None:
                break
            chain.append(nxt)
        if len(chain) != len(rule.pattern):
            continue
        start, duration = event_hull(chain)
        events.append(EventSemantic(
            id=make_id("event", rule.name, head.id),
            label=rule.label,
            level=rule.level,
            start_time=start,
            duration=duration,
            sub_events=tuple(e.id for e in chain),
        ))
        resume_at = start + duration
    return events


def compose_events(behaviors: Sequence[BehaviorSemantic], statuses: Mapping[str, StatusSemantic],
                   rules: Sequence[EventRule]) -> List[EventSemantic]:
    """Fire rules level by level (listed order within a level)"""
    validate_rules(rules)
    labels = {b.id: behavior_label(b, statuses) for b in behaviors}
    fired: Dict[str, List[EventSemantic]] = {}
    events: List[EventSemantic] = []
    for rule in sorted(rules, key=lambda r: r.level):
        if rule.level == 0:
            produced = _fire_concurrency(rule, behaviors, labels)
        else:
            produced = _fire_sequence(rule, fired)
        produced.sort(key=lambda e: (e.start_time, e.id))
        fired[rule.name] = produced
        events.extend(produced)
        if produced:
            logger.debug(f"Rule '{rule.name}' fired {len(produced)} time(s)")
    return events


# Map assembly

def build_semantic_map(snapshots: Sequence[Sequence[Cluster]], trajectories: Sequence[Trajectory],
                       associations: Sequence[Association], rules: Sequence[EventRule],
                       behavior_cfg: Optional[BehaviorConfig] = None,
                       snapshot_interval: Optional[float] = None,
                       gate: float = DEFAULT_GATE,
                       meta: Optional[MapMeta] = None) -> SemanticMap:
    """Statuses for every cluster, behaviors per trajectory, events from the rules.

    `associations[i]` labels the clusters of snapshot i. The result is
    validated; an invalid map raises InvalidMapError.
    """
    if len(associations) != len(snapshots):
        raise ValueError(f"{len(associations)} associations for {len(snapshots)} snapshots")
    status_list: List[StatusSemantic] = []
    by_cluster: Dict[str, StatusSemantic] = {}
    for clusters, assoc in zip(snapshots, associations):
        for cluster in clusters:
            status = characterize_status(cluster, assoc, gate)
            status_list.append(status)
            by_cluster[cluster.id] = status

    behavior_list: List[BehaviorSemantic] = []
    for tr in trajectories:
        behavior_list.extend(classify_behavior(tr, by_cluster, behavior_cfg, snapshot_interval))

    status_index = {s.id: s for s in status_list}
    event_list = compose_events(behavior_list, status_index, rules)

    semantic_map = SemanticMap(events=tuple(event_list), behaviors=tuple(behavior_list),
                               statuses=tuple(status_list), meta=meta or MapMeta())
    report = validate_map(semantic_map)
    if not report.ok:
        raise InvalidMapError(report)
    logger.info(f"🧭 Semantic map: {len(status_list)} statuses, {len(behavior_list)} behaviors, "
                f"{len(event_list)} events")
    return semantic_map
