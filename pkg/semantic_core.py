"""
Semantic triple model CS = {E, B, S}: status, behavior and event semantics,
their structural validation and the JSON-lines map format.
"""
import json
import math
import uuid
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from exceptions import TraceFormatError

MAP_FORMAT_VERSION = 1

# Float slack used when re-checking spans built from the same numbers
TIME_TOL = 1e-9
DELAY_TOL = 1e-12

ID_NAMESPACE = uuid.UUID("6f1c2b7e-8d43-5a0e-9b1f-3c7d2e4a5b60")


def make_id(*parts: Any) -> str:
    """Deterministic UUIDv5 from provenance parts, so reruns reproduce identifiers"""
    return str(uuid.uuid5(ID_NAMESPACE, ":".join(repr(p) if isinstance(p, float) else str(p) for p in parts)))


class BehaviorKind(str, Enum):
    APPROACH = "approach"
    MOVE_AWAY = "move_away"
    APPEAR = "appear"
    DISAPPEAR = "disappear"
    ACCELERATE = "accelerate"
    DECELERATE = "decelerate"
    STATIC = "static"

    def reversed(self) -> 'BehaviorKind':
        """Kind observed when the same span is played backwards in time"""
        return _REVERSED_KIND.get(self, self)


_REVERSED_KIND = {
    BehaviorKind.APPROACH: BehaviorKind.MOVE_AWAY,
    BehaviorKind.MOVE_AWAY: BehaviorKind.APPROACH,
    BehaviorKind.APPEAR: BehaviorKind.DISAPPEAR,
    BehaviorKind.DISAPPEAR: BehaviorKind.APPEAR,
    BehaviorKind.ACCELERATE: BehaviorKind.DECELERATE,
    BehaviorKind.DECELERATE: BehaviorKind.ACCELERATE,
}


@dataclass(frozen=True)
class StatusSemantic:
    """One scatterer as seen in one snapshot: delays and amplitudes of its MPCs"""
    id: str
    label: str
    delays: Tuple[float, ...]
    amplitudes: Tuple[float, ...]
    source_cluster: str
    snapshot_time: float
    # object-status attributes, derived from the cluster
    distance: Optional[float] = None
    total_power: Optional[float] = None
    rms_delay_spread: Optional[float] = None

    @property
    def start_time(self) -> float:
        return self.snapshot_time

    @property
    def end_time(self) -> float:
        return self.snapshot_time


@dataclass(frozen=True)
class BehaviorSemantic:
    """Motion pattern of one trajectory over a time / delay window"""
    id: str
    kind: BehaviorKind
    start_time: float
    duration: float
    delay_start: float
    delay_coverage: float
    statuses: Tuple[str, ...]
    trajectory: str

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


@dataclass(frozen=True)
class EventSemantic:
    """Composition of behaviors (level 0) or of lower-level events (level >= 1)"""
    id: str
    label: str
    level: int
    start_time: float
    duration: float
    behaviors: Tuple[str, ...] = ()
    sub_events: Tuple[str, ...] = ()

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


SemanticRecord = Union[StatusSemantic, BehaviorSemantic, EventSemantic]

RECORD_TYPES = {
    "status": StatusSemantic,
    "behavior": BehaviorSemantic,
    "event": EventSemantic,
}


def record_type(record: SemanticRecord) -> str:
    if isinstance(record, StatusSemantic):
        return "status"
    if isinstance(record, BehaviorSemantic):
        return "behavior"
    return "event"


@dataclass(frozen=True)
class MapMeta:
    trace_id: str = ""
    snapshot_rate: float = 0.0
    carrier: float = 0.0
    bandwidth: float = 0.0
    n_tones: int = 0
    format_version: int = MAP_FORMAT_VERSION


@dataclass(frozen=True)
class SemanticMap:
    """CS = {E, B, S} plus provenance metadata"""
    events: Tuple[EventSemantic, ...] = ()
    behaviors: Tuple[BehaviorSemantic, ...] = ()
    statuses: Tuple[StatusSemantic, ...] = ()
    meta: MapMeta = field(default_factory=MapMeta)

    def records(self) -> Iterator[SemanticRecord]:
        yield from self.statuses
        yield from self.behaviors
        yield from self.events

    def index(self) -> Dict[str, SemanticRecord]:
        return {r.id: r for r in self.records()}

    def counts(self) -> Dict[str, int]:
        return {
            "events": len(self.events),
            "behaviors": len(self.behaviors),
            "statuses": len(self.statuses),
        }


def event_hull(members: Iterable[Union[BehaviorSemantic, EventSemantic]]) -> Tuple[float, float]:
    """(start_time, duration) of the smallest interval covering every member"""
    members = list(members)
    if not members:
        raise ValueError("Event hull of no members")
    start = min(m.start_time for m in members)
    end = max(m.end_time for m in members)
    return start, end - start


@dataclass(frozen=True)
class Violation:
    code: str
    record_id: str
    message: str


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, record_id: str, message: str) -> None:
        self.violations.append(Violation(code, record_id, message))

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def __len__(self) -> int:
        return len(self.violations)


def _check_status(s: StatusSemantic, report: ValidationReport) -> None:
    if not s.delays or len(s.delays) != len(s.amplitudes):
        report.add("status-shape", s.id,
                   f"{len(s.delays)} delays vs {len(s.amplitudes)} amplitudes")
        return
    values = list(s.delays) + list(s.amplitudes)
    if not all(math.isfinite(v) for v in values):
        report.add("status-finite", s.id, "non-finite delay or amplitude")
        return
    if min(s.delays) < 0 or min(s.amplitudes) < 0:
        report.add("status-negative", s.id, "negative delay or amplitude")
    if any(b <= a for a, b in zip(s.delays, s.delays[1:])):
        report.add("status-order", s.id, "delays not strictly ascending")
    if not s.label:
        report.add("status-label", s.id, "empty label")


def _check_behavior(b: BehaviorSemantic, index: Dict[str, SemanticRecord],
                    report: ValidationReport) -> None:
    try:
        BehaviorKind(b.kind)
    except ValueError:
        report.add("behavior-kind", b.id, f"unknown kind '{b.kind}'")
    if not b.duration > 0:
        report.add("behavior-duration", b.id, f"duration {b.duration} is not > 0")
    if b.delay_coverage < 0 or b.delay_start < 0:
        report.add("behavior-delay", b.id, "negative delay start or coverage")
    if not b.statuses:
        report.add("behavior-empty", b.id, "no member statuses")
    lo, hi = b.delay_start, b.delay_start + b.delay_coverage
    for sid in b.statuses:
        status = index.get(sid)
        if not isinstance(status, StatusSemantic):
            report.add("closure", b.id, f"status '{sid}' does not resolve")
            continue
        if not (b.start_time - TIME_TOL <= status.snapshot_time <= b.end_time + TIME_TOL):
            report.add("behavior-time-window", b.id,
                       f"status '{sid}' at {status.snapshot_time} s outside behavior span")
        if status.delays and (min(status.delays) < lo - DELAY_TOL or max(status.delays) > hi + DELAY_TOL):
            report.add("behavior-delay-window", b.id,
                       f"status '{sid}' delays outside [{lo}, {hi}]")


def _check_event(e: EventSemantic, index: Dict[str, SemanticRecord],
                 report: ValidationReport) -> None:
    if not isinstance(e.level, int) or e.level < 0:
        report.add("event-level", e.id, f"level {e.level} is not a non-negative integer")
        return
    if e.duration < 0:
        report.add("event-duration", e.id, "negative duration")

    members: List[Union[BehaviorSemantic, EventSemantic]] = []
    for bid in e.behaviors:
        behavior = index.get(bid)
        if isinstance(behavior, BehaviorSemantic):
            members.append(behavior)
        else:
            report.add("closure", e.id, f"behavior '{bid}' does not resolve")

    sub_levels = []
    for eid in e.sub_events:
        sub = index.get(eid)
        if isinstance(sub, EventSemantic):
            members.append(sub)
            sub_levels.append(sub.level)
        else:
            report.add("closure", e.id, f"sub-event '{eid}' does not resolve")

    if e.level == 0:
        if e.sub_events:
            report.add("event-level", e.id, "level-0 event has sub-events")
        if not e.behaviors:
            report.add("event-empty", e.id, "level-0 event has no behaviors")
    else:
        if not e.sub_events:
            report.add("event-empty", e.id, f"level-{e.level} event has no sub-events")
        elif sub_levels:
            if max(sub_levels) >= e.level:
                report.add("event-level", e.id, "sub-event level not below event level")
            if e.level - 1 not in sub_levels:
                report.add("event-level", e.id, f"no sub-event of level {e.level - 1}")

    if members:
        start, duration = event_hull(members)
        if (not math.isclose(e.start_time, start, abs_tol=TIME_TOL)
                or not math.isclose(e.end_time, start + duration, abs_tol=TIME_TOL)):
            report.add("event-hull", e.id,
                       f"span [{e.start_time}, {e.end_time}] differs from member hull "
                       f"[{start}, {start + duration}]")


def _find_cycles(events: Sequence[EventSemantic], report: ValidationReport) -> None:
    children = {e.id: [s for s in e.sub_events] for e in events}
    state: Dict[str, int] = {}  # 1 = on stack, 2 = done

    for root in children:
        if state.get(root):
            continue
        stack: List[Tuple[str, Iterator[str]]] = [(root, iter(children[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            child = next(it, None)
            if child is None:
                state[node] = 2
                stack.pop()
                continue
            if child not in children:
                continue
            if state.get(child) == 1:
                report.add("event-cycle", child, f"event '{child}' is its own ancestor")
            elif not state.get(child):
                state[child] = 1
                stack.append((child, iter(children[child])))


def validate_map(semantic_map: SemanticMap) -> ValidationReport:
    """Check every structural invariant; an empty report means the map is valid"""
    report = ValidationReport()
    index: Dict[str, SemanticRecord] = {}
    for record in semantic_map.records():
        if record.id in index:
            report.add("duplicate-id", record.id, "identifier used by more than one record")
        index[record.id] = record

    for status in semantic_map.statuses:
        _check_status(status, report)
    for behavior in semantic_map.behaviors:
        _check_behavior(behavior, index, report)
    for event in semantic_map.events:
        _check_event(event, index, report)
    _find_cycles(semantic_map.events, report)
    return report


# JSON-lines codec

def record_to_dict(record: SemanticRecord) -> Dict[str, Any]:
    data = asdict(record)
    if isinstance(record, BehaviorSemantic):
        data["kind"] = BehaviorKind(record.kind).value
    for key, value in data.items():
        if isinstance(value, tuple):
            data[key] = list(value)
    return {"record_type": record_type(record), **data}


def record_from_dict(data: Dict[str, Any]) -> SemanticRecord:
    data = dict(data)
    kind = data.pop("record_type", None)
    if kind not in RECORD_TYPES:
        raise TraceFormatError(f"Unknown record type '{kind}'")
    cls = RECORD_TYPES[kind]
    for key, value in data.items():
        if isinstance(value, list):
            data[key] = tuple(value)
    try:
        if cls is BehaviorSemantic:
            data["kind"] = BehaviorKind(data["kind"])
        return cls(**data)
    except (KeyError, TypeError, ValueError) as e:
        raise TraceFormatError(f"Malformed {kind} record: {e}")


def dumps_map(semantic_map: SemanticMap) -> str:
    """Serialize to JSON lines: one meta line, then statuses, behaviors, events"""
    lines = [json.dumps({"record_type": "meta", **asdict(semantic_map.meta)})]
    lines.extend(json.dumps(record_to_dict(r)) for r in semantic_map.records())
    return "\n".join(lines) + "\n"


def loads_map(text: str) -> SemanticMap:
    meta = MapMeta()
    buckets: Dict[str, list] = {"status": [], "behavior": [], "event": []}
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"Line {line_no}: invalid JSON ({e})")
        if not isinstance(data, dict):
            raise TraceFormatError(f"Line {line_no}: expected a JSON object")
        if data.get("record_type") == "meta":
            data.pop("record_type")
            if data.get("format_version") != MAP_FORMAT_VERSION:
                raise TraceFormatError(
                    f"Unsupported map format version {data.get('format_version')}")
            try:
                meta = MapMeta(**data)
            except TypeError as e:
                raise TraceFormatError(f"Line {line_no}: malformed meta ({e})")
            continue
        record = record_from_dict(data)
        buckets[record_type(record)].append(record)
    return SemanticMap(
        events=tuple(buckets["event"]),
        behaviors=tuple(buckets["behavior"]),
        statuses=tuple(buckets["status"]),
        meta=meta,
    )


def write_map(semantic_map: SemanticMap, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_map(semantic_map), encoding='utf-8')
    return path


def read_map(path: Union[str, Path]) -> SemanticMap:
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise TraceFormatError(f"Cannot read semantic map {path}: {e}")
    return loads_map(text)
