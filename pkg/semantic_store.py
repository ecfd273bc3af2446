"""
Persistent semantic store
Append-only JSON-lines log of semantic records with periodic full snapshots,
plus stored-fact queries over status / behavior / event semantics.
"""
import json
import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

from exceptions import InvalidMapError, StorageError, TraceFormatError, UnknownIdError, QueryError
from semantic_core import (
    BehaviorKind, BehaviorSemantic, EventSemantic, SemanticMap, SemanticRecord,
    StatusSemantic, record_from_dict, record_to_dict, record_type, validate_map,
    MAP_FORMAT_VERSION,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StoreReceipt:
    """Counts of the stored map, per record level"""
    events: int
    behaviors: int
    statuses: int
    event_levels: Dict[int, int] = field(default_factory=dict)
    written: int = 0

    def counts(self) -> Tuple[int, int, int]:
        return self.events, self.behaviors, self.statuses


@dataclass(frozen=True)
class SemanticQuery:
    """Conjunction of the predicates that are set; unset fields match everything.

    `ancestors_of` / `descendants_of` follow event composition links. With
    `through_members` they also walk event -> behavior -> status membership.
    """
    time_interval: Optional[Tuple[float, float]] = None
    label: Optional[str] = None
    kind: Optional[str] = None
    delay_window: Optional[Tuple[float, float]] = None
    ancestors_of: Optional[str] = None
    descendants_of: Optional[str] = None
    record_type: Optional[str] = None
    level: Optional[int] = None
    through_members: bool = False

    def validate(self) -> None:
        for name in ("time_interval", "delay_window"):
            window = getattr(self, name)
            if window is not None and (len(window) != 2 or window[0] > window[1]):
                raise QueryError(f"{name} must be an ordered (lo, hi) pair")
        if self.kind is not None:
            try:
                BehaviorKind(self.kind)
            except ValueError:
                raise QueryError(f"Unknown behavior kind '{self.kind}'")
        if self.record_type is not None and self.record_type not in ("status", "behavior", "event"):
            raise QueryError(f"Unknown record type '{self.record_type}'")
        if self.level is not None and self.level < 0:
            raise QueryError("level must be >= 0")


def children_of(record: SemanticRecord, members: bool = True) -> Tuple[str, ...]:
    """Sub-events of an event; with `members` also its behaviors and a behavior's statuses"""
    if isinstance(record, EventSemantic):
        return tuple(record.sub_events) + (tuple(record.behaviors) if members else ())
    if isinstance(record, BehaviorSemantic) and members:
        return tuple(record.statuses)
    return ()


def record_span(record: SemanticRecord) -> Tuple[float, float]:
    return record.start_time, record.end_time


def record_delay_span(record: SemanticRecord) -> Optional[Tuple[float, float]]:
    if isinstance(record, StatusSemantic):
        return min(record.delays), max(record.delays)
    if isinstance(record, BehaviorSemantic):
        return record.delay_start, record.delay_start + record.delay_coverage
    return None


def matches(record: SemanticRecord, q: SemanticQuery) -> bool:
    """Field predicates of a query (graph predicates are resolved by the store)"""
    if q.record_type is not None and record_type(record) != q.record_type:
        return False
    if q.time_interval is not None:
        lo, hi = q.time_interval
        start, end = record_span(record)
        if start > hi or end < lo:
            return False
    if q.label is not None and getattr(record, "label", None) != q.label:
        return False
    if q.kind is not None:
        if not isinstance(record, BehaviorSemantic) or BehaviorKind(record.kind) != BehaviorKind(q.kind):
            return False
    if q.delay_window is not None:
        span = record_delay_span(record)
        if span is None or span[0] > q.delay_window[1] or span[1] < q.delay_window[0]:
            return False
    if q.level is not None:
        if not isinstance(record, EventSemantic) or record.level != q.level:
            return False
    return True


def sort_key(record: SemanticRecord) -> Tuple[float, str]:
    return record.start_time, record.id


class SemanticStore:
    """Single-file store of semantic records.

    The log holds one line per changed record, a `commit` line per stored map and
    a `snapshot` line (full state) every `snapshot_every` commits; loading replays
    from the last snapshot. Writes are serialized; reads share the same lock.
    """

    def __init__(self, path: Union[str, Path], snapshot_every: int = 10):
        self.path = Path(path)
        self.snapshot_every = max(1, snapshot_every)
        self._records: "OrderedDict[str, SemanticRecord]" = OrderedDict()
        self._parents: Dict[str, Set[str]] = {}
        self._commits = 0
        self._lock = threading.RLock()
        self._load()

    def _load(self) -> None:
        """Replay the log file"""
        if not self.path.exists():
            return
        try:
            with open(self.path, 'r', encoding='utf-8') as f:
                lines = f.readlines()
        except OSError as e:
            raise StorageError(f"Cannot read store {self.path}: {e}")

        for line_no, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                kind = entry.get("record_type")
                if kind == "snapshot":
                    self._records.clear()
                    for item in entry["records"]:
                        record = record_from_dict(item)
                        self._records[record.id] = record
                elif kind == "commit":
                    self._commits += 1
                else:
                    record = record_from_dict(entry)
                    self._records[record.id] = record
            except (json.JSONDecodeError, AttributeError, KeyError, TypeError, ValueError,
                    TraceFormatError) as e:
                raise StorageError(f"Corrupted store {self.path} at line {line_no}: {e}")
        self._rebuild_parents()
        logger.debug(f"Loaded {len(self._records)} records from {self.path}")

    def _rebuild_parents(self) -> None:
        self._parents = {}
        for record in self._records.values():
            for child in children_of(record):
                self._parents.setdefault(child, set()).add(record.id)

    def _append(self, entries: Iterable[dict]) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, 'a', encoding='utf-8') as f:
                for entry in entries:
                    f.write(json.dumps(entry) + "\n")
        except OSError as e:
            raise StorageError(f"Cannot write store {self.path}: {e}")

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def get(self, record_id: str) -> SemanticRecord:
        with self._lock:
            self._require(record_id)
            return self._records[record_id]

    def records(self) -> List[SemanticRecord]:
        with self._lock:
            return list(self._records.values())

    def store(self, semantic_map: SemanticMap) -> StoreReceipt:
        """Persist a valid map; identical records are not written twice"""
        report = validate_map(semantic_map)
        if not report.ok:
            raise InvalidMapError(report)

        with self._lock:
            changed = [r for r in semantic_map.records()
                       if self._records.get(r.id) != r]
            if changed:
                entries = [record_to_dict(r) for r in changed]
                entries.append({"record_type": "commit",
                                "format_version": MAP_FORMAT_VERSION,
                                "trace_id": semantic_map.meta.trace_id,
                                **semantic_map.counts()})
                self._append(entries)
                for record in changed:
                    self._records[record.id] = record
                self._commits += 1
                if self._commits % self.snapshot_every == 0:
                    self._append([{"record_type": "snapshot",
                                   "records": [record_to_dict(r) for r in self._records.values()]}])
                self._rebuild_parents()

        levels: Dict[int, int] = {}
        for event in semantic_map.events:
            levels[event.level] = levels.get(event.level, 0) + 1
        counts = semantic_map.counts()
        logger.info(f"💾 Stored map '{semantic_map.meta.trace_id}': {counts}, "
                    f"{len(changed)} record(s) written")
        return StoreReceipt(events=counts["events"], behaviors=counts["behaviors"],
                            statuses=counts["statuses"], event_levels=levels,
                            written=len(changed))

    def _closure(self, start: str, edges) -> Set[str]:
        seen: Set[str] = set()
        frontier = list(edges(start))
        while frontier:
            node = frontier.pop()
            if node in seen:
                continue
            seen.add(node)
            frontier.extend(edges(node))
        return seen

    def _require(self, record_id: str) -> None:
        if record_id not in self._records:
            raise UnknownIdError(f"Unknown identifier '{record_id}'")

    def ancestors(self, record_id: str, members: bool = False) -> Set[str]:
        """Events composed (transitively) of the record; with `members` also containing behaviors"""
        with self._lock:
            self._require(record_id)

            def parents(i: str):
                found = self._parents.get(i, ())
                if members:
                    return found
                return [p for p in found if isinstance(self._records.get(p), EventSemantic)]

            return self._closure(record_id, parents)

    def descendants(self, record_id: str, members: bool = False) -> Set[str]:
        """Sub-events down every level; with `members` also behaviors and statuses"""
        with self._lock:
            self._require(record_id)
            return self._closure(
                record_id,
                lambda i: children_of(self._records[i], members) if i in self._records else ())

    def query(self, q: SemanticQuery) -> List[SemanticRecord]:
        """Records satisfying every set predicate, ordered by start time then id"""
        q.validate()
        with self._lock:
            allowed: Optional[Set[str]] = None
            if q.ancestors_of is not None:
                allowed = self.ancestors(q.ancestors_of, q.through_members)
            if q.descendants_of is not None:
                below = self.descendants(q.descendants_of, q.through_members)
                allowed = below if allowed is None else allowed & below
            candidates = (self._records.values() if allowed is None
                          else (self._records[i] for i in allowed if i in self._records))
            results = [r for r in candidates if matches(r, q)]
        results.sort(key=sort_key)
        return results


def store_semantics(store: SemanticStore, semantic_map: SemanticMap) -> StoreReceipt:
    return store.store(semantic_map)


def query(store: SemanticStore, q: SemanticQuery) -> List[SemanticRecord]:
    return store.query(q)
