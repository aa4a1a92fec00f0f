"""Multi-entity event logs: parsing, views, and the system-level run.

An event log is a table of events where several columns (``pid``, ``rid``,
``qid``) identify entities: process cases, resources, and queues.  The same
log can be viewed as one sequential trace per entity, or as a single strict
partial order over all events (the system-level run) whose edges are typed
by the entity along which two events are adjacent in time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import LogParseError, NonMonotoneError

ENTITY_COLUMNS = ("pid", "rid", "qid")
CSV_COLUMNS = ("event_id", "pid", "activity", "time", "rid", "qid", "tmin", "tmax")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 timestamp or integer-millisecond string to epoch ms."""
    text = text.strip()
    if not text:
        raise ValueError("empty timestamp")
    try:
        return int(text)
    except ValueError:
        pass
    raw = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ValueError(f"unparseable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return round((dt - _EPOCH).total_seconds() * 1000)


def format_timestamp(ms: int) -> str:
    """Format epoch milliseconds as ISO-8601 (UTC, no timezone suffix)."""
    seconds, millis = divmod(ms, 1000)
    dt = datetime.fromtimestamp(seconds, tz=timezone.utc)
    base = dt.strftime("%Y-%m-%dT%H:%M:%S")
    return f"{base}.{millis:03d}" if millis else base


@dataclass(frozen=True)
class Event:
    """One row of a multi-entity event log.

    ``time``, ``tmin`` and ``tmax`` are integer epoch milliseconds; ``None``
    encodes an undefined attribute.  ``tmin``/``tmax`` are produced by repair.
    """

    event_id: str
    act: str
    time: int | None = None
    pid: str | None = None
    rid: str | None = None
    qid: str | None = None
    tmin: int | None = None
    tmax: int | None = None
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.act:
            raise ValueError(f"event {self.event_id}: activity must be defined")
        if self.tmin is not None and self.tmax is not None and self.tmin > self.tmax:
            raise ValueError(f"event {self.event_id}: tmin > tmax")
        if self.time is not None:
            if self.tmin is not None and self.tmin > self.time:
                raise ValueError(f"event {self.event_id}: tmin > time")
            if self.tmax is not None and self.time > self.tmax:
                raise ValueError(f"event {self.event_id}: time > tmax")

    def entity(self, et: str) -> str | None:
        if et not in ENTITY_COLUMNS:
            raise KeyError(f"unknown entity type {et!r}")
        return getattr(self, et)


@dataclass(frozen=True)
class MultiEntityLog:
    """An ordered collection of events with designated entity-type columns."""

    events: tuple[Event, ...]
    entity_types: tuple[str, ...] = ENTITY_COLUMNS

    def __post_init__(self):
        seen = set()
        for e in self.events:
            if e.event_id in seen:
                raise LogParseError(f"duplicate event_id {e.event_id!r}")
            seen.add(e.event_id)
        bad = [et for et in self.entity_types if et not in ENTITY_COLUMNS]
        if bad or not self.entity_types:
            raise LogParseError(f"entity types must be a non-empty subset of {ENTITY_COLUMNS}, got {self.entity_types}")

    def __len__(self) -> int:
        return len(self.events)

    def by_id(self, event_id: str) -> Event:
        for e in self.events:
            if e.event_id == event_id:
                return e
        raise KeyError(event_id)

    def identifiers(self, et: str) -> tuple[str, ...]:
        """All identifier values of entity type ``et``, in first-seen order."""
        out: list[str] = []
        for e in self.events:
            v = e.entity(et)
            if v is not None and v not in out:
                out.append(v)
        return tuple(out)

    def correlated(self, et: str, ident: str) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.entity(et) == ident)


@dataclass(frozen=True)
class Trace:
    """All events of one entity, ordered by time."""

    et: str
    ident: str
    events: tuple[str, ...]


@dataclass(frozen=True)
class RunEdge:
    """Directly-precedes edge typed by the entity that induces it."""

    src: str
    dst: str
    et: str
    ident: str


@dataclass(frozen=True)
class SystemRun:
    """Strict partial order over events; edges are per-entity adjacency."""

    events: tuple[Event, ...]
    edges: tuple[RunEdge, ...]

    def successors(self, event_id: str) -> tuple[str, ...]:
        return tuple(e.dst for e in self.edges if e.src == event_id)

    def closure(self) -> set[tuple[str, str]]:
        """Transitive closure of the untyped edge set."""
        adj: dict[str, set[str]] = {}
        for e in self.edges:
            adj.setdefault(e.src, set()).add(e.dst)
        reach: dict[str, set[str]] = {}

        def visit(node: str) -> set[str]:
            if node in reach:
                return reach[node]
            reach[node] = set()
            acc: set[str] = set()
            for nxt in adj.get(node, ()):
                acc.add(nxt)
                acc |= visit(nxt)
            reach[node] = acc
            return acc

        pairs: set[tuple[str, str]] = set()
        for e in self.events:
            for dst in visit(e.event_id):
                pairs.add((e.event_id, dst))
        return pairs


@dataclass(frozen=True)
class CompletenessReport:
    time_complete: bool
    monotone: bool
    violations: tuple[tuple[str, str, str], ...]  # (kind, event_id, event_id_or_detail)


def _row_value(row: dict[str, str], column: str | None) -> str | None:
    if column is None:
        return None
    cell = row.get(column, "")
    cell = cell.strip() if cell else ""
    if cell in ("", "⊥"):  # empty or the bottom symbol
        return None
    return cell


def parse_log(source: str | io.TextIOBase, columns: dict[str, str] | None = None) -> MultiEntityLog:
    """Parse a CSV event log.

    ``columns`` maps canonical names (event_id, pid, activity, time, rid,
    qid, tmin, tmax) to the actual header names; unmapped canonical names
    default to themselves.  Entity columns absent from the header simply do
    not become entity types of the parsed log.
    """
    text = source.read() if hasattr(source, "read") else source
    mapping = {name: name for name in CSV_COLUMNS}
    if columns:
        unknown = set(columns) - set(CSV_COLUMNS)
        if unknown:
            raise LogParseError(f"unknown column mappings: {sorted(unknown)}")
        mapping.update(columns)

    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise LogParseError("empty input: missing CSV header")
    header = [h.strip() for h in reader.fieldnames]
    for required in ("event_id", "activity"):
        if mapping[required] not in header:
            raise LogParseError(f"missing required column {mapping[required]!r}")

    present = {name for name in CSV_COLUMNS if mapping[name] in header}
    entity_types = tuple(et for et in ENTITY_COLUMNS if et in present)
    if not entity_types:
        raise LogParseError("log defines no entity column (pid/rid/qid)")

    events: list[Event] = []
    for lineno, row in enumerate(reader, start=2):
        if row.get(mapping["event_id"]) is None and all(v in (None, "") for v in row.values()):
            continue  # trailing blank line
        try:
            times: dict[str, int | None] = {}
            for name in ("time", "tmin", "tmax"):
                raw = _row_value(row, mapping[name] if name in present else None)
                times[name] = parse_timestamp(raw) if raw is not None else None
            event = Event(
                event_id=_row_value(row, mapping["event_id"]) or "",
                act=_row_value(row, mapping["activity"]) or "",
                time=times["time"],
                pid=_row_value(row, mapping["pid"] if "pid" in present else None),
                rid=_row_value(row, mapping["rid"] if "rid" in present else None),
                qid=_row_value(row, mapping["qid"] if "qid" in present else None),
                tmin=times["tmin"],
                tmax=times["tmax"],
            )
        except ValueError as exc:
            raise LogParseError(f"row {lineno}: {exc}") from exc
        if not event.event_id:
            raise LogParseError(f"row {lineno}: missing event_id")
        events.append(event)

    try:
        return MultiEntityLog(events=tuple(events), entity_types=entity_types)
    except LogParseError as exc:
        raise LogParseError(str(exc)) from None


def serialize_log(log: MultiEntityLog) -> str:
    """Serialize a log back to CSV; inverse of :func:`parse_log`."""
    has_interval = any(e.tmin is not None or e.tmax is not None for e in log.events)
    cols = ["event_id"]
    if "pid" in log.entity_types:
        cols.append("pid")
    cols.append("activity")
    cols.append("time")
    for et in ("rid", "qid"):
        if et in log.entity_types:
            cols.append(et)
    if has_interval:
        cols += ["tmin", "tmax"]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for e in log.events:
        row = []
        for col in cols:
            if col == "event_id":
                row.append(e.event_id)
            elif col == "activity":
                row.append(e.act)
            elif col in ("time", "tmin", "tmax"):
                value = getattr(e, "time" if col == "time" else col)
                row.append(format_timestamp(value) if value is not None else "")
            else:
                row.append(getattr(e, col) or "")
        writer.writerow(row)
    return buf.getvalue()


def _tie_pairs(log: MultiEntityLog) -> list[tuple[str, str, str]]:
    """Pairs of same-entity events sharing a timestamp."""
    ties = []
    for et in log.entity_types:
        for ident in log.identifiers(et):
            timed = [e for e in log.correlated(et, ident) if e.time is not None]
            timed.sort(key=lambda e: e.time)
            for a, b in zip(timed, timed[1:]):
                if a.time == b.time:
                    ties.append((f"{et}={ident}", a.event_id, b.event_id))
    return ties


def check_completeness(log: MultiEntityLog) -> CompletenessReport:
    """Diagnose time-completeness and monotonicity.

    A log is time-complete when every event carries a timestamp and at least
    one defined entity identifier; monotone when no two events of the same
    entity share a timestamp.
    """
    violations: list[tuple[str, str, str]] = []
    complete = True
    for e in log.events:
        if e.time is None:
            complete = False
            violations.append(("no-time", e.event_id, ""))
        if all(e.entity(et) is None for et in log.entity_types):
            complete = False
            violations.append(("no-entity", e.event_id, ""))
    ties = _tie_pairs(log)
    violations.extend(("tie", a, b) for _, a, b in ties)
    return CompletenessReport(
        time_complete=complete,
        monotone=not ties,
        violations=tuple(violations),
    )


def _require_monotone(log: MultiEntityLog) -> None:
    ties = _tie_pairs(log)
    if ties:
        raise NonMonotoneError(
            f"log is not monotone: {len(ties)} same-entity timestamp tie(s)", ties=ties
        )


def sequential_view(log: MultiEntityLog) -> dict[str, tuple[Trace, ...]]:
    """One time-ordered trace per entity, grouped by entity type.

    Rejects non-monotone logs (the view would not be unique) and events that
    carry an entity identifier but no timestamp (their position would be
    arbitrary).
    """
    _require_monotone(log)
    view: dict[str, tuple[Trace, ...]] = {}
    for et in log.entity_types:
        traces = []
        for ident in sorted(log.identifiers(et)):
            correlated = log.correlated(et, ident)
            untimed = [e.event_id for e in correlated if e.time is None]
            if untimed:
                raise NonMonotoneError(
                    f"events without timestamp cannot be ordered in trace {et}={ident}: {untimed}"
                )
            ordered = tuple(e.event_id for e in sorted(correlated, key=lambda e: e.time))
            traces.append(Trace(et=et, ident=ident, events=ordered))
        view[et] = tuple(traces)
    return view


def derive_system_run(log: MultiEntityLog) -> SystemRun:
    """Build the system-level run: per-entity adjacency over timestamped events.

    Events without a timestamp stay isolated (no incident edges).
    """
    _require_monotone(log)
    edges: list[RunEdge] = []
    for et in log.entity_types:
        for ident in sorted(log.identifiers(et)):
            timed = [e for e in log.correlated(et, ident) if e.time is not None]
            timed.sort(key=lambda e: e.time)
            for a, b in zip(timed, timed[1:]):
                edges.append(RunEdge(src=a.event_id, dst=b.event_id, et=et, ident=ident))
    return SystemRun(events=log.events, edges=tuple(edges))


def project_run(run: SystemRun, et: str, ident: str | None = None) -> SystemRun:
    """Restrict a run to one entity type (and optionally one identifier)."""
    if et not in ENTITY_COLUMNS:
        raise KeyError(f"unknown entity type {et!r}")
    keep = tuple(
        e for e in run.events
        if e.entity(et) is not None and (ident is None or e.entity(et) == ident)
    )
    kept_ids = {e.event_id for e in keep}
    edges = tuple(
        edge for edge in run.edges
        if edge.et == et and (ident is None or edge.ident == ident)
        and edge.src in kept_ids and edge.dst in kept_ids
    )
    return SystemRun(events=keep, edges=edges)
