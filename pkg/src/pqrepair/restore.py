"""Restore unobserved events of partial traces and annotate them for solving.

The first oracle completes each partial case trace into a full source-to-sink
transition path through the process skeleton, inserting events that carry
only an activity and a case identifier.  The second oracle annotates every
event with the statically linked resource/queue identifiers and their timing
parameters, and assembles the intermediate run: the explicit order that must
hold in any completion (case chains plus resource/queue adjacency among
observed events).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import AlignmentError, CyclicProcessError
from .event_log import MultiEntityLog, RunEdge, sequential_view
from .model import PQRSystem, fifo_pairs, is_acyclic, transition_binding, _linked


@dataclass(frozen=True)
class TraceStep:
    """One position of a completed case trace."""

    event_id: str
    act: str
    transition_id: str
    time: int | None
    observed: bool


@dataclass(frozen=True)
class CompletedTrace:
    pid: str
    steps: tuple[TraceStep, ...]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunEvent:
    """Event of the intermediate run with resource/queue annotations.

    ``role`` is ``start``, ``complete``, or ``atomic`` (source and sink
    transitions).  Unobserved events have ``time`` ``None``.  Fresh
    placeholder resources of atomic events are encoded as ``rid None`` with
    zero durations.
    """

    event_id: str
    pid: str
    act: str
    role: str
    transition_id: str
    time: int | None
    rid: str | None
    tsr: int
    twr: int
    qid_in: str | None
    twq_in: int
    qid_out: str | None
    twq_out: int
    start_event_id: str | None = None  # for completes: the paired start

    @property
    def observed(self) -> bool:
        return self.time is not None

    @property
    def qid(self) -> str | None:
        """The one queue this event touches (dequeued or enqueued)."""
        if self.role == "start":
            return self.qid_in
        if self.role == "complete":
            return self.qid_out
        return self.qid_in if self.qid_in is not None else self.qid_out


@dataclass(frozen=True)
class IntermediateRun:
    """All events of the completed cases plus the order that must hold."""

    events: tuple[RunEvent, ...]
    traces: tuple[tuple[str, tuple[str, ...]], ...]  # (pid, event ids in order)
    edges: tuple[RunEdge, ...]
    fifo: frozenset[tuple[str, str]]
    warnings: tuple[str, ...] = ()
    index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.index.update({e.event_id: e for e in self.events})

    def event(self, event_id: str) -> RunEvent:
        return self.index[event_id]

    def trace(self, pid: str) -> tuple[str, ...]:
        for case, ids in self.traces:
            if case == pid:
                return ids
        raise KeyError(pid)


# -- oracle 1: complete partial traces over the skeleton ---------------------


class _PathFinder:
    """Shortest transition paths over the acyclic skeleton, with path counts."""

    def __init__(self, system: PQRSystem):
        analysis = _linked(system)
        sk = system.process.skeleton
        self.label_of = {t.id: t.label for t in sk.transitions}
        self.kind_of = {t.id: t.kind for t in sk.transitions}
        self.by_label: dict[str, list[str]] = {}
        for t in sk.transitions:
            self.by_label.setdefault(t.label, []).append(t.id)
        self.succ: dict[str, list[str]] = {t.id: [] for t in sk.transitions}
        for t in sk.transitions:
            for p in analysis.post.get(t.id, []):
                self.succ[t.id].extend(analysis.post.get(p, []))

    def shortest(self, src: str, dst: str):
        """(length, lexicographically smallest path, path count) or None.

        The path lists transitions strictly after ``src`` up to and
        including ``dst``; length is the number of hops.
        """
        dist: dict[str, int] = {dst: 0}
        count: dict[str, int] = {dst: 1}
        order = self._reverse_topo(src)
        for node in order:
            if node == dst:
                continue
            best = None
            total = 0
            for nxt in self.succ[node]:
                if nxt in dist:
                    if best is None or dist[nxt] + 1 < best:
                        best = dist[nxt] + 1
                        total = count[nxt]
                    elif dist[nxt] + 1 == best:
                        total = min(2, total + count[nxt])
            if best is not None:
                dist[node] = best
                count[node] = min(2, total)
        if src not in dist:
            return None
        path = []
        node = src
        while node != dst:
            step = min(
                (nxt for nxt in self.succ[node] if dist.get(nxt) == dist[node] - 1),
                key=lambda n: (self.label_of[n], n),
            )
            path.append(step)
            node = step
        return dist[src], tuple(path), count[src]

    def _reverse_topo(self, start: str) -> list[str]:
        seen: set[str] = set()
        order: list[str] = []

        def visit(node: str) -> None:
            if node in seen:
                return
            seen.add(node)
            for nxt in self.succ[node]:
                visit(nxt)
            order.append(node)

        visit(start)
        return order


def oracle_o1(partial: MultiEntityLog, system: PQRSystem) -> tuple[CompletedTrace, ...]:
    """Complete every partial case trace into a full source-to-sink path.

    Observed events are never reordered, dropped, or retimed; inserted
    events carry only activity and case identifier.  Several shortest
    completions trigger an ``ambiguous completion`` warning and the
    lexicographically smallest label sequence is chosen.
    """
    if not is_acyclic(system):
        raise CyclicProcessError("trace completion requires an acyclic process skeleton")
    finder = _PathFinder(system)
    view = sequential_view(partial)  # rejects non-monotone input
    events_by_id = {e.event_id: e for e in partial.events}

    completed = []
    for trace in view.get("pid", ()):
        observed = [events_by_id[i] for i in trace.events]
        pid = trace.ident
        if len(observed) < 2:
            raise AlignmentError(f"case {pid}: needs at least entry and exit observed, got {len(observed)} event(s)")
        for e in observed:
            if e.act not in finder.by_label:
                raise AlignmentError(f"case {pid}: observed label {e.act!r} is not in the model")

        matches: list[str] = []
        warnings: list[str] = []
        first_candidates = [t for t in finder.by_label[observed[0].act] if finder.kind_of[t] == "source"]
        if not first_candidates:
            raise AlignmentError(
                f"case {pid}: first observed event {observed[0].event_id} ({observed[0].act!r}) "
                "is not a source transition; the case entry was not recorded"
            )
        matches.append(first_candidates[0])
        inserted: list[list[str]] = []
        for prev, nxt in zip(observed, observed[1:]):
            options = []
            for candidate in finder.by_label[nxt.act]:
                found = finder.shortest(matches[-1], candidate)
                if found is not None:
                    options.append((found[0], found[1], found[2], candidate))
            if not options:
                raise AlignmentError(
                    f"case {pid}: no path connects observed {prev.act!r} ({prev.event_id}) to {nxt.act!r} ({nxt.event_id})"
                )
            options.sort(key=lambda o: (o[0], tuple(self_labels(finder, o[1])), o[3]))
            best = options[0]
            ambiguous = best[2] > 1 or (len(options) > 1 and options[1][0] == best[0])
            if ambiguous:
                warnings.append(
                    f"case {pid}: ambiguous completion between {prev.act!r} and {nxt.act!r}; "
                    "picked the shortest, lexicographically smallest path"
                )
            inserted.append(list(best[1]))
            matches.append(best[3])
        if finder.kind_of[matches[-1]] != "sink":
            raise AlignmentError(
                f"case {pid}: last observed event {observed[-1].event_id} ({observed[-1].act!r}) "
                "is not a sink transition; the case exit was not recorded"
            )

        steps: list[TraceStep] = []

        def push(tid: str, event=None):
            if event is not None:
                steps.append(TraceStep(event.event_id, event.act, tid, event.time, True))
            else:
                steps.append(TraceStep(f"u:{pid}:{len(steps)}", finder.label_of[tid], tid, None, False))

        push(matches[0], observed[0])
        for gap, event, match in zip(inserted, observed[1:], matches[1:]):
            for tid in gap[:-1]:
                push(tid)
            push(match, event)
        completed.append(CompletedTrace(pid=pid, steps=tuple(steps), warnings=tuple(warnings)))
    return tuple(completed)


def self_labels(finder: _PathFinder, path: tuple[str, ...]) -> tuple[str, ...]:
    return tuple(finder.label_of[t] for t in path)


# -- oracle 2: annotate and order --------------------------------------------


def _role(kind: str) -> str:
    return "atomic" if kind in ("source", "sink") else kind


def oracle_o2(traces: tuple[CompletedTrace, ...], system: PQRSystem) -> IntermediateRun:
    """Annotate completed traces with resource/queue facets and build the run.

    The explicit order contains the full case chains plus resource- and
    queue-typed adjacency among observed (timestamped) events; unobserved
    events stay unordered across cases until the solver assigns bounds.
    """
    events: list[RunEvent] = []
    trace_ids = []
    for trace in traces:
        ids = []
        last_start: RunEvent | None = None
        for step in trace.steps:
            facets = transition_binding(system, step.transition_id)
            event = RunEvent(
                event_id=step.event_id,
                pid=trace.pid,
                act=step.act,
                role=_role(facets.role),
                transition_id=step.transition_id,
                time=step.time,
                rid=facets.rid,
                tsr=facets.tsr,
                twr=facets.twr,
                qid_in=facets.qid_in,
                twq_in=facets.twq_in,
                qid_out=facets.qid_out,
                twq_out=facets.twq_out,
                start_event_id=last_start.event_id if facets.role == "complete" else None,
            )
            last_start = event if facets.role == "start" else None
            events.append(event)
            ids.append(step.event_id)
        trace_ids.append((trace.pid, tuple(ids)))

    edges: list[RunEdge] = []
    for pid, ids in trace_ids:
        for a, b in zip(ids, ids[1:]):
            edges.append(RunEdge(src=a, dst=b, et="pid", ident=pid))
    for et, key in (("rid", lambda e: e.rid), ("qid", lambda e: e.qid)):
        groups: dict[str, list[RunEvent]] = {}
        for e in events:
            ident = key(e)
            if ident is not None and e.observed:
                groups.setdefault(ident, []).append(e)
        for ident in sorted(groups):
            ordered = sorted(groups[ident], key=lambda e: e.time)
            for a, b in zip(ordered, ordered[1:]):
                edges.append(RunEdge(src=a.event_id, dst=b.event_id, et=et, ident=ident))

    warnings = tuple(w for trace in traces for w in trace.warnings)
    return IntermediateRun(
        events=tuple(events),
        traces=tuple(trace_ids),
        edges=tuple(edges),
        fifo=fifo_pairs(system),
        warnings=warnings,
    )


def start_subtrace(events) -> tuple:
    """The start events of one case trace, in order.

    Atomic (source/sink) events count as start events; their service time is
    that of their fresh or linked resource.  Rejects traces whose start and
    complete events do not alternate.
    """
    expecting_complete = False
    theta = []
    for e in events:
        if expecting_complete and e.role != "complete":
            raise AlignmentError(f"malformed alternation: expected a complete event, got {e.event_id} ({e.role})")
        if not expecting_complete and e.role == "complete":
            raise AlignmentError(f"malformed alternation: unexpected complete event {e.event_id}")
        if e.role != "complete":
            theta.append(e)
        expecting_complete = e.role == "start"
    if expecting_complete:
        raise AlignmentError("malformed alternation: trace ends on an open start event")
    return tuple(theta)
