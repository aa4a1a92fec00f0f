"""Timed coloured-token replay of event logs on process, resource, and queue nets.

Tokens carry identifier values, (identifier, value) pairs, or identifier
lists (queue contents).  Arc inscriptions are restricted to five forms:
plain variables, fresh-identifier creation, pairing, list append, and list
head removal.  A trace replays when, after advancing the clock to each
event's timestamp, a transition carrying the event's activity label can
fire under the binding induced by the event's attributes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IncompleteLogError, PqrError
from .event_log import Event, MultiEntityLog, sequential_view
from .model import PQRSystem, QueueProclet, ResourceProclet, _linked

# -- values and arc expressions ---------------------------------------------


@dataclass(frozen=True)
class Pair:
    first: str
    second: "Value"


Value = object  # str | Pair | tuple[str, ...]


def value_key(v: Value) -> str:
    """Stable ordering key for values."""
    if isinstance(v, Pair):
        return f"({v.first},{value_key(v.second)})"
    if isinstance(v, tuple):
        return "[" + ",".join(v) + "]"
    return str(v)


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Fresh:
    """Creates a never-seen identifier when fired (bound from the event)."""

    name: str


@dataclass(frozen=True)
class PairExpr:
    name: str
    sub: "ArcExpr"


@dataclass(frozen=True)
class Append:
    """List with an identifier appended at the end."""

    list_name: str
    item_name: str


@dataclass(frozen=True)
class Cons:
    """Identifier at the head of a list; matching binds the remainder."""

    item_name: str
    list_name: str


ArcExpr = object  # Var | Fresh | PairExpr | Append | Cons


class FreshPool:
    """Draws fresh identifiers and enforces that each is used only once."""

    def __init__(self):
        self.used: set[str] = set()

    def draw(self, name: str, binding: dict[str, Value]) -> str:
        value = binding.get(name)
        if value is None:
            raise PqrError(f"no value available for fresh variable {name!r}")
        if value in self.used:
            raise PqrError(f"fresh identifier {value!r} was already created")
        self.used.add(value)
        return value


def eval_arc_expr(expr: ArcExpr, binding: dict[str, Value], fresh: FreshPool | None = None) -> Value:
    """Evaluate an arc expression under a binding (output-arc direction)."""
    if isinstance(expr, Var):
        if expr.name not in binding:
            raise PqrError(f"unbound variable {expr.name!r}")
        return binding[expr.name]
    if isinstance(expr, Fresh):
        return (fresh or FreshPool()).draw(expr.name, binding)
    if isinstance(expr, PairExpr):
        return Pair(first=eval_arc_expr(Var(expr.name), binding, fresh),
                    second=eval_arc_expr(expr.sub, binding, fresh))
    if isinstance(expr, Append):
        lst = eval_arc_expr(Var(expr.list_name), binding, fresh)
        item = eval_arc_expr(Var(expr.item_name), binding, fresh)
        if not isinstance(lst, tuple):
            raise PqrError(f"append on non-list value {lst!r}")
        return lst + (item,)
    if isinstance(expr, Cons):
        lst = eval_arc_expr(Var(expr.list_name), binding, fresh)
        item = eval_arc_expr(Var(expr.item_name), binding, fresh)
        if not isinstance(lst, tuple):
            raise PqrError(f"cons on non-list value {lst!r}")
        return (item,) + lst
    raise PqrError(f"unknown arc expression {expr!r}")


def match_arc_expr(expr: ArcExpr, value: Value, binding: dict[str, Value]) -> dict[str, Value] | None:
    """Unify an input-arc expression with a token value.

    Returns the extended binding, or ``None`` when the token does not fit.
    ``Cons(pid, q)`` matches a non-empty list whose head is ``pid`` and
    binds ``q`` to the remainder.
    """
    if isinstance(expr, Var):
        bound = binding.get(expr.name)
        if bound is None:
            out = dict(binding)
            out[expr.name] = value
            return out
        return binding if bound == value else None
    if isinstance(expr, PairExpr):
        if not isinstance(value, Pair):
            return None
        step = match_arc_expr(Var(expr.name), value.first, binding)
        if step is None:
            return None
        return match_arc_expr(expr.sub, value.second, step)
    if isinstance(expr, Cons):
        if not isinstance(value, tuple) or not value:
            return None
        step = match_arc_expr(Var(expr.item_name), value[0], binding)
        if step is None:
            return None
        return match_arc_expr(Var(expr.list_name), value[1:], step)
    return None  # Fresh / Append never occur on input arcs


# -- nets --------------------------------------------------------------------


@dataclass(frozen=True)
class NetTransition:
    id: str
    label: str
    inputs: tuple[tuple[str, ArcExpr], ...]
    outputs: tuple[tuple[str, ArcExpr, int], ...]  # (place, expression, delay ms)


@dataclass(frozen=True)
class ProcletNet:
    name: str
    et_var: str
    places: tuple[str, ...]
    transitions: tuple[NetTransition, ...]
    initial: tuple[tuple[str, Value, int], ...] = ()  # (place, value, available ms)


@dataclass(frozen=True)
class State:
    """Timed marking plus the global clock."""

    marking: tuple[tuple[str, tuple[tuple[Value, int], ...]], ...]
    clock: int

    def tokens(self, place: str) -> tuple[tuple[Value, int], ...]:
        for name, toks in self.marking:
            if name == place:
                return toks
        return ()


def _freeze_marking(marking: dict[str, list[tuple[Value, int]]], places: tuple[str, ...]) -> tuple:
    return tuple(
        (p, tuple(sorted(marking.get(p, ()), key=lambda tok: (tok[1], value_key(tok[0])))))
        for p in places
    )


def initial_state(net: ProcletNet) -> State:
    marking: dict[str, list[tuple[Value, int]]] = {p: [] for p in net.places}
    for place, value, avail in net.initial:
        marking[place].append((value, avail))
    return State(marking=_freeze_marking(marking, net.places), clock=0)


def build_process_net(system: PQRSystem) -> ProcletNet:
    sk = system.process.skeleton
    analysis = _linked(system)
    transitions = []
    for t in sk.transitions:
        pre = analysis.pre.get(t.id, [])
        post = analysis.post.get(t.id, [])
        inputs = tuple((p, Var("pid")) for p in pre)
        if t.kind == "source":
            outputs = tuple((p, Fresh("pid"), 0) for p in post)
        else:
            outputs = tuple((p, Var("pid"), 0) for p in post)
        transitions.append(NetTransition(id=t.id, label=t.label, inputs=inputs, outputs=outputs))
    places = tuple(p.id for p in sk.places)
    initial = tuple((pid, "?", 0) for pid in system.process.initial_marking)
    return ProcletNet(name="process", et_var="pid", places=places,
                      transitions=tuple(transitions), initial=initial)


def build_resource_net(resource: ResourceProclet) -> ProcletNet:
    transitions = [
        NetTransition(
            id=label,
            label=label,
            inputs=(("idle", Var("rid")),),
            outputs=(("busy", PairExpr("rid", Var("pid")), resource.tsr),),
        )
        for label in resource.start_labels
    ] + [
        NetTransition(
            id=label,
            label=label,
            inputs=(("busy", PairExpr("rid", Var("pid"))),),
            outputs=(("idle", Var("rid"), resource.twr),),
        )
        for label in resource.complete_labels
    ]
    return ProcletNet(
        name=f"resource:{resource.rid}",
        et_var="rid",
        places=("idle", "busy"),
        transitions=tuple(transitions),
        initial=(("idle", resource.rid, 0),),
    )


def build_queue_net(queue: QueueProclet) -> ProcletNet:
    enqueue = NetTransition(
        id=queue.enqueue_label,
        label=queue.enqueue_label,
        inputs=(("queue", PairExpr("qid", Var("q"))),),
        outputs=(
            ("queue", PairExpr("qid", Append("q", "pid")), 0),
            ("wait", Var("pid"), queue.twq),
        ),
    )
    dequeue = NetTransition(
        id=queue.dequeue_label,
        label=queue.dequeue_label,
        inputs=(
            ("queue", PairExpr("qid", Cons("pid", "q"))),
            ("wait", Var("pid")),
        ),
        outputs=(("queue", PairExpr("qid", Var("q")), 0),),
    )
    return ProcletNet(
        name=f"queue:{queue.qid}",
        et_var="qid",
        places=("queue", "wait"),
        transitions=(enqueue, dequeue),
        initial=(("queue", Pair(queue.qid, ()), 0),),
    )


# -- the token game ----------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    event_id: str
    proclet: str
    reason: str

    def to_json(self) -> dict[str, str]:
        return {"event_id": self.event_id, "proclet": self.proclet, "reason": self.reason}


@dataclass(frozen=True)
class ReplayResult:
    accepted: bool
    fired: dict[str, str]
    diagnostic: Diagnostic | None
    final_state: State
    states: tuple[State, ...] = ()


def _find_tokens(transition: NetTransition, state: State, binding: dict[str, Value]):
    """Search one token per input arc; returns (binding, picks) or a reason string."""
    reasons: list[tuple[int, str]] = []

    def search(idx: int, bnd: dict[str, Value], picked: list):
        if idx == len(transition.inputs):
            return bnd, tuple(picked)
        place, expr = transition.inputs[idx]
        tokens = state.tokens(place)
        if not tokens:
            reasons.append((1, f"no token in place {place!r}"))
            return None
        for value, avail in tokens:
            if (place, value, avail) in picked:
                continue
            attempt = match_arc_expr(expr, value, bnd)
            if attempt is None:
                wanted = bnd.get(expr.sub.item_name) if isinstance(expr, PairExpr) and isinstance(expr.sub, Cons) else None
                if wanted is not None and isinstance(value, Pair) and isinstance(value.second, tuple) and wanted in value.second:
                    head = value.second[0] if value.second else None
                    reasons.append((3, f"wrong queue head in {place!r}: expected {wanted!r}, head is {head!r}"))
                else:
                    reasons.append((1, f"no matching token in place {place!r}"))
                continue
            if avail > state.clock:
                reasons.append((2, f"token in {place!r} not yet available (ready at {avail}, clock {state.clock})"))
                continue
            result = search(idx + 1, attempt, picked + [(place, value, avail)])
            if result is not None:
                return result
        return None

    found = search(0, dict(binding), [])
    if found is not None:
        return found
    if not reasons:
        reasons.append((0, "transition not enabled"))
    return max(reasons)[1]


def enabled(net: ProcletNet, state: State, label: str, binding: dict[str, Value]) -> bool:
    """True iff some transition with the label can fire at the current clock."""
    return any(
        not isinstance(_find_tokens(t, state, binding), str)
        for t in net.transitions
        if t.label == label
    )


def _fire(net: ProcletNet, state: State, transition: NetTransition,
          binding: dict[str, Value], picks, fresh: FreshPool) -> State:
    marking = {place: list(tokens) for place, tokens in state.marking}
    for place, value, avail in picks:
        marking[place].remove((value, avail))
    for place, expr, delay in transition.outputs:
        marking[place].append((eval_arc_expr(expr, binding, fresh), state.clock + delay))
    return State(marking=_freeze_marking(marking, net.places), clock=state.clock)


def _event_binding(event: Event) -> dict[str, Value]:
    return {k: v for k, v in (("pid", event.pid), ("rid", event.rid), ("qid", event.qid)) if v is not None}


def replay_trace(net: ProcletNet, events, record_states: bool = False, restrict=None) -> ReplayResult:
    """Replay a time-ordered event sequence on one proclet instance.

    Per event the clock advances to the event's timestamp, then a transition
    labeled with the event's activity fires under the binding induced by the
    event's attributes.  ``restrict`` optionally maps an event to the set of
    transition ids allowed to fire for it (used to honour synchronization
    channels when several transitions share a label).
    """
    state = initial_state(net)
    fresh = FreshPool()
    fired: dict[str, str] = {}
    states: list[State] = [state] if record_states else []
    last_time: int | None = None

    for event in events:
        if event.time is None:
            raise IncompleteLogError(f"event {event.event_id} has no timestamp")
        if last_time is not None and event.time <= last_time:
            return ReplayResult(False, fired, Diagnostic(event.event_id, net.name, "trace is not strictly time-ordered"), state, tuple(states))
        last_time = event.time
        state = State(marking=state.marking, clock=event.time)
        binding = _event_binding(event)
        allowed = restrict(event) if restrict is not None else None
        candidates = [
            t for t in net.transitions
            if t.label == event.act and (allowed is None or t.id in allowed)
        ]
        outcome = None
        if any(t.label == event.act for t in net.transitions) and not candidates:
            best_reason = "channel mismatch: no transition with this label synchronizes with the event's entity identifiers"
        else:
            best_reason = "no transition carries this label"
        for t in candidates:
            found = _find_tokens(t, state, binding)
            if isinstance(found, str):
                best_reason = found
                continue
            outcome = (t, found)
            break
        if outcome is None:
            return ReplayResult(False, fired, Diagnostic(event.event_id, net.name, best_reason), state, tuple(states))
        t, (full_binding, picks) = outcome
        try:
            state = _fire(net, state, t, full_binding, picks, fresh)
        except PqrError as exc:
            return ReplayResult(False, fired, Diagnostic(event.event_id, net.name, str(exc)), state, tuple(states))
        fired[event.event_id] = t.id
        if record_states:
            states.append(state)
    return ReplayResult(True, fired, None, state, tuple(states))


@dataclass(frozen=True)
class LogReplayResult:
    accepted: bool
    trace_results: dict[tuple[str, str], ReplayResult]
    diagnostics: tuple[Diagnostic, ...]

    def fired_process_transition(self, event_id: str) -> str | None:
        for (et, _ident), result in self.trace_results.items():
            if et == "pid" and event_id in result.fired:
                return result.fired[event_id]
        return None


def replay_log(system: PQRSystem, log: MultiEntityLog) -> LogReplayResult:
    """Replay a full multi-entity log over a PQR system.

    Every sequential trace must replay on its proclet, and for every event
    the transitions fired across traces must form one synchronization
    channel, i.e. the event's resource and queue identifiers must be exactly
    the ones statically linked to the fired process transition.
    """
    analysis = _linked(system)
    diagnostics: list[Diagnostic] = []
    for e in log.events:
        if e.time is None:
            raise IncompleteLogError(f"event {e.event_id} has no timestamp")
        if e.pid is None:
            diagnostics.append(Diagnostic(e.event_id, "-", "event belongs to no process case"))
    view = sequential_view(log)  # raises NonMonotoneError on ties

    events_by_id = {e.event_id: e for e in log.events}
    by_label: dict[str, list[str]] = {}
    for t in system.process.skeleton.transitions:
        by_label.setdefault(t.label, []).append(t.id)

    def channel_restrict(event: Event) -> set[str] | None:
        """Transitions consistent with the event's declared rid/qid facets."""
        if event.rid is None and event.qid is None:
            return None
        allowed = set()
        for tid in by_label.get(event.act, ()):
            facets = analysis.transition_binding(tid)
            expected_qid = facets.qid_in if facets.role in ("start", "sink") else facets.qid_out
            if event.qid is not None and event.qid != expected_qid:
                continue
            if event.rid is not None and event.rid != facets.rid:
                continue
            allowed.add(tid)
        return allowed

    results: dict[tuple[str, str], ReplayResult] = {}
    for et in log.entity_types:
        for trace in view.get(et, ()):
            restrict = None
            if et == "pid":
                net = build_process_net(system)
                restrict = channel_restrict
            elif et == "rid":
                try:
                    net = build_resource_net(system.resource(trace.ident))
                except KeyError:
                    diagnostics.append(Diagnostic(trace.events[0], f"resource:{trace.ident}", "no resource proclet with this identifier"))
                    continue
            else:
                try:
                    net = build_queue_net(system.queue(trace.ident))
                except KeyError:
                    diagnostics.append(Diagnostic(trace.events[0], f"queue:{trace.ident}", "no queue proclet with this identifier"))
                    continue
            result = replay_trace(net, [events_by_id[i] for i in trace.events], restrict=restrict)
            results[(et, trace.ident)] = result
            if not result.accepted:
                diagnostics.append(result.diagnostic)

    # channel consistency: the entity identifiers of each event must match
    # the facets statically linked to the fired process transition
    for (et, _ident), result in results.items():
        if et != "pid":
            continue
        for event_id, tid in result.fired.items():
            event = events_by_id[event_id]
            binding = analysis.transition_binding(tid)
            expected_qid = binding.qid_in if binding.role in ("start", "sink") else binding.qid_out
            if event.rid != binding.rid:
                diagnostics.append(Diagnostic(event_id, "process", f"channel mismatch: transition {tid!r} synchronizes with resource {binding.rid!r}, event has {event.rid!r}"))
            if event.qid != expected_qid:
                diagnostics.append(Diagnostic(event_id, "process", f"channel mismatch: transition {tid!r} synchronizes with queue {expected_qid!r}, event has {event.qid!r}"))

    return LogReplayResult(accepted=not diagnostics, trace_results=results, diagnostics=tuple(diagnostics))


# -- structural discipline checks -------------------------------------------


def check_queue_fifo(system: PQRSystem, log: MultiEntityLog) -> list[str]:
    """Dequeue order must equal enqueue order; traversal must take >= twq."""
    violations = []
    for queue in system.queues:
        events = [e for e in log.events if e.qid == queue.qid and e.time is not None]
        enq = sorted((e for e in events if e.act == queue.enqueue_label), key=lambda e: e.time)
        deq = sorted((e for e in events if e.act == queue.dequeue_label), key=lambda e: e.time)
        enq_pids = [e.pid for e in enq]
        deq_pids = [e.pid for e in deq]
        if enq_pids[: len(deq_pids)] != deq_pids:
            violations.append(f"queue {queue.qid}: dequeue order {deq_pids} differs from enqueue order {enq_pids}")
        times_in = {e.pid: e.time for e in enq}
        for e in deq:
            if e.pid in times_in and e.time - times_in[e.pid] < queue.twq:
                violations.append(f"queue {queue.qid}: case {e.pid} traversed in {e.time - times_in[e.pid]} ms, below twq {queue.twq}")
    return violations


def check_resource_cycles(system: PQRSystem, log: MultiEntityLog) -> list[str]:
    """Per resource: start/complete alternation with gaps >= tsr and twr."""
    violations = []
    for resource in system.resources:
        events = sorted(
            (e for e in log.events if e.rid == resource.rid and e.time is not None),
            key=lambda e: e.time,
        )
        expect_start = True
        prev = None
        for e in events:
            is_start = e.act in resource.start_labels
            if is_start != expect_start:
                violations.append(f"resource {resource.rid}: event {e.event_id} breaks start/complete alternation")
                break
            if prev is not None:
                gap = e.time - prev.time
                minimum = resource.twr if is_start else resource.tsr
                if gap < minimum:
                    violations.append(f"resource {resource.rid}: gap {gap} ms before {e.event_id} below minimum {minimum}")
                if not is_start and prev.pid != e.pid:
                    violations.append(f"resource {resource.rid}: completed {e.pid} while serving {prev.pid}")
            prev = e
            expect_start = not expect_start
    return violations
