"""PQR system models: one process proclet, resource proclets, queue proclets.

The process proclet is a transition-bordered state machine whose places are
either activity places (a step being executed) or handover places (a case
waiting between two steps).  Every activity is served by exactly one
single-server resource with minimum service time ``tsr`` and minimum waiting
time ``twr``; every handover is a FIFO queue with minimum traversal time
``twq``.  Synchronization channels are derived structurally by matching
transition labels across proclets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache

from .errors import AmbiguousLabelError, CyclicProcessError, ModelError

TRANSITION_KINDS = ("start", "complete", "source", "sink")
PLACE_KINDS = ("activity", "handover")


@dataclass(frozen=True)
class Transition:
    id: str
    label: str
    kind: str

    def __post_init__(self):
        if self.kind not in TRANSITION_KINDS:
            raise ModelError(f"transition {self.id!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Place:
    id: str
    kind: str

    def __post_init__(self):
        if self.kind not in PLACE_KINDS:
            raise ModelError(f"place {self.id!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Skeleton:
    """Plain Petri-net structure of the process proclet."""

    transitions: tuple[Transition, ...]
    places: tuple[Place, ...]
    arcs: tuple[tuple[str, str], ...]

    def transition(self, tid: str) -> Transition:
        for t in self.transitions:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def by_label(self, label: str) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.label == label)


@dataclass(frozen=True)
class ProcessProclet:
    skeleton: Skeleton
    initial_marking: tuple[str, ...] = ()  # place ids carrying a token; must be empty


@dataclass(frozen=True)
class ResourceProclet:
    rid: str
    tsr: int
    twr: int
    start_labels: tuple[str, ...]
    complete_labels: tuple[str, ...]


@dataclass(frozen=True)
class QueueProclet:
    qid: str
    twq: int
    enqueue_label: str
    dequeue_label: str


@dataclass(frozen=True)
class PQRSystem:
    process: ProcessProclet
    resources: tuple[ResourceProclet, ...]
    queues: tuple[QueueProclet, ...]

    def resource(self, rid: str) -> ResourceProclet:
        for r in self.resources:
            if r.rid == rid:
                return r
        raise KeyError(rid)

    def queue(self, qid: str) -> QueueProclet:
        for q in self.queues:
            if q.qid == qid:
                return q
        raise KeyError(qid)


@dataclass(frozen=True)
class Violation:
    condition: str
    node: str
    message: str


@dataclass(frozen=True)
class Channel:
    """Transitions across proclets that fire as one joint event."""

    label: str
    process_transition: str
    rid: str | None
    qid: str | None

    def members(self) -> tuple[str, ...]:
        out = [f"process:{self.process_transition}"]
        if self.rid is not None:
            out.append(f"resource:{self.rid}:{self.process_transition}")
        if self.qid is not None:
            out.append(f"queue:{self.qid}:{self.process_transition}")
        return tuple(out)


@dataclass(frozen=True)
class ActivityBinding:
    """Statically channel-linked resource and queue facets of one step.

    ``rid`` is ``None`` for steps served by no resource (sources and sinks);
    such steps behave as a fresh single-use resource with zero durations.
    """

    role: str
    rid: str | None
    tsr: int
    twr: int
    qid_in: str | None
    twq_in: int
    qid_out: str | None
    twq_out: int


class _Analysis:
    """Derived structure of a PQRSystem: wiring, violations, channels, FIFO."""

    def __init__(self, system: PQRSystem):
        self.system = system
        sk = system.process.skeleton
        self.violations: list[Violation] = []
        self.pre: dict[str, list[str]] = {}
        self.post: dict[str, list[str]] = {}
        node_ids = {t.id for t in sk.transitions} | {p.id for p in sk.places}
        place_ids = {p.id for p in sk.places}
        trans_ids = {t.id for t in sk.transitions}
        for src, dst in sk.arcs:
            if src not in node_ids or dst not in node_ids:
                self._bad("skeleton.1", f"{src}->{dst}", "arc endpoint is not a node")
                continue
            if (src in place_ids) == (dst in place_ids):
                self._bad("skeleton.1", f"{src}->{dst}", "arcs must connect a place and a transition")
                continue
            self.post.setdefault(src, []).append(dst)
            self.pre.setdefault(dst, []).append(src)

        self._check_process(sk)
        self._check_parts()
        self.activity_resource: dict[str, str] = {}
        self.handover_queue: dict[str, str] = {}
        self._link(sk)
        self.channels: tuple[Channel, ...] = self._channels(sk) if not self.violations else ()
        self.fifo: dict[str, dict[str, int]] | None = None
        self.acyclic = self._compute_acyclic(sk)
        if self.acyclic:
            self.fifo = self._path_counts(sk)

    def _bad(self, condition: str, node: str, message: str) -> None:
        self.violations.append(Violation(condition, node, message))

    # -- process proclet conditions ------------------------------------

    def _check_process(self, sk: Skeleton) -> None:
        labels_seen: dict[str, Transition] = {}
        for t in sk.transitions:
            pre, post = self.pre.get(t.id, []), self.post.get(t.id, [])
            if len(pre) > 1 or len(post) > 1:
                self._bad("process.1", t.id, "not a state machine: transition with several pre- or post-places")
            expect = {
                "source": (0, 1),
                "sink": (1, 0),
                "start": (1, 1),
                "complete": (1, 1),
            }[t.kind]
            if (min(len(pre), 1), min(len(post), 1)) != expect:
                self._bad("process.4", t.id, f"{t.kind} transition must have {expect[0]} pre-place and {expect[1]} post-place")
            other = labels_seen.setdefault(t.label, t)
            if other is not t:
                if other.kind != t.kind:
                    self._bad("process.7", t.label, "same label used with different kinds")
                elif t.kind in ("source", "sink"):
                    self._bad("process.7", t.label, f"duplicate {t.kind} label")

        # same-labeled starts must enter one activity; same-labeled completes leave one
        for label in {t.label for t in sk.transitions}:
            group = sk.by_label(label)
            if len(group) < 2:
                continue
            if group[0].kind == "start":
                targets = {self.post.get(t.id, [None])[0] for t in group if self.post.get(t.id)}
                if len(targets) > 1:
                    self._bad("process.7", label, "same-labeled starts enter different activity places")
            if group[0].kind == "complete":
                origins = {self.pre.get(t.id, [None])[0] for t in group if self.pre.get(t.id)}
                if len(origins) > 1:
                    self._bad("process.7", label, "same-labeled completes leave different activity places")

        sources = [t for t in sk.transitions if t.kind == "source"]
        sinks = [t for t in sk.transitions if t.kind == "sink"]
        if not sources:
            self._bad("process.3", "-", "no source transitions")
        if not sinks:
            self._bad("process.3", "-", "no sink transitions")

        kind = {t.id: t.kind for t in sk.transitions}
        for p in sk.places:
            pre, post = self.pre.get(p.id, []), self.post.get(p.id, [])
            if not pre or not post:
                self._bad("process.3", p.id, "place must have at least one pre- and one post-transition")
            if p.kind == "activity":
                if any(kind.get(t) != "start" for t in pre):
                    self._bad("process.5", p.id, "activity place entered by a non-start transition")
                if any(kind.get(t) != "complete" for t in post):
                    self._bad("process.5", p.id, "activity place left by a non-complete transition")
            else:
                if len(pre) != 1 or kind.get(pre[0]) not in ("complete", "source"):
                    self._bad("process.6", p.id, "handover place must be entered by exactly one complete or source transition")
                if len(post) != 1 or kind.get(post[0]) not in ("start", "sink"):
                    self._bad("process.6", p.id, "handover place must be left by exactly one start or sink transition")

        if self.system.process.initial_marking:
            for pid in self.system.process.initial_marking:
                self._bad("process.8", pid, "process place carries an initial token")

        # weak connectivity over the skeleton
        if sk.transitions:
            nodes = {t.id for t in sk.transitions} | {p.id for p in sk.places}
            adj: dict[str, set[str]] = {n: set() for n in nodes}
            for src, dst in sk.arcs:
                if src in adj and dst in adj:
                    adj[src].add(dst)
                    adj[dst].add(src)
            seen = set()
            stack = [sk.transitions[0].id]
            while stack:
                n = stack.pop()
                if n in seen:
                    continue
                seen.add(n)
                stack.extend(adj[n] - seen)
            if seen != nodes:
                self._bad("process.2", ",".join(sorted(nodes - seen)), "skeleton is not connected")

    def _check_parts(self) -> None:
        for r in self.system.resources:
            starts, completes = set(r.start_labels), set(r.complete_labels)
            if not starts or not completes or starts & completes:
                self._bad("resource.1", r.rid, "start/complete label sets must be non-empty and disjoint")
            if r.tsr < 0 or r.twr < 0:
                self._bad("resource.1", r.rid, "durations must be non-negative")
        for q in self.system.queues:
            if q.enqueue_label == q.dequeue_label:
                self._bad("queue.1", q.qid, "enqueue and dequeue labels must differ")
            if q.twq < 0:
                self._bad("queue.1", q.qid, "duration must be non-negative")

    # -- channel linking ------------------------------------------------

    def _link(self, sk: Skeleton) -> None:
        label = {t.id: t.label for t in sk.transitions}
        used_resources: dict[str, str] = {}
        for p in sk.places:
            if p.kind != "activity":
                continue
            starts = {label[t] for t in self.pre.get(p.id, [])}
            completes = {label[t] for t in self.post.get(p.id, [])}
            matches = [
                r.rid
                for r in self.system.resources
                if starts <= set(r.start_labels) and completes <= set(r.complete_labels)
            ]
            if len(matches) != 1:
                self._bad("system.2", p.id, f"activity must match exactly one resource proclet, found {len(matches)}")
                continue
            rid = matches[0]
            if rid in used_resources:
                self._bad("system.4", rid, f"resource serves two activities ({used_resources[rid]}, {p.id})")
            used_resources[rid] = p.id
            self.activity_resource[p.id] = rid

        used_queues: dict[str, str] = {}
        for p in sk.places:
            if p.kind != "handover":
                continue
            pre, post = self.pre.get(p.id, []), self.post.get(p.id, [])
            if len(pre) != 1 or len(post) != 1:
                continue  # already reported as process.6
            pair = (label[pre[0]], label[post[0]])
            matches = [q.qid for q in self.system.queues if (q.enqueue_label, q.dequeue_label) == pair]
            if len(matches) != 1:
                self._bad("system.3", p.id, f"handover must match exactly one queue proclet for labels {pair}, found {len(matches)}")
                continue
            qid = matches[0]
            if qid in used_queues:
                self._bad("system.4", qid, f"queue serves two handovers ({used_queues[qid]}, {p.id})")
            used_queues[qid] = p.id
            self.handover_queue[p.id] = qid

        for r in self.system.resources:
            if r.rid not in used_resources:
                self._bad("system.4", r.rid, "resource proclet linked to no activity")
        for q in self.system.queues:
            if q.qid not in used_queues:
                self._bad("system.4", q.qid, "queue proclet linked to no handover")

    def _channels(self, sk: Skeleton) -> tuple[Channel, ...]:
        out = []
        for t in sk.transitions:
            try:
                binding = self.transition_binding(t.id)
            except ModelError:
                return ()
            qid = binding.qid_in if t.kind in ("start", "sink") else binding.qid_out
            out.append(Channel(label=t.label, process_transition=t.id, rid=binding.rid, qid=qid))
        return tuple(out)

    # -- facets ----------------------------------------------------------

    def transition_binding(self, tid: str) -> ActivityBinding:
        sk = self.system.process.skeleton
        t = sk.transition(tid)
        rid = None
        qid_in = qid_out = None
        if t.kind in ("start", "complete"):
            activity = (self.post if t.kind == "start" else self.pre).get(tid, [None])[0]
            rid = self.activity_resource.get(activity)
            if rid is None:
                raise ModelError(f"transition {tid!r}: activity place has no linked resource")
        if t.kind in ("start", "sink"):
            handover = self.pre.get(tid, [None])[0]
            qid_in = self.handover_queue.get(handover)
            if qid_in is None:
                raise ModelError(f"transition {tid!r}: incoming handover has no linked queue")
        if t.kind in ("complete", "source"):
            handover = self.post.get(tid, [None])[0]
            qid_out = self.handover_queue.get(handover)
            if qid_out is None:
                raise ModelError(f"transition {tid!r}: outgoing handover has no linked queue")
        resource = self.system.resource(rid) if rid else None
        return ActivityBinding(
            role=t.kind,
            rid=rid,
            tsr=resource.tsr if resource else 0,
            twr=resource.twr if resource else 0,
            qid_in=qid_in,
            twq_in=self.system.queue(qid_in).twq if qid_in else 0,
            qid_out=qid_out,
            twq_out=self.system.queue(qid_out).twq if qid_out else 0,
        )

    # -- reachability ------------------------------------------------------

    def _successors(self, sk: Skeleton) -> dict[str, list[str]]:
        succ: dict[str, list[str]] = {t.id: [] for t in sk.transitions}
        for t in sk.transitions:
            for p in self.post.get(t.id, []):
                succ[t.id].extend(self.post.get(p, []))
        return succ

    def _compute_acyclic(self, sk: Skeleton) -> bool:
        succ = self._successors(sk)
        state: dict[str, int] = {}

        def visit(node: str) -> bool:
            state[node] = 1
            for nxt in succ[node]:
                st = state.get(nxt, 0)
                if st == 1 or (st == 0 and not visit(nxt)):
                    return False
            state[node] = 2
            return True

        return all(state.get(t.id, 0) == 2 or visit(t.id) for t in sk.transitions)

    def _path_counts(self, sk: Skeleton) -> dict[str, dict[str, int]]:
        """Directed path counts between transitions, saturated at 2."""
        succ = self._successors(sk)
        order: list[str] = []
        seen: set[str] = set()

        def topo(node: str) -> None:
            if node in seen:
                return
            seen.add(node)
            for nxt in succ[node]:
                topo(nxt)
            order.append(node)

        for t in sk.transitions:
            topo(t.id)
        counts: dict[str, dict[str, int]] = {}
        for tid in order:  # reverse topological
            row: dict[str, int] = {tid: 1}
            for nxt in succ[tid]:
                for target, n in counts[nxt].items():
                    row[target] = min(2, row.get(target, 0) + n)
            counts[tid] = row
        return counts


@lru_cache(maxsize=64)
def _analysis(system: PQRSystem) -> _Analysis:
    return _Analysis(system)


def _linked(system: PQRSystem) -> _Analysis:
    analysis = _analysis(system)
    if analysis.violations:
        raise ModelError(
            f"system model is not a valid PQR system ({len(analysis.violations)} violation(s))",
            violations=analysis.violations,
        )
    return analysis


def validate(system: PQRSystem) -> list[Violation]:
    """Check all structural conditions; empty list means the system is valid."""
    return list(_analysis(system).violations)


def channels(system: PQRSystem) -> tuple[Channel, ...]:
    return _linked(system).channels


def is_acyclic(system: PQRSystem) -> bool:
    return _analysis(system).acyclic


def fifo_relation(system: PQRSystem, t1: str, tn: str) -> bool:
    """True iff there is a unique directed path from ``t1`` to ``tn``.

    The empty path counts, so the relation is reflexive.  In a valid PQR
    system every step on such a path synchronizes with a single-server
    resource or a FIFO queue, so path uniqueness implies that case order is
    preserved between the two transitions.
    """
    analysis = _analysis(system)
    if not analysis.acyclic:
        raise CyclicProcessError("fifo relation requires an acyclic process skeleton")
    sk = system.process.skeleton
    sk.transition(t1), sk.transition(tn)
    return analysis.fifo[t1].get(tn, 0) == 1


def fifo_pairs(system: PQRSystem) -> frozenset[tuple[str, str]]:
    """All transition pairs in FIFO relation (precomputed matrix)."""
    analysis = _analysis(system)
    if not analysis.acyclic:
        raise CyclicProcessError("fifo relation requires an acyclic process skeleton")
    return frozenset(
        (t1, tn) for t1, row in analysis.fifo.items() for tn, n in row.items() if n == 1
    )


def transition_binding(system: PQRSystem, transition_id: str) -> ActivityBinding:
    """Resource/queue facets of one concrete transition."""
    return _linked(system).transition_binding(transition_id)


def bindings_for(system: PQRSystem, label: str) -> ActivityBinding:
    """Resource/queue facets of the step with the given activity label.

    When several transitions share the label (merge starts, divert
    completes) their facets must agree; otherwise the label alone does not
    identify the queues and :func:`transition_binding` must be used.
    """
    analysis = _linked(system)
    group = system.process.skeleton.by_label(label)
    if not group:
        raise ModelError(f"unknown activity label {label!r}")
    bindings = [analysis.transition_binding(t.id) for t in group]
    first = bindings[0]
    for other in bindings[1:]:
        if other != first:
            raise AmbiguousLabelError(
                f"label {label!r} maps to {len(group)} transitions with different queue facets; "
                f"use transition_binding with one of: {[t.id for t in group]}"
            )
    return first


# -- serialization ---------------------------------------------------------


def parse_model(source) -> PQRSystem:
    """Parse and fully link a system model from its JSON description.

    Raises :class:`ModelError` on schema problems, dangling references, or
    any violated structural condition (the error carries the diagnostics).
    """
    text = source.read() if hasattr(source, "read") else source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    for key in ("process", "resources", "queues"):
        if key not in doc:
            raise ModelError(f"model document missing {key!r}")

    proc = doc["process"]
    try:
        transitions = tuple(
            Transition(id=str(t["id"]), label=str(t.get("label", t["id"])), kind=str(t["kind"]))
            for t in proc["transitions"]
        )
        places = tuple(Place(id=str(p["id"]), kind=str(p["kind"])) for p in proc["places"])
        arcs = tuple((str(a[0]), str(a[1])) for a in proc["arcs"])
        resources = tuple(
            ResourceProclet(
                rid=str(r["rid"]),
                tsr=int(r["tsr_ms"]),
                twr=int(r["twr_ms"]),
                start_labels=tuple(str(x) for x in r["start_labels"]),
                complete_labels=tuple(str(x) for x in r["complete_labels"]),
            )
            for r in doc["resources"]
        )
        queues = tuple(
            QueueProclet(
                qid=str(q["qid"]),
                twq=int(q["twq_ms"]),
                enqueue_label=str(q["enqueue_label"]),
                dequeue_label=str(q["dequeue_label"]),
            )
            for q in doc["queues"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"model schema violation: {exc!r}") from exc

    for name, ids in (
        ("transition", [t.id for t in transitions]),
        ("place", [p.id for p in places]),
        ("resource", [r.rid for r in resources]),
        ("queue", [q.qid for q in queues]),
    ):
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise ModelError(f"duplicate {name} id(s): {sorted(dupes)}")
    node_ids = {t.id for t in transitions} | {p.id for p in places}
    for src, dst in arcs:
        if src not in node_ids or dst not in node_ids:
            raise ModelError(f"dangling arc reference {src!r} -> {dst!r}")

    system = PQRSystem(
        process=ProcessProclet(skeleton=Skeleton(transitions, places, arcs)),
        resources=resources,
        queues=queues,
    )
    _linked(system)  # raises with diagnostics when invalid
    return system


def serialize_model(system: PQRSystem) -> str:
    sk = system.process.skeleton
    doc = {
        "process": {
            "transitions": [{"id": t.id, "label": t.label, "kind": t.kind} for t in sk.transitions],
            "places": [{"id": p.id, "kind": p.kind} for p in sk.places],
            "arcs": [[src, dst] for src, dst in sk.arcs],
        },
        "resources": [
            {
                "rid": r.rid,
                "tsr_ms": r.tsr,
                "twr_ms": r.twr,
                "start_labels": list(r.start_labels),
                "complete_labels": list(r.complete_labels),
            }
            for r in system.resources
        ],
        "queues": [
            {
                "qid": q.qid,
                "twq_ms": q.twq,
                "enqueue_label": q.enqueue_label,
                "dequeue_label": q.dequeue_label,
            }
            for q in system.queues
        ],
    }
    return json.dumps(doc, indent=2) + "\n"
