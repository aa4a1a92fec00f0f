import pytest

from pqrepair.errors import IncompleteLogError, NonMonotoneError, PqrError
from pqrepair.event_log import Event, MultiEntityLog, parse_timestamp
from pqrepair.model import QueueProclet, ResourceProclet
from pqrepair.replay import (
    Append,
    Cons,
    FreshPool,
    Pair,
    PairExpr,
    State,
    Var,
    build_queue_net,
    build_resource_net,
    build_process_net,
    check_queue_fifo,
    check_resource_cycles,
    enabled,
    eval_arc_expr,
    initial_state,
    match_arc_expr,
    replay_log,
    replay_trace,
)

T0 = parse_timestamp("2020-01-01T09:00:00")


def ms(offset_s: float) -> int:
    return T0 + int(offset_s * 1000)


class TestArcExpressions:
    def test_append_to_empty(self):
        assert eval_arc_expr(Append("q", "pid"), {"q": (), "pid": "50"}) == ("50",)

    def test_var_identity(self):
        assert eval_arc_expr(Var("rid"), {"rid": "m4"}) == "m4"

    def test_cons_match_binds_remainder(self):
        binding = match_arc_expr(Cons("pid", "q"), ("50",), {})
        assert binding == {"pid": "50", "q": ()}

    def test_cons_match_rejects_wrong_head(self):
        assert match_arc_expr(Cons("pid", "q"), ("51", "50"), {"pid": "50"}) is None

    def test_cons_match_rejects_empty(self):
        assert match_arc_expr(Cons("pid", "q"), (), {}) is None

    def test_unbound_variable(self):
        with pytest.raises(PqrError, match="unbound"):
            eval_arc_expr(Var("x"), {})

    def test_append_type_mismatch(self):
        with pytest.raises(PqrError, match="non-list"):
            eval_arc_expr(Append("q", "pid"), {"q": "notalist", "pid": "50"})

    def test_fresh_draws_once(self):
        pool = FreshPool()
        from pqrepair.replay import Fresh

        assert eval_arc_expr(Fresh("pid"), {"pid": "50"}, pool) == "50"
        with pytest.raises(PqrError, match="already created"):
            eval_arc_expr(Fresh("pid"), {"pid": "50"}, pool)

    def test_pair_match(self):
        token = Pair("c3:m3", ("50",))
        binding = match_arc_expr(PairExpr("qid", Cons("pid", "q")), token, {"qid": "c3:m3"})
        assert binding == {"qid": "c3:m3", "pid": "50", "q": ()}


QUEUE_C3M3 = QueueProclet(qid="c3:m3", twq=15000, enqueue_label="c3_c", dequeue_label="m3_s")


def _queue_events():
    return [
        Event(event_id="e0", act="c3_c", time=ms(15), pid="50", qid="c3:m3"),
        Event(event_id="e1", act="m3_s", time=ms(30), pid="50", qid="c3:m3"),
    ]


class TestEnabled:
    def test_dequeue_waits_for_twq(self):
        net = build_queue_net(QUEUE_C3M3)
        state = initial_state(net)
        state = State(marking=state.marking, clock=ms(15))
        # enqueue 50 at 9:00:15
        result = replay_trace(net, _queue_events()[:1])
        after = result.final_state
        binding = {"pid": "50", "qid": "c3:m3"}
        assert not enabled(net, State(after.marking, ms(20)), "m3_s", binding)
        assert enabled(net, State(after.marking, ms(30)), "m3_s", binding)

    def test_start_disabled_on_empty_idle(self):
        net = build_resource_net(ResourceProclet("m3", 10000, 5000, ("m3_s",), ("m3_c",)))
        state = initial_state(net)
        busy_only = State(marking=(("idle", ()), ("busy", state.tokens("idle"))), clock=ms(0))
        assert not enabled(net, busy_only, "m3_s", {"rid": "m3", "pid": "50"})

    def test_source_always_enabled(self, bhs_system):
        net = build_process_net(bhs_system)
        assert enabled(net, initial_state(net), "c3_c", {"pid": "50"})


class TestQueueReplay:
    def test_worked_marking_sequence(self):
        """Enqueue then dequeue on the c3:m3 queue, markings checked exactly."""
        net = build_queue_net(QUEUE_C3M3)
        result = replay_trace(net, _queue_events(), record_states=True)
        assert result.accepted
        s0, s1, s2 = result.states
        assert s0.tokens("queue") == ((Pair("c3:m3", ()), 0),)
        assert s0.tokens("wait") == ()
        assert s1.tokens("queue") == ((Pair("c3:m3", ("50",)), ms(15)),)
        assert s1.tokens("wait") == (("50", ms(30)),)
        assert s2.tokens("queue") == ((Pair("c3:m3", ()), ms(30)),)
        assert s2.tokens("wait") == ()

    def test_early_dequeue_rejected(self):
        net = build_queue_net(QUEUE_C3M3)
        events = _queue_events()
        early = Event(event_id="e1", act="m3_s", time=ms(20), pid="50", qid="c3:m3")
        result = replay_trace(net, [events[0], early])
        assert not result.accepted
        assert result.diagnostic.event_id == "e1"
        assert "not yet available" in result.diagnostic.reason

    def test_empty_trace_accepted(self):
        net = build_queue_net(QUEUE_C3M3)
        result = replay_trace(net, [])
        assert result.accepted and result.final_state == initial_state(net)

    def test_fifo_head_violation_reported(self):
        net = build_queue_net(QueueProclet(qid="q", twq=0, enqueue_label="enq", dequeue_label="deq"))
        events = [
            Event(event_id="a", act="enq", time=1000, pid="1", qid="q"),
            Event(event_id="b", act="enq", time=2000, pid="2", qid="q"),
            Event(event_id="c", act="deq", time=3000, pid="2", qid="q"),
        ]
        result = replay_trace(net, events)
        assert not result.accepted
        assert "wrong queue head" in result.diagnostic.reason

    def test_untimed_event_rejected(self):
        net = build_queue_net(QUEUE_C3M3)
        with pytest.raises(IncompleteLogError):
            replay_trace(net, [Event(event_id="x", act="c3_c", pid="50", qid="c3:m3")])


class TestResourceReplay:
    def test_m4_trace(self, complete_log):
        net = build_resource_net(ResourceProclet("m4", 5000, 5000, ("m4_s",), ("m4_c",)))
        events = [complete_log.by_id(i) for i in ("e3", "e4", "e5", "e6")]
        result = replay_trace(net, events)
        assert result.accepted
        assert result.final_state.tokens("idle") == (("m4", ms(65)),)

    def test_busy_resource_rejects_second_start(self):
        net = build_resource_net(ResourceProclet("r", 5000, 5000, ("a_s",), ("a_c",)))
        events = [
            Event(event_id="x", act="a_s", time=1000, pid="1", rid="r"),
            Event(event_id="y", act="a_s", time=2000, pid="2", rid="r"),
        ]
        result = replay_trace(net, events)
        assert not result.accepted and result.diagnostic.event_id == "y"

    def test_determinism(self, complete_log):
        net = build_resource_net(ResourceProclet("m4", 5000, 5000, ("m4_s",), ("m4_c",)))
        events = [complete_log.by_id(i) for i in ("e3", "e4", "e5", "e6")]
        first = replay_trace(net, events)
        second = replay_trace(net, events)
        assert first == second


class TestLogReplay:
    def test_complete_table_accepted(self, bhs_system, complete_log):
        result = replay_log(bhs_system, complete_log)
        assert result.accepted, result.diagnostics
        # duplicate-label starts resolved by token availability
        assert result.fired_process_transition("e3") == "m4_s.m3"
        assert result.fired_process_transition("e5") == "m4_s.c4"

    def test_partial_log_rejected(self, bhs_system, partial_log):
        result = replay_log(bhs_system, partial_log)
        assert not result.accepted
        rejected = {d.event_id for d in result.diagnostics}
        assert "e7" in rejected  # case 50 halts at d1_s after the m3_s gap

    def test_swapped_queue_order_rejected(self, bhs_system, complete_log):
        swapped = []
        for e in complete_log.events:
            if e.event_id == "e6":
                swapped.append(Event("e6", e.act, ms(65), e.pid, e.rid, e.qid))
            elif e.event_id == "e7":
                swapped.append(Event("e7", e.act, ms(60), e.pid, e.rid, e.qid))
            else:
                swapped.append(e)
        log = MultiEntityLog(events=tuple(swapped), entity_types=complete_log.entity_types)
        result = replay_log(bhs_system, log)
        assert not result.accepted
        assert any(d.proclet == "queue:m4:d1" and d.event_id == "e7" for d in result.diagnostics)

    def test_channel_mismatch_detected(self, bhs_system, complete_log):
        tampered = tuple(
            Event(e.event_id, e.act, e.time, e.pid, "m3" if e.event_id == "e3" else e.rid, e.qid)
            for e in complete_log.events
        )
        log = MultiEntityLog(events=tampered, entity_types=complete_log.entity_types)
        result = replay_log(bhs_system, log)
        assert any("channel mismatch" in d.reason for d in result.diagnostics)

    def test_unknown_resource_id(self, bhs_system, complete_log):
        tampered = tuple(
            Event(e.event_id, e.act, e.time, e.pid, "zz" if e.event_id == "e3" else e.rid, e.qid)
            for e in complete_log.events
        )
        log = MultiEntityLog(events=tampered, entity_types=complete_log.entity_types)
        result = replay_log(bhs_system, log)
        assert any("no resource proclet" in d.reason for d in result.diagnostics)

    def test_non_monotone_log_raises(self, bhs_system, complete_log):
        tampered = tuple(
            Event(e.event_id, e.act, ms(45) if e.event_id == "e2" else e.time, e.pid, e.rid, e.qid)
            for e in complete_log.events
        )
        log = MultiEntityLog(events=tampered, entity_types=complete_log.entity_types)
        with pytest.raises(NonMonotoneError):
            replay_log(bhs_system, log)


class TestDisciplineChecks:
    def test_table_log_clean(self, bhs_system, complete_log):
        assert check_queue_fifo(bhs_system, complete_log) == []
        assert check_resource_cycles(bhs_system, complete_log) == []

    def test_fifo_violation_found(self, bhs_system, complete_log):
        swapped = tuple(
            Event(e.event_id, e.act, {"e7": ms(75), "e9": ms(65)}.get(e.event_id, e.time), e.pid, e.rid, e.qid)
            for e in complete_log.events
        )
        log = MultiEntityLog(events=swapped, entity_types=complete_log.entity_types)
        assert any("m4:d1" in v for v in check_queue_fifo(bhs_system, log))

    def test_service_gap_violation_found(self, bhs_system, complete_log):
        tampered = tuple(
            Event(e.event_id, e.act, ms(46) if e.event_id == "e4" else e.time, e.pid, e.rid, e.qid)
            for e in complete_log.events
        )
        log = MultiEntityLog(events=tampered, entity_types=complete_log.entity_types)
        assert any("below minimum" in v for v in check_resource_cycles(bhs_system, log))
