import pytest

from udclab.model import do as do_event
from udclab.model import ActionId, Generalized, MessageId, Standard, fd_report, init, recv, send
from udclab.protocols import (
    Protocol,
    ProcessState,
    ProtocolKind,
    ack_tag,
    alpha_tag,
    decide,
    observe,
    parse_tag,
    quiescent,
    step,
)

A = ActionId(0, 0)


def _recv(q, p, tag, seq=0):
    return recv(MessageId(p, q, tag, seq))


def test_tags():
    assert alpha_tag(A) == "alpha:a0.0" and ack_tag(A) == "ack:a0.0"
    assert parse_tag("ack:a2.1") == ("ack", ActionId(2, 1))
    assert parse_tag("gossip:{1}") is None


def test_tuseful_needs_t():
    with pytest.raises(ValueError):
        Protocol(ProtocolKind.UDC_T_USEFUL)


def test_gossip_performs_at_once_then_spreads():
    proto = Protocol(ProtocolKind.NUDC_GOSSIP)
    st, sends, do = step(proto, ProcessState(0, 3), [init(A)])
    assert do == A and sends == []
    observe(proto, st, do_event(0, A))
    assert decide(proto, st) == (None, [(1, "alpha:a0.0"), (2, "alpha:a0.0")])
    assert not quiescent(proto, st)


def test_reliable_performs_after_sending_to_all():
    proto = Protocol(ProtocolKind.UDC_RELIABLE)
    st = ProcessState(0, 3)
    observe(proto, st, init(A))
    assert decide(proto, st) == (None, [(1, "alpha:a0.0"), (2, "alpha:a0.0")])
    observe(proto, st, send(0, 1, "alpha:a0.0", 0))
    observe(proto, st, send(0, 2, "alpha:a0.0", 1))
    assert decide(proto, st) == (A, [])


def test_strong_fd_waits_for_ack_or_suspicion():
    proto = Protocol(ProtocolKind.UDC_STRONG_FD)
    st = ProcessState(0, 3)
    observe(proto, st, init(A))
    observe(proto, st, _recv(0, 1, "ack:a0.0"))
    do, sends = decide(proto, st)
    assert do is None and sends == [(2, "alpha:a0.0")]
    observe(proto, st, fd_report(0, Standard(frozenset({2}))))
    assert decide(proto, st)[0] == A


def test_broken_variant_skips_one_ack():
    proto = Protocol(ProtocolKind.UDC_STRONG_FD, skip_ack_of=2)
    st = ProcessState(0, 3)
    observe(proto, st, init(A))
    observe(proto, st, _recv(0, 1, "ack:a0.0"))
    assert decide(proto, st)[0] == A


def test_receiver_acks_once_per_alpha():
    proto = Protocol(ProtocolKind.UDC_STRONG_FD)
    st = ProcessState(1, 3)
    observe(proto, st, _recv(1, 0, "alpha:a0.0"))
    observe(proto, st, _recv(1, 0, "alpha:a0.0", 1))
    assert st.pending_acks == [(0, A)]
    do, sends = decide(proto, st)
    # p1 joins the coordination: it also performs once everybody acked
    assert (0, "ack:a0.0") in sends
    observe(proto, st, send(1, 0, "ack:a0.0", 0))
    assert st.pending_acks == []


def test_tuseful_ready_on_useful_report():
    proto = Protocol(ProtocolKind.UDC_T_USEFUL, t=2)
    st = ProcessState(0, 4)
    observe(proto, st, init(A))
    # (S, k) = ({2, 3}, 1): 4 - 2 > 2 - 1, so acks from Proc - S - {p0} = {p1} suffice
    observe(proto, st, fd_report(0, Generalized(frozenset({2, 3}), 1)))
    assert decide(proto, st)[0] is None
    observe(proto, st, _recv(0, 1, "ack:a0.0"))
    assert decide(proto, st)[0] == A
    assert st.coords[A].witness == (frozenset({2, 3}), 1)


def test_tuseful_skips_known_faulty_targets():
    proto = Protocol(ProtocolKind.UDC_T_USEFUL, t=1)
    st = ProcessState(0, 3)
    observe(proto, st, init(A))
    observe(proto, st, fd_report(0, Generalized(frozenset({2}), 1)))
    assert decide(proto, st)[1] == [(1, "alpha:a0.0")]


def test_step_is_pure_and_rejects_foreign_init():
    proto = Protocol(ProtocolKind.UDC_RELIABLE)
    st = ProcessState(0, 2)
    new, _, _ = step(proto, st, [init(A)])
    assert len(st.history) == 0 and len(new.history) == 1
    with pytest.raises(ValueError):
        step(proto, ProcessState(1, 2), [init(A)])
