"""Per-process coordination protocols.

A protocol is driven by the events appended to its own history
(``observe``) and asked what it wants to do next (``decide``). The
scheduler turns the answer into at most one event per time unit: a
pending ``Do`` wins, otherwise one of the wanted sends is emitted in
round-robin order. "Send repeatedly" therefore means "keep the send in
the wanted list".
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .fdetect import resolve
from .model import ActionId, Event, EventKind, Generalized, History


class ProtocolKind(str, enum.Enum):
    NUDC_GOSSIP = "nudc"
    UDC_RELIABLE = "reliable"
    UDC_STRONG_FD = "strongfd"
    UDC_T_USEFUL = "tuseful"


_ACKING = (ProtocolKind.UDC_STRONG_FD, ProtocolKind.UDC_T_USEFUL)


@dataclass(frozen=True)
class Protocol:
    kind: ProtocolKind
    t: int | None = None
    fip: bool = False
    # broken variant for negative controls: never wait for this process's ack
    skip_ack_of: int | None = None

    def __post_init__(self):
        if self.kind is ProtocolKind.UDC_T_USEFUL and self.t is None:
            raise ValueError("tuseful protocol needs the failure bound t")

    def __str__(self) -> str:
        s = self.kind.value
        if self.t is not None:
            s += f"({self.t})"
        return s + ("+fip" if self.fip else "")


def alpha_tag(a: ActionId) -> str:
    return f"alpha:{a}"


def ack_tag(a: ActionId) -> str:
    return f"ack:{a}"


def parse_tag(tag: str) -> tuple[str, ActionId] | None:
    kind, _, rest = tag.partition(":")
    if kind in ("alpha", "ack") and rest:
        return kind, ActionId.parse(rest)
    return None


@dataclass
class CoordState:
    in_state: bool = True
    performed: bool = False
    acks: set[int] = field(default_factory=set)
    sent: set[int] = field(default_factory=set)
    witness: tuple[frozenset[int], int] | None = None


@dataclass
class ProcessState:
    proc: int
    n: int
    history: History = None
    coords: dict[ActionId, CoordState] = field(default_factory=dict)
    ever_suspected: set[int] = field(default_factory=set)
    known_faulty: set[int] = field(default_factory=set)
    generalized: list[Generalized] = field(default_factory=list)
    pending_acks: list[tuple[int, ActionId]] = field(default_factory=list)
    cursor: int = 0
    fip_log: dict[int, History] = field(default_factory=dict)

    def __post_init__(self):
        if self.history is None:
            self.history = History.empty(self.proc)

    def copy(self) -> ProcessState:
        return ProcessState(
            self.proc,
            self.n,
            self.history,
            {
                a: CoordState(c.in_state, c.performed, set(c.acks), set(c.sent), c.witness)
                for a, c in self.coords.items()
            },
            set(self.ever_suspected),
            set(self.known_faulty),
            list(self.generalized),
            list(self.pending_acks),
            self.cursor,
            dict(self.fip_log),
        )


def _enter(state: ProcessState, a: ActionId) -> CoordState:
    c = state.coords.get(a)
    if c is None:
        c = state.coords[a] = CoordState()
    return c


def observe(protocol: Protocol, state: ProcessState, e: Event) -> None:
    """Update ``state`` with an event just appended to the process's history."""
    if e.subject != state.proc:
        raise ValueError(f"{e} is not an event of p{state.proc}")
    state.history = state.history.append(e)
    k = e.kind
    if k is EventKind.INIT:
        if e.action.owner != state.proc:
            raise ValueError(f"p{state.proc} cannot initiate {e.action}")
        _enter(state, e.action)
    elif k is EventKind.DO:
        _enter(state, e.action).performed = True
    elif k is EventKind.SEND:
        parsed = parse_tag(e.msg.tag)
        if parsed is None:
            return
        what, a = parsed
        if what == "alpha":
            _enter(state, a).sent.add(e.peer)
        elif (e.peer, a) in state.pending_acks:
            state.pending_acks.remove((e.peer, a))
    elif k is EventKind.RECV:
        if e.msg.fip is not None:
            old = state.fip_log.get(e.peer)
            if old is None or len(old) < len(e.msg.fip):
                state.fip_log[e.peer] = e.msg.fip
        parsed = parse_tag(e.msg.tag)
        if parsed is None:
            return
        what, a = parsed
        if what == "alpha":
            _enter(state, a)
            if protocol.kind in _ACKING and (e.peer, a) not in state.pending_acks:
                state.pending_acks.append((e.peer, a))
        else:
            _enter(state, a).acks.add(e.peer)
    elif k is EventKind.FD:
        s = resolve(e.report, state.n)
        if s is not None:
            state.ever_suspected |= s
        else:
            state.generalized.append(e.report)
            if e.report.k == len(e.report.set):
                state.known_faulty |= e.report.set


def _ready(protocol: Protocol, state: ProcessState, c: CoordState) -> bool:
    p, n = state.proc, state.n
    kind = protocol.kind
    if kind is ProtocolKind.NUDC_GOSSIP:
        return True
    if kind is ProtocolKind.UDC_RELIABLE:
        return all(q in c.sent for q in range(n) if q != p)
    if kind is ProtocolKind.UDC_STRONG_FD:
        return all(
            q in c.acks or q in state.ever_suspected or q == protocol.skip_ack_of for q in range(n) if q != p
        )
    t = protocol.t
    for rep in state.generalized:
        S, k = rep.set, rep.k
        if k <= len(S) and n - len(S) > min(t, n - 1) - k:
            if all(q in c.acks for q in range(n) if q not in S and q != p):
                c.witness = (S, k)
                return True
    return False


def decide(protocol: Protocol, state: ProcessState) -> tuple[ActionId | None, list[tuple[int, str]]]:
    """The action to perform now (if any) and the sends the process currently wants."""
    p, n = state.proc, state.n
    do = None
    for a, c in state.coords.items():
        if c.in_state and not c.performed and _ready(protocol, state, c):
            do = a
            break
    sends = [(q, ack_tag(a)) for q, a in state.pending_acks]
    kind = protocol.kind
    for a, c in state.coords.items():
        if not c.in_state:
            continue
        if kind is ProtocolKind.NUDC_GOSSIP:
            # performs first, then gossips forever
            targets = [q for q in range(n) if q != p] if c.performed else []
        elif kind is ProtocolKind.UDC_RELIABLE:
            targets = [q for q in range(n) if q != p and q not in c.sent]
        elif kind is ProtocolKind.UDC_STRONG_FD:
            targets = [q for q in range(n) if q != p and q not in c.acks]
        else:
            targets = [q for q in range(n) if q != p and q not in c.acks and q not in state.known_faulty]
        sends += [(q, alpha_tag(a)) for q in targets]
    return do, sends


def quiescent(protocol: Protocol, state: ProcessState) -> bool:
    do, sends = decide(protocol, state)
    return do is None and not sends


def step(
    protocol: Protocol, state: ProcessState, inputs: list[Event]
) -> tuple[ProcessState, list[tuple[int, str]], ActionId | None]:
    """Pure form: absorb ``inputs`` into a copy of ``state`` and report what it wants."""
    new = state.copy()
    for e in inputs:
        if e.kind is EventKind.INIT and e.action.owner != state.proc:
            raise ValueError(f"p{state.proc} cannot initiate {e.action}")
        observe(protocol, new, e)
    do, sends = decide(protocol, new)
    return new, sends, do
