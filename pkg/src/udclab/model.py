"""Events, histories, cuts, runs and systems of runs.

Histories are persistent and interned: appending an event to a history
returns a shared node, so identical histories built along different
branches usually end up as the same object and compare in O(1).
"""

from __future__ import annotations

import enum
import io
import re
import weakref
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple


class EventKind(str, enum.Enum):
    SEND = "Send"
    RECV = "Recv"
    INIT = "Init"
    DO = "Do"
    CRASH = "Crash"
    FD = "FdReport"
    FD_PRIMED = "FdReportPrimed"


FD_KINDS = (EventKind.FD, EventKind.FD_PRIMED)


@dataclass(frozen=True, order=True)
class ActionId:
    owner: int
    tag: int

    def __str__(self) -> str:
        return f"a{self.owner}.{self.tag}"

    @classmethod
    def parse(cls, text: str) -> ActionId:
        m = re.fullmatch(r"a(\d+)(?:\.(\d+))?", text.strip())
        if not m:
            raise ValueError(f"bad action id: {text!r}")
        return cls(int(m.group(1)), int(m.group(2) or 0))


# --- failure-detector reports ------------------------------------------------


def _fmt_set(s: Iterable[int]) -> str:
    return "{" + ",".join(str(x) for x in sorted(s)) + "}"


def _parse_set(text: str) -> frozenset[int]:
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise ValueError(f"bad process set: {text!r}")
    body = text[1:-1].strip()
    return frozenset(int(x) for x in body.split(",")) if body else frozenset()


@dataclass(frozen=True)
class Standard:
    suspects: frozenset[int]

    def __str__(self) -> str:
        return "S:" + _fmt_set(self.suspects)


@dataclass(frozen=True)
class Generalized:
    set: frozenset[int]
    k: int

    def __post_init__(self):
        if not 0 <= self.k <= len(self.set):
            raise ValueError(f"generalized report needs 0 <= k <= |S|, got k={self.k}, S={set(self.set)}")

    def __str__(self) -> str:
        return f"G:{_fmt_set(self.set)};k={self.k}"


@dataclass(frozen=True)
class GStandard:
    payload: str
    mapping_id: str

    def __str__(self) -> str:
        return f"GS:{self.payload};map={self.mapping_id}"


FdReport = Standard | Generalized | GStandard


def parse_report(text: str) -> FdReport:
    if text.startswith("S:"):
        return Standard(_parse_set(text[2:]))
    if text.startswith("G:"):
        body, _, k = text[2:].rpartition(";k=")
        return Generalized(_parse_set(body), int(k))
    if text.startswith("GS:"):
        payload, _, mapping = text[3:].rpartition(";map=")
        return GStandard(payload, mapping)
    raise ValueError(f"bad report: {text!r}")


# --- messages and events -----------------------------------------------------


@dataclass(frozen=True)
class MessageId:
    """One transmission. ``tag`` is the payload; ``seq`` numbers the sender's sends.

    ``fip`` is the sender's history at send time when the full-information
    mode is on.
    """

    sender: int
    receiver: int
    tag: str
    seq: int
    fip: History | None = None

    @property
    def channel(self) -> tuple[int, int, str]:
        return (self.sender, self.receiver, self.tag)

    def __str__(self) -> str:
        s = f"{self.sender}>{self.receiver}:{self.tag}#{self.seq}"
        if self.fip is not None:
            s += f"@{len(self.fip)}"
        return s


_MSG_RE = re.compile(r"(\d+)>(\d+):([^#|]+)#(\d+)(?:@(\d+))?")


@dataclass(frozen=True)
class Event:
    kind: EventKind
    subject: int
    peer: int | None = None
    msg: MessageId | None = None
    action: ActionId | None = None
    report: FdReport | None = None

    def __post_init__(self):
        k = self.kind
        comm = k in (EventKind.SEND, EventKind.RECV)
        if comm != (self.peer is not None and self.msg is not None):
            raise ValueError(f"{k.value} event needs exactly peer+msg: {self}")
        if (k in (EventKind.INIT, EventKind.DO)) != (self.action is not None):
            raise ValueError(f"{k.value} event needs exactly an action: {self}")
        if (k in FD_KINDS) != (self.report is not None):
            raise ValueError(f"{k.value} event needs exactly a report: {self}")
        if k is EventKind.INIT and self.action.owner != self.subject:
            raise ValueError(f"init of {self.action} by non-owner p{self.subject}")
        if k is EventKind.SEND and (self.msg.sender, self.msg.receiver) != (self.subject, self.peer):
            raise ValueError(f"send endpoints disagree with message: {self}")
        if k is EventKind.RECV and (self.msg.receiver, self.msg.sender) != (self.subject, self.peer):
            raise ValueError(f"recv endpoints disagree with message: {self}")

    def __str__(self) -> str:
        parts = [self.kind.value, f"p{self.subject}"]
        if self.peer is not None:
            parts.append(f"p{self.peer}")
        for x in (self.msg, self.action, self.report):
            if x is not None:
                parts.append(str(x))
        return "(" + " ".join(parts) + ")"


def send(p: int, q: int, tag: str, seq: int, fip: History | None = None) -> Event:
    return Event(EventKind.SEND, p, q, msg=MessageId(p, q, tag, seq, fip))


def recv(msg: MessageId) -> Event:
    return Event(EventKind.RECV, msg.receiver, msg.sender, msg=msg)


def init(action: ActionId) -> Event:
    return Event(EventKind.INIT, action.owner, action=action)


def do(p: int, action: ActionId) -> Event:
    return Event(EventKind.DO, p, action=action)


def crash(p: int) -> Event:
    return Event(EventKind.CRASH, p)


def fd_report(p: int, report: FdReport, primed: bool = False) -> Event:
    return Event(EventKind.FD_PRIMED if primed else EventKind.FD, p, report=report)


# --- histories ---------------------------------------------------------------

_interned: weakref.WeakValueDictionary = weakref.WeakValueDictionary()


class History:
    """Immutable event sequence of one process, stored as a parent-linked list."""

    __slots__ = ("proc", "parent", "last", "length", "_hash", "__weakref__")

    def __init__(self, proc: int, parent: History | None = None, last: Event | None = None):
        self.proc = proc
        self.parent = parent
        self.last = last
        self.length = 0 if parent is None else parent.length + 1
        self._hash = hash((proc, self.length, last, parent._hash if parent is not None else None))

    @classmethod
    def empty(cls, proc: int) -> History:
        key = ("empty", proc)
        h = _interned.get(key)
        if h is None:
            h = cls(proc)
            _interned[key] = h
        return h

    @classmethod
    def of(cls, proc: int, events: Iterable[Event]) -> History:
        h = cls.empty(proc)
        for e in events:
            h = h.append(e)
        return h

    def append(self, event: Event) -> History:
        if event.subject != self.proc:
            raise ValueError(f"event {event} does not belong to p{self.proc}")
        key = (self, event)
        h = _interned.get(key)
        if h is None:
            h = History(self.proc, self, event)
            _interned[key] = h
        return h

    @property
    def events(self) -> tuple[Event, ...]:
        out = []
        h = self
        while h.parent is not None:
            out.append(h.last)
            h = h.parent
        return tuple(reversed(out))

    def prefix(self, k: int) -> History:
        if not 0 <= k <= self.length:
            raise IndexError(k)
        h = self
        while h.length > k:
            h = h.parent
        return h

    def is_prefix_of(self, other: History) -> bool:
        return other.length >= self.length and other.prefix(self.length) == self

    @property
    def crashed(self) -> bool:
        return self.last is not None and self.last.kind is EventKind.CRASH

    def __len__(self) -> int:
        return self.length

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __contains__(self, event: Event) -> bool:
        h = self
        while h.parent is not None:
            if h.last == event:
                return True
            h = h.parent
        return False

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, History):
            return NotImplemented
        a, b = self, other
        while a is not b:
            if a._hash != b._hash or a.length != b.length or a.proc != b.proc or a.last != b.last:
                return False
            a, b = a.parent, b.parent
        return True

    def __repr__(self) -> str:
        return f"History(p{self.proc}, {[str(e) for e in self.events]})"


Cut = tuple  # tuple[History, ...], one per process


class ProvenanceError(ValueError):
    """An operation that needs an exhaustive system was given a sampled one."""


class Provenance(str, enum.Enum):
    SAMPLED = "sampled"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True, eq=False)
class Run:
    n: int
    cuts: tuple[Cut, ...]
    fairness_budget: int = 8
    closed_out: bool = False
    seed: int = 0
    label: str = ""

    @property
    def horizon(self) -> int:
        return len(self.cuts) - 1

    def history(self, p: int, m: int) -> History:
        return self.cuts[m][p]

    def final(self, p: int) -> History:
        return self.cuts[-1][p]

    @cached_property
    def key(self) -> tuple:
        return tuple(self.cuts)

    @cached_property
    def timeline(self) -> tuple[tuple[tuple[int, Event], ...], ...]:
        """Per process: (time, event) pairs in append order."""
        out = []
        for p in range(self.n):
            items = []
            for m in range(1, len(self.cuts)):
                h = self.cuts[m][p]
                if h is not self.cuts[m - 1][p] and h != self.cuts[m - 1][p]:
                    items.append((m, h.last))
            out.append(tuple(items))
        return tuple(out)

    @cached_property
    def crash_times(self) -> dict[int, int]:
        out = {}
        for p, items in enumerate(self.timeline):
            for m, e in items:
                if e.kind is EventKind.CRASH:
                    out[p] = m
        return out

    def crashed_by(self, m: int) -> frozenset[int]:
        return frozenset(p for p, c in self.crash_times.items() if c <= m)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Run):
            return NotImplemented
        return self.n == other.n and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)


class Point(NamedTuple):
    run: Run
    time: int


@dataclass
class SystemOfRuns:
    n: int
    runs: tuple[Run, ...]
    provenance: Provenance = Provenance.SAMPLED
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = {}
        for r in self.runs:
            if r.n != self.n:
                raise ValueError(f"run with n={r.n} in system with n={self.n}")
            seen.setdefault(r.key, r)
        self.runs = tuple(seen.values())
        self._index = {id(r): i for i, r in enumerate(self.runs)}

    def index_of(self, run: Run) -> int:
        try:
            return self._index[id(run)]
        except KeyError:
            raise ValueError("run does not belong to this system") from None

    def points(self) -> Iterator[Point]:
        for r in self.runs:
            for m in range(r.horizon + 1):
                yield Point(r, m)

    @property
    def exhaustive(self) -> bool:
        return self.provenance is Provenance.EXHAUSTIVE

    def __len__(self) -> int:
        return len(self.runs)


# --- well-formedness ---------------------------------------------------------


class Violation(NamedTuple):
    rule: str
    proc: int
    time: int
    detail: str = ""


def validate_run(run: Run) -> list[Violation]:
    out: list[Violation] = []
    n, cuts = run.n, run.cuts
    for m, cut in enumerate(cuts):
        if len(cut) != n:
            out.append(Violation("CUT", -1, m, f"cut has {len(cut)} histories"))
            return out
        for p, h in enumerate(cut):
            if h.proc != p:
                out.append(Violation("CUT", p, m, f"history of p{h.proc} in slot {p}"))
                return out
    for p in range(n):
        if len(cuts[0][p]):
            out.append(Violation("R1", p, 0, "non-empty history at time 0"))

    sends: dict[MessageId, int] = {}
    recvs: dict[MessageId, int] = {}
    inits: set[ActionId] = set()
    crashed: set[int] = set()
    first = {}
    for m in range(1, len(cuts)):
        appended = []
        for p in range(n):
            old, new = cuts[m - 1][p], cuts[m][p]
            if new == old:
                continue
            if new.parent is None or new.parent != old:
                out.append(Violation("R2", p, m, "history did not grow by at most one event"))
                continue
            appended.append(new.last)
        for e in appended:
            p = e.subject
            if p in crashed:
                first.setdefault(("R4", p), Violation("R4", p, m, f"{e} after crash"))
            if e.kind is EventKind.CRASH:
                crashed.add(p)
            elif e.kind is EventKind.INIT:
                if e.action in inits:
                    first.setdefault(("INIT", p), Violation("INIT", p, m, f"{e.action} initiated twice"))
                inits.add(e.action)
            elif e.kind is EventKind.SEND:
                sends[e.msg] = sends.get(e.msg, 0) + 1
        for e in appended:
            if e.kind is EventKind.RECV:
                recvs[e.msg] = recvs.get(e.msg, 0) + 1
                if recvs[e.msg] > sends.get(e.msg, 0):
                    first.setdefault(("R3", e.subject), Violation("R3", e.subject, m, f"no matching send for {e.msg}"))
    out.extend(sorted(first.values(), key=lambda v: (v.time, v.proc)))

    budget = run.fairness_budget
    if budget > 0:
        sent_by_channel: dict[tuple, int] = {}
        for msg, c in sends.items():
            sent_by_channel[msg.channel] = sent_by_channel.get(msg.channel, 0) + c
        got = {msg.channel for msg in recvs}
        H = run.horizon
        for ch, c in sorted(sent_by_channel.items()):
            s, q, tag = ch
            if c >= budget and q not in crashed and ch not in got:
                out.append(Violation("FAIRNESS", q, H, f"{c} sends of {tag!r} from p{s} never received"))
    return out


def faulty_set(run: Run) -> frozenset[int]:
    return frozenset(p for p in range(run.n) if run.final(p).crashed)


def indistinguishable(a: Point, b: Point, p: int) -> bool:
    return a.run.history(p, a.time) == b.run.history(p, b.time)


def extends(run2: Run, point: Point) -> bool:
    r, m = point
    if run2.n != r.n or run2.horizon < m:
        return False
    return all(run2.cuts[k] == r.cuts[k] for k in range(m + 1))


# --- trace files -------------------------------------------------------------

TRACE_MAGIC = "# udc-trace"


def _record(seq: int, m: int, e: Event) -> str:
    def opt(x):
        return "-" if x is None else str(x)

    return "|".join(
        [str(seq), str(m), str(e.subject), e.kind.value, opt(e.peer), opt(e.msg), opt(e.action), opt(e.report)]
    )


def format_trace(run: Run) -> str:
    buf = io.StringIO()
    label = run.label or "-"
    buf.write(
        f"{TRACE_MAGIC} n={run.n} H={run.horizon} B={run.fairness_budget} seed={run.seed} "
        f"closed={int(run.closed_out)} label={label}\n"
    )
    buf.write("# seq|time|proc|kind|peer|msg|action|report\n")
    seq = 0
    tl = run.timeline
    by_time: dict[int, list[Event]] = {}
    for p in range(run.n):
        for m, e in tl[p]:
            by_time.setdefault(m, []).append(e)
    for m in sorted(by_time):
        for e in by_time[m]:
            buf.write(_record(seq, m, e) + "\n")
            seq += 1
    return buf.getvalue()


def parse_trace(text: str) -> Run:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(TRACE_MAGIC):
        raise ValueError("not a udc trace (missing header)")
    hdr = dict(tok.split("=", 1) for tok in lines[0][len(TRACE_MAGIC):].split())
    n, H, B = int(hdr["n"]), int(hdr["H"]), int(hdr["B"])
    label = hdr.get("label", "-")
    prefixes: list[list[History]] = [[History.empty(p)] for p in range(n)]
    changes: dict[int, list[History]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line or line.startswith("#"):
            continue
        fields = line.split("|")
        if len(fields) != 8:
            raise ValueError(f"line {lineno}: expected 8 fields, got {len(fields)}")
        _, m, p, kind, peer, msg, action, report = fields
        m, p = int(m), int(p)
        kind = EventKind(kind)
        mid = None
        if msg != "-":
            mm = _MSG_RE.fullmatch(msg)
            if not mm:
                raise ValueError(f"line {lineno}: bad message {msg!r}")
            s, r, tag, sq, fl = mm.groups()
            fip = prefixes[int(s)][int(fl)] if fl is not None else None
            mid = MessageId(int(s), int(r), tag, int(sq), fip)
        e = Event(
            kind,
            p,
            None if peer == "-" else int(peer),
            mid,
            None if action == "-" else ActionId.parse(action),
            None if report == "-" else parse_report(report),
        )
        h = prefixes[p][-1].append(e)
        prefixes[p].append(h)
        changes.setdefault(m, []).append(h)
    cur = [prefixes[p][0] for p in range(n)]
    cuts = [tuple(cur)]
    for m in range(1, H + 1):
        for h in changes.get(m, ()):
            cur[h.proc] = h
        cuts.append(tuple(cur))
    return Run(n, tuple(cuts), B, hdr.get("closed", "0") == "1", int(hdr.get("seed", 0)), "" if label == "-" else label)


def write_trace(run: Run, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_trace(run))


def read_trace(path) -> Run:
    with open(path, encoding="utf-8") as f:
        return parse_trace(f.read())
