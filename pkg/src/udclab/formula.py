"""Knowledge-temporal formulas and their finite-horizon evaluation.

Truth is three-valued. ``Eventually``/``Always`` are decided only when a
witness or refutation lies inside the horizon, or when the run is closed
out and the operand is knowledge-free (the run is then frozen at H).
Knowledge is relative to the given system; on sampled systems a ``K``
that would be true is reported as unknown.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

from .model import ActionId, EventKind, History, Point, SystemOfRuns


class TruthValue(enum.Enum):
    TRUE = "T"
    FALSE = "F"
    UNKNOWN = "U"

    def __invert__(self) -> TruthValue:
        return _NOT[self]

    def __and__(self, other: TruthValue) -> TruthValue:
        if self is F or other is F:
            return F
        if self is T and other is T:
            return T
        return U

    def __or__(self, other: TruthValue) -> TruthValue:
        if self is T or other is T:
            return T
        if self is F and other is F:
            return F
        return U

    @classmethod
    def of(cls, b: bool) -> TruthValue:
        return T if b else F


T, F, U = TruthValue.TRUE, TruthValue.FALSE, TruthValue.UNKNOWN
_NOT = {T: F, F: T, U: U}


# --- AST ---------------------------------------------------------------------


class Formula:
    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class PropSend(Formula):
    p: int
    q: int
    tag: str


@dataclass(frozen=True)
class PropRecv(Formula):
    q: int
    p: int
    tag: str


@dataclass(frozen=True)
class PropCrash(Formula):
    p: int


@dataclass(frozen=True)
class PropDo(Formula):
    p: int
    action: ActionId


@dataclass(frozen=True)
class PropInit(Formula):
    p: int
    action: ActionId


@dataclass(frozen=True)
class Not(Formula):
    sub: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Always(Formula):
    sub: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    sub: Formula


@dataclass(frozen=True)
class Knows(Formula):
    p: int
    sub: Formula


PRIMITIVES = (PropSend, PropRecv, PropCrash, PropDo, PropInit)


def conj(*fs: Formula) -> Formula:
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def disj(*fs: Formula) -> Formula:
    out = fs[0]
    for f in fs[1:]:
        out = Or(out, f)
    return out


@lru_cache(maxsize=None)
def knowledge_free(phi: Formula) -> bool:
    if isinstance(phi, Knows):
        return False
    if isinstance(phi, PRIMITIVES):
        return True
    if isinstance(phi, (Not, Always, Eventually)):
        return knowledge_free(phi.sub)
    return knowledge_free(phi.left) and knowledge_free(phi.right)


def processes_in(phi: Formula) -> set[int]:
    if isinstance(phi, PropSend):
        return {phi.p, phi.q}
    if isinstance(phi, PropRecv):
        return {phi.p, phi.q}
    if isinstance(phi, (PropCrash, PropDo, PropInit)):
        out = {phi.p}
        if hasattr(phi, "action"):
            out.add(phi.action.owner)
        return out
    if isinstance(phi, Knows):
        return {phi.p} | processes_in(phi.sub)
    if isinstance(phi, (Not, Always, Eventually)):
        return processes_in(phi.sub)
    return processes_in(phi.left) | processes_in(phi.right)


# --- text syntax -------------------------------------------------------------
# prefix notation: "K p1 (E (do p2 a0))"; A = always, E = eventually

_UNARY = {"not": Not, "!": Not, "A": Always, "E": Eventually}
_BINARY = {"and": And, "&": And, "or": Or, "|": Or, "implies": Implies, "->": Implies}
_TOKEN = re.compile(r"\s*(\(|\)|[^\s()]+)")


def _proc(tok: str) -> int:
    m = re.fullmatch(r"p(\d+)", tok)
    if not m:
        raise ValueError(f"expected a process like p1, got {tok!r}")
    return int(m.group(1))


def parse_formula(text: str) -> Formula:
    toks = _TOKEN.findall(text)
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(toks):
            raise ValueError(f"unexpected end of formula: {text!r}")
        pos += 1
        return toks[pos - 1]

    def expr() -> Formula:
        tok = take()
        if tok == "(":
            f = body()
            if take() != ")":
                raise ValueError(f"expected ')' in {text!r}")
            return f
        nonlocal pos
        pos -= 1
        return body()

    def body() -> Formula:
        op = take()
        if op == "send":
            return PropSend(_proc(take()), _proc(take()), take())
        if op == "recv":
            return PropRecv(_proc(take()), _proc(take()), take())
        if op == "crash":
            return PropCrash(_proc(take()))
        if op == "do":
            return PropDo(_proc(take()), ActionId.parse(take()))
        if op == "init":
            return PropInit(_proc(take()), ActionId.parse(take()))
        if op == "K":
            return Knows(_proc(take()), expr())
        if op in _UNARY:
            return _UNARY[op](expr())
        if op in _BINARY:
            return _BINARY[op](expr(), expr())
        raise ValueError(f"unknown operator {op!r} in {text!r}")

    f = expr()
    if pos != len(toks):
        raise ValueError(f"trailing tokens in {text!r}")
    return f


def to_text(phi: Formula, top: bool = True) -> str:
    if isinstance(phi, PropSend):
        s = f"send p{phi.p} p{phi.q} {phi.tag}"
    elif isinstance(phi, PropRecv):
        s = f"recv p{phi.q} p{phi.p} {phi.tag}"
    elif isinstance(phi, PropCrash):
        s = f"crash p{phi.p}"
    elif isinstance(phi, PropDo):
        s = f"do p{phi.p} {phi.action}"
    elif isinstance(phi, PropInit):
        s = f"init p{phi.p} {phi.action}"
    elif isinstance(phi, Knows):
        s = f"K p{phi.p} {to_text(phi.sub, False)}"
    elif isinstance(phi, (Not, Always, Eventually)):
        op = {Not: "not", Always: "A", Eventually: "E"}[type(phi)]
        s = f"{op} {to_text(phi.sub, False)}"
    else:
        op = {And: "and", Or: "or", Implies: "implies"}[type(phi)]
        s = f"{op} {to_text(phi.left, False)} {to_text(phi.right, False)}"
    return s if top else f"({s})"


# --- evaluation --------------------------------------------------------------


class PointOutOfRange(ValueError):
    pass


class NotLocal(ValueError):
    """A formula that was required to be local to a process is not."""


def _event_matches(phi: Formula, e) -> bool:
    k = e.kind
    if isinstance(phi, PropCrash):
        return k is EventKind.CRASH
    if isinstance(phi, PropDo):
        return k is EventKind.DO and e.action == phi.action
    if isinstance(phi, PropInit):
        return k is EventKind.INIT and e.action == phi.action
    if isinstance(phi, PropSend):
        return k is EventKind.SEND and e.peer == phi.q and e.msg.tag == phi.tag
    if isinstance(phi, PropRecv):
        return k is EventKind.RECV and e.peer == phi.p and e.msg.tag == phi.tag
    raise TypeError(phi)


def _owner(phi: Formula) -> int:
    return phi.q if isinstance(phi, PropRecv) else phi.p


class Evaluator:
    """Evaluates formulas at every point of a system, one truth vector per run.

    Results are memoised per instance; use one evaluator per thread.
    ``closed_world`` treats every run as frozen at its horizon.
    """

    def __init__(self, system: SystemOfRuns, closed_world: bool = False):
        self.system = system
        self.closed_world = closed_world
        self._cache: dict[Formula, list[list[TruthValue]]] = {}
        self._classes: dict[int, dict[History, list[tuple[int, int]]]] = {}

    def vectors(self, phi: Formula) -> list[list[TruthValue]]:
        v = self._cache.get(phi)
        if v is None:
            v = self._compute(phi)
            self._cache[phi] = v
        return v

    def value(self, phi: Formula, point: Point) -> TruthValue:
        run, m = point
        if not 0 <= m <= run.horizon:
            raise PointOutOfRange(f"time {m} outside [0, {run.horizon}]")
        return self.vectors(phi)[self.system.index_of(run)][m]

    def classes(self, p: int) -> dict[History, list[tuple[int, int]]]:
        idx = self._classes.get(p)
        if idx is None:
            idx = {}
            for i, r in enumerate(self.system.runs):
                for m, cut in enumerate(r.cuts):
                    idx.setdefault(cut[p], []).append((i, m))
            self._classes[p] = idx
        return idx

    def _frozen(self, run, sub: Formula) -> bool:
        return self.closed_world or (run.closed_out and knowledge_free(sub))

    def _compute(self, phi: Formula) -> list[list[TruthValue]]:
        runs = self.system.runs
        if isinstance(phi, PRIMITIVES):
            p = _owner(phi)
            out = []
            for r in runs:
                vec = [F] * (r.horizon + 1)
                for m, e in r.timeline[p]:
                    if _event_matches(phi, e):
                        vec[m:] = [T] * (r.horizon + 1 - m)
                        break
                out.append(vec)
            return out
        if isinstance(phi, Not):
            return [[~x for x in vec] for vec in self.vectors(phi.sub)]
        if isinstance(phi, (And, Or, Implies)):
            a, b = self.vectors(phi.left), self.vectors(phi.right)
            if isinstance(phi, And):
                return [[x & y for x, y in zip(va, vb)] for va, vb in zip(a, b)]
            if isinstance(phi, Or):
                return [[x | y for x, y in zip(va, vb)] for va, vb in zip(a, b)]
            return [[~x | y for x, y in zip(va, vb)] for va, vb in zip(a, b)]
        if isinstance(phi, (Eventually, Always)):
            ev = isinstance(phi, Eventually)
            hit, miss = (T, F) if ev else (F, T)
            out = []
            for r, vec in zip(runs, self.vectors(phi.sub)):
                frozen = self._frozen(r, phi.sub)
                res = [U] * len(vec)
                seen_hit, all_miss = False, True
                for m in range(len(vec) - 1, -1, -1):
                    x = vec[m]
                    seen_hit = seen_hit or x is hit
                    all_miss = all_miss and x is miss
                    if seen_hit:
                        res[m] = hit
                    elif all_miss and frozen:
                        res[m] = miss
                out.append(res)
            return out
        if isinstance(phi, Knows):
            sub = self.vectors(phi.sub)
            sampled = not self.system.exhaustive
            out = [[U] * (r.horizon + 1) for r in runs]
            for members in self.classes(phi.p).values():
                agg = T
                for i, m in members:
                    agg = agg & sub[i][m]
                    if agg is F:
                        break
                if agg is T and sampled:
                    agg = U
                for i, m in members:
                    out[i][m] = agg
            return out
        raise TypeError(f"not a formula: {phi!r}")


def eval_formula(system: SystemOfRuns, point: Point, phi: Formula) -> TruthValue:
    return Evaluator(system).value(phi, point)


class Validity(NamedTuple):
    value: TruthValue
    witness: Point | None
    undecided: list[Point]

    def __bool__(self) -> bool:
        return self.value is T


def is_valid(system: SystemOfRuns, phi: Formula, evaluator: Evaluator | None = None) -> Validity:
    ev = evaluator or Evaluator(system)
    undecided = []
    for r, vec in zip(system.runs, ev.vectors(phi)):
        for m, x in enumerate(vec):
            if x is F:
                return Validity(F, Point(r, m), undecided)
            if x is U:
                undecided.append(Point(r, m))
    return Validity(U if undecided else T, None, undecided)


def is_local(system: SystemOfRuns, phi: Formula, p: int, evaluator: Evaluator | None = None) -> TruthValue:
    return is_valid(system, Or(Knows(p, phi), Knows(p, Not(phi))), evaluator).value


def is_stable(system: SystemOfRuns, phi: Formula, evaluator: Evaluator | None = None) -> TruthValue:
    return is_valid(system, Implies(phi, Always(phi)), evaluator).value


def is_failure_insensitive(
    system: SystemOfRuns, phi: Formula, q: int, evaluator: Evaluator | None = None
) -> TruthValue:
    ev = evaluator or Evaluator(system)
    if is_local(system, phi, q, ev) is not T:
        raise NotLocal(f"{to_text(phi)} is not local to p{q}")
    vecs = ev.vectors(phi)
    classes = ev.classes(q)
    result = T
    for h, members in classes.items():
        if not h.crashed:
            continue
        before = classes.get(h.parent, [])
        for i, m in members:
            for j, k in before:
                a, b = vecs[i][m], vecs[j][k]
                if a is U or b is U:
                    result = U
                elif a is not b:
                    return F
    return result


# --- reference evaluator -----------------------------------------------------


def naive_eval(system: SystemOfRuns, run, m: int, phi: Formula, closed_world: bool = False) -> TruthValue:
    """Direct recursive semantics with no caching; slow, used as an oracle."""
    if isinstance(phi, PRIMITIVES):
        return TruthValue.of(any(_event_matches(phi, e) for e in run.history(_owner(phi), m)))
    if isinstance(phi, Not):
        return ~naive_eval(system, run, m, phi.sub, closed_world)
    if isinstance(phi, And):
        return naive_eval(system, run, m, phi.left, closed_world) & naive_eval(system, run, m, phi.right, closed_world)
    if isinstance(phi, Or):
        return naive_eval(system, run, m, phi.left, closed_world) | naive_eval(system, run, m, phi.right, closed_world)
    if isinstance(phi, Implies):
        return ~naive_eval(system, run, m, phi.left, closed_world) | naive_eval(
            system, run, m, phi.right, closed_world
        )
    if isinstance(phi, (Eventually, Always)):
        vals = [naive_eval(system, run, k, phi.sub, closed_world) for k in range(m, run.horizon + 1)]
        frozen = closed_world or (run.closed_out and knowledge_free(phi.sub))
        hit, miss = (T, F) if isinstance(phi, Eventually) else (F, T)
        if hit in vals:
            return hit
        if frozen and all(v is miss for v in vals):
            return miss
        return U
    if isinstance(phi, Knows):
        mine = run.history(phi.p, m)
        result = T
        for r2 in system.runs:
            for k in range(r2.horizon + 1):
                if r2.history(phi.p, k) == mine:
                    result = result & naive_eval(system, r2, k, phi.sub, closed_world)
        if result is T and not system.exhaustive:
            return U
        return result
    raise TypeError(phi)
