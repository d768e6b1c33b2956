"""Failure-detector oracles, suspicion streams and detector property checks."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Mapping

from .model import (
    EventKind,
    FdReport,
    Generalized,
    GStandard,
    History,
    Run,
    Standard,
    SystemOfRuns,
    Event,
    _parse_set,
    faulty_set,
)
from .verdict import Verdict, Witness, from_findings

# g-standard mappings: payload, n -> suspected set
MAPPINGS: dict[str, Callable[[str, int], frozenset[int]]] = {}


def register_mapping(mapping_id: str, fn: Callable[[str, int], frozenset[int]]) -> None:
    MAPPINGS[mapping_id] = fn


def _complement(payload: str, n: int) -> frozenset[int]:
    # "correct:{1,3}" -> every process not listed is suspected
    tag, _, body = payload.partition(":")
    if tag != "correct":
        raise ValueError(f"complement mapping expects 'correct:{{...}}', got {payload!r}")
    return frozenset(range(n)) - _parse_set(body)


register_mapping("complement", _complement)


def resolve(report: FdReport, n: int) -> frozenset[int] | None:
    """The suspected set a report stands for; None for generalized reports."""
    if isinstance(report, Standard):
        return report.suspects
    if isinstance(report, GStandard):
        try:
            fn = MAPPINGS[report.mapping_id]
        except KeyError:
            raise ValueError(f"unknown g-standard mapping {report.mapping_id!r}") from None
        return fn(report.payload, n)
    return None


def _fd_kind(primed: bool) -> EventKind:
    return EventKind.FD_PRIMED if primed else EventKind.FD


def suspects_at(run: Run, p: int, m: int, primed: bool = False) -> frozenset[int]:
    kind = _fd_kind(primed)
    h = run.history(p, m)
    while h.parent is not None:
        e = h.last
        if e.kind is kind:
            s = resolve(e.report, run.n)
            if s is not None:
                return s
        h = h.parent
    return frozenset()


def suspicion_series(run: Run, p: int, primed: bool = False) -> list[frozenset[int]]:
    """Suspects_p at every time 0..H."""
    kind = _fd_kind(primed)
    out = [frozenset()] * (run.horizon + 1)
    cur = frozenset()
    last = 0
    for m, e in run.timeline[p]:
        if e.kind is kind:
            s = resolve(e.report, run.n)
            if s is not None:
                out[last:m] = [cur] * (m - last)
                cur, last = s, m
    out[last:] = [cur] * (run.horizon + 1 - last)
    return out


def generalized_reports_at(run: Run, p: int, m: int, primed: bool = False) -> list[tuple[int, Generalized]]:
    kind = _fd_kind(primed)
    return [
        (k, e.report)
        for k, e in run.timeline[p]
        if k <= m and e.kind is kind and isinstance(e.report, Generalized)
    ]


# --- oracles -----------------------------------------------------------------


class OracleKind(str, enum.Enum):
    NONE = "none"
    PERFECT = "perfect"
    STRONG = "strong"
    WEAK = "weak"
    IMPERMANENT_STRONG = "impstrong"
    IMPERMANENT_WEAK = "impweak"
    TRIVIAL_T_USEFUL = "trivial"
    USEFUL = "useful"
    ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class FdOracle:
    kind: OracleKind = OracleKind.PERFECT
    seed: int = 0
    report_period: int = 1
    t: int | None = None
    delay: int = 0
    spurious: float = 0.0
    spec: str = ""

    def __post_init__(self):
        if self.report_period < 1:
            raise ValueError("report_period must be >= 1")
        if self.kind in (OracleKind.TRIVIAL_T_USEFUL, OracleKind.USEFUL) and self.t is None:
            raise ValueError(f"{self.kind.value} oracle needs t")
        if self.kind is OracleKind.ADVERSARIAL:
            parse_adversary(self.spec)

    def __str__(self) -> str:
        s = self.kind.value
        if self.t is not None:
            s += f"({self.t})"
        if self.spec:
            s += f"[{self.spec}]"
        return s


def _coin(*keys: int) -> random.Random:
    return random.Random(hash(keys) & 0xFFFFFFFFFFFF)


@dataclass(frozen=True)
class _Rule:
    action: str  # "suspect" | "hide"
    target: int
    time: int | None
    proc: int | None


def parse_adversary(spec: str) -> list[_Rule]:
    """Rules like ``suspect:2@3`` (p2 suspected by all at t=3), ``suspect:2@3:0``
    (only by p0), ``hide:1:0`` (p0 never suspects p1); ';' separated."""
    rules = []
    for part in filter(None, (s.strip() for s in spec.split(";"))):
        action, _, rest = part.partition(":")
        if action not in ("suspect", "hide") or not rest:
            raise ValueError(f"bad adversary rule {part!r}")
        bits = rest.split(":")
        target, _, at = bits[0].partition("@")
        rules.append(
            _Rule(action, int(target), int(at) if at else None, int(bits[1]) if len(bits) > 1 else None)
        )
    return rules


def _designated(n: int, faulty: frozenset[int] | None) -> int | None:
    if faulty is None:
        return None
    correct = [q for q in range(n) if q not in faulty]
    return correct[0] if correct else None


def next_report(
    oracle: FdOracle,
    n: int,
    p: int,
    m: int,
    crashed: Mapping[int, int],
    faulty: frozenset[int] | None = None,
    emitted: int = 0,
) -> FdReport | None:
    """Report emitted to ``p`` at time ``m``.

    ``crashed`` maps processes crashed by ``m`` to their crash times;
    ``faulty`` is the run's eventual faulty set (oracles are omniscient);
    ``emitted`` counts reports already delivered to ``p``.
    """
    kind = oracle.kind
    if kind is OracleKind.NONE:
        return None
    if kind is OracleKind.PERFECT:
        return Standard(frozenset(crashed))
    if kind is OracleKind.ADVERSARIAL:
        s = set(crashed)
        for rule in parse_adversary(oracle.spec):
            if rule.proc is not None and rule.proc != p:
                continue
            if rule.action == "hide":
                s.discard(rule.target)
            elif rule.time is None or rule.time == m:
                s.add(rule.target)
        return Standard(frozenset(s))
    if kind is OracleKind.TRIVIAL_T_USEFUL:
        subsets = list(combinations(range(n), oracle.t))
        return Generalized(frozenset(subsets[emitted % len(subsets)]), 0)
    if kind is OracleKind.USEFUL:
        down = frozenset(crashed)
        alive = [q for q in range(n) if q not in down]
        room = n - min(oracle.t, n - 1) - 1
        rng = _coin(oracle.seed, p, m)
        extra = rng.sample(alive, min(len(alive), rng.randint(0, max(room, 0))))
        return Generalized(down | frozenset(extra), len(down))

    c = _designated(n, faulty)
    detected = frozenset(q for q, at in crashed.items() if at <= m - oracle.delay)
    if kind in (OracleKind.IMPERMANENT_STRONG, OracleKind.IMPERMANENT_WEAK) and emitted % 2:
        detected = frozenset()
    if kind in (OracleKind.WEAK, OracleKind.IMPERMANENT_WEAK) and c is not None and p != c:
        detected = frozenset()
    spurious = set()
    if oracle.spurious > 0 and c is not None:
        for x in range(n):
            if x != c and x != p and x not in crashed and _coin(oracle.seed, p, m, x).random() < oracle.spurious:
                spurious.add(x)
    return Standard(detected | frozenset(spurious))


# --- property checks ---------------------------------------------------------


class Property(str, enum.Enum):
    STRONG_ACCURACY = "StrongAccuracy"
    WEAK_ACCURACY = "WeakAccuracy"
    STRONG_COMPLETENESS = "StrongCompleteness"
    WEAK_COMPLETENESS = "WeakCompleteness"
    IMPERMANENT_STRONG_COMPLETENESS = "ImpermanentStrongCompleteness"
    IMPERMANENT_WEAK_COMPLETENESS = "ImpermanentWeakCompleteness"


def _run_property(i: int, run: Run, prop: Property, primed: bool):
    n, H = run.n, run.horizon
    series = [suspicion_series(run, p, primed) for p in range(n)]
    F = faulty_set(run)
    ct = run.crash_times
    if prop is Property.STRONG_ACCURACY:
        for m in range(H + 1):
            for p in range(n):
                for q in sorted(series[p][m]):
                    if ct.get(q, H + 1) > m:
                        return Witness(i, m, p, f"suspects p{q} before it crashed"), []
        return None, []
    if prop is Property.WEAK_ACCURACY:
        correct = set(range(n)) - F
        if not correct:
            return None, []
        for m in range(H + 1):
            for p in range(n):
                correct -= series[p][m]
            if not correct:
                return Witness(i, m, None, "every correct process has been suspected"), []
        return None, []

    permanent = prop in (Property.STRONG_COMPLETENESS, Property.WEAK_COMPLETENESS)
    strong = prop in (Property.STRONG_COMPLETENESS, Property.IMPERMANENT_STRONG_COMPLETENESS)

    def holds(p: int, q: int) -> bool:
        if permanent:
            return q in series[p][H]
        return any(q in s for s in series[p])

    correct = [p for p in range(n) if p not in F]
    missing = []
    if not correct:
        return None, []
    for q in sorted(F):
        if strong:
            missing += [(p, q) for p in correct if not holds(p, q)]
        elif not any(holds(p, q) for p in correct):
            missing.append((None, q))
    if not missing:
        return None, []
    if run.closed_out:
        p, q = missing[0]
        who = "any correct process" if p is None else f"p{p}"
        return Witness(i, H, p, f"crashed p{q} not {'permanently ' if permanent else ''}suspected by {who}"), []
    return None, [
        f"run {i}: p{q} not yet {'permanently ' if permanent else ''}suspected by "
        + ("some correct process" if p is None else f"p{p}")
        for p, q in missing
    ]


def check_property(system: SystemOfRuns, prop: Property | str, source: str = "original") -> Verdict:
    prop = Property(prop)
    if source not in ("original", "primed"):
        raise ValueError(f"unknown suspicion source {source!r}")
    primed = source == "primed"
    obligations = []
    for i, run in enumerate(system.runs):
        fail, obl = _run_property(i, run, prop, primed)
        if fail is not None:
            return from_findings(prop.value, fail, [])
        obligations += obl
    return from_findings(prop.value, None, obligations)


def is_t_useful_event(report: Generalized, n: int, t: int, F: frozenset[int] | set[int]) -> bool:
    S, k = report.set, report.k
    return set(F) <= S and k <= len(S) and n - len(S) > min(t, n - 1) - k


def check_generalized_accuracy(system: SystemOfRuns, source: str = "original") -> Verdict:
    primed = source == "primed"
    for i, run in enumerate(system.runs):
        for p in range(run.n):
            for m, rep in generalized_reports_at(run, p, run.horizon, primed):
                down = run.crashed_by(m)
                if len(rep.set & down) < rep.k:
                    return from_findings(
                        "GeneralizedStrongAccuracy", Witness(i, m, p, f"{rep} but only {sorted(rep.set & down)} crashed"), []
                    )
    return from_findings("GeneralizedStrongAccuracy", None, [])


def check_generalized_completeness(system: SystemOfRuns, t: int, source: str = "original") -> Verdict:
    primed = source == "primed"
    name = "GeneralizedImpermanentStrongCompleteness"
    obligations = []
    for i, run in enumerate(system.runs):
        F = faulty_set(run)
        for p in range(run.n):
            if p in F:
                continue
            reps = generalized_reports_at(run, p, run.horizon, primed)
            if any(is_t_useful_event(rep, run.n, t, F) for _, rep in reps):
                continue
            if run.closed_out:
                return from_findings(name, Witness(i, run.horizon, p, f"no {t}-useful event"), [])
            obligations.append(f"run {i}: p{p} has no {t}-useful event yet")
    return from_findings(name, None, obligations)


def check_generalized(system: SystemOfRuns, t: int, source: str = "original") -> Verdict:
    from .verdict import combine

    return combine(
        "GeneralizedTUseful",
        [check_generalized_accuracy(system, source), check_generalized_completeness(system, t, source)],
    )


# --- conversions between generalized and standard detectors ------------------


class ConversionInapplicable(ValueError):
    pass


def as_perfect(history: History) -> History:
    out = History.empty(history.proc)
    acc: frozenset[int] = frozenset()
    for e in history:
        if e.kind in (EventKind.FD, EventKind.FD_PRIMED) and isinstance(e.report, Generalized):
            if e.report.k != len(e.report.set):
                raise ConversionInapplicable(f"{e.report} has k < |S|")
            acc |= e.report.set
            e = Event(e.kind, e.subject, report=Standard(acc))
        out = out.append(e)
    return out


def as_n_useful(history: History) -> History:
    out = History.empty(history.proc)
    acc: frozenset[int] = frozenset()
    for e in history:
        if e.kind in (EventKind.FD, EventKind.FD_PRIMED) and isinstance(e.report, Standard):
            acc |= e.report.suspects
            e = Event(e.kind, e.subject, report=Generalized(acc, len(acc)))
        out = out.append(e)
    return out
