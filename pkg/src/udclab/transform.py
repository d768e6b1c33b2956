"""Run and system transformations: detector conversions and the f / f' extractions."""

from __future__ import annotations

from .fdetect import Property, check_property, resolve
from .formula import Evaluator, Knows, PropCrash, TruthValue
from .model import (
    Event,
    EventKind,
    Generalized,
    History,
    MessageId,
    ProvenanceError,
    Run,
    Standard,
    SystemOfRuns,
    _fmt_set,
    _parse_set,
    fd_report,
    recv,
)
from .verdict import Status


def _rebuild(run: Run, per_step: list[list[Event | None]], horizon: int, **kw) -> Run:
    """Turn per-process event slots (index = time-1) into a run."""
    cur = [History.empty(p) for p in range(run.n)]
    cuts = [tuple(cur)]
    for m in range(horizon):
        for p in range(run.n):
            e = per_step[p][m]
            if e is not None:
                cur[p] = cur[p].append(e)
        cuts.append(tuple(cur))
    return Run(
        run.n,
        tuple(cuts),
        kw.get("fairness_budget", run.fairness_budget),
        kw.get("closed_out", run.closed_out),
        run.seed,
        run.label,
    )


# --- impermanent -> permanent ------------------------------------------------


def convert_impermanent_to_strong(history: History) -> History:
    """Replace every standard report by the union of all reports so far."""
    out = History.empty(history.proc)
    acc: dict[EventKind, frozenset[int]] = {}
    for e in history:
        if e.kind in (EventKind.FD, EventKind.FD_PRIMED) and isinstance(e.report, Standard):
            u = acc.get(e.kind, frozenset()) | e.report.suspects
            acc[e.kind] = u
            e = Event(e.kind, e.subject, report=Standard(u))
        out = out.append(e)
    return out


def convert_impermanent_system(system: SystemOfRuns) -> SystemOfRuns:
    runs = []
    for r in system.runs:
        cuts = tuple(
            tuple(convert_impermanent_to_strong(h) for h in cut) for cut in r.cuts
        )
        runs.append(Run(r.n, cuts, r.fairness_budget, r.closed_out, r.seed, r.label))
    return SystemOfRuns(system.n, tuple(runs), system.provenance, {**system.meta, "transform": "impermanent"})


# --- weak -> strong completeness ---------------------------------------------


def gossip_tag(s: frozenset[int]) -> str:
    return "gossip:" + _fmt_set(s)


def _gossip_payload(tag: str) -> frozenset[int] | None:
    kind, _, body = tag.partition(":")
    return _parse_set(body) if kind == "gossip" else None


def convert_weak_to_strong_run(run: Run) -> Run:
    """Each original step becomes a round of 2n slots.

    slot 0 carries the original event, slots 1..n-1 gossip the sender's
    accumulated suspicions, slots n..2n-2 receive the gossip of that round
    and slot 2n-1 emits a primed report of everything heard so far.
    """
    n, H = run.n, run.horizon
    K = 2 * n
    slots: list[list[Event | None]] = [[None] * (H * K) for _ in range(n)]
    heard = [frozenset()] * n
    down: set[int] = set()
    seq = [0] * n
    for m in range(1, H + 1):
        base = (m - 1) * K
        for p in range(n):
            h, prev = run.history(p, m), run.history(p, m - 1)
            if h != prev:
                e = h.last
                slots[p][base] = e
                if e.kind is EventKind.CRASH:
                    down.add(p)
                elif e.kind is EventKind.FD:
                    s = resolve(e.report, n)
                    if s is not None:
                        heard[p] = heard[p] | s
        inflight: list[list[MessageId]] = [[] for _ in range(n)]
        for p in range(n):
            if p in down:
                continue
            others = [q for q in range(n) if q != p]
            for j, q in enumerate(others):
                msg = MessageId(p, q, gossip_tag(heard[p]), seq[p])
                seq[p] += 1
                slots[p][base + 1 + j] = Event(EventKind.SEND, p, q, msg=msg)
                inflight[q].append(msg)
        for q in range(n):
            if q in down:
                continue
            for j, msg in enumerate(inflight[q]):
                slots[q][base + n + j] = recv(msg)
                heard[q] = heard[q] | _gossip_payload(msg.tag)
            slots[q][base + K - 1] = fd_report(q, Standard(heard[q]), primed=True)
    return _rebuild(run, slots, H * K)


def convert_weak_to_strong(system: SystemOfRuns) -> SystemOfRuns:
    v = check_property(system, Property.WEAK_COMPLETENESS)
    if v.status is Status.FAIL:
        raise ValueError(f"input is not weakly complete: {v.witness}")
    runs = tuple(convert_weak_to_strong_run(r) for r in system.runs)
    return SystemOfRuns(system.n, runs, system.provenance, {**system.meta, "transform": "weak-to-strong"})


# --- f and f' ----------------------------------------------------------------


def _require_exhaustive(system: SystemOfRuns, what: str) -> None:
    if not system.exhaustive:
        raise ProvenanceError(f"{what} needs an exhaustive system; knowledge over a sample is unsound")


def _f_skeleton(run: Run) -> list[list[Event | None]]:
    """Original non-report events moved from time m+1 to 2m+2; odd slots left empty."""
    n, H = run.n, run.horizon
    slots: list[list[Event | None]] = [[None] * (2 * H + 1) for _ in range(n)]
    for p in range(n):
        for m, e in run.timeline[p]:
            if e.kind not in (EventKind.FD, EventKind.FD_PRIMED):
                slots[p][2 * m - 1] = e  # time 2(m-1)+2, stored at index time-1
    return slots


def _crashed_at(run: Run, p: int, m: int) -> bool:
    return run.history(p, m).crashed


def f_transform(system: SystemOfRuns) -> SystemOfRuns:
    """Insert at odd step 2m+1 the set of processes p knows to have crashed at (r, m)."""
    _require_exhaustive(system, "f_transform")
    n = system.n
    ev = Evaluator(system)
    known = [[ev.vectors(Knows(p, PropCrash(q))) for q in range(n)] for p in range(n)]
    out = []
    for i, r in enumerate(system.runs):
        slots = _f_skeleton(r)
        for m in range(r.horizon + 1):
            for p in range(n):
                if _crashed_at(r, p, m):
                    continue
                s = frozenset(q for q in range(n) if known[p][q][i][m] is TruthValue.TRUE)
                slots[p][2 * m] = fd_report(p, Standard(s), primed=True)
        out.append(_rebuild(r, slots, 2 * r.horizon + 1))
    return SystemOfRuns(n, tuple(out), system.provenance, {**system.meta, "transform": "f"})


def subset_order(n: int) -> list[frozenset[int]]:
    """S_l for l = 0..2^n-1: bit j of l set iff p_j is in S_l."""
    return [frozenset(j for j in range(n) if l >> j & 1) for l in range(2**n)]


def max_known_crashes(system: SystemOfRuns, ev: Evaluator, run_index: int, p: int, m: int, S: frozenset[int]) -> int:
    r = system.runs[run_index]
    members = ev.classes(p)[r.history(p, m)]
    return min(len(S & system.runs[j].crashed_by(k)) for j, k in members)


def f_prime_transform(system: SystemOfRuns, t: int) -> SystemOfRuns:
    """Like f, but odd steps report (S_l, k) with k the most crashes in S_l that p knows of."""
    _require_exhaustive(system, "f_prime_transform")
    n = system.n
    order = subset_order(n)
    ev = Evaluator(system)
    out = []
    for i, r in enumerate(system.runs):
        slots = _f_skeleton(r)
        H = r.horizon
        for m in range(H + 1):
            for p in range(n):
                if _crashed_at(r, p, m):
                    continue
                # l comes from |r_p(m+1)|; at the horizon the last history stands in
                S = order[len(r.history(p, min(m + 1, H))) % 2**n]
                k = max_known_crashes(system, ev, i, p, m, S)
                slots[p][2 * m] = fd_report(p, Generalized(S, k), primed=True)
        out.append(_rebuild(r, slots, 2 * H + 1))
    meta = {**system.meta, "transform": "fprime", "t": t, "effective_t": min(t, n - 1),
            "subset_order": [sorted(s) for s in order]}
    return SystemOfRuns(n, tuple(out), system.provenance, meta)


def primed_crash_knowledge_monotone(run: Run) -> bool:
    """Primed standard reports never shrink along a run."""
    for p in range(run.n):
        prev = frozenset()
        for _, e in run.timeline[p]:
            if e.kind is EventKind.FD_PRIMED and isinstance(e.report, Standard):
                if not prev <= e.report.suspects:
                    return False
                prev = e.report.suspects
    return True


__all__ = [
    "convert_impermanent_to_strong",
    "convert_impermanent_system",
    "convert_weak_to_strong",
    "convert_weak_to_strong_run",
    "f_transform",
    "f_prime_transform",
    "subset_order",
    "max_known_crashes",
    "primed_crash_knowledge_monotone",
]
