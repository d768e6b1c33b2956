"""Specification checkers: coordination (DC1-DC3, DC2'), system conditions,
the knowledge precondition for accountability and the strong/perfect check."""

from __future__ import annotations

import re
from itertools import combinations

from .fdetect import Property, check_property
from .formula import (
    Always,
    And,
    Eventually,
    Evaluator,
    Formula,
    Implies,
    Knows,
    Not,
    Or,
    PropCrash,
    PropDo,
    PropInit,
    TruthValue,
    conj,
    disj,
    to_text,
)
from .model import ActionId, EventKind, ProvenanceError, SystemOfRuns, faulty_set
from .verdict import Status, Verdict, Witness, combine, from_findings

T, F, U = TruthValue.TRUE, TruthValue.FALSE, TruthValue.UNKNOWN


class PreconditionError(ValueError):
    pass


def actions_in(system: SystemOfRuns) -> list[ActionId]:
    seen = set()
    for r in system.runs:
        for items in r.timeline:
            for _, e in items:
                if e.kind in (EventKind.INIT, EventKind.DO):
                    seen.add(e.action)
    return sorted(seen)


# --- coordination ------------------------------------------------------------


def dc1(a: ActionId) -> Formula:
    p = a.owner
    return Implies(PropInit(p, a), Eventually(Or(PropDo(p, a), PropCrash(p))))


def dc2_pair(a: ActionId, q1: int, q2: int) -> Formula:
    return Implies(PropDo(q1, a), Eventually(Or(PropDo(q2, a), PropCrash(q2))))


def dc2_prime_pair(a: ActionId, q1: int, q2: int) -> Formula:
    return Implies(PropDo(q1, a), Eventually(disj(PropDo(q2, a), PropCrash(q2), PropCrash(q1))))


def dc3_single(a: ActionId, q2: int) -> Formula:
    return Implies(PropDo(q2, a), PropInit(a.owner, a))


def dc2(a: ActionId, n: int) -> Formula:
    return conj(*(dc2_pair(a, q1, q2) for q1 in range(n) for q2 in range(n)))


def dc2_prime(a: ActionId, n: int) -> Formula:
    return conj(*(dc2_prime_pair(a, q1, q2) for q1 in range(n) for q2 in range(n)))


def dc3(a: ActionId, n: int) -> Formula:
    return conj(*(dc3_single(a, q) for q in range(n)))


def _validity_verdict(
    name: str, system: SystemOfRuns, parts: list[tuple[Formula, int | None]], ev: Evaluator
) -> Verdict:
    """Validity of a conjunction, checked conjunct by conjunct for sharper witnesses.

    A FAIL witness's detail is the text of the violated conjunct, so it can be
    re-evaluated independently. Obligations name the earliest undecided point
    per run and conjunct.
    """
    obligations = []
    for phi, proc in parts:
        for i, vec in enumerate(ev.vectors(phi)):
            first_u = None
            for m, x in enumerate(vec):
                if x is F:
                    return from_findings(name, Witness(i, m, proc, to_text(phi)), [])
                if x is U and first_u is None:
                    first_u = m
            if first_u is not None:
                obligations.append(f"run {i} t={first_u}: {to_text(phi)} not yet witnessed by H={system.runs[i].horizon}")
    return from_findings(name, None, obligations)


def check_udc(system: SystemOfRuns, a: ActionId, evaluator: Evaluator | None = None):
    n = system.n
    if not 0 <= a.owner < n:
        raise ValueError(f"{a} has no owner among p0..p{n - 1}")
    ev = evaluator or Evaluator(system)
    return (
        _validity_verdict("DC1", system, [(dc1(a), a.owner)], ev),
        _validity_verdict("DC2", system, [(dc2_pair(a, q1, q2), q2) for q1 in range(n) for q2 in range(n)], ev),
        _validity_verdict("DC3", system, [(dc3_single(a, q), q) for q in range(n)], ev),
    )


def check_nudc(system: SystemOfRuns, a: ActionId, evaluator: Evaluator | None = None):
    n = system.n
    if not 0 <= a.owner < n:
        raise ValueError(f"{a} has no owner among p0..p{n - 1}")
    ev = evaluator or Evaluator(system)
    return (
        _validity_verdict("DC1", system, [(dc1(a), a.owner)], ev),
        _validity_verdict(
            "DC2'", system, [(dc2_prime_pair(a, q1, q2), q2) for q1 in range(n) for q2 in range(n)], ev
        ),
        _validity_verdict("DC3", system, [(dc3_single(a, q), q) for q in range(n)], ev),
    )


def check_all_actions(system: SystemOfRuns, uniform: bool = True) -> list[Verdict]:
    """DC verdicts per condition, combined over every action in the system."""
    ev = Evaluator(system)
    per = [(check_udc if uniform else check_nudc)(system, a, ev) for a in actions_in(system)]
    names = ("DC1", "DC2" if uniform else "DC2'", "DC3")
    return [combine(name, [vs[k] for vs in per]) for k, name in enumerate(names)]


# --- conditions A1, A2, A3, A5(t) --------------------------------------------


def _prefix_ids(system: SystemOfRuns) -> list[list[int]]:
    """ids[i][m] is equal for two runs iff their cuts agree at every time <= m."""
    table: dict[tuple, int] = {}
    ids = []
    for r in system.runs:
        row, prev = [], -1
        for cut in r.cuts:
            prev = table.setdefault((prev, cut), len(table))
            row.append(prev)
        ids.append(row)
    return ids


def check_a5(system: SystemOfRuns, t: int) -> Verdict:
    realized = {faulty_set(r) for r in system.runs}
    for f in range(t + 1):
        for S in combinations(range(system.n), f):
            if frozenset(S) not in realized:
                return from_findings(f"A5({t})", Witness(-1, 0, None, f"no run with F={{{','.join(map(str, S))}}}"), [])
    return from_findings(f"A5({t})", None, [])


def check_a1(system: SystemOfRuns) -> Verdict:
    """Checked at points with m < H: a crash at m+1 must fit inside the horizon."""
    if not system.exhaustive:
        raise ProvenanceError("A1 quantifies over extensions; it needs an exhaustive system")
    ids = _prefix_ids(system)
    realized = {faulty_set(r) for r in system.runs}
    fs_by_prefix: dict[int, set[frozenset[int]]] = {}
    for i, r in enumerate(system.runs):
        F_r = faulty_set(r)
        for pid in ids[i]:
            fs_by_prefix.setdefault(pid, set()).add(F_r)
    for i, r in enumerate(system.runs):
        for m in range(r.horizon):
            down = r.crashed_by(m)
            have = fs_by_prefix[ids[i][m]]
            for S in sorted(realized, key=sorted):
                if down <= S and S not in have:
                    return from_findings(
                        "A1", Witness(i, m, None, f"no extension with F={{{','.join(map(str, sorted(S)))}}}"), []
                    )
    return from_findings("A1", None, [])


def check_a2(system: SystemOfRuns) -> Verdict:
    """Pairs of points that agree for the correct processes must have extensions
    that keep agreeing after all faulty processes crash by m+1 (m < H)."""
    if not system.exhaustive:
        raise ProvenanceError("A2 quantifies over extensions; it needs an exhaustive system")
    ids = _prefix_ids(system)
    runs = system.runs
    members: dict[int, list[int]] = {}
    for i in range(len(runs)):
        for pid in ids[i]:
            members.setdefault(pid, []).append(i)
    sig_cache: dict[tuple, frozenset] = {}

    def signatures(i: int, m: int, F_: frozenset[int]) -> frozenset:
        key = (ids[i][m], F_)
        s = sig_cache.get(key)
        if s is None:
            correct = [q for q in range(system.n) if q not in F_]
            out = set()
            for j in members[ids[i][m]]:
                rj = runs[j]
                if F_ <= rj.crashed_by(m + 1):
                    out.add(tuple(tuple(rj.history(q, k) for q in correct) for k in range(m, rj.horizon + 1)))
            s = sig_cache[key] = frozenset(out)
        return s

    groups: dict[tuple, list[int]] = {}
    for i, r in enumerate(runs):
        F_ = faulty_set(r)
        for m in range(r.horizon):
            view = tuple(r.history(q, m) for q in range(system.n) if q not in F_)
            groups.setdefault((F_, m, view), []).append(i)
    for (F_, m, _), idx in groups.items():
        sigs = [(i, signatures(i, m, F_)) for i in idx]
        for a in range(len(sigs)):
            i, sa = sigs[a]
            if not sa:
                return from_findings("A2", Witness(i, m, None, "no extension where the faulty processes crash by m+1"), [])
            for j, sb in sigs[a + 1:]:
                if sa.isdisjoint(sb):
                    return from_findings("A2", Witness(i, m, None, f"no indistinguishable extensions with run {j}"), [])
    return from_findings("A2", None, [])


def check_a3(system: SystemOfRuns, actions: list[ActionId] | None = None) -> Verdict:
    """K_q init_p(a) must not change when q's crash is appended."""
    ev = Evaluator(system)
    actions = actions if actions is not None else actions_in(system)
    obligations = []
    for a in actions:
        for q in range(system.n):
            phi = Knows(q, PropInit(a.owner, a))
            vec = ev.vectors(phi)
            classes = ev.classes(q)
            for h, pts in classes.items():
                if not h.crashed:
                    continue
                before = classes.get(h.parent, [])
                for i, m in pts:
                    for j, k in before:
                        x, y = vec[i][m], vec[j][k]
                        if x is U or y is U:
                            obligations.append(f"run {i} t={m}: {to_text(phi)} undecided")
                        elif x is not y:
                            return from_findings(
                                "A3", Witness(i, m, q, f"{to_text(phi)} changes when p{q} crashes (vs run {j} t={k})"), []
                            )
                        break
    return from_findings("A3", None, sorted(set(obligations))[:50])


_A5_RE = re.compile(r"A5\((\d+)\)")


def check_conditions(system: SystemOfRuns, which) -> dict[str, Verdict]:
    out = {}
    for name in which:
        if name == "A1":
            out[name] = check_a1(system)
        elif name == "A2":
            out[name] = check_a2(system)
        elif name == "A3":
            out[name] = check_a3(system)
        elif _A5_RE.fullmatch(name):
            out[name] = check_a5(system, int(_A5_RE.fullmatch(name).group(1)))
        else:
            raise ValueError(f"unknown condition {name!r}")
    return out


# --- knowledge precondition for accountability -------------------------------


def account_formulas(n: int, p: int, p2: int, a: ActionId) -> tuple[Formula, Formula]:
    init = PropInit(p2, a)
    antecedent = Knows(p, And(init, conj(*(Eventually(Or(Knows(q, init), PropCrash(q))) for q in range(n)))))
    someone_correct = disj(*(Always(Not(PropCrash(q))) for q in range(n)))
    knower = disj(*(And(Knows(q, init), Always(Not(PropCrash(q)))) for q in range(n)))
    return antecedent, Knows(p, Implies(someone_correct, knower))


def check_account_property(
    system: SystemOfRuns, p: int, p2: int, a: ActionId, gates: dict[str, Verdict] | None = None
) -> Verdict:
    """Validity of the implication under closed-world reading of the horizon.

    Under three-valued semantics the antecedent's eventualities about
    knowledge can never be refuted, so the implication cannot become
    True there; that reading is reported as a note alongside.
    """
    if not system.exhaustive:
        raise ProvenanceError("the accountability property needs an exhaustive system")
    if a.owner != p2:
        raise ValueError(f"{a} is not owned by p{p2}")
    gates = gates if gates is not None else check_conditions(system, ["A1", "A2"])
    name = f"PropAccount(p{p},p{p2},{a})"
    antecedent, consequent = account_formulas(system.n, p, p2, a)
    phi = Implies(antecedent, consequent)
    closed = Evaluator(system, closed_world=True)
    v = _validity_verdict(name, system, [(phi, p)], closed)
    open_v = _validity_verdict(name, system, [(phi, p)], Evaluator(system))
    v.notes.append(f"three-valued reading: {open_v.status.value}")
    unmet = [k for k, g in gates.items() if g.status is not Status.PASS]
    if unmet:
        v.notes.append(f"preconditions unmet: {','.join(unmet)}")
    return v


def check_account_all(system: SystemOfRuns, gates: dict[str, Verdict] | None = None) -> Verdict:
    gates = gates if gates is not None else check_conditions(system, ["A1", "A2"])
    vs = [
        check_account_property(system, p, a.owner, a, gates)
        for a in actions_in(system)
        for p in range(system.n)
    ]
    out = combine("PropAccount", vs)
    out.notes += sorted({n for v in vs for n in v.notes})
    return out


# --- strong accuracy versus weak accuracy ------------------------------------


def check_strong_eq_perfect(system: SystemOfRuns, gates: dict[str, Verdict] | None = None) -> Verdict:
    n = system.n
    gates = gates if gates is not None else check_conditions(system, ["A1", f"A5({n - 1})"])
    unmet = [k for k, g in gates.items() if g.status is not Status.PASS]
    if unmet:
        raise PreconditionError(f"equivalence is only claimed under A1 and A5({n - 1}); unmet: {unmet}")
    weak = check_property(system, Property.WEAK_ACCURACY)
    strong = check_property(system, Property.STRONG_ACCURACY)
    name = "StrongEqPerfect"
    if weak.status is strong.status:
        return Verdict(name, Status.PASS, notes=[f"both {weak.status.value}"])
    w = weak.witness or strong.witness
    return Verdict(name, Status.FAIL, w, notes=[f"WeakAccuracy {weak.status.value}", f"StrongAccuracy {strong.status.value}"])


__all__ = [
    "PreconditionError",
    "Verdict",
    "actions_in",
    "check_udc",
    "check_nudc",
    "check_all_actions",
    "check_conditions",
    "check_a1",
    "check_a2",
    "check_a3",
    "check_a5",
    "check_account_property",
    "check_account_all",
    "check_strong_eq_perfect",
    "dc1",
    "dc2",
    "dc2_prime",
    "dc3",
]
