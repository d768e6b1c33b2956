import pytest

from conftest import build_run
from udclab.fdetect import FdOracle, OracleKind, Property, check_generalized_accuracy, check_property, suspicion_series
from udclab.formula import Evaluator
from udclab.model import (
    ActionId,
    EventKind,
    Generalized,
    History,
    Provenance,
    ProvenanceError,
    Standard,
    SystemOfRuns,
    crash,
    fd_report,
    init,
    validate_run,
)
from udclab.protocols import Protocol, ProtocolKind
from udclab.sim import ScenarioConfig, generate_system
from udclab.transform import (
    convert_impermanent_to_strong,
    convert_weak_to_strong,
    convert_weak_to_strong_run,
    f_prime_transform,
    f_transform,
    max_known_crashes,
    primed_crash_knowledge_monotone,
    subset_order,
)
from udclab.verdict import Status

S = lambda *xs: Standard(frozenset(xs))


def test_impermanent_conversion_accumulates_and_is_idempotent():
    h = History.of(0, [fd_report(0, S(1)), fd_report(0, S()), fd_report(0, S(2)), init(ActionId(0, 0))])
    once = convert_impermanent_to_strong(h)
    assert [e.report for e in once if e.kind is EventKind.FD] == [S(1), S(1), S(1, 2)]
    assert convert_impermanent_to_strong(once) == once


def test_weak_to_strong_spreads_one_suspicion():
    # only p0 ever suspects the crashed p2
    r = build_run(3, 3, [(1, crash(2)), (2, fd_report(0, S(2)))], closed=True)
    system = SystemOfRuns(3, (r,))
    assert check_property(system, Property.STRONG_COMPLETENESS).status is Status.FAIL
    out = convert_weak_to_strong(system)
    conv = out.runs[0]
    assert conv.horizon == 3 * 6 and validate_run(conv) == []
    assert {p: suspicion_series(conv, p, primed=True)[-1] for p in (0, 1)} == {0: {2}, 1: {2}}
    assert check_property(out, Property.STRONG_COMPLETENESS, "primed").status is Status.PASS


def test_weak_to_strong_refuses_incomplete_input():
    r = build_run(2, 2, [(1, crash(1))], closed=True)
    with pytest.raises(ValueError):
        convert_weak_to_strong(SystemOfRuns(2, (r,)))


def test_weak_to_strong_keeps_original_events_in_order():
    r = build_run(2, 3, [(1, init(ActionId(0, 0))), (2, fd_report(1, S(0))), (3, crash(1))])
    conv = convert_weak_to_strong_run(r)
    for p in range(2):
        orig = [e for _, e in r.timeline[p]]
        kept = [e for _, e in conv.timeline[p] if e.kind is not EventKind.FD_PRIMED and not
                (e.msg is not None and e.msg.tag.startswith("gossip:"))]
        assert kept == orig


def test_subset_order_is_bitmask():
    order = subset_order(2)
    assert order == [frozenset(), {0}, {1}, {0, 1}]
    assert order[5 % 4] == {0}


EXH = generate_system(ScenarioConfig(n=2, t=2, protocol=Protocol(ProtocolKind.UDC_STRONG_FD), horizon=4,
                                     mode="exhaustive"))


def test_f_requires_exhaustive_input():
    sampled = SystemOfRuns(EXH.n, EXH.runs, Provenance.SAMPLED)
    with pytest.raises(ProvenanceError):
        f_transform(sampled)
    with pytest.raises(ProvenanceError):
        f_prime_transform(sampled, 1)


def test_f_layout_and_accuracy():
    out = f_transform(EXH)
    assert check_property(out, Property.STRONG_ACCURACY, "primed").status is Status.PASS
    for r, fr in zip(EXH.runs, out.runs):
        assert fr.horizon == 2 * r.horizon + 1
        assert primed_crash_knowledge_monotone(fr)
        for p in range(r.n):
            orig = [(m, e) for m, e in r.timeline[p] if e.kind is not EventKind.FD]
            moved = [(m, e) for m, e in fr.timeline[p] if e.kind is not EventKind.FD_PRIMED]
            assert moved == [(2 * m, e) for m, e in orig]
            for m, e in fr.timeline[p]:
                if e.kind is EventKind.FD_PRIMED:
                    assert m % 2 == 1


def test_f_reports_known_crashes():
    ev = Evaluator(EXH)
    out = f_transform(EXH)
    for r, fr in zip(EXH.runs, out.runs):
        for p in range(2):
            series = suspicion_series(fr, p, primed=True)
            for m in range(r.horizon + 1):
                if r.history(p, m).crashed:
                    continue
                # the report for time m sits at time 2m+1
                expect = {q for q in range(2) if all(EXH.runs[j].crashed_by(k) >= {q}
                                                     for j, k in ev.classes(p)[r.history(p, m)])}
                assert series[2 * m + 1] == expect


def test_max_known_crashes_counts_over_the_class():
    # p0 sees nothing in both runs; one has p1 crashed, the other p2
    a = build_run(3, 1, [(1, crash(1))])
    b = build_run(3, 1, [(1, crash(2))])
    system = SystemOfRuns(3, (a, b), Provenance.EXHAUSTIVE)
    ev = Evaluator(system)
    # time 0 is in p0's class too, so nothing is known yet there
    assert max_known_crashes(system, ev, 0, 0, 1, frozenset({1, 2})) == 0
    only_late = SystemOfRuns(3, (build_run(3, 1, [(1, crash(1)), (1, init(ActionId(0, 0)))]),
                                 build_run(3, 1, [(1, crash(2)), (1, init(ActionId(0, 0)))])), Provenance.EXHAUSTIVE)
    ev2 = Evaluator(only_late)
    assert max_known_crashes(only_late, ev2, 0, 0, 1, frozenset({1, 2})) == 1
    assert max_known_crashes(only_late, ev2, 0, 0, 1, frozenset({1})) == 0


def test_f_prime_accuracy_and_crash_free_reports():
    out = f_prime_transform(EXH, 1)
    assert check_generalized_accuracy(out, "primed").status is Status.PASS
    assert out.meta["effective_t"] == 1
    calm = generate_system(ScenarioConfig(n=2, t=0, protocol=Protocol(ProtocolKind.NUDC_GOSSIP),
                                          oracle=FdOracle(OracleKind.NONE), horizon=3, mode="exhaustive"))
    for r in f_prime_transform(calm, 0).runs:
        for p in range(2):
            for _, e in r.timeline[p]:
                if e.kind is EventKind.FD_PRIMED:
                    assert isinstance(e.report, Generalized) and e.report.k == 0
