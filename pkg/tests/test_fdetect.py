import pytest

from conftest import build_run
from udclab.fdetect import (
    ConversionInapplicable,
    FdOracle,
    OracleKind,
    Property,
    as_n_useful,
    as_perfect,
    check_generalized,
    check_generalized_accuracy,
    check_property,
    is_t_useful_event,
    next_report,
    parse_adversary,
    resolve,
    suspects_at,
    suspicion_series,
)
from udclab.model import GStandard, Generalized, History, Standard, SystemOfRuns, crash, fd_report
from udclab.verdict import Status

S = lambda *xs: Standard(frozenset(xs))


def test_complement_mapping():
    assert resolve(GStandard("correct:{0,2}", "complement"), 4) == {1, 3}
    assert resolve(Generalized(frozenset({1}), 1), 3) is None
    with pytest.raises(ValueError):
        resolve(GStandard("x", "nope"), 3)


def test_suspicion_series_holds_last_report():
    r = build_run(2, 5, [(2, fd_report(0, S(1))), (4, fd_report(0, S())), (3, fd_report(0, S(0), primed=True))])
    assert suspicion_series(r, 0) == [set(), set(), {1}, {1}, set(), set()]
    assert suspicion_series(r, 0, primed=True)[3:] == [{0}] * 3
    assert suspects_at(r, 0, 3) == {1}


def test_adversary_rules():
    rules = parse_adversary("suspect:2@3:0; hide:1")
    assert [(x.action, x.target, x.time, x.proc) for x in rules] == [("suspect", 2, 3, 0), ("hide", 1, None, None)]
    with pytest.raises(ValueError):
        parse_adversary("accuse:1")
    o = FdOracle(OracleKind.ADVERSARIAL, spec="suspect:2@3:0;hide:1")
    assert next_report(o, 3, 0, 3, {1: 1}) == S(2)
    assert next_report(o, 3, 1, 3, {}) == S()


def test_oracles():
    crashed = {2: 4}
    assert next_report(FdOracle(OracleKind.PERFECT), 3, 0, 5, crashed) == S(2)
    assert next_report(FdOracle(OracleKind.NONE), 3, 0, 5, crashed) is None
    strong = FdOracle(OracleKind.STRONG, delay=2)
    assert next_report(strong, 3, 0, 5, crashed, frozenset({2})) == S()
    assert next_report(strong, 3, 0, 6, crashed, frozenset({2})) == S(2)
    weak = FdOracle(OracleKind.WEAK)
    # only the lowest correct process learns of crashes
    assert next_report(weak, 3, 0, 6, crashed, frozenset({2})) == S(2)
    assert next_report(weak, 3, 1, 6, crashed, frozenset({2})) == S()
    imp = FdOracle(OracleKind.IMPERMANENT_STRONG)
    assert next_report(imp, 3, 0, 6, crashed, frozenset({2}), emitted=1) == S()
    trivial = FdOracle(OracleKind.TRIVIAL_T_USEFUL, t=2)
    assert next_report(trivial, 3, 0, 1, {}, emitted=4) == Generalized(frozenset({0, 2}), 0)  # cycles through the 2-subsets
    with pytest.raises(ValueError):
        FdOracle(OracleKind.USEFUL)


def test_useful_oracle_is_accurate():
    o = FdOracle(OracleKind.USEFUL, seed=4, t=2)
    for m in range(1, 30):
        rep = next_report(o, 4, 1, m, {3: 1})
        assert len(rep.set & {3}) >= rep.k


def _sys(*runs):
    return SystemOfRuns(runs[0].n, runs)


def test_accuracy_checks():
    early = build_run(2, 4, [(1, fd_report(0, S(1))), (3, crash(1))])
    v = check_property(_sys(early), Property.STRONG_ACCURACY)
    assert v.status is Status.FAIL and (v.witness.time, v.witness.proc) == (1, 0)
    late = build_run(2, 4, [(3, crash(1)), (4, fd_report(0, S(1)))])
    assert check_property(_sys(late), Property.STRONG_ACCURACY).status is Status.PASS
    # p0 is the only correct process and suspects itself
    all_bad = build_run(2, 3, [(1, crash(1)), (2, fd_report(0, S(0)))])
    v = check_property(_sys(all_bad), "WeakAccuracy")
    assert v.status is Status.FAIL


def test_completeness_needs_closure_to_fail():
    open_run = build_run(2, 3, [(1, crash(1))])
    closed_run = build_run(2, 3, [(1, crash(1))], closed=True)
    v = check_property(_sys(open_run), Property.STRONG_COMPLETENESS)
    assert v.status is Status.INCONCLUSIVE and v.obligations
    assert check_property(_sys(closed_run), Property.STRONG_COMPLETENESS).status is Status.FAIL
    # impermanent completeness is met by any report, even one later withdrawn
    blink = build_run(2, 3, [(1, crash(1)), (2, fd_report(0, S(1))), (3, fd_report(0, S()))], closed=True)
    assert check_property(_sys(blink), Property.IMPERMANENT_STRONG_COMPLETENESS).status is Status.PASS
    assert check_property(_sys(blink), Property.STRONG_COMPLETENESS).status is Status.FAIL
    with pytest.raises(ValueError):
        check_property(_sys(blink), Property.STRONG_COMPLETENESS, "secondary")


def test_t_useful_events():
    # n=4, t=2: (S, k) is useful when F is inside S and n - |S| > t - k
    assert is_t_useful_event(Generalized(frozenset({3}), 0), 4, 2, {3})
    assert not is_t_useful_event(Generalized(frozenset({2, 3}), 0), 4, 2, {3})
    assert is_t_useful_event(Generalized(frozenset({2, 3}), 1), 4, 2, {3})
    assert not is_t_useful_event(Generalized(frozenset({2}), 1), 4, 2, {3})
    # t >= n behaves like t = n - 1
    assert is_t_useful_event(Generalized(frozenset({1}), 1), 2, 5, {1})


def test_generalized_checks():
    lying = build_run(3, 2, [(1, fd_report(0, Generalized(frozenset({1, 2}), 1)))])
    assert check_generalized_accuracy(_sys(lying)).status is Status.FAIL
    good = build_run(3, 2, [(1, crash(2)), (2, fd_report(0, Generalized(frozenset({2}), 1))),
                            (2, fd_report(1, Generalized(frozenset({1, 2}), 1)))], closed=True)
    assert check_generalized(_sys(good), 1).status is Status.PASS


def test_conversions_between_detector_kinds():
    h = History.of(0, [fd_report(0, Generalized(frozenset({1}), 1)), fd_report(0, Generalized(frozenset({2}), 1))])
    assert [e.report for e in as_perfect(h)] == [S(1), S(1, 2)]
    back = as_n_useful(as_perfect(h))
    assert [e.report for e in back] == [Generalized(frozenset({1}), 1), Generalized(frozenset({1, 2}), 2)]
    with pytest.raises(ConversionInapplicable):
        as_perfect(History.of(0, [fd_report(0, Generalized(frozenset({1, 2}), 1))]))
