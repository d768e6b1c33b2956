import pytest
from hypothesis import given, settings, strategies as st

from conftest import build_run
from udclab.formula import (
    Always,
    And,
    Evaluator,
    Eventually,
    F,
    Implies,
    Knows,
    Not,
    NotLocal,
    Or,
    PointOutOfRange,
    PropCrash,
    PropDo,
    PropInit,
    PropRecv,
    PropSend,
    T,
    TruthValue,
    U,
    is_failure_insensitive,
    is_local,
    is_stable,
    is_valid,
    naive_eval,
    parse_formula,
    to_text,
)
from udclab.model import ActionId, Point, Provenance, SystemOfRuns, crash, do, init, recv, send
from udclab.protocols import Protocol, ProtocolKind
from udclab.sim import ScenarioConfig, generate_system

A = ActionId(0, 0)


def test_kleene_tables():
    assert (T & U) is U and (F & U) is F and (T | U) is T and (F | U) is U
    assert ~U is U and ~T is F
    assert TruthValue.of(True) is T


def test_parse_and_print_round_trip():
    text = "implies (init p0 a0.0) (E (or (do p1 a0.0) (K p2 (crash p1))))"
    phi = parse_formula(text)
    assert phi == Implies(PropInit(0, A), Eventually(Or(PropDo(1, A), Knows(2, PropCrash(1)))))
    assert to_text(phi) == text
    assert parse_formula("recv p1 p0 alpha:a0.0") == PropRecv(1, 0, "alpha:a0.0")
    assert to_text(PropRecv(1, 0, "t")) == "recv p1 p0 t"


@pytest.mark.parametrize("bad", ["", "and (crash p0)", "crash q0", "crash p0 extra", "frob p0"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        parse_formula(bad)


def _pair(exhaustive=True, closed=False):
    # p1 cannot tell the runs apart until it hears from p0
    m = send(0, 1, "alpha:a0.0", 0).msg
    told = build_run(2, 3, [(1, init(A)), (2, send(0, 1, "alpha:a0.0", 0)), (3, recv(m))], closed=closed)
    silent = build_run(2, 3, [(1, init(A)), (2, crash(0))], closed=closed)
    prov = Provenance.EXHAUSTIVE if exhaustive else Provenance.SAMPLED
    return SystemOfRuns(2, (told, silent), prov), told, silent


def test_knowledge_by_hand():
    system, told, silent = _pair()
    ev = Evaluator(system)
    k = Knows(1, PropInit(0, A))
    # p1's empty history also occurs at time 0, before the init
    assert ev.value(k, Point(told, 2)) is F
    assert ev.value(k, Point(told, 3)) is T
    k2 = Knows(1, PropSend(0, 1, "alpha:a0.0"))
    assert ev.value(k2, Point(told, 2)) is F
    assert ev.value(k2, Point(told, 3)) is T
    assert ev.value(Knows(1, Not(PropCrash(0))), Point(told, 3)) is T
    with pytest.raises(PointOutOfRange):
        ev.value(k, Point(told, 9))


def test_sampled_knowledge_is_never_true():
    system, told, _ = _pair(exhaustive=False)
    ev = Evaluator(system)
    assert ev.value(Knows(1, PropSend(0, 1, "alpha:a0.0")), Point(told, 3)) is U
    assert ev.value(Knows(1, PropSend(0, 1, "alpha:a0.0")), Point(told, 2)) is F


def test_temporal_operators_need_a_witness_or_a_frozen_run():
    system, told, silent = _pair()
    ev = Evaluator(system)
    assert ev.value(Eventually(PropCrash(0)), Point(silent, 0)) is T
    assert ev.value(Eventually(PropCrash(0)), Point(told, 0)) is U
    assert ev.value(Always(Not(PropCrash(0))), Point(silent, 0)) is F
    closed, told_c, _ = _pair(closed=True)
    assert Evaluator(closed).value(Eventually(PropCrash(0)), Point(told_c, 0)) is F
    # knowledge operands are not frozen by closure of a single run
    assert Evaluator(closed).value(Eventually(Knows(0, PropCrash(1))), Point(told_c, 0)) is U
    assert Evaluator(system, closed_world=True).value(Eventually(PropCrash(0)), Point(told, 0)) is F


def test_validity_locality_stability():
    system, told, silent = _pair(closed=True)
    v = is_valid(system, Implies(PropCrash(0), Eventually(PropCrash(0))))
    assert v.value is T and v.witness is None
    bad = is_valid(system, Not(PropCrash(0)))
    assert bad.value is F and bad.witness == Point(silent, 2)
    assert is_stable(system, PropCrash(0)) is T
    assert is_local(system, PropInit(0, A), 0) is T
    assert is_local(system, PropInit(0, A), 1) is F
    assert is_failure_insensitive(system, PropInit(0, A), 0) is T
    with pytest.raises(NotLocal):
        is_failure_insensitive(system, PropCrash(0), 1)


# --- agreement with the reference semantics ----------------------------------

SMALL = generate_system(ScenarioConfig(n=2, t=2, protocol=Protocol(ProtocolKind.UDC_STRONG_FD), horizon=4,
                                       mode="exhaustive"))
TAG = "alpha:a0.0"


def formulas(depth=3):
    procs = st.integers(0, 1)
    leaves = st.one_of(
        procs.map(PropCrash),
        procs.map(lambda p: PropDo(p, A)),
        st.just(PropInit(0, A)),
        st.tuples(procs, procs).map(lambda pq: PropSend(pq[0], pq[1], TAG)),
        st.tuples(procs, procs).map(lambda pq: PropRecv(pq[1], pq[0], TAG)),
    )

    def extend(inner):
        return st.one_of(
            inner.map(Not), inner.map(Always), inner.map(Eventually),
            st.tuples(procs, inner).map(lambda x: Knows(*x)),
            st.tuples(inner, inner).map(lambda x: And(*x)),
            st.tuples(inner, inner).map(lambda x: Or(*x)),
            st.tuples(inner, inner).map(lambda x: Implies(*x)),
        )

    return st.recursive(leaves, extend, max_leaves=depth * 2)


@settings(max_examples=60, deadline=None)
@given(formulas(), st.booleans())
def test_evaluator_matches_reference(phi, closed_world):
    ev = Evaluator(SMALL, closed_world)
    vecs = ev.vectors(phi)
    for i, r in enumerate(SMALL.runs):
        for m in range(r.horizon + 1):
            assert vecs[i][m] is naive_eval(SMALL, r, m, phi, closed_world)


@settings(max_examples=60, deadline=None)
@given(formulas())
def test_text_round_trip(phi):
    assert parse_formula(to_text(phi)) == phi
