import pytest
from hypothesis import given, settings, strategies as st

from udclab.fdetect import FdOracle, OracleKind
from udclab.model import ActionId, EventKind, Provenance, faulty_set, format_trace, validate_run
from udclab.protocols import Protocol, ProtocolKind
from udclab.sim import (
    ConfigError,
    RunScript,
    ScenarioConfig,
    SizeGuardExceeded,
    generate_system,
    parse_config,
    script_count,
    simulate,
)

GOSSIP = Protocol(ProtocolKind.NUDC_GOSSIP)
NONE = FdOracle(OracleKind.NONE)


def test_parse_config():
    cfg = parse_config("""
        n = 4   # processes
        t = 2
        protocol = tuseful
        oracle = useful
        crashes = 1@3, 2@5
        inits = a0.0@1, a1.0@4
        closures = A1,A5
    """)
    assert cfg.n == 4 and cfg.protocol.t == 2 and cfg.oracle.t == 2
    assert cfg.crashes == ((1, 3), (2, 5))
    assert cfg.inits == ((1, ActionId(0, 0)), (4, ActionId(1, 0)))
    assert cfg.closures == {"A1", "A5"}


@pytest.mark.parametrize("text", ["n = 3\nbogus = 1", "n 3", "t = 5", "channel = smoke", "drop_prob = 1.5",
                                  "t = 1\ncrashes = 0@2,1@3", "oracle = adversarial\nadversary = blame:1"])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_crash_bound_message_names_t():
    with pytest.raises(ConfigError, match="t=1"):
        ScenarioConfig(t=1, crashes=((0, 2), (1, 3)))


def test_script_text_round_trip():
    s = RunScript(((0, 3), (2, 5)), frozenset({(3, 1), (4, 0)}), 6)
    assert s.encode() == "crash=0@3,2@5;drop=3.1,4.0;blackout=6"
    assert RunScript.decode(s.encode()) == s
    assert RunScript.decode(RunScript().encode()) == RunScript()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list(ProtocolKind)), st.sampled_from(["fairlossy", "reliable"]))
def test_sampled_runs_are_well_formed_and_replayable(seed, kind, channel):
    proto = Protocol(kind, t=1 if kind is ProtocolKind.UDC_T_USEFUL else None)
    oracle = FdOracle(OracleKind.USEFUL, t=1) if kind is ProtocolKind.UDC_T_USEFUL else FdOracle()
    cfg = ScenarioConfig(n=3, t=2, protocol=proto, oracle=oracle, horizon=25, seed=seed, channel=channel)
    r = simulate(cfg)
    assert validate_run(r) == []
    assert len(faulty_set(r)) <= 2
    # the label records every choice made, so replaying it gives the same run
    assert simulate(cfg, RunScript.decode(r.label)) == r
    assert format_trace(simulate(cfg)) == format_trace(r)


def test_reliable_channels_lose_nothing():
    cfg = ScenarioConfig(n=3, t=0, protocol=Protocol(ProtocolKind.UDC_RELIABLE), oracle=NONE, channel="reliable",
                         horizon=30, crashes=())
    r = simulate(cfg)
    assert "drop=-" in r.label and r.closed_out
    assert all(any(e.kind is EventKind.DO for _, e in r.timeline[p]) for p in range(3))


def test_blackout_stops_delivery():
    cfg = ScenarioConfig(n=2, t=0, protocol=GOSSIP, oracle=NONE, horizon=10, crashes=(), budget=0)
    r = simulate(cfg, RunScript((), frozenset(), 0))
    assert not any(e.kind is EventKind.RECV for _, e in r.timeline[1])


def test_recurring_inits_rotate_owners():
    cfg = ScenarioConfig(n=3, t=0, protocol=GOSSIP, oracle=NONE, horizon=9, recurring=3, crashes=())
    r = simulate(cfg)
    inits = [(m, e.action) for p in range(3) for m, e in r.timeline[p] if e.kind is EventKind.INIT]
    assert sorted(inits) == [(3, ActionId(0, 0)), (6, ActionId(1, 1)), (9, ActionId(2, 2))]
    assert not r.closed_out


def _expected_gossip_runs() -> int:
    """Distinct runs for n=2, H=4, gossip, a0.0 initiated at 1, no detector, t=2.

    p0 inits at 1, performs at 2 and sends to p1 at 3 and 4; a send at m is
    receivable from m+1, so only the send at 3 can arrive, at time 4. A run
    is fixed by the two crash times (none or 1..4 each) plus, when p0 is
    still up at 3 and p1 never crashes, whether that message gets through.
    """
    times = [None, 1, 2, 3, 4]
    total = 0
    for c0 in times:
        for c1 in times:
            total += 1
            if (c0 is None or c0 > 3) and c1 is None:
                total += 1
    return total


def test_exhaustive_count_matches_hand_derivation():
    cfg = ScenarioConfig(n=2, t=2, protocol=GOSSIP, oracle=NONE, horizon=4, mode="exhaustive", max_drops=1)
    system = generate_system(cfg)
    assert system.provenance is Provenance.EXHAUSTIVE
    assert len(system) == _expected_gossip_runs() == 27
    assert system.meta["scripts"] == script_count(cfg) == 25 * 5 * 9


def test_size_guard():
    with pytest.raises(SizeGuardExceeded):
        generate_system(ScenarioConfig(n=4, t=1, mode="exhaustive", horizon=3))
    with pytest.raises(SizeGuardExceeded):
        generate_system(ScenarioConfig(n=3, t=3, mode="exhaustive", horizon=8, max_drops=2))


def test_closures_add_crash_extensions():
    cfg = ScenarioConfig(n=3, t=1, protocol=GOSSIP, oracle=NONE, horizon=6, runs=2, crashes=(),
                         closures=frozenset({"A1", "A5"}))
    system = generate_system(cfg)
    assert system.meta["base_runs"] == 2 and system.meta["closure_runs"] > 0
    crash_sets = {faulty_set(r) for r in system.runs}
    assert {frozenset(), frozenset({0}), frozenset({1}), frozenset({2})} <= crash_sets
