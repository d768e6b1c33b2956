import json

import pytest

from udclab.fdetect import FdOracle, OracleKind
from udclab.model import Provenance, write_trace
from udclab.protocols import Protocol, ProtocolKind
from udclab.sim import ScenarioConfig, generate_system
from udclab.store import read_system, write_system


def test_system_round_trip(tmp_path):
    system = generate_system(ScenarioConfig(n=2, t=1, protocol=Protocol(ProtocolKind.UDC_STRONG_FD, fip=True),
                                            horizon=4, mode="exhaustive"))
    write_system(system, tmp_path / "sys")
    manifest = json.loads((tmp_path / "sys" / "manifest.json").read_text())
    assert manifest["format"] == "udc-system/1" and manifest["provenance"] == "exhaustive"
    back = read_system(tmp_path / "sys")
    assert back.provenance is Provenance.EXHAUSTIVE
    assert [r.key for r in back.runs] == [r.key for r in system.runs]
    assert [r.label for r in back.runs] == [r.label for r in system.runs]
    assert back.meta == system.meta


def test_single_trace_is_a_sampled_system(tmp_path):
    system = generate_system(ScenarioConfig(n=2, t=1, oracle=FdOracle(OracleKind.NONE), horizon=6, runs=1))
    write_trace(system.runs[0], tmp_path / "one.trace")
    back = read_system(tmp_path / "one.trace")
    assert back.provenance is Provenance.SAMPLED and back.runs == system.runs


def test_missing_or_foreign_directories(tmp_path):
    with pytest.raises(ValueError):
        read_system(tmp_path)
    (tmp_path / "manifest.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        read_system(tmp_path)
