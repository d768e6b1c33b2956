"""Deterministic scheduler, scenario configs and system generation."""

from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

from .fdetect import FdOracle, OracleKind, next_report, resolve
from .model import (
    ActionId,
    EventKind,
    History,
    MessageId,
    Provenance,
    Run,
    Standard,
    SystemOfRuns,
    crash,
    do,
    fd_report,
    init,
    recv,
    validate_run,
)
from .protocols import Protocol, ProtocolKind, ProcessState, decide, observe


class ConfigError(ValueError):
    pass


class InvariantBreach(RuntimeError):
    """The engine produced an ill-formed run. Always a bug."""


class SizeGuardExceeded(ConfigError):
    pass


CHANNELS = ("fairlossy", "reliable")
CLOSURES = ("A1", "A2", "A5")


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 3
    t: int = 1
    protocol: Protocol = Protocol(ProtocolKind.UDC_STRONG_FD)
    oracle: FdOracle = FdOracle()
    horizon: int = 20
    budget: int = 8
    seed: int = 0
    # explicit (time, action) inits; ignored when ``recurring`` is set
    inits: tuple[tuple[int, ActionId], ...] = ((1, ActionId(0, 0)),)
    recurring: int | None = None
    channel: str = "fairlossy"
    drop_prob: float = 0.3
    # explicit (proc, time) crashes; None draws up to t crashes from the seed
    crashes: tuple[tuple[int, int], ...] | None = None
    runs: int = 20
    mode: str = "sampled"
    max_drops: int = 0
    closures: frozenset[str] = frozenset()
    max_scripts: int = 200_000

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not 0 <= self.t <= self.n:
            raise ConfigError("t must be in 0..n")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if self.channel not in CHANNELS:
            raise ConfigError(f"channel must be one of {CHANNELS}")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ConfigError("drop_prob must be in [0, 1)")
        if self.mode not in ("sampled", "exhaustive"):
            raise ConfigError("mode must be sampled or exhaustive")
        if self.recurring is not None and self.recurring < 1:
            raise ConfigError("recurring period must be >= 1")
        if not set(self.closures) <= set(CLOSURES):
            raise ConfigError(f"closures must be among {CLOSURES}")
        for m, a in self.inits:
            if not 1 <= m or not 0 <= a.owner < self.n:
                raise ConfigError(f"bad init {a}@{m}")
        if self.crashes is not None:
            procs = [p for p, _ in self.crashes]
            if len(set(procs)) != len(procs) or len(procs) > self.t:
                raise ConfigError(f"explicit crashes must name distinct processes; the failure bound is t={self.t}")
            for p, m in self.crashes:
                if not (0 <= p < self.n and m >= 1):
                    raise ConfigError(f"bad crash p{p}@{m}")

    def with_(self, **kw) -> ScenarioConfig:
        return replace(self, **kw)


# --- config files ------------------------------------------------------------


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_inits(v: str) -> tuple[tuple[int, ActionId], ...]:
    out = []
    for part in filter(None, (s.strip() for s in v.split(","))):
        a, _, m = part.partition("@")
        out.append((int(m), ActionId.parse(a)))
    return tuple(out)


def _parse_crashes(v: str) -> tuple[tuple[int, int], ...] | None:
    if v.strip() == "random":
        return None
    if v.strip() in ("none", ""):
        return ()
    out = []
    for part in v.split(","):
        p, _, m = part.strip().partition("@")
        out.append((int(p), int(m)))
    return tuple(out)


_KEYS = {
    "n", "t", "protocol", "fip", "skip_ack_of", "oracle", "oracle_seed", "report_period",
    "fd_delay", "spurious", "adversary", "oracle_t", "horizon", "budget", "seed", "inits",
    "recurring", "channel", "drop_prob", "crashes", "runs", "mode", "max_drops", "closures",
    "max_scripts",
}


def parse_config(text: str) -> ScenarioConfig:
    """Flat ``key = value`` lines; '#' starts a comment. Unknown keys are errors."""
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kv[key] = value
    try:
        n = int(kv.get("n", 3))
        t = int(kv.get("t", 1))
        protocol = Protocol(
            ProtocolKind(kv.get("protocol", "strongfd")),
            t=t if kv.get("protocol") == "tuseful" else None,
            fip=_bool(kv.get("fip", "false")),
            skip_ack_of=int(kv["skip_ack_of"]) if "skip_ack_of" in kv else None,
        )
        okind = OracleKind(kv.get("oracle", "perfect"))
        oracle = FdOracle(
            okind,
            seed=int(kv.get("oracle_seed", 0)),
            report_period=int(kv.get("report_period", 1)),
            t=int(kv.get("oracle_t", t)) if okind in (OracleKind.TRIVIAL_T_USEFUL, OracleKind.USEFUL) else None,
            delay=int(kv.get("fd_delay", 0)),
            spurious=float(kv.get("spurious", 0.0)),
            spec=kv.get("adversary", ""),
        )
        closures = frozenset(s.strip() for s in kv.get("closures", "").split(",") if s.strip())
        return ScenarioConfig(
            n=n,
            t=t,
            protocol=protocol,
            oracle=oracle,
            horizon=int(kv.get("horizon", 20)),
            budget=int(kv.get("budget", 8)),
            seed=int(kv.get("seed", 0)),
            inits=_parse_inits(kv["inits"]) if "inits" in kv else ((1, ActionId(0, 0)),),
            recurring=int(kv["recurring"]) if "recurring" in kv else None,
            channel=kv.get("channel", "fairlossy"),
            drop_prob=float(kv.get("drop_prob", 0.3)),
            crashes=_parse_crashes(kv.get("crashes", "random")),
            runs=int(kv.get("runs", 20)),
            mode=kv.get("mode", "sampled"),
            max_drops=int(kv.get("max_drops", 0)),
            closures=closures,
            max_scripts=int(kv.get("max_scripts", 200_000)),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# --- run scripts -------------------------------------------------------------


@dataclass(frozen=True)
class RunScript:
    """Resolves every nondeterministic choice of one run.

    ``drops`` lists (time, sender) pairs whose send is lost. After
    ``blackout`` no message is delivered or received any more.
    """

    crashes: tuple[tuple[int, int], ...] = ()
    drops: frozenset[tuple[int, int]] = frozenset()
    blackout: int | None = None

    def encode(self) -> str:
        c = ",".join(f"{p}@{m}" for p, m in sorted(self.crashes)) or "-"
        d = ",".join(f"{m}.{s}" for m, s in sorted(self.drops)) or "-"
        b = "-" if self.blackout is None else str(self.blackout)
        return f"crash={c};drop={d};blackout={b}"

    @classmethod
    def decode(cls, text: str) -> RunScript:
        kv = dict(part.split("=", 1) for part in text.split(";"))
        crashes = () if kv["crash"] == "-" else tuple(
            tuple(int(x) for x in s.split("@")) for s in kv["crash"].split(",")
        )
        drops = frozenset() if kv["drop"] == "-" else frozenset(
            tuple(int(x) for x in s.split(".")) for s in kv["drop"].split(",")
        )
        b = kv["blackout"]
        return cls(tuple(sorted(crashes)), drops, None if b == "-" else int(b))


def _plan_crashes(config: ScenarioConfig, rng: random.Random) -> tuple[tuple[int, int], ...]:
    if config.crashes is not None:
        return tuple(sorted(config.crashes))
    f = rng.randint(0, config.t)
    procs = sorted(rng.sample(range(config.n), f))
    return tuple((p, rng.randint(1, config.horizon)) for p in procs)


def _init_schedule(config: ScenarioConfig) -> dict[int, list[ActionId]]:
    out: dict[int, list[ActionId]] = {}
    if config.recurring is not None:
        k = 0
        while config.recurring * (k + 1) <= config.horizon:
            out.setdefault(config.recurring * (k + 1), []).append(ActionId(k % config.n, k))
            k += 1
    else:
        for m, a in sorted(config.inits):
            out.setdefault(m, []).append(a)
    return out


# --- the engine --------------------------------------------------------------

_ROTATION = ("recv", "report", "send")


def simulate(config: ScenarioConfig, script: RunScript | None = None) -> Run:
    """Simulate one run. Without a script, crashes and drops come from ``config.seed``."""
    n, H, proto = config.n, config.horizon, config.protocol
    rng = random.Random(config.seed)
    crash_plan = script.crashes if script is not None else _plan_crashes(config, rng)
    crash_at = dict(crash_plan)
    faulty = frozenset(crash_at)
    blackout = script.blackout if script is not None else None
    states = [ProcessState(p, n) for p in range(n)]
    crashed: dict[int, int] = {}
    inbox: list[deque[MessageId]] = [deque() for _ in range(n)]
    # sends on a channel since its last receipt, for the forced-receive rule
    unreceived: dict[tuple, int] = {}
    lossy_streak: dict[tuple, int] = {}
    reports = [0] * n
    last_report = [-(10**9)] * n
    last_rep = [None] * n
    announced: list[set[int]] = [set() for _ in range(n)]
    seq = [0] * n
    schedule = _init_schedule(config)
    pending_inits: list[deque[ActionId]] = [deque() for _ in range(n)]
    drops: set[tuple[int, int]] = set()
    force_after = max(1, config.budget // 4)
    cuts = [tuple(s.history for s in states)]

    for m in range(1, H + 1):
        dark = blackout is not None and m > blackout
        if dark:
            for q in range(n):
                inbox[q].clear()
        for a in schedule.get(m, ()):
            pending_inits[a.owner].append(a)
        events = {}
        for p in range(n):
            if p not in crashed and crash_at.get(p) == m:
                events[p] = crash(p)
                crashed[p] = m
        outgoing: list[MessageId] = []
        for p in range(n):
            if p in crashed:
                continue
            st = states[p]
            if pending_inits[p]:
                events[p] = init(pending_inits[p].popleft())
                continue
            action, wanted = decide(proto, st)
            if action is not None:
                events[p] = do(p, action)
                continue
            urgent = None
            if config.budget > 0:
                for msg in inbox[p]:
                    if unreceived.get(msg.channel, 0) >= max(1, config.budget // 2):
                        urgent = msg
                        break
            if urgent is not None:
                inbox[p].remove(urgent)
                events[p] = recv(urgent)
                continue
            rep = None
            if m - last_report[p] >= config.oracle.report_period:
                rep = next_report(config.oracle, n, p, m, crashed, faulty, reports[p])
                # only changes are reported, so the stream stays a function of the history
                if rep == last_rep[p] or (last_rep[p] is None and rep == Standard(frozenset())):
                    rep = None
            if rep is not None and _reveals_crash(rep, announced[p], n, crashed):
                announced[p] |= resolve(rep, n) & crashed.keys()
                events[p] = fd_report(p, rep)
                last_rep[p], last_report[p] = rep, m
                reports[p] += 1
                continue
            start = (m + p) % 3
            for cat in _ROTATION[start:] + _ROTATION[:start]:
                if cat == "recv" and inbox[p]:
                    events[p] = recv(inbox[p].popleft())
                elif cat == "report" and rep is not None:
                    last_rep[p] = rep
                    events[p] = fd_report(p, rep)
                    last_report[p] = m
                    reports[p] += 1
                elif cat == "send" and wanted:
                    dest, tag = wanted[st.cursor % len(wanted)]
                    st.cursor += 1
                    msg = MessageId(p, dest, tag, seq[p], st.history if proto.fip else None)
                    seq[p] += 1
                    events[p] = _send_event(msg)
                    outgoing.append(msg)
                else:
                    continue
                break
        for p, e in events.items():
            if e.kind is EventKind.CRASH:
                states[p].history = states[p].history.append(e)
            else:
                observe(proto, states[p], e)
            if e.kind is EventKind.RECV:
                unreceived[e.msg.channel] = 0
        for msg in outgoing:
            ch = msg.channel
            unreceived[ch] = unreceived.get(ch, 0) + 1
            q = msg.receiver
            if q in crashed:
                continue
            lost = dark
            if not lost and config.channel == "fairlossy" and any(x.channel == ch for x in inbox[q]):
                lost = True  # coalesce with the copy already waiting
            if not lost and script is not None:
                lost = (m, msg.sender) in script.drops
            elif not lost and config.channel == "fairlossy":
                if lossy_streak.get(ch, 0) < force_after and rng.random() < config.drop_prob:
                    lost = True
                    lossy_streak[ch] = lossy_streak.get(ch, 0) + 1
                else:
                    lossy_streak[ch] = 0
            if lost:
                drops.add((m, msg.sender))
            else:
                inbox[q].append(msg)
        cuts.append(tuple(s.history for s in states))

    closed = _closed_out(config, states, crashed, inbox, schedule, pending_inits)
    realized = RunScript(crash_plan, frozenset(drops) if script is None else script.drops, blackout)
    return Run(n, tuple(cuts), config.budget, closed, config.seed, realized.encode())


def _reveals_crash(rep, announced: set[int], n: int, crashed) -> bool:
    """A report naming a crashed process for the first time jumps the rotation.

    This happens at most n times per process, so it cannot starve sends or receipts.
    """
    now = resolve(rep, n)
    return bool(now and (now - announced) & crashed.keys())


def _send_event(msg: MessageId):
    from .model import Event

    return Event(EventKind.SEND, msg.sender, msg.receiver, msg=msg)


def _closed_out(config, states, crashed, inbox, schedule, pending_inits) -> bool:
    """True when no continuation can change the truth of any event proposition.

    Every live process has performed each action it coordinates on, and
    every send it still wants, and every message still waiting in an
    inbox, repeats a (peer, tag) pair that was already sent and received
    (or goes to a crashed process). Later failure-detector reports can only
    shrink what a process wants to send once all its actions are performed.
    """
    live = [p for p in range(config.n) if p not in crashed]
    if not live:
        return True
    if config.recurring is not None:
        return False
    if any(a.owner in live for m, acts in schedule.items() if m > config.horizon for a in acts):
        return False
    sent = [set() for _ in range(config.n)]
    got = [set() for _ in range(config.n)]
    for st in states:
        for e in st.history:
            if e.kind is EventKind.SEND:
                sent[e.subject].add((e.peer, e.msg.tag))
            elif e.kind is EventKind.RECV:
                got[e.subject].add((e.peer, e.msg.tag))
    for p in live:
        st = states[p]
        if pending_inits[p] or any(not c.performed for c in st.coords.values()):
            return False
        action, wanted = decide(config.protocol, st)
        if action is not None:
            return False
        for q, tag in wanted:
            if (q, tag) not in sent[p] or (q not in crashed and (p, tag) not in got[q]):
                return False
        if any((msg.sender, msg.tag) not in got[p] for msg in inbox[p]):
            return False
    return True


def checked(run: Run) -> Run:
    bad = validate_run(run)
    if bad:
        raise InvariantBreach(f"ill-formed run {run.label}: {bad[0]}")
    return run


# --- systems -----------------------------------------------------------------


def _script_of(run: Run) -> RunScript:
    return RunScript.decode(run.label)


def _crash_extension(run: Run, m: int, crash_set: frozenset[int], blackout: bool) -> RunScript:
    """Same choices as ``run`` up to ``m``; then ``crash_set`` crashes at m+1."""
    s = _script_of(run)
    kept = tuple((p, c) for p, c in s.crashes if c <= m)
    new = tuple((p, m + 1) for p in sorted(crash_set) if p not in dict(kept))
    drops = frozenset(d for d in s.drops if d[0] <= m)
    return RunScript(tuple(sorted(kept + new)), drops, m if blackout else None)


def generate_system(config: ScenarioConfig) -> SystemOfRuns:
    if config.mode == "exhaustive":
        return enumerate_system(config)
    runs = [checked(simulate(config.with_(seed=config.seed + i))) for i in range(config.runs)]
    base = list(runs)
    extra: list[Run] = []
    n, t, H = config.n, config.t, config.horizon
    small_sets = [frozenset(c) for f in range(t + 1) for c in itertools.combinations(range(n), f)]
    if "A5" in config.closures:
        for S in small_sets:
            cfg = config.with_(crashes=tuple((p, 1 + (p % H)) for p in sorted(S)), seed=config.seed)
            extra.append(checked(simulate(cfg)))
    if "A1" in config.closures or "A2" in config.closures:
        for r in base:
            cfg = config.with_(seed=r.seed)
            for m in range(H):
                down = r.crashed_by(m)
                if "A1" in config.closures:
                    for S in small_sets:
                        if down <= S and S != down:
                            extra.append(checked(simulate(cfg, _crash_extension(r, m, S, False))))
                if "A2" in config.closures:
                    F = frozenset(r.crash_times)
                    extra.append(checked(simulate(cfg, _crash_extension(r, m, F, True))))
    return SystemOfRuns(n, tuple(base + extra), Provenance.SAMPLED, _meta(config, len(base), len(extra)))


def _meta(config: ScenarioConfig, base: int, extra: int, **more) -> dict:
    return {
        "n": config.n,
        "t": config.t,
        "horizon": config.horizon,
        "budget": config.budget,
        "protocol": str(config.protocol),
        "oracle": str(config.oracle),
        "channel": config.channel,
        "mode": config.mode,
        "closures": sorted(config.closures),
        "seed": config.seed,
        "base_runs": base,
        "closure_runs": extra,
        **more,
    }


def _drop_sets(n: int, H: int, k: int):
    slots = [(m, s) for m in range(1, H + 1) for s in range(n)]
    for size in range(k + 1):
        for c in itertools.combinations(slots, size):
            yield frozenset(c)


def script_space(config: ScenarioConfig):
    n, H, t = config.n, config.horizon, config.t
    options = [None] + list(range(1, H + 1))
    crash_choices = [
        tuple((p, c) for p, c in enumerate(choice) if c is not None)
        for choice in itertools.product(options, repeat=n)
        if sum(c is not None for c in choice) <= t
    ]
    blackouts = [None] + list(range(H))
    for crashes in crash_choices:
        for b in blackouts:
            for d in _drop_sets(n, H, config.max_drops):
                yield RunScript(crashes, d, b)


def script_count(config: ScenarioConfig) -> int:
    n, H, t = config.n, config.horizon, config.t
    from math import comb

    crash = sum(comb(n, f) * H**f for f in range(t + 1))
    slots = n * H
    drops = sum(comb(slots, k) for k in range(config.max_drops + 1))
    return crash * (H + 1) * drops


def enumerate_system(config: ScenarioConfig) -> SystemOfRuns:
    """Every run reachable by some script, deduplicated. Unfair runs are left out."""
    if config.n > 3:
        raise SizeGuardExceeded("exhaustive generation is limited to n <= 3")
    count = script_count(config)
    if count > config.max_scripts:
        raise SizeGuardExceeded(f"{count} scripts exceed the limit of {config.max_scripts}")
    runs: dict[tuple, Run] = {}
    unfair = 0
    for s in script_space(config):
        r = simulate(config, s)
        if r.key in runs:
            continue
        bad = validate_run(r)
        if bad:
            if all(v.rule == "FAIRNESS" for v in bad):
                unfair += 1
                continue
            raise InvariantBreach(f"ill-formed run {r.label}: {bad[0]}")
        runs[r.key] = r
    meta = _meta(config, len(runs), 0, scripts=count, unfair_discarded=unfair)
    meta["mode"] = "exhaustive"
    return SystemOfRuns(config.n, tuple(runs.values()), Provenance.EXHAUSTIVE, meta)
