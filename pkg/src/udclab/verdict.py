from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable


class Status(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class Witness:
    run: int
    time: int
    proc: int | None = None
    detail: str = ""

    def __str__(self) -> str:
        who = "" if self.proc is None else f" p{self.proc}"
        tail = f": {self.detail}" if self.detail else ""
        return f"run {self.run} t={self.time}{who}{tail}"


@dataclass
class Verdict:
    name: str
    status: Status
    witness: Witness | None = None
    obligations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.status is Status.FAIL and self.witness is None:
            raise ValueError(f"{self.name}: FAIL without a witness")
        if self.status is Status.INCONCLUSIVE and not self.obligations:
            raise ValueError(f"{self.name}: INCONCLUSIVE without obligations")

    @property
    def passed(self) -> bool:
        return self.status is Status.PASS

    def summary(self) -> str:
        return f"CHECK {self.name} {self.status.value}"

    def report(self, max_obligations: int = 10) -> str:
        lines = [self.summary()]
        if self.witness is not None:
            lines.append(f"  witness: {self.witness}")
        if self.obligations:
            lines.append(f"  obligations ({len(self.obligations)}):")
            lines += [f"    {o}" for o in self.obligations[:max_obligations]]
            if len(self.obligations) > max_obligations:
                lines.append(f"    ... {len(self.obligations) - max_obligations} more")
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def combine(name: str, verdicts: Iterable[Verdict]) -> Verdict:
    """FAIL if any fails (first witness kept), else INCONCLUSIVE if any is, else PASS."""
    verdicts = list(verdicts)
    for v in verdicts:
        if v.status is Status.FAIL:
            return Verdict(name, Status.FAIL, v.witness, notes=[f"{v.name} failed"])
    obligations = [o for v in verdicts for o in v.obligations]
    if any(v.status is Status.INCONCLUSIVE for v in verdicts):
        return Verdict(name, Status.INCONCLUSIVE, obligations=obligations)
    return Verdict(name, Status.PASS)


def from_findings(name: str, failure: Witness | None, obligations: list[str]) -> Verdict:
    if failure is not None:
        return Verdict(name, Status.FAIL, failure)
    if obligations:
        return Verdict(name, Status.INCONCLUSIVE, obligations=obligations)
    return Verdict(name, Status.PASS)
