from udclab.model import History, Run


def build_run(n: int, horizon: int, timed: list, budget: int = 0, closed: bool = False, label: str = "") -> Run:
    """Build a run from (time, event) pairs; each process gets at most one event per step."""
    cur = [History.empty(p) for p in range(n)]
    by_time: dict[int, list] = {}
    for m, e in timed:
        by_time.setdefault(m, []).append(e)
    cuts = [tuple(cur)]
    for m in range(1, horizon + 1):
        for e in by_time.get(m, ()):
            cur[e.subject] = cur[e.subject].append(e)
        cuts.append(tuple(cur))
    return Run(n, tuple(cuts), budget, closed, 0, label)
