"""udc-lab: simulate, check, transform and sweep.

Exit codes: 0 all PASS, 1 some FAIL, 4 INCONCLUSIVE without FAIL,
2 config / parse / provenance errors, 3 internal invariant breach.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .check import (
    PreconditionError,
    actions_in,
    check_account_all,
    check_conditions,
    check_nudc,
    check_strong_eq_perfect,
    check_udc,
)
from .fdetect import ConversionInapplicable, Property, check_generalized, check_property
from .formula import Evaluator
from .model import ActionId, ProvenanceError, write_trace
from .sim import ConfigError, InvariantBreach, checked, generate_system, load_config, simulate
from .store import read_system, write_system
from .transform import convert_impermanent_system, convert_weak_to_strong, f_prime_transform, f_transform
from .verdict import Status, Verdict

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BREACH, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4

_PROPS = {
    "strong-accuracy": Property.STRONG_ACCURACY,
    "weak-accuracy": Property.WEAK_ACCURACY,
    "strong-completeness": Property.STRONG_COMPLETENESS,
    "weak-completeness": Property.WEAK_COMPLETENESS,
    "impermanent-strong-completeness": Property.IMPERMANENT_STRONG_COMPLETENESS,
    "impermanent-weak-completeness": Property.IMPERMANENT_WEAK_COMPLETENESS,
}


def exit_code(verdicts: list[Verdict]) -> int:
    statuses = {v.status for v in verdicts}
    if Status.FAIL in statuses:
        return EXIT_FAIL
    if Status.INCONCLUSIVE in statuses:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _emit(verdicts: list[Verdict]) -> int:
    for v in verdicts:
        print(v.report())
    return exit_code(verdicts)


def cmd_run(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    if args.single:
        run = checked(simulate(config))
        out.parent.mkdir(parents=True, exist_ok=True)
        write_trace(run, out)
        print(f"wrote {out}")
    else:
        system = generate_system(config)
        write_system(system, out)
        print(f"wrote {len(system)} runs to {out}")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    config = load_config(args.config).with_(mode="exhaustive")
    system = generate_system(config)
    write_system(system, args.out)
    print(f"wrote {len(system)} runs to {args.out} (scripts tried: {system.meta.get('scripts')})")
    return EXIT_OK


def cmd_check(args) -> int:
    system = read_system(args.input)
    spec = args.spec
    if spec in ("udc", "nudc"):
        actions = [ActionId.parse(args.action)] if args.action else actions_in(system)
        ev = Evaluator(system)
        fn = check_udc if spec == "udc" else check_nudc
        verdicts = []
        for a in actions:
            for v in fn(system, a, ev):
                v.notes.append(f"action {a}")
                verdicts.append(v)
        return _emit(verdicts)
    if spec == "fd":
        if args.property not in _PROPS:
            raise ConfigError(f"--property must be one of {sorted(_PROPS)}")
        return _emit([check_property(system, _PROPS[args.property], args.source)])
    if spec == "generalized":
        return _emit([check_generalized(system, args.t, args.source)])
    if spec == "conditions":
        which = [s.strip() for s in args.conditions.split(",") if s.strip()]
        return _emit(list(check_conditions(system, which).values()))
    if spec == "account":
        return _emit([check_account_all(system)])
    if spec == "strong-eq-perfect":
        return _emit([check_strong_eq_perfect(system)])
    raise ConfigError(f"unknown spec {spec!r}")


def cmd_extract(args) -> int:
    system = read_system(args.input)
    if args.mode == "f":
        out = f_transform(system)
        verdicts = [
            check_property(out, Property.STRONG_ACCURACY, "primed"),
            check_property(out, Property.STRONG_COMPLETENESS, "primed"),
        ]
    else:
        if args.t is None:
            raise ConfigError("--t is required for mode fprime")
        if args.t >= system.n:
            print(f"note: t={args.t} >= n={system.n}; usefulness uses min(t, n-1) = {system.n - 1}")
        out = f_prime_transform(system, args.t)
        verdicts = [check_generalized(out, args.t, "primed")]
    write_system(out, args.out)
    print(f"wrote {len(out)} runs to {args.out}")
    return _emit(verdicts)


def cmd_convert(args) -> int:
    system = read_system(args.input)
    if args.mode == "impermanent":
        out = convert_impermanent_system(system)
        source = "original"
    else:
        out = convert_weak_to_strong(system)
        source = "primed"
    write_system(out, args.out)
    print(f"wrote {len(out)} runs to {args.out}")
    return _emit([check_property(out, Property.STRONG_COMPLETENESS, source)])


def cmd_sweep(args) -> int:
    from .acceptance import run_all

    results = run_all(quick=args.quick, out=args.out, only=args.only)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="udc-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write traces")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--single", action="store_true", help="write one trace file for the config seed")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("enumerate", help="enumerate every run of a small scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_enumerate)

    p = sub.add_parser("check", help="check a trace or system directory")
    p.add_argument("--input", required=True)
    p.add_argument("--spec", required=True, choices=["udc", "nudc", "fd", "generalized", "conditions", "account", "strong-eq-perfect"])
    p.add_argument("--action")
    p.add_argument("--property", default="strong-accuracy")
    p.add_argument("--source", default="original", choices=["original", "primed"])
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--conditions", default="A1,A2,A3,A5(1)")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("extract", help="build the f or f' system and check the extracted detector")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", required=True, choices=["f", "fprime"])
    p.add_argument("--t", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("convert", help="strengthen a detector's completeness")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", required=True, choices=["weak-to-strong", "impermanent"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("sweep", help="run the acceptance sweep")
    p.add_argument("--quick", action="store_true", help="smaller seed counts")
    p.add_argument("--out", help="directory for sweep traces and summaries")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.set_defaults(fn=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InvariantBreach as exc:
        print(f"internal invariant breach: {exc}", file=sys.stderr)
        return EXIT_BREACH
    except (ConfigError, ProvenanceError, PreconditionError, ConversionInapplicable, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
