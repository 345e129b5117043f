"""Command line entry point: validate, reduce, optimize, experiment."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import complex as cx
from .harness import ExperimentSpec, run_experiment
from .hodge import hodge_matching
from .morse import Matching, MatchingError, is_morse_matching, reduce
from .optimize import OptimizerConfig, run_trajectory, trajectory_csv


def _load(path: str) -> cx.BasedChainComplex:
    try:
        return cx.load(path)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"error: cannot load {path}: {exc}")


def cmd_validate(args) -> int:
    report = cx.validate(_load(args.file))
    if report.ok:
        print("ok")
        return 0
    for v in report.violations:
        print(f"{v.check}\t{v.location}\t{v.magnitude:.3e}")
    return 1


def cmd_reduce(args) -> int:
    c = _load(args.file)
    if args.hodge:
        hm = hodge_matching(c)
        r, source = hm.retraction, hm.complex
    else:
        data = json.loads(Path(args.matching).read_text())
        m = Matching.from_json(c, data)
        report = is_morse_matching(c, m)
        if not report.ok:
            for v in report.violations:
                print(f"{v.check}\t{v.location}", file=sys.stderr)
            return 1
        try:
            r, source = reduce(c, m), c
        except MatchingError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    out = {"reduced": cx.to_json(r.reduced), "residuals": r.residuals(),
           "critical": {str(n): [source.cells[n][i] for i in crit] for n, crit in enumerate(r.critical)}}
    text = json.dumps(out, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_optimize(args) -> int:
    c = _load(args.file)
    s = cx.load_signal(c, args.signal)
    cfg = OptimizerConfig(args.degree, args.steps, args.seed, "random" if args.random else "optimal",
                          "dual" if args.dual else "primal")
    t = run_trajectory(c, s, cfg)
    text = trajectory_csv(t.source, t.records)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if t.stopped_early:
        print(f"note: stopped after {len(t.records)} of {args.steps} steps, no pairing left", file=sys.stderr)
    return 0


def cmd_experiment(args) -> int:
    try:
        spec = ExperimentSpec.from_json(json.loads(Path(args.spec).read_text()))
    except (OSError, ValueError, TypeError) as exc:
        raise SystemExit(f"error: bad experiment spec {args.spec}: {exc}")
    report = run_experiment(spec, args.output)
    for mode, res in report.modes.items():
        last = res.mean[-1] if res.mean else float("nan")
        print(f"{mode}: {len(res.mean)} steps, final mean loss {last:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morsepack", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check boundary and inner product consistency")
    v.add_argument("file", help="complex JSON")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("reduce", help="Morse reduction by a matching or the Hodge matching")
    r.add_argument("file", help="complex JSON")
    g = r.add_mutually_exclusive_group(required=True)
    g.add_argument("--matching", help="matching JSON with cell names")
    g.add_argument("--hodge", action="store_true", help="use the Hodge matching")
    r.add_argument("-o", "--output", help="write JSON here instead of stdout")
    r.set_defaults(func=cmd_reduce)

    o = sub.add_parser("optimize", help="greedy pairings minimizing reconstruction loss")
    o.add_argument("file", help="complex JSON")
    o.add_argument("--signal", required=True, help="signal JSON")
    o.add_argument("-n", "--degree", type=int, default=1, help="pair (n+1)-cells with n-cells")
    o.add_argument("-k", "--steps", type=int, default=1, help="number of pairings")
    o.add_argument("--seed", type=int, default=0, help="tie-break and baseline seed")
    o.add_argument("--random", action="store_true", help="random baseline instead of optimal pairs")
    o.add_argument("--dual", action="store_true", help="minimize the adjoint loss (signal on C_{n+1})")
    o.add_argument("-o", "--output", help="write CSV here instead of stdout")
    o.set_defaults(func=cmd_optimize)

    e = sub.add_parser("experiment", help="run an optimal vs random comparison")
    e.add_argument("spec", help="experiment JSON")
    e.add_argument("-o", "--output", required=True, help="output directory")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)
