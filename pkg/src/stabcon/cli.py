"""Command-line front end.

Exit codes: 0 success, 1 a property-violation report was produced, 2 usage or
parse error.  Documents are JSON with stable key order (CSV for distance
matrices); ``--out`` writes atomically, otherwise stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from typing import Sequence

from . import algorithms, impossibility, model, simulator, topology, universal

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip() != "")
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _values(inputs: Sequence[int], explicit: str | None) -> model.ValueSet:
    if explicit:
        return model.ValueSet(_ints(explicit))
    return model.ValueSet(tuple(sorted(set(inputs) | {0, 1})))


def _pattern(text: str) -> model.LassoPattern:
    try:
        return model.parse_pattern(text)
    except (model.PatternSyntaxError, ValueError) as e:
        raise UsageError(f"bad pattern {text!r}: {e}") from None


def _algorithm(text: str) -> algorithms.AlgorithmSpec:
    try:
        return algorithms.get_algorithm(text)
    except algorithms.UnknownAlgorithm as e:
        raise UsageError(str(e)) from None


def _emit(text: str, out: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".stabcon-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, out)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2)


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read {path}: {e}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    alg = _algorithm(args.alg)
    if args.use_async:
        if args.inputs is None:
            raise UsageError("--inputs is required")
        inputs = _ints(args.inputs)
        n = args.n or len(inputs)
        if len(inputs) != n:
            raise UsageError(f"--n {n} but {len(inputs)} inputs")
        steps = args.rounds if args.rounds is not None else 12 * n
        sched = simulator.random_schedule(n, steps, args.seed, window=args.window)
        trace = simulator.run_async(sched, inputs, alg, values=_values(inputs, args.values))
    else:
        if args.pattern is None or args.inputs is None:
            raise UsageError("--pattern and --inputs are required")
        pat = _pattern(args.pattern)
        inputs = _ints(args.inputs)
        rounds = args.rounds if args.rounds is not None else simulator.recommended_horizon(pat)
        if rounds < 1:
            raise UsageError("--rounds must be positive")
        try:
            trace = simulator.run_sync(pat, inputs, alg, rounds, _values(inputs, args.values))
        except ValueError as e:
            raise UsageError(str(e)) from None
    _emit(_dump(trace.document()), args.out)
    return EXIT_OK


def _family(args) -> tuple[list[str], list]:
    if args.family == "one-message":
        ids, exs = [], []
        for i in range(1, args.i_max + 1):
            ids += [f"alpha{i}", f"beta{i}"]
            exs += [model.SyncExecution(model.alpha(i), (0, 1)), model.SyncExecution(model.beta(i), (0, 1))]
        ids.append("eta")
        exs.append(model.SyncExecution(model.eta(), (0, 1)))
        return ids, exs
    if not args.pattern:
        raise UsageError("give --family or at least one --pattern")
    inputs = args.inputs or ["0,1"]
    if len(inputs) == 1:
        inputs = inputs * len(args.pattern)
    if len(inputs) != len(args.pattern):
        raise UsageError("give one --inputs per --pattern (or a single one for all)")
    ids, exs = [], []
    for text, inp in zip(args.pattern, inputs):
        pat = _pattern(text)
        vals = _ints(inp)
        try:
            exs.append(model.SyncExecution(pat, vals, _values(vals, args.values)))
        except ValueError as e:
            raise UsageError(str(e)) from None
        ids.append(f"{text}|{inp}")
    return ids, exs


def cmd_distances(args) -> int:
    ids, exs = _family(args)
    try:
        mat = topology.distance_matrix(exs, args.metric, args.rounds)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _emit(topology.matrix_csv(ids, mat), args.out)
    return EXIT_OK


def cmd_prefix_order(args) -> int:
    if not 1 <= args.k <= 8:
        raise UsageError("--k must be in 1..8")
    if args.cycle:
        entries = topology.prefix_cycle_ll(args.k)
        doc = {
            "k": args.k,
            "cycle": [
                {"prefix": topology.word_literal(e.prefix), "inputs": list(e.inputs), "same_view_for": e.link}
                for e in entries
            ],
        }
        _emit(_dump(doc), args.out)
        return EXIT_OK if all(e.link is not None for e in entries) else EXIT_VIOLATION
    _emit("\n".join(topology.ll_prefix_words(args.k)), args.out)
    return EXIT_OK


def _labeling(args) -> universal.DecisionLabeling:
    if args.family == "one-message":
        return universal.one_message_labeling(args.i_max)
    if args.family == "three-label":
        return universal.three_label_family()
    if args.file is None:
        raise UsageError("give a labeling file or --family")
    return universal.DecisionLabeling.from_document(_load_json(args.file))


def cmd_label_check(args) -> int:
    try:
        lab = _labeling(args)
        universal.validate(lab)
    except universal.LabelingError as e:
        _emit(_dump({"valid": False, "problems": e.problems}), args.out)
        return EXIT_VIOLATION
    if args.emit:
        _emit(lab.to_json(), args.out)
    else:
        _emit(_dump({"valid": True, "members": len(lab.members)}), args.out)
    return EXIT_OK


def cmd_universal(args) -> int:
    try:
        lab = _labeling(args)
        if args.member is not None:
            universal.validate(lab)
            d = universal.universal_decide(lab, args.member, args.p, args.t)
            doc = {
                "member": args.member,
                "p": args.p,
                "t": args.t,
                "value": d.value,
                "case": d.case,
                "candidates": sorted(d.candidates),
            }
            _emit(_dump(doc), args.out)
            return EXIT_OK
        rep = universal.check_stabilizing(lab, horizon=args.rounds)
    except universal.LabelingError as e:
        _emit(_dump({"valid": False, "problems": e.problems}), args.out)
        return EXIT_VIOLATION
    except KeyError as e:
        raise UsageError(f"unknown member {e}") from None
    _emit(_dump(rep.document()), args.out)
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def cmd_attack(args) -> int:
    alg = _algorithm(args.alg)
    try:
        if args.chain:
            run = impossibility.nonstabilization_run(alg, _ints(args.chain), args.m_max, args.flips)
            _emit(_dump(run.document()), args.out)
            return EXIT_OK
        w = impossibility.dll_attack(alg, args.k, args.m_max)
    except impossibility.DomainMismatch as e:
        print(f"stabcon: domain mismatch: {e}", file=sys.stderr)
        return EXIT_USAGE
    except impossibility.AttackError as e:
        _emit(_dump({"witness": None, "error": str(e), "report": e.report}), args.out)
        return EXIT_VIOLATION
    _emit(w.to_json(), args.out)
    return EXIT_OK


def cmd_kernel(args) -> int:
    pat = _pattern(args.pattern)
    doc = {
        "pattern": model.pattern_document(pat),
        "kernel": sorted(model.kernel(pat)),
        "broadcasters": sorted(model.pattern_broadcasters(pat)),
    }
    if args.demo:
        if args.inputs is None:
            raise UsageError("--demo needs --inputs")
        if model.kernel(pat):
            raise UsageError("--demo needs a pattern with an empty kernel")
        rep = impossibility.empty_kernel_demo(_algorithm(args.alg), pat, _ints(args.inputs), args.rounds or 64)
        doc["demo"] = rep.document()
    _emit(_dump(doc), args.out)
    return EXIT_OK


def cmd_verify_witness(args) -> int:
    doc = _load_json(args.file)
    res = impossibility.verify_witness(doc)
    _emit(_dump({"passed": res.passed, "failure": res.failure}), args.out)
    return EXIT_OK if res.passed else EXIT_VIOLATION


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stabcon", description="Stabilizing consensus under message adversaries.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, alg=True):
        if alg:
            p.add_argument("--alg", default="minmax", help="algorithm id, e.g. minmax, safe-minmax(theta=half)")
        p.add_argument("--out", help="write the document here instead of stdout")

    p = sub.add_parser("run", help="simulate one execution")
    common(p)
    p.add_argument("--pattern", help='pattern literal "prefix:loop", e.g. "<--:>"')
    p.add_argument("--inputs", help="comma-separated inputs")
    p.add_argument("--values", help="comma-separated value order (default: 0,1 plus inputs)")
    p.add_argument("--rounds", type=int, help="rounds (sync) or random steps (async)")
    p.add_argument("--async", dest="use_async", action="store_true", help="random fair-lossy schedule")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=simulator.DEFAULT_WINDOW)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("distances", help="distance matrix as CSV")
    common(p, alg=False)
    p.add_argument("--pattern", action="append", help="repeat for each execution")
    p.add_argument("--inputs", action="append")
    p.add_argument("--values")
    p.add_argument("--family", choices=["one-message"])
    p.add_argument("--i-max", type=int, default=8)
    p.add_argument("--metric", default="nonuniform", help="p:<id>, uniform or nonuniform")
    p.add_argument("--rounds", type=int, help="divergence horizon")
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("prefix-order", help="LL prefix order (or the four-input cycle)")
    common(p, alg=False)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--cycle", action="store_true")
    p.set_defaults(func=cmd_prefix_order)

    for name, fn in (("label-check", cmd_label_check), ("universal", cmd_universal)):
        p = sub.add_parser(name, help="validate a labeling" if name == "label-check" else "run the universal decider")
        common(p, alg=False)
        p.add_argument("file", nargs="?")
        p.add_argument("--family", choices=["one-message", "three-label"])
        p.add_argument("--i-max", type=int, default=8)
        if name == "label-check":
            p.add_argument("--emit", action="store_true", help="print the labeling document")
        else:
            p.add_argument("--member")
            p.add_argument("--p", type=int, default=0)
            p.add_argument("--t", type=int, default=0)
            p.add_argument("--rounds", type=int)
        p.set_defaults(func=fn)

    p = sub.add_parser("attack", help="conflicting-prefix attack")
    common(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--m-max", type=int, default=32)
    p.add_argument("--chain", help="comma-separated k schedule for a chained run")
    p.add_argument("--flips", type=int, default=0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("kernel", help="kernel and broadcasters of a pattern")
    common(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--demo", action="store_true", help="run the empty-kernel disagreement demo")
    p.add_argument("--inputs")
    p.add_argument("--rounds", type=int)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("verify-witness", help="replay a witness document")
    common(p, alg=False)
    p.add_argument("file")
    p.set_defaults(func=cmd_verify_witness)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"stabcon: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
