"""Command-line front end.

Exit status: 0 on success, 1 when a trace, query or scenario is rejected,
2 on usage, input or parse errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import codegen, corpus, dsl, query
from . import trace as tr
from .decoding_net import Name
from .errors import AddrmonError, CorpusFailure, DslError, QueryError, ResolutionError, TraceParseError, UnknownNode

EXIT_OK, EXIT_REJECTED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from None


def _platform(args, rest: list[str], want: int, usage: str):
    """Split positionals into (net, conf, remaining) honouring --topology."""
    if args.topology:
        if len(rest) != want:
            raise UsageError(f"usage: {usage} (platform given by --topology)")
        text = dsl.builtin_source(args.topology)
    else:
        if len(rest) != want + 1:
            raise UsageError(f"usage: PLATFORM {usage}")
        text = _read(rest[0])
        rest = rest[1:]
    net, conf = dsl.compile_text(text)
    return net, conf, rest


def _int(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise UsageError(f"not a number: {text!r}") from None


def _emit(args, text: str):
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_check(args) -> int:
    net, conf, (trace_path,) = _platform(args, args.inputs, 1, "TRACE")
    verdict = tr.check_text(net, conf, _read(trace_path), args.unsafe_no_guards)
    if args.format == "json":
        doc = {"verdict": "VALID" if isinstance(verdict, tr.Valid) else "REJECTED"}
        if isinstance(verdict, tr.Rejected):
            doc.update(line=verdict.lineno, code=verdict.code, message=str(verdict.error))
        _emit(args, json.dumps(doc, sort_keys=True) + "\n")
    else:
        _emit(args, f"{verdict}\n")
    return EXIT_OK if isinstance(verdict, tr.Valid) else EXIT_REJECTED


def cmd_resolve(args) -> int:
    net, _, (node, addr, size) = _platform(args, args.inputs, 3, "NODE ADDR SIZE")
    ranges = query.dn_resolve_range(net, node, _int(addr), _int(size), args.dst)
    if args.format == "json":
        doc = [{"node": r.node, "base": r.base, "size": r.size} for r in ranges]
        _emit(args, json.dumps(doc) + "\n")
    else:
        _emit(args, "".join(f"canonical({r.node}, {r.base:#x}, {r.size:#x}).\n" for r in ranges))
    return EXIT_OK


def cmd_query(args) -> int:
    if args.alloc:
        net, conf, rest = _platform(args, args.inputs, 1, "SRC --alloc")
        g = query.flatten(net, conf)
        a = query.dn_get_allocation_range(g, rest[0], args.dst, args.size)
        if args.format == "json":
            doc = {"node": a.node, "base": a.range.base, "size": a.range.size}
            _emit(args, json.dumps(doc, sort_keys=True) + "\n")
        else:
            _emit(args, a.facts() + "\n")
        return EXIT_OK
    net, conf, (src, dst) = _platform(args, args.inputs, 2, "SRC DST")
    plan = query.dn_get_config_nodes(query.flatten(net, conf), src, dst)
    if args.format == "json":
        doc = {
            "src": plan.src,
            "dst": plan.dst,
            "spaces": plan.spaces,
            "via": [s.via for s in plan.steps],
            "path": list(plan.path),
        }
        _emit(args, json.dumps(doc, sort_keys=True) + "\n")
    else:
        _emit(args, plan.facts() + "\n")
    return EXIT_OK


def cmd_gen(args) -> int:
    net, conf, _ = _platform(args, args.inputs, 0, "")
    if args.what == "facts":
        text = codegen.emit_facts(net, conf)
    elif args.what == "tables":
        for n in args.node or ():
            if n not in net:
                raise UnknownNode(n)
        text = codegen.dump_tables(net, args.node)
    else:
        text = codegen.emit_simulator_config(net)
    _emit(args, text)
    return EXIT_OK


def cmd_corpus(args) -> int:
    directory = args.dir or corpus.builtin_dir()
    if not Path(directory).is_dir():
        raise UsageError(f"{directory}: not a directory")
    scenarios = corpus.load_dir(directory)
    if args.unsafe_no_guards:
        results = [corpus.Result(sc, corpus.verdict_line(sc, True), None) for sc in scenarios]
        ok = all(
            (r.actual != r.scenario.expect) == r.scenario.guarded for r in results
        )
        lines = [
            f"{r.scenario.name}: {r.actual} "
            + ("(guard bypassed)" if r.actual != r.scenario.expect else "(still rejected)")
            for r in results
        ]
        _emit(args, "\n".join(lines) + ("\n" if lines else ""))
        return EXIT_OK if ok else EXIT_REJECTED
    results = [corpus.run_scenario(sc) for sc in scenarios]
    if args.format == "json":
        doc = [
            {
                "name": r.scenario.name,
                "class": r.scenario.cls,
                "expected": r.scenario.expect,
                "actual": r.actual,
                "unguarded": r.unguarded,
                "passed": r.passed,
            }
            for r in results
        ]
        _emit(args, json.dumps(doc, indent=2) + "\n")
    else:
        _emit(args, corpus.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_REJECTED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("facts", "json"), default="facts")
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    common.add_argument(
        "--topology",
        choices=dsl.TOPOLOGIES,
        help="use a built-in dual-core topology instead of a platform file",
    )
    common.add_argument("--unsafe-no-guards", action="store_true", help=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="addrmon", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("check", parents=[common], help="run a trace against a platform")
    s.add_argument("inputs", nargs="+", metavar="PLATFORM TRACE")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("resolve", parents=[common], help="canonical names of an address range")
    s.add_argument("inputs", nargs="+", metavar="PLATFORM NODE ADDR SIZE")
    s.add_argument("--dst", help="only accept results in this node")
    s.set_defaults(func=cmd_resolve)

    s = sub.add_parser("query", parents=[common], help="configuration plans and allocation")
    s.add_argument("inputs", nargs="+", metavar="PLATFORM SRC DST")
    s.add_argument("--alloc", action="store_true", help="find free memory reachable from SRC")
    s.add_argument("--dst", help="with --alloc: restrict to this memory node")
    s.add_argument("--size", type=_int_arg, help="with --alloc: bytes needed")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("gen", parents=[common], help="generate facts, tables or simulator config")
    s.add_argument("inputs", nargs="*", metavar="PLATFORM")
    what = s.add_mutually_exclusive_group(required=True)
    what.add_argument("--facts", dest="what", action="store_const", const="facts")
    what.add_argument("--tables", dest="what", action="store_const", const="tables")
    what.add_argument("--simconfig", dest="what", action="store_const", const="simconfig")
    s.add_argument("--node", action="append", help="with --tables: only this node (repeatable)")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("corpus", parents=[common], help="run vulnerability scenarios")
    s.add_argument("dir", nargs="?", help="scenario directory (default: the shipped corpus)")
    s.set_defaults(func=cmd_corpus)
    return p


def _int_arg(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DslError, TraceParseError, CorpusFailure, UnknownNode) as e:
        print(f"addrmon: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ResolutionError, QueryError) as e:
        print(f"addrmon: {e.code}: {e}", file=sys.stderr)
        return EXIT_REJECTED
    except AddrmonError as e:
        print(f"addrmon: {e.code}: {e}", file=sys.stderr)
        return EXIT_REJECTED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
