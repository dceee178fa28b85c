"""Trace files: parsing, execution and verdicts.

A trace is one operation per line; ``#`` starts a comment.  Lines
beginning with ``init`` set up the initial state and may only precede the
first operation::

    init subject <subject>
    init ram <oid> <node> <base> <size>
    init tstruct <oid> <node> <base> <size>
    init acm <subject> <object> <right>...

    retype <subject> <parent> <RAM|Frame|TStructure> <offset> <size> <new-oid>
    derive <subject> <tstruct> <granularity> <asid>
    map <subject> <asid> <dst-base> <size> <oid> <obj-offset> <mid>
    unmap <subject> <mid>
    copy <from> <to> <oid> <grant|map|access|grant:<right>>
    revoke <subject> <oid>

Numbers are hex with a ``0x`` prefix (decimal is also accepted).  Memory
is always named by node and address: an address without its node is a
parse error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

from . import monitor as mon
from .authority import Authority, parse_authority
from .decoding_net import AddressRange, ConfSpace, DecodingNet, Name
from .errors import AddrmonError, TraceParseError


class InitSubject(NamedTuple):
    subject: str


class InitRoot(NamedTuple):
    oid: str
    base: Name
    size: int
    otype: mon.ObjectType = mon.ObjectType.RAM


class InitAcm(NamedTuple):
    subject: str
    obj: str
    rights: tuple


class Retype(NamedTuple):
    subject: str
    parent: str
    new_type: mon.ObjectType
    offset: int
    size: int
    new_oid: str


class Derive(NamedTuple):
    subject: str
    tstruct: str
    granularity: int
    asid: str


class Map(NamedTuple):
    subject: str
    aspace: str
    dst: AddressRange
    obj: str
    obj_offset: int
    mid: str


class Unmap(NamedTuple):
    subject: str
    mid: str


class Copy(NamedTuple):
    s_from: str
    s_to: str
    obj: str
    right: Authority


class Revoke(NamedTuple):
    subject: str
    obj: str


Op = Union[InitSubject, InitRoot, InitAcm, Retype, Derive, Map, Unmap, Copy, Revoke]


class Line(NamedTuple):
    lineno: int
    op: Op


_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_NUMBER = re.compile(r"^(0[xX][0-9a-fA-F_]+|[0-9][0-9_]*)$")


def _ident(tok: str, lineno: int, what: str) -> str:
    if not _IDENT.match(tok):
        raise TraceParseError(lineno, f"expected {what} identifier, found {tok!r}")
    return tok


def _num(tok: str, lineno: int, what: str) -> int:
    if not _NUMBER.match(tok):
        raise TraceParseError(lineno, f"expected {what} number, found {tok!r}")
    return int(tok, 0)


def _node(tok: str, lineno: int) -> str:
    if _NUMBER.match(tok):
        raise TraceParseError(lineno, f"address {tok} lacks a node qualifier")
    return _ident(tok, lineno, "node")


def _right(tok: str, lineno: int) -> Authority:
    try:
        return parse_authority(tok)
    except ValueError:
        raise TraceParseError(lineno, f"unknown right {tok!r}") from None


def _otype(tok: str, lineno: int) -> mon.ObjectType:
    for t in mon.ObjectType:
        if t.value.lower() == tok.lower():
            return t
    raise TraceParseError(lineno, f"unknown object type {tok!r}")


def _arity(toks, n, lineno, usage):
    if len(toks) != n:
        raise TraceParseError(lineno, f"usage: {usage}")


def parse_line(text: str, lineno: int = 1) -> Op | None:
    toks = text.split("#", 1)[0].split()
    if not toks:
        return None
    head, args = toks[0], toks[1:]
    if head == "init":
        if not args:
            raise TraceParseError(lineno, "empty init line")
        kind, rest = args[0], args[1:]
        if kind == "subject":
            _arity(rest, 1, lineno, "init subject <subject>")
            return InitSubject(_ident(rest[0], lineno, "subject"))
        if kind in ("ram", "tstruct"):
            if len(rest) == 3 and _NUMBER.match(rest[1]):
                _node(rest[1], lineno)
            _arity(rest, 4, lineno, f"init {kind} <oid> <node> <base> <size>")
            otype = mon.ObjectType.RAM if kind == "ram" else mon.ObjectType.TSTRUCTURE
            return InitRoot(
                _ident(rest[0], lineno, "object"),
                Name(_node(rest[1], lineno), _num(rest[2], lineno, "base")),
                _num(rest[3], lineno, "size"),
                otype,
            )
        if kind == "acm":
            if len(rest) < 3:
                raise TraceParseError(lineno, "usage: init acm <subject> <object> <right>...")
            return InitAcm(
                _ident(rest[0], lineno, "subject"),
                _ident(rest[1], lineno, "object"),
                tuple(_right(t, lineno) for t in rest[2:]),
            )
        raise TraceParseError(lineno, f"unknown init kind {kind!r}")
    if head == "retype":
        _arity(args, 6, lineno, "retype <subject> <parent> <type> <offset> <size> <new-oid>")
        return Retype(
            _ident(args[0], lineno, "subject"),
            _ident(args[1], lineno, "object"),
            _otype(args[2], lineno),
            _num(args[3], lineno, "offset"),
            _num(args[4], lineno, "size"),
            _ident(args[5], lineno, "object"),
        )
    if head == "derive":
        _arity(args, 4, lineno, "derive <subject> <tstruct> <granularity> <asid>")
        return Derive(
            _ident(args[0], lineno, "subject"),
            _ident(args[1], lineno, "object"),
            _num(args[2], lineno, "granularity"),
            _ident(args[3], lineno, "address space"),
        )
    if head == "map":
        _arity(args, 7, lineno, "map <subject> <asid> <dst-base> <size> <oid> <obj-offset> <mid>")
        base, size = _num(args[2], lineno, "base"), _num(args[3], lineno, "size")
        try:
            dst = AddressRange(base, size)
        except ValueError as e:
            raise TraceParseError(lineno, str(e)) from None
        return Map(
            _ident(args[0], lineno, "subject"),
            _ident(args[1], lineno, "address space"),
            dst,
            _ident(args[4], lineno, "object"),
            _num(args[5], lineno, "offset"),
            _ident(args[6], lineno, "mapping"),
        )
    if head == "unmap":
        _arity(args, 2, lineno, "unmap <subject> <mid>")
        return Unmap(_ident(args[0], lineno, "subject"), _ident(args[1], lineno, "mapping"))
    if head == "copy":
        _arity(args, 4, lineno, "copy <from> <to> <oid> <right>")
        return Copy(
            _ident(args[0], lineno, "subject"),
            _ident(args[1], lineno, "subject"),
            _ident(args[2], lineno, "object"),
            _right(args[3], lineno),
        )
    if head == "revoke":
        _arity(args, 2, lineno, "revoke <subject> <oid>")
        return Revoke(_ident(args[0], lineno, "subject"), _ident(args[1], lineno, "object"))
    raise TraceParseError(lineno, f"unknown operation {head!r}")


def parse_trace(text: str, first_line: int = 1) -> list[Line]:
    out: list[Line] = []
    seen_op = False
    for i, raw in enumerate(text.splitlines(), start=first_line):
        op = parse_line(raw, i)
        if op is None:
            continue
        is_init = isinstance(op, (InitSubject, InitRoot, InitAcm))
        if is_init and seen_op:
            raise TraceParseError(i, "init lines must precede all operations")
        seen_op = seen_op or not is_init
        out.append(Line(i, op))
    return out


def format_op(op: Op) -> str:
    h = hex
    if isinstance(op, InitSubject):
        return f"init subject {op.subject}"
    if isinstance(op, InitRoot):
        kind = "ram" if op.otype is mon.ObjectType.RAM else "tstruct"
        return f"init {kind} {op.oid} {op.base.node} {h(op.base.addr)} {h(op.size)}"
    if isinstance(op, InitAcm):
        return f"init acm {op.subject} {op.obj} " + " ".join(str(r) for r in op.rights)
    if isinstance(op, Retype):
        return f"retype {op.subject} {op.parent} {op.new_type} {h(op.offset)} {h(op.size)} {op.new_oid}"
    if isinstance(op, Derive):
        return f"derive {op.subject} {op.tstruct} {h(op.granularity)} {op.asid}"
    if isinstance(op, Map):
        return (
            f"map {op.subject} {op.aspace} {h(op.dst.base)} {h(op.dst.size)} "
            f"{op.obj} {h(op.obj_offset)} {op.mid}"
        )
    if isinstance(op, Unmap):
        return f"unmap {op.subject} {op.mid}"
    if isinstance(op, Copy):
        return f"copy {op.s_from} {op.s_to} {op.obj} {op.right}"
    if isinstance(op, Revoke):
        return f"revoke {op.subject} {op.obj}"
    raise TypeError(op)


def apply_op(st: mon.MonitorState, op: Op, unsafe_skip_guards: bool = False) -> mon.MonitorState:
    kw = {"unsafe_skip_guards": unsafe_skip_guards}
    if isinstance(op, InitSubject):
        return mon.add_subject(st, op.subject)
    if isinstance(op, InitRoot):
        return mon.add_root(st, op.oid, op.base, op.size, op.otype, **kw)
    if isinstance(op, InitAcm):
        return mon.grant_initial(st, op.subject, op.obj, op.rights, **kw)
    if isinstance(op, Retype):
        return mon.retype(st, op.subject, op.parent, op.new_type, op.offset, op.size, op.new_oid, **kw)
    if isinstance(op, Derive):
        return mon.derive_address_space(st, op.subject, op.tstruct, op.granularity, op.asid, **kw)
    if isinstance(op, Map):
        return mon.map_object(st, op.subject, op.aspace, op.dst, op.obj, op.obj_offset, op.mid, **kw)
    if isinstance(op, Unmap):
        return mon.unmap(st, op.subject, op.mid, **kw)
    if isinstance(op, Copy):
        return mon.copy_right(st, op.s_from, op.s_to, op.obj, op.right, **kw)
    if isinstance(op, Revoke):
        return mon.revoke(st, op.subject, op.obj, **kw)
    raise TypeError(op)


@dataclass(frozen=True)
class Valid:
    state: mon.MonitorState

    def __str__(self):
        return "VALID"


@dataclass(frozen=True)
class Rejected:
    index: int
    lineno: int
    error: AddrmonError
    state: mon.MonitorState

    @property
    def code(self) -> str:
        return self.error.code

    def __str__(self):
        return f"REJECTED {self.lineno} {self.code}"


Verdict = Union[Valid, Rejected]


def run_trace(
    st0: mon.MonitorState,
    trace: Sequence[Line] | Iterable[Op],
    unsafe_skip_guards: bool = False,
) -> Verdict:
    """Fold ``trace`` through the monitor, stopping at the first rejection.

    ``Rejected.state`` is the state just before the failing operation.
    """
    st = st0
    for i, item in enumerate(trace):
        lineno, op = item if isinstance(item, Line) else (i + 1, item)
        try:
            st = apply_op(st, op, unsafe_skip_guards)
        except AddrmonError as e:
            return Rejected(i, lineno, e, st)
    return Valid(st)


def check_text(
    net: DecodingNet,
    conf_spaces: dict[str, ConfSpace] | None,
    text: str,
    unsafe_skip_guards: bool = False,
    first_line: int = 1,
) -> Verdict:
    """Parse and run a trace file (init block included) against a platform."""
    lines = parse_trace(text, first_line)
    return run_trace(mon.empty_state(net, conf_spaces), lines, unsafe_skip_guards)
