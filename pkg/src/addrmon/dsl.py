"""Platform description language.

A description lists the address-decoding nodes of a platform::

    # two cores sharing one DRAM
    node dram  { accept [0x0..0x10000) }
    node core0 { map [0x0..0x10000) -> dram @ 0x0 }
    node core1 { map [0x0..0x10000) -> dram @ 0x0 }

    configurable iommu { granularity 0x1000 ; targets sysbus }

Items are separated by newlines or ``;`` and ``#`` starts a comment.
Reusable parts go into parameterised modules that are expanded in place
by ``instance`` statements; the nodes of an instance are renamed to
``<instance>.<node>``::

    module phi(host) {
        node gddr { accept [0x0..0x200000) }
        configurable iommu { granularity 0x1000 ; targets host }
    }
    instance phi0 = phi(sysbus)

Arguments are numbers (integer expressions with ``+ - * /``) or node
references.  Names may be used before their declaration inside a module.
Top-level items form the root module; a file without top-level items uses
its last module as the root.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Union

from .decoding_net import (
    AddressRange,
    ConfSpace,
    DecodingNet,
    Node,
    TranslateSegment,
    build_net,
)
from .errors import (
    BadParams,
    CompileError,
    DslSyntaxError,
    DuplicateDefinition,
    NetError,
    UnboundName,
)

KEYWORDS = frozenset(
    "module node configurable instance accept map overlay granularity targets".split()
)

# -- lexer -------------------------------------------------------------------


class Token(NamedTuple):
    kind: str  # NUM, IDENT, PUNCT, SEP, EOF
    text: str
    line: int
    col: int


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>0[xX][0-9a-fA-F_]+|[0-9][0-9_]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<punct>->|\.\.|[{}\[\]()=,;@+\-*/])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - start + 1
        if m is None:
            raise DslSyntaxError(line, col, "a token", text[pos])
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            out.append(Token("SEP", "\n", line, col))
            line += 1
            start = m.end()
        elif kind == "num":
            out.append(Token("NUM", tok, line, col))
        elif kind == "ident":
            out.append(Token("IDENT", tok, line, col))
        elif kind == "punct":
            out.append(Token("SEP" if tok == ";" else "PUNCT", tok, line, col))
        pos = m.end()
    out.append(Token("EOF", "", line, pos - start + 1))
    return out


# -- AST ---------------------------------------------------------------------

Loc = tuple  # (line, col)


@dataclass(frozen=True)
class Num:
    value: int
    loc: Loc = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    loc: Loc = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    loc: Loc = field(default=(0, 0), compare=False)


Expr = Union[Num, Var, BinOp]


@dataclass(frozen=True)
class Accept:
    lo: Expr
    hi: Expr
    loc: Loc = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class MapItem:
    lo: Expr
    hi: Expr
    target: str
    base: Expr
    loc: Loc = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class OverlayItem:
    target: str
    loc: Loc = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class NodeDecl:
    id: str
    items: tuple = ()
    loc: Loc = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class ConfigurableDecl:
    id: str
    granularity: Expr | None = None
    targets: tuple[str, ...] | None = None
    loc: Loc = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Instance:
    id: str
    module: str
    args: tuple = ()
    loc: Loc = field(default=(0, 0), compare=False)


Decl = Union[NodeDecl, ConfigurableDecl, Instance]


@dataclass(frozen=True)
class Module:
    name: str
    params: tuple[str, ...] = ()
    body: tuple = ()
    implicit: bool = False
    loc: Loc = field(default=(0, 0), compare=False)

    def decls(self) -> dict[str, Decl]:
        return {d.id: d for d in self.body}


@dataclass(frozen=True)
class PlatformAst:
    modules: tuple[Module, ...] = ()

    @property
    def top(self) -> Module | None:
        return self.modules[-1] if self.modules else None

    def module(self, name: str) -> Module | None:
        for m in self.modules:
            if m.name == name and not m.implicit:
                return m
        return None


ROOT_MODULE = "<root>"

# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, expected: str):
        t = self.cur
        raise DslSyntaxError(t.line, t.col, expected, t.text or "end of input")

    def at(self, text: str) -> bool:
        return self.cur.kind in ("PUNCT", "IDENT") and self.cur.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(repr(text))
        return self.advance()

    def name(self, what: str) -> str:
        t = self.cur
        if t.kind != "IDENT" or t.text in KEYWORDS:
            self.error(what)
        return self.advance().text

    def skip_seps(self):
        while self.cur.kind == "SEP":
            self.advance()

    def end_item(self):
        if self.cur.kind == "SEP":
            self.skip_seps()
        elif not self.at("}") and self.cur.kind != "EOF":
            self.error("newline or ';'")

    # file := (module | decl)*
    def parse_file(self) -> PlatformAst:
        modules: list[Module] = []
        root: list[Decl] = []
        self.skip_seps()
        while self.cur.kind != "EOF":
            if self.at("module"):
                modules.append(self.parse_module())
            elif self.cur.text in ("node", "configurable", "instance"):
                root.append(self.parse_decl())
            else:
                self.error("'module', 'node', 'configurable' or 'instance'")
            self.end_item()
        if root:
            modules.append(Module(ROOT_MODULE, (), tuple(root), True, (1, 1)))
        return PlatformAst(tuple(modules))

    def parse_module(self) -> Module:
        loc = self.loc()
        self.expect("module")
        name = self.name("module name")
        params: list[str] = []
        if self.at("("):
            self.advance()
            if not self.at(")"):
                params.append(self.name("parameter name"))
                while self.at(","):
                    self.advance()
                    params.append(self.name("parameter name"))
            self.expect(")")
        body = self.block(self.parse_decl)
        return Module(name, tuple(params), tuple(body), False, loc)

    def block(self, item) -> list:
        self.expect("{")
        out = []
        self.skip_seps()
        while not self.at("}"):
            if self.cur.kind == "EOF":
                self.error("'}'")
            out.append(item())
            self.end_item()
        self.expect("}")
        return out

    def loc(self) -> Loc:
        return (self.cur.line, self.cur.col)

    def parse_decl(self) -> Decl:
        loc = self.loc()
        if self.at("node"):
            self.advance()
            nid = self.name("node name")
            return NodeDecl(nid, tuple(self.block(self.parse_node_item)), loc)
        if self.at("configurable"):
            self.advance()
            nid = self.name("node name")
            gran, targets = None, None
            for kind, value in self.block(self.parse_conf_item):
                if kind == "granularity":
                    gran = value
                else:
                    targets = (targets or ()) + value
            return ConfigurableDecl(nid, gran, targets, loc)
        if self.at("instance"):
            self.advance()
            iid = self.name("instance name")
            self.expect("=")
            mod = self.name("module name")
            self.expect("(")
            args: list[Expr] = []
            if not self.at(")"):
                args.append(self.expr())
                while self.at(","):
                    self.advance()
                    args.append(self.expr())
            self.expect(")")
            return Instance(iid, mod, tuple(args), loc)
        self.error("'node', 'configurable' or 'instance'")

    def ref(self) -> str:
        t = self.cur
        if t.kind != "IDENT" or t.text in KEYWORDS:
            self.error("node name")
        return self.advance().text

    def range_(self):
        self.expect("[")
        lo = self.expr()
        self.expect("..")
        hi = self.expr()
        self.expect(")")
        return lo, hi

    def parse_node_item(self):
        loc = self.loc()
        if self.at("accept"):
            self.advance()
            lo, hi = self.range_()
            return Accept(lo, hi, loc)
        if self.at("map"):
            self.advance()
            lo, hi = self.range_()
            self.expect("->")
            target = self.ref()
            self.expect("@")
            return MapItem(lo, hi, target, self.expr(), loc)
        if self.at("overlay"):
            self.advance()
            return OverlayItem(self.ref(), loc)
        self.error("'accept', 'map' or 'overlay'")

    def parse_conf_item(self):
        if self.at("granularity"):
            self.advance()
            return "granularity", self.expr()
        if self.at("targets"):
            self.advance()
            refs = [self.ref()]
            while self.at(","):
                self.advance()
                refs.append(self.ref())
            return "targets", tuple(refs)
        self.error("'granularity' or 'targets'")

    # expr := term (('+'|'-') term)* ; term := factor (('*'|'/') factor)*
    def expr(self) -> Expr:
        left = self.term()
        while self.at("+") or self.at("-"):
            loc = self.loc()
            op = self.advance().text
            left = BinOp(op, left, self.term(), loc)
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.at("*") or self.at("/"):
            loc = self.loc()
            op = self.advance().text
            left = BinOp(op, left, self.factor(), loc)
        return left

    def factor(self) -> Expr:
        t = self.cur
        if t.kind == "NUM":
            self.advance()
            return Num(int(t.text, 0), (t.line, t.col))
        if t.kind == "IDENT" and t.text not in KEYWORDS:
            self.advance()
            return Var(t.text, (t.line, t.col))
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.error("number, name or '('")


def parse(text: str) -> PlatformAst:
    """Parse and scope-check a description."""
    ast = _Parser(text).parse_file()
    check_scopes(ast)
    return ast


# -- scope checking ----------------------------------------------------------


def _vars(e: Expr) -> Iterator[Var]:
    if isinstance(e, Var):
        yield e
    elif isinstance(e, BinOp):
        yield from _vars(e.left)
        yield from _vars(e.right)


def _exprs(d: Decl) -> Iterator[Expr]:
    if isinstance(d, NodeDecl):
        for it in d.items:
            if isinstance(it, Accept):
                yield it.lo
                yield it.hi
            elif isinstance(it, MapItem):
                yield it.lo
                yield it.hi
                yield it.base
    elif isinstance(d, ConfigurableDecl) and d.granularity is not None:
        yield d.granularity


def _refs(d: Decl) -> Iterator[tuple[str, Loc]]:
    if isinstance(d, NodeDecl):
        for it in d.items:
            if isinstance(it, (MapItem, OverlayItem)):
                yield it.target, it.loc
    elif isinstance(d, ConfigurableDecl):
        for t in d.targets or ():
            yield t, d.loc


def _names_node(ast: PlatformAst, mod: Module, name: str) -> bool:
    """Whether ``name`` denotes a node from inside ``mod``."""
    if name in mod.params:
        return True
    decls = mod.decls()
    d = decls.get(name)
    if isinstance(d, (NodeDecl, ConfigurableDecl)):
        return True
    head, _, rest = name.partition(".")
    inst = decls.get(head)
    if rest and isinstance(inst, Instance):
        sub = ast.module(inst.module)
        return sub is not None and _names_node(ast, sub, rest)
    return False


def check_scopes(ast: PlatformAst):
    seen_modules: dict[str, Module] = {}
    for m in ast.modules:
        if m.implicit:
            continue
        if m.name in seen_modules:
            raise DuplicateDefinition(f"module {m.name!r} defined twice", *m.loc)
        seen_modules[m.name] = m
    for m in ast.modules:
        bound: dict[str, Loc] = {}
        for p in m.params:
            if p in bound:
                raise DuplicateDefinition(f"parameter {p!r} repeated", *m.loc)
            bound[p] = m.loc
        for d in m.body:
            if d.id in bound:
                raise DuplicateDefinition(f"{d.id!r} already defined in {m.name}", *d.loc)
            bound[d.id] = d.loc
        for d in m.body:
            for e in _exprs(d):
                for v in _vars(e):
                    if v.name not in m.params:
                        raise UnboundName(f"unbound name {v.name!r}", *v.loc)
            for ref, loc in _refs(d):
                if not _names_node(ast, m, ref):
                    raise UnboundName(f"undeclared node {ref!r}", *loc)
            if isinstance(d, Instance):
                sub = ast.module(d.module)
                if sub is None:
                    raise UnboundName(f"unknown module {d.module!r}", *d.loc)
                if len(sub.params) != len(d.args):
                    raise BadParams(
                        f"{d.module} takes {len(sub.params)} arguments, got {len(d.args)}", *d.loc
                    )
                for a in d.args:
                    for v in _vars(a):
                        if isinstance(a, Var) and _names_node(ast, m, v.name):
                            continue
                        if v.name not in m.params:
                            raise UnboundName(f"unbound name {v.name!r}", *v.loc)


# -- compiler ----------------------------------------------------------------


class NodeRef(NamedTuple):
    node: str


class _Scope(NamedTuple):
    module: Module
    prefix: str
    env: dict


class _Compiler:
    def __init__(self, ast: PlatformAst):
        self.ast = ast
        self.nodes: list[Node] = []
        self.conf: dict[str, ConfSpace] = {}
        self.locs: dict[str, Loc] = {}
        self.stack: list[str] = []

    def eval(self, e: Expr, sc: _Scope) -> int:
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Var):
            v = sc.env.get(e.name)
            if not isinstance(v, int):
                raise CompileError(f"{e.name!r} is not a number", *e.loc)
            return v
        a, b = self.eval(e.left, sc), self.eval(e.right, sc)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0:
            raise CompileError("division by zero", *e.loc)
        return a // b

    def ref(self, name: str, sc: _Scope, loc: Loc) -> str:
        if name in sc.env:
            v = sc.env[name]
            if not isinstance(v, NodeRef):
                raise CompileError(f"{name!r} is a number, not a node", *loc)
            return v.node
        decls = sc.module.decls()
        if isinstance(decls.get(name), (NodeDecl, ConfigurableDecl)):
            return sc.prefix + name
        head, _, rest = name.partition(".")
        inst = decls.get(head)
        if rest and isinstance(inst, Instance):
            return self.ref(rest, self.instance_scope(inst, sc), loc)
        raise UnboundName(f"undeclared node {name!r}", *loc)

    def instance_scope(self, inst: Instance, sc: _Scope) -> _Scope:
        sub = self.ast.module(inst.module)
        env = {}
        for p, a in zip(sub.params, inst.args):
            if isinstance(a, Var) and (a.name not in sc.env or isinstance(sc.env[a.name], NodeRef)):
                env[p] = NodeRef(self.ref(a.name, sc, a.loc))
            else:
                env[p] = self.eval(a, sc)
        return _Scope(sub, f"{sc.prefix}{inst.id}.", env)

    def range_(self, lo: Expr, hi: Expr, sc: _Scope, loc: Loc) -> AddressRange:
        a, b = self.eval(lo, sc), self.eval(hi, sc)
        try:
            return AddressRange.span(a, b)
        except ValueError as e:
            raise CompileError(f"bad range: {e}", *loc) from None

    def expand(self, sc: _Scope):
        name = sc.module.name
        if name in self.stack:
            raise CompileError(f"module {name!r} instantiates itself", *sc.module.loc)
        self.stack.append(name)
        for d in sc.module.body:
            nid = sc.prefix + d.id
            if isinstance(d, NodeDecl):
                accept, segs, overlay = [], [], None
                for it in d.items:
                    if isinstance(it, Accept):
                        accept.append(self.range_(it.lo, it.hi, sc, it.loc))
                    elif isinstance(it, MapItem):
                        src = self.range_(it.lo, it.hi, sc, it.loc)
                        dst = self.ref(it.target, sc, it.loc)
                        try:
                            segs.append(TranslateSegment(src, dst, self.eval(it.base, sc)))
                        except ValueError as e:
                            raise CompileError(str(e), *it.loc) from None
                    else:
                        if overlay is not None:
                            raise CompileError(f"{nid} has two overlays", *it.loc)
                        overlay = self.ref(it.target, sc, it.loc)
                self.nodes.append(Node(nid, tuple(accept), tuple(segs), overlay))
                self.locs[nid] = d.loc
            elif isinstance(d, ConfigurableDecl):
                gran = 0x1000 if d.granularity is None else self.eval(d.granularity, sc)
                if gran <= 0 or gran & (gran - 1):
                    raise CompileError(f"granularity {gran:#x} is not a power of two", *d.loc)
                targets = None
                if d.targets is not None:
                    targets = tuple(self.ref(t, sc, d.loc) for t in d.targets)
                self.nodes.append(Node(nid))
                self.conf[nid] = ConfSpace(gran, targets)
                self.locs[nid] = d.loc
            else:
                self.expand(self.instance_scope(d, sc))
        self.stack.pop()


def compile_ast(ast: PlatformAst) -> tuple[DecodingNet, dict[str, ConfSpace]]:
    """Expand the root module into a validated net and its configurable spaces."""
    top = ast.top
    if top is None:
        return build_net([]), {}
    if top.params:
        raise BadParams(f"root module {top.name} must not take parameters", *top.loc)
    c = _Compiler(ast)
    c.expand(_Scope(top, "", {}))
    try:
        net = build_net(c.nodes)
    except NetError as e:
        nid = getattr(e, "referrer", None) or getattr(e, "node_id", None)
        line, col = c.locs.get(nid, (0, 0))
        raise CompileError(str(e), line, col) from e
    return net, c.conf


def compile_text(text: str) -> tuple[DecodingNet, dict[str, ConfSpace]]:
    return compile_ast(parse(text))


# -- pretty printer ----------------------------------------------------------


def _pe(e: Expr) -> str:
    if isinstance(e, Num):
        return hex(e.value)
    if isinstance(e, Var):
        return e.name
    return f"({_pe(e.left)} {e.op} {_pe(e.right)})"


def _pdecl(d: Decl, ind: str) -> list[str]:
    if isinstance(d, NodeDecl):
        items = []
        for it in d.items:
            if isinstance(it, Accept):
                items.append(f"accept [{_pe(it.lo)}..{_pe(it.hi)})")
            elif isinstance(it, MapItem):
                items.append(f"map [{_pe(it.lo)}..{_pe(it.hi)}) -> {it.target} @ {_pe(it.base)}")
            else:
                items.append(f"overlay {it.target}")
        if not items:
            return [f"{ind}node {d.id} {{ }}"]
        return [f"{ind}node {d.id} {{"] + [f"{ind}    {i}" for i in items] + [f"{ind}}}"]
    if isinstance(d, ConfigurableDecl):
        items = []
        if d.granularity is not None:
            items.append(f"granularity {_pe(d.granularity)}")
        if d.targets is not None:
            items.append("targets " + ", ".join(d.targets))
        return [f"{ind}configurable {d.id} {{ {' ; '.join(items)} }}"]
    args = ", ".join(_pe(a) for a in d.args)
    return [f"{ind}instance {d.id} = {d.module}({args})"]


def pretty(ast: PlatformAst) -> str:
    lines: list[str] = []
    for m in ast.modules:
        if m.implicit:
            for d in m.body:
                lines.extend(_pdecl(d, ""))
            continue
        params = f"({', '.join(m.params)})" if m.params else ""
        lines.append(f"module {m.name}{params} {{")
        for d in m.body:
            lines.extend(_pdecl(d, "    "))
        lines.append("}")
    return "".join(line + "\n" for line in lines)


# -- built-in topologies -----------------------------------------------------

TOPOLOGIES = ("uniform", "swapped", "private", "private-swapped")


def _canon_kind(kind: str) -> str:
    k = kind.lower().replace("_", "-")
    if k == "privateswapped":
        k = "private-swapped"
    if k not in TOPOLOGIES:
        raise BadParams(f"unknown topology {kind!r}; choose one of {', '.join(TOPOLOGIES)}")
    return k


def builtin_source(kind: str, dram_size: int = 0x10000, private_size: int = 0x4000) -> str:
    """Description text for one of the dual-core evaluation topologies.

    ``uniform``: both cores see DRAM identically.  ``swapped``: core0 sees
    the two DRAM halves exchanged.  ``private``: each core additionally has
    a private memory right after DRAM that the other core cannot reach.
    ``private-swapped``: both of the above.
    """
    k = _canon_kind(kind)
    d, p = dram_size, private_size
    for what, v in (("dram_size", d), ("private_size", p)):
        if not isinstance(v, int) or v <= 0 or v % 0x1000:
            raise BadParams(f"{what} must be a positive multiple of 0x1000, got {v!r}")
    if "swapped" in k and d % 0x2000:
        raise BadParams("dram_size must split into two page-aligned halves")
    h = d // 2
    private = k.startswith("private")
    out = [f"# {k} dual-core topology", f"node dram {{ accept [0x0..{d:#x}) }}"]
    if private:
        out += [f"node priv{i} {{ accept [0x0..{p:#x}) }}" for i in (0, 1)]
    for i in (0, 1):
        if "swapped" in k and i == 0:
            items = [
                f"map [0x0..{h:#x}) -> dram @ {h:#x}",
                f"map [{h:#x}..{d:#x}) -> dram @ 0x0",
            ]
        else:
            items = [f"map [0x0..{d:#x}) -> dram @ 0x0"]
        if private:
            items.append(f"map [{d:#x}..{d + p:#x}) -> priv{i} @ 0x0")
        out.append(f"node core{i} {{")
        out += [f"    {it}" for it in items]
        out.append("}")
    return "".join(line + "\n" for line in out)


def builtin_topology(kind: str, dram_size: int = 0x10000, private_size: int = 0x4000) -> PlatformAst:
    return parse(builtin_source(kind, dram_size, private_size))
