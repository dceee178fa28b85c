"""Static decoding nets.

A decoding net is a directed graph of address spaces.  Each node accepts
some local addresses (RAM, device registers) and translates others into
names in other nodes.  Translation is restricted to offset-linear segments
plus an optional overlay that forwards every otherwise unmatched address
unchanged to another node, so every (node, address) has at most one
successor.

Ranges are half-open and addresses are 64-bit; arithmetic never wraps.
"""

from __future__ import annotations

import bisect
import enum
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import networkx as nx

from .errors import (
    AddressOverflow,
    DanglingReference,
    DuplicateNode,
    Loop,
    NetError,
    OverlappingRanges,
    Undecodable,
    UnknownNode,
)

ADDRESS_BITS = 64
ADDRESS_LIMIT = 1 << ADDRESS_BITS


@dataclass(frozen=True, order=True)
class Name:
    """A global name: an address qualified by the node it is local to."""

    node: str
    addr: int

    def __str__(self):
        return f"{self.node}:{self.addr:#x}"

    def offset(self, delta: int) -> Name:
        return Name(self.node, self.addr + delta)


@dataclass(frozen=True, order=True)
class AddressRange:
    base: int
    size: int

    def __post_init__(self):
        if self.base < 0 or self.size <= 0:
            raise ValueError(f"invalid range base={self.base:#x} size={self.size:#x}")
        if self.base + self.size > ADDRESS_LIMIT:
            raise AddressOverflow(f"range {self.base:#x}+{self.size:#x} exceeds 64 bits")

    @classmethod
    def span(cls, lo: int, hi: int) -> AddressRange:
        return cls(lo, hi - lo)

    @property
    def end(self) -> int:
        return self.base + self.size

    def __contains__(self, addr: int) -> bool:
        return self.base <= addr < self.base + self.size

    def overlaps(self, other: AddressRange) -> bool:
        return self.base < other.end and other.base < self.end

    def covers(self, other: AddressRange) -> bool:
        return self.base <= other.base and other.end <= self.end

    def __str__(self):
        return f"[{self.base:#x}..{self.end:#x})"


@dataclass(frozen=True)
class TranslateSegment:
    """Map ``src`` onto ``dst_node`` starting at ``dst_base``."""

    src: AddressRange
    dst_node: str
    dst_base: int

    def __post_init__(self):
        if self.dst_base < 0 or self.dst_base + self.src.size > ADDRESS_LIMIT:
            raise AddressOverflow(
                f"segment {self.src} -> {self.dst_node}@{self.dst_base:#x} exceeds 64 bits"
            )

    def translate(self, addr: int) -> Name:
        return Name(self.dst_node, self.dst_base + (addr - self.src.base))


def _seg_key(seg: TranslateSegment):
    return (seg.src.base, seg.src.size, seg.dst_node, seg.dst_base)


@dataclass(frozen=True)
class Node:
    id: str
    accept: tuple[AddressRange, ...] = ()
    segments: tuple[TranslateSegment, ...] = ()
    overlay: str | None = None

    def __post_init__(self):
        # normalised order so that structurally equal nodes compare equal
        object.__setattr__(self, "accept", tuple(sorted(self.accept)))
        object.__setattr__(self, "segments", tuple(sorted(self.segments, key=_seg_key)))

    def references(self) -> list[str]:
        refs = [s.dst_node for s in self.segments]
        if self.overlay is not None:
            refs.append(self.overlay)
        return refs


@dataclass(frozen=True)
class ConfSpace:
    """Configuration space of a configurable node.

    ``targets`` lists the nodes the space may translate into; ``None``
    means canonical names are mapped directly.
    """

    granularity: int = 0x1000
    targets: tuple[str, ...] | None = None


# decode-table entry kinds
_ACCEPT = 0
_SEGMENT = 1
_OVERLAY = 2
_NONE = 3


def _decode_table(node: Node):
    entries = [(r.base, r.end, _ACCEPT, None) for r in node.accept]
    entries += [(s.src.base, s.src.end, _SEGMENT, s) for s in node.segments]
    entries.sort(key=lambda e: (e[0], e[2]))
    if all(a[1] <= b[0] for a, b in zip(entries, entries[1:])):
        return entries
    # Ill-formed node: resolve overlaps by priority (accept first, then the
    # lowest segment) over elementary intervals.
    points = sorted({p for e in entries for p in e[:2]})
    table = []
    for lo, hi in zip(points, points[1:]):
        match = None
        for e in entries:
            if e[0] <= lo and hi <= e[1] and (match is None or e[2] < match[2]):
                match = e
        if match is None:
            continue
        if table and table[-1][1] == lo and table[-1][2] == match[2] and table[-1][3] is match[3]:
            table[-1] = (table[-1][0], hi, match[2], match[3])
        else:
            table.append((lo, hi, match[2], match[3]))
    return table


class DecodingNet:
    """An immutable set of nodes keyed by id.

    The constructor performs no validation; use :func:`build_net` for a
    checked net and :func:`well_formed` to report problems as data.
    """

    def __init__(self, nodes: Mapping[str, Node] | Iterable[Node] = ()):
        if isinstance(nodes, Mapping):
            items = nodes.values()
        else:
            items = nodes
        self._nodes = {n.id: n for n in sorted(items, key=lambda n: n.id)}
        self._tables: dict[str, tuple[list, list]] = {}

    @property
    def nodes(self) -> Mapping[str, Node]:
        return self._nodes

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def __getitem__(self, node_id) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def __iter__(self):
        return iter(self._nodes)

    def __len__(self):
        return len(self._nodes)

    def __eq__(self, other):
        if not isinstance(other, DecodingNet):
            return NotImplemented
        return self._nodes == other._nodes

    __hash__ = None

    def __repr__(self):
        return f"DecodingNet({list(self._nodes)})"

    def replace(self, *nodes: Node) -> DecodingNet:
        """Return a copy with the given nodes added or replaced."""
        merged = dict(self._nodes)
        for n in nodes:
            merged[n.id] = n
        return DecodingNet(merged)

    def table(self, node_id: str):
        t = self._tables.get(node_id)
        if t is None:
            entries = _decode_table(self[node_id])
            t = ([e[0] for e in entries], entries)
            self._tables[node_id] = t
        return t

    def split(self, node_id: str, lo: int, hi: int):
        """Cut [lo, hi) of ``node_id`` into maximal uniformly-decoded pieces.

        Yields ``(lo, hi, kind, payload)`` with kind one of accept, segment,
        overlay or none.
        """
        bases, entries = self.table(node_id)
        overlay = self._nodes[node_id].overlay
        gap_kind = _NONE if overlay is None else _OVERLAY
        i = max(bisect.bisect_right(bases, lo) - 1, 0)
        cur = lo
        while cur < hi:
            if i < len(entries) and entries[i][1] <= cur:
                i += 1
                continue
            if i < len(entries) and entries[i][0] <= cur:
                e = entries[i]
                end = min(e[1], hi)
                yield cur, end, e[2], e[3]
                cur = end
                i += 1
            else:
                end = min(entries[i][0], hi) if i < len(entries) else hi
                yield cur, end, gap_kind, overlay
                cur = end


def build_net(nodes: Iterable[Node]) -> DecodingNet:
    """Build a net, raising on duplicate ids, dangling references or overlaps."""
    seen: dict[str, Node] = {}
    for n in nodes:
        if n.id in seen:
            raise DuplicateNode(n.id)
        seen[n.id] = n
    for n in seen.values():
        for ref in n.references():
            if ref not in seen:
                raise DanglingReference(ref, n.id)
        clash = _first_overlap(n)
        if clash:
            raise OverlappingRanges(n.id, clash)
    return DecodingNet(seen)


def _node_ranges(node: Node):
    rs = [(r, "accept") for r in node.accept]
    rs += [(s.src, "translate") for s in node.segments]
    rs.sort(key=lambda x: (x[0].base, x[0].size))
    return rs


def _overlaps(node: Node) -> list[str]:
    rs = _node_ranges(node)
    found = []
    for i, (r, kind) in enumerate(rs):
        for r2, kind2 in rs[i + 1:]:
            if r2.base >= r.end:
                break
            found.append(f"{kind} {r} overlaps {kind2} {r2}")
    return found


def _first_overlap(node: Node) -> str:
    found = _overlaps(node)
    return found[0] if found else ""


# -- single steps and resolution ---------------------------------------------

class StepKind(enum.Enum):
    ACCEPTED = "accepted"
    FORWARDED = "forwarded"
    UNDECODABLE = "undecodable"


class Step(NamedTuple):
    kind: StepKind
    name: Name | None


def translate_step(net: DecodingNet, name: Name) -> Step:
    """Decode ``name`` once at its own node."""
    bases, entries = net.table(name.node)
    i = bisect.bisect_right(bases, name.addr) - 1
    if i >= 0:
        lo, hi, kind, payload = entries[i]
        if name.addr < hi:
            if kind == _ACCEPT:
                return Step(StepKind.ACCEPTED, name)
            return Step(StepKind.FORWARDED, payload.translate(name.addr))
    overlay = net.nodes[name.node].overlay
    if overlay is not None:
        return Step(StepKind.FORWARDED, Name(overlay, name.addr))
    return Step(StepKind.UNDECODABLE, None)


def resolve(net: DecodingNet, name: Name) -> Name:
    """Follow translations from ``name`` to the canonical (accepting) name.

    Each node is visited at most once; revisiting one raises :class:`Loop`.
    """
    if name.node not in net:
        raise UnknownNode(name.node)
    path = [name]
    visited = {name.node}
    cur = name
    while True:
        if cur.node not in net:
            raise Undecodable(name, path, f"dangling node {cur.node!r}")
        kind, nxt = translate_step(net, cur)
        if kind is StepKind.ACCEPTED:
            return cur
        if kind is StepKind.UNDECODABLE:
            raise Undecodable(name, path)
        path.append(nxt)
        if nxt.node in visited:
            raise Loop(name, path)
        visited.add(nxt.node)
        cur = nxt


class Outcome(enum.Enum):
    ACCEPTED = "accepted"
    STOPPED = "stopped"
    UNDECODABLE = "undecodable"
    LOOP = "loop"


class Fragment(NamedTuple):
    """A piece of a decomposed range that decodes uniformly.

    ``base``/``size`` are in the starting node; ``end`` is where ``base``
    ends up.  ``hops`` records each segment used as ``(node, src_base)``.
    """

    base: int
    size: int
    outcome: Outcome
    end: Name
    path: tuple[str, ...]
    hops: tuple[tuple[str, int], ...]


def _walk(net, node, lo, hi, origin, path, hops, stop, out):
    nodes = net.nodes
    for a, b, kind, payload in net.split(node, lo, hi):
        o = origin + (a - lo)
        if kind == _ACCEPT:
            out.append(Fragment(o, b - a, Outcome.ACCEPTED, Name(node, a), path, hops))
            continue
        if kind == _NONE:
            out.append(Fragment(o, b - a, Outcome.UNDECODABLE, Name(node, a), path, hops))
            continue
        if kind == _SEGMENT:
            nxt = payload.dst_node
            na = payload.dst_base + (a - payload.src.base)
            nhops = hops + ((node, payload.src.base),)
        else:
            nxt, na, nhops = payload, a, hops
        npath = path + (nxt,)
        if nxt in path:
            out.append(Fragment(o, b - a, Outcome.LOOP, Name(nxt, na), npath, nhops))
        elif nxt not in nodes:
            out.append(Fragment(o, b - a, Outcome.UNDECODABLE, Name(nxt, na), npath, nhops))
        elif stop and nxt in stop:
            out.append(Fragment(o, b - a, Outcome.STOPPED, Name(nxt, na), npath, nhops))
        else:
            _walk(net, nxt, na, na + (b - a), o, npath, nhops, stop, out)


def decompose(net: DecodingNet, name: Name, size: int, stop=None) -> list[Fragment]:
    """Split ``[name.addr, name.addr + size)`` by how each part decodes.

    Fragments are returned in input-address order and together cover the
    whole input.  When ``stop`` is given, walking halts on arrival at any
    node in it (outcome ``STOPPED``), without decoding there.
    """
    if size <= 0:
        raise ValueError("size must be positive")
    if name.addr < 0 or name.addr + size > ADDRESS_LIMIT:
        raise AddressOverflow(f"{name}+{size:#x} exceeds 64 bits")
    if name.node not in net:
        raise UnknownNode(name.node)
    out: list[Fragment] = []
    _walk(net, name.node, name.addr, name.addr + size, name.addr, (name.node,), (), stop, out)
    return out


@dataclass(frozen=True, order=True)
class CanonicalRange:
    node: str
    base: int
    size: int

    @property
    def name(self) -> Name:
        return Name(self.node, self.base)

    @property
    def range(self) -> AddressRange:
        return AddressRange(self.base, self.size)

    def __str__(self):
        return f"{self.node}:[{self.base:#x}..{self.base + self.size:#x})"


def resolve_range(net: DecodingNet, name: Name, size: int) -> list[CanonicalRange]:
    """Canonical decomposition of a range into maximal contiguous pieces.

    Raises the same error :func:`resolve` would for the lowest failing
    address of the range.
    """
    frags = decompose(net, name, size)
    out: list[CanonicalRange] = []
    for f in frags:
        if f.outcome is not Outcome.ACCEPTED:
            resolve(net, Name(name.node, f.base))
            raise AssertionError(f"{f} should not resolve")  # pragma: no cover
        if out and out[-1].node == f.end.node and out[-1].base + out[-1].size == f.end.addr:
            last = out[-1]
            out[-1] = CanonicalRange(last.node, last.base, last.size + f.size)
        else:
            out.append(CanonicalRange(f.end.node, f.end.addr, f.size))
    return out


# -- well-formedness ---------------------------------------------------------

@dataclass(frozen=True, order=True)
class Violation:
    kind: str
    node: str | None
    detail: str

    def __str__(self):
        where = f" {self.node}" if self.node else ""
        return f"{self.kind}{where}: {self.detail}"


def node_graph(net: DecodingNet) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(net)
    for n in net.nodes.values():
        for ref in n.references():
            if ref in net:
                g.add_edge(n.id, ref)
    return g


def find_loops(net: DecodingNet) -> list[tuple[str, ...]]:
    """Address-level translation cycles, each as a rotated node tuple."""
    g = node_graph(net)
    candidates = set()
    for comp in nx.strongly_connected_components(g):
        if len(comp) > 1:
            candidates |= comp
        else:
            (v,) = comp
            if g.has_edge(v, v):
                candidates.add(v)
    loops = set()
    for start in sorted(candidates):
        for f in decompose(net, Name(start, 0), ADDRESS_LIMIT):
            if f.outcome is Outcome.LOOP:
                cyc = f.path[f.path.index(f.end.node):-1]
                k = cyc.index(min(cyc))
                loops.add(cyc[k:] + cyc[:k])
    return sorted(loops)


def loop_through(net: DecodingNet, nid: str) -> tuple[str, ...] | None:
    """A looping walk that involves ``nid``, if any.

    A walk revisiting some node must pass through a cycle of the node graph;
    if the previous net was loop free that cycle contains ``nid``, so it is
    enough to walk every node of ``nid``'s strongly connected component.
    """
    g = node_graph(net)
    reach = nx.descendants(g, nid) & nx.ancestors(g, nid)
    if not reach and not g.has_edge(nid, nid):
        return None
    for v in sorted(reach | {nid}):
        for f in decompose(net, Name(v, 0), ADDRESS_LIMIT):
            if f.outcome is Outcome.LOOP:
                return f.path
    return None


def well_formed(net: DecodingNet) -> list[Violation]:
    """Report every violated net invariant; empty means well-formed."""
    report = []
    for n in net.nodes.values():
        for ref in n.references():
            if ref not in net:
                report.append(Violation("DanglingReference", n.id, f"unknown node {ref!r}"))
        for clash in _overlaps(n):
            report.append(Violation("OverlappingRanges", n.id, clash))
    for cyc in find_loops(net):
        report.append(Violation("Loop", cyc[0], " -> ".join(cyc + cyc[:1])))
    return sorted(report)


# -- facts interchange format ------------------------------------------------

def format_facts(net: DecodingNet, conf_spaces: Mapping[str, ConfSpace] | None = None) -> str:
    lines = []
    for n in net.nodes.values():
        lines.append(f"node({n.id}).")
        for r in n.accept:
            lines.append(f"accept({n.id}, {r.base:#x}, {r.size:#x}).")
        for s in n.segments:
            lines.append(
                f"translate({n.id}, {s.src.base:#x}, {s.src.size:#x}, {s.dst_node}, {s.dst_base:#x})."
            )
        if n.overlay is not None:
            lines.append(f"overlay({n.id}, {n.overlay}).")
    for sid, cs in sorted((conf_spaces or {}).items()):
        targets = "" if cs.targets is None else "[" + ", ".join(cs.targets) + "]"
        lines.append(f"configurable({sid}, {cs.granularity:#x}{', ' + targets if targets else ''}).")
    return "".join(line + "\n" for line in lines)


_FACT = re.compile(r"^\s*([a-z_]+)\((.*)\)\.\s*$")


def _fact_args(text: str) -> list[str]:
    args, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            args.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    args.append("".join(cur).strip())
    return args


def parse_facts(text: str) -> tuple[DecodingNet, dict[str, ConfSpace]]:
    """Inverse of :func:`format_facts`.  ``%`` starts a comment line."""
    accepts: dict[str, list] = {}
    segments: dict[str, list] = {}
    overlays: dict[str, str] = {}
    order: list[str] = []
    conf: dict[str, ConfSpace] = {}

    def touch(n):
        if n not in accepts:
            accepts[n] = []
            segments[n] = []
            order.append(n)

    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("%"):
            continue
        m = _FACT.match(line)
        if not m:
            raise NetError(f"facts line {lineno}: cannot parse {line!r}")
        kind, args = m.group(1), _fact_args(m.group(2))
        try:
            if kind == "node" and len(args) == 1:
                touch(args[0])
            elif kind == "accept" and len(args) == 3:
                touch(args[0])
                accepts[args[0]].append(AddressRange(int(args[1], 0), int(args[2], 0)))
            elif kind == "translate" and len(args) == 5:
                touch(args[0])
                src = AddressRange(int(args[1], 0), int(args[2], 0))
                segments[args[0]].append(TranslateSegment(src, args[3], int(args[4], 0)))
            elif kind == "overlay" and len(args) == 2:
                touch(args[0])
                overlays[args[0]] = args[1]
            elif kind == "configurable" and len(args) in (2, 3):
                targets = None
                if len(args) == 3:
                    inner = args[2].strip()
                    if not (inner.startswith("[") and inner.endswith("]")):
                        raise ValueError("targets must be a list")
                    targets = tuple(t.strip() for t in inner[1:-1].split(",") if t.strip())
                conf[args[0]] = ConfSpace(int(args[1], 0), targets)
            else:
                raise ValueError(f"unknown fact {kind}/{len(args)}")
        except ValueError as e:
            raise NetError(f"facts line {lineno}: {e}") from None
    nodes = [Node(n, tuple(accepts[n]), tuple(segments[n]), overlays.get(n)) for n in order]
    return build_net(nodes), conf
