"""Policy queries over a flattened view of a decoding net.

The flattened graph keeps only the vertices that matter for planning:
initiators (nodes nothing translates into), configurable address spaces
and memory nodes (nodes that accept addresses).  An edge ``u -> v`` with
weight 0 means some address of ``u`` already decodes to ``v`` through
fixed translation.  An edge with weight 1 leaves a configurable space and
means ``v`` becomes reachable once that space is programmed to point into
one of its permitted target nodes (``via``).

Plans minimise the number of spaces that need configuring, breaking ties
by the lexicographically smallest vertex sequence.  A path only counts if
its segments can be laid out concretely: every hop needs a free aligned
slot and the route may not revisit a node, which the node-level graph
alone cannot see.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import networkx as nx

from . import monitor as mon
from .decoding_net import (
    ADDRESS_LIMIT,
    AddressRange,
    CanonicalRange,
    ConfSpace,
    DecodingNet,
    Name,
    Node,
    Outcome,
    TranslateSegment,
    decompose,
    loop_through,
    node_graph,
    resolve_range,
)
from .errors import (
    DestinationMismatch,
    InvalidArgument,
    NoAllocatableMemory,
    Unreachable,
    UnknownNode,
)

INITIATOR = "initiator"
CONFIGURABLE = "configurable"
MEMORY = "memory"


class Edge(NamedTuple):
    weight: int
    via: str | None


@dataclass(frozen=True)
class FlatGraph:
    kinds: Mapping[str, str]
    edges: Mapping[str, Mapping[str, Edge]]
    free: Mapping[str, tuple[AddressRange, ...]]
    conf_spaces: Mapping[str, ConfSpace]
    net: DecodingNet = field(compare=False, repr=False)
    touched: Mapping[str, frozenset] = field(compare=False, repr=False, default_factory=dict)

    @property
    def vertices(self) -> list[str]:
        return sorted(self.kinds)

    def __contains__(self, v):
        return v in self.kinds

    def successors(self, v: str) -> list[tuple[str, Edge]]:
        return sorted(self.edges.get(v, {}).items())

    def edge_list(self) -> list[tuple[str, str, int, str | None]]:
        return [(u, v, e.weight, e.via) for u in self.vertices for v, e in self.successors(u)]


def _classify(net: DecodingNet, conf_spaces: Mapping[str, ConfSpace]) -> dict[str, str]:
    referenced = set()
    for n in net.nodes.values():
        referenced.update(n.references())
    kinds = {}
    for nid, n in net.nodes.items():
        if nid in conf_spaces:
            kinds[nid] = CONFIGURABLE
        elif n.accept:
            kinds[nid] = MEMORY
        elif nid not in referenced:
            kinds[nid] = INITIATOR
    return kinds


def _free_ranges(net: DecodingNet, nid: str, used: Iterable[AddressRange]) -> tuple[AddressRange, ...]:
    taken = sorted(used)
    out = []
    for r in net[nid].accept:
        lo = r.base
        for u in taken:
            if u.end <= lo or u.base >= r.end:
                continue
            if u.base > lo:
                out.append(AddressRange.span(lo, u.base))
            lo = max(lo, u.end)
        if lo < r.end:
            out.append(AddressRange.span(lo, r.end))
    return tuple(out)


def _vertex_edges(net, u, kinds, conf_spaces):
    """Outgoing edges of ``u`` and the set of nodes the derivation looked at."""
    edges: dict[str, Edge] = {}
    touched = {u}
    confs = {v for v, k in kinds.items() if k == CONFIGURABLE}

    def rank(v, e):
        # cheaper first, then a direct target over one reached through another node
        return (e.weight, e.via is not None and e.via != v, e.via or "")

    def offer(v, e):
        if v == u:
            return
        old = edges.get(v)
        if old is None or rank(v, e) < rank(v, old):
            edges[v] = e

    def walk(start, edge):
        for f in decompose(net, Name(start, 0), ADDRESS_LIMIT, stop=confs - {start}):
            touched.update(f.path)
            if f.outcome is Outcome.ACCEPTED or f.outcome is Outcome.STOPPED:
                if f.end.node in kinds:
                    offer(f.end.node, edge)

    walk(u, Edge(0, None))
    if u in conf_spaces:
        targets = conf_spaces[u].targets
        if targets is None:
            targets = sorted(v for v, k in kinds.items() if k != INITIATOR)
        for t in targets:
            if t not in net or t == u:
                continue
            if t in kinds:
                offer(t, Edge(1, t))
            else:
                walk(t, Edge(1, t))
    return edges, frozenset(touched)


def flatten(
    net: DecodingNet,
    conf_spaces: Mapping[str, ConfSpace] | None = None,
    used: Mapping[str, Iterable[AddressRange]] | None = None,
) -> FlatGraph:
    """Build the planning graph.

    ``used`` lists occupied ranges per memory node; allocation queries only
    hand out the remaining space.
    """
    conf_spaces = {k: v for k, v in (conf_spaces or {}).items() if k in net}
    used = used or {}
    kinds = _classify(net, conf_spaces)
    edges, touched = {}, {}
    for u in sorted(kinds):
        edges[u], touched[u] = _vertex_edges(net, u, kinds, conf_spaces)
    free = {v: _free_ranges(net, v, used.get(v, ())) for v, k in kinds.items() if k == MEMORY}
    return FlatGraph(kinds, edges, free, conf_spaces, net, touched)


def state_spaces(st: mon.MonitorState) -> dict[str, ConfSpace]:
    """Configurable spaces of a monitor state: platform ones plus derived ones."""
    out = dict(st.conf_spaces)
    for asid, sp in st.aspaces.items():
        if not sp.static and asid not in out:
            out[asid] = ConfSpace(sp.granularity, sp.targets)
    return out


def state_used(st: mon.MonitorState) -> dict[str, list[AddressRange]]:
    used: dict[str, list[AddressRange]] = {}
    for obj in st.objects.values():
        used.setdefault(obj.base.node, []).append(obj.range)
    return used


def flatten_state(st: mon.MonitorState) -> FlatGraph:
    return flatten(st.net, state_spaces(st), state_used(st))


def invalidate_cache(
    g: FlatGraph,
    changed: str | Iterable[str],
    net: DecodingNet,
    conf_spaces: Mapping[str, ConfSpace] | None = None,
    used: Mapping[str, Iterable[AddressRange]] | None = None,
) -> FlatGraph:
    """Refresh ``g`` after the nodes in ``changed`` were reconfigured.

    Only vertices whose derivation looked at a changed node are recomputed;
    if the vertex set itself changed the graph is rebuilt.
    """
    changed = {changed} if isinstance(changed, str) else set(changed)
    conf_spaces = {k: v for k, v in (conf_spaces or {}).items() if k in net}
    used = used or {}
    kinds = _classify(net, conf_spaces)
    if kinds != dict(g.kinds) or conf_spaces != dict(g.conf_spaces):
        return flatten(net, conf_spaces, used)
    edges, touched = dict(g.edges), dict(g.touched)
    for u in sorted(kinds):
        if u in changed or touched.get(u, frozenset()) & changed:
            edges[u], touched[u] = _vertex_edges(net, u, kinds, conf_spaces)
    free = {v: _free_ranges(net, v, used.get(v, ())) for v, k in kinds.items() if k == MEMORY}
    return FlatGraph(kinds, edges, free, conf_spaces, net, touched)


# -- queries -----------------------------------------------------------------


class PlanStep(NamedTuple):
    """Program ``slot`` of space ``asid`` to translate to ``target``.

    ``target`` is a name in the whitelisted node ``via``.
    """

    asid: str
    via: str
    slot: AddressRange
    target: Name


@dataclass(frozen=True)
class ConfigPlan:
    """Spaces to configure, in path order, with the segments to install.

    Once installed, ``entry`` (a name in ``src``) decodes onto ``target``.
    """

    src: str
    dst: str
    steps: tuple[PlanStep, ...]
    path: tuple[str, ...]
    target: CanonicalRange
    entry: Name

    @property
    def spaces(self) -> list[str]:
        return [s.asid for s in self.steps]

    def __len__(self):
        return len(self.steps)

    def facts(self) -> str:
        return f"plan({self.src},{self.dst},[{','.join(self.spaces)}])."


# upper bound on partial paths explored when the cheapest path cannot be realised
SEARCH_LIMIT = 200_000


def _check_vertex(g: FlatGraph, v: str):
    if v not in g:
        raise UnknownNode(v)


def shortest_paths(g: FlatGraph, src: str) -> dict[str, tuple[int, tuple[str, ...]]]:
    """Cheapest (cost, path) to every vertex reachable from ``src``."""
    _check_vertex(g, src)
    best: dict[str, tuple[int, tuple[str, ...]]] = {}
    heap = [(0, (src,))]
    while heap:
        cost, path = heapq.heappop(heap)
        v = path[-1]
        if v in best:
            continue
        best[v] = (cost, path)
        for w, e in g.edges.get(v, {}).items():
            if w not in best:
                heapq.heappush(heap, (cost + e.weight, path + (w,)))
    return best


def path_cost(g: FlatGraph, path: Sequence[str]) -> int:
    return sum(g.edges[u][v].weight for u, v in zip(path, path[1:]))


def _round_up(n: int, g: int) -> int:
    return -(-n // g) * g


def _windows(net: DecodingNet, entry: str, into: str) -> list[tuple[int, int]]:
    """Address intervals of ``into`` that single fragments of ``entry`` decode to."""
    if entry == into:
        return [(0, ADDRESS_LIMIT)]
    out = []
    for f in decompose(net, Name(entry, 0), ADDRESS_LIMIT, stop={into}):
        if f.outcome is Outcome.STOPPED and f.end.node == into:
            out.append((f.end.addr, f.end.addr + f.size))
    return sorted(out)


def _route(net: DecodingNet, start: str, want: Name, size: int) -> Name | None:
    """Lowest name in ``start`` whose next ``size`` bytes reach ``want`` as one piece."""
    if start == want.node:
        return want
    for f in decompose(net, Name(start, 0), ADDRESS_LIMIT, stop={want.node}):
        if (
            f.outcome is Outcome.STOPPED
            and f.end.node == want.node
            and f.end.addr <= want.addr
            and want.addr + size <= f.end.addr + f.size
        ):
            return Name(start, f.base + want.addr - f.end.addr)
    return None


def _subtract(windows, holes):
    """Parts of ``windows`` not covered by any of ``holes`` (all half-open pairs)."""
    out = []
    for lo, hi in windows:
        for hlo, hhi in sorted(holes):
            if hhi <= lo or hlo >= hi:
                continue
            if hlo > lo:
                out.append((lo, hlo))
            lo = max(lo, hhi)
            if lo >= hi:
                break
        if lo < hi:
            out.append((lo, hi))
    return out


def _slots(windows, size: int, gran: int, limit: int):
    n = 0
    for lo, hi in windows:
        a = _round_up(lo, gran)
        while a + size <= hi and n < limit:
            yield AddressRange(a, size)
            n += 1
            a += gran


def _with_segment(net: DecodingNet, asid: str, slot: AddressRange, target: Name) -> DecodingNet:
    n = net[asid]
    seg = TranslateSegment(slot, target.node, target.addr)
    return net.replace(Node(asid, n.accept, n.segments + (seg,), n.overlay))


# candidate slots tried per space before giving up on a path
_SLOT_TRIES = 16


def _place(net, asid, gran, upstream, target: Name, size: int):
    """Choose a slot of ``asid`` that ``upstream`` decodes into and that can
    translate to ``target`` without creating a translation loop."""
    windows = _windows(net, upstream, asid)
    taken = [(s.src.base, s.src.end) for s in net[asid].segments]
    free = _subtract(windows, taken)
    # addresses of the space that the target side already leads back into
    # would close a loop; try clear slots first
    avoid = []
    for n in sorted(nx.descendants(node_graph(net), target.node) | {target.node}):
        if n != asid:
            avoid += _windows(net, n, asid)
    seen = set()
    for pool in (_subtract(free, avoid), free):
        for slot in _slots(pool, size, gran, _SLOT_TRIES):
            if slot in seen:
                continue
            seen.add(slot)
            trial = _with_segment(net, asid, slot, target)
            if loop_through(trial, asid) is None:
                return slot, trial
    return None


def _realize(net, conf_spaces, src, dst, hops, target: Name, size: int):
    """Backwards construction of the segments for ``hops``.

    Returns ``(steps, entry, net)`` or None if this route cannot work.
    """
    want = target
    steps: list[PlanStep] = []
    for j in reversed(range(len(hops))):
        asid, via = hops[j]
        vname = _route(net, via, want, size)
        if vname is None:
            return None
        upstream = hops[j - 1][1] if j else src
        placed = _place(net, asid, conf_spaces[asid].granularity, upstream, vname, size)
        if placed is None:
            return None
        slot, net = placed
        steps.insert(0, PlanStep(asid, via, slot, vname))
        want = Name(asid, slot.base)
    entry = _route(net, src, want, size)
    if entry is None:
        return None
    frags = decompose(net, entry, size, stop={dst} - {src})
    if len(frags) != 1 or frags[0].end != target:
        return None
    if frags[0].outcome not in (Outcome.ACCEPTED, Outcome.STOPPED):
        return None
    return tuple(steps), entry, net


def _hops(g: FlatGraph, path) -> list[tuple[str, str]]:
    return [(u, g.edges[u][v].via) for u, v in zip(path, path[1:]) if g.edges[u][v].weight]


def _plan_size(conf_spaces, hops, size: int | None) -> int:
    gran = max([conf_spaces[a].granularity for a, _ in hops], default=1)
    if size is None:
        size = max(gran, mon.DEFAULT_GRANULARITY)
    if size <= 0:
        raise InvalidArgument("plan size must be positive")
    return _round_up(size, gran)


def _probe(g: FlatGraph, path, hops, size: int) -> Name | None:
    """Lowest name in the destination that the last hop can reach with ``size`` bytes."""
    src, dst = path[0], path[-1]
    entry = hops[-1][1] if hops else src
    windows = _windows(g.net, entry, dst)
    if g.kinds.get(dst) == MEMORY:
        pool = [(r.base, r.end) for r in g.free.get(dst, ())]
    elif g.net[dst].accept:
        pool = [(r.base, r.end) for r in g.net[dst].accept]
    else:
        pool = [(0, ADDRESS_LIMIT)]
    for lo, hi in windows:
        for plo, phi in pool:
            a, b = max(lo, plo), min(hi, phi)
            if b - a >= size:
                return Name(dst, a)
    return None


def realize(
    g: FlatGraph,
    path: Sequence[str],
    target: Name | None = None,
    size: int | None = None,
) -> ConfigPlan | None:
    """Concrete plan for a vertex path of ``g``, or None if it cannot be realised.

    Without ``target`` the lowest suitable free name of the destination is used.
    """
    path = tuple(path)
    hops = _hops(g, path)
    size = _plan_size(g.conf_spaces, hops, size)
    if target is None:
        target = _probe(g, path, hops, size)
        if target is None:
            return None
    done = _realize(g.net, g.conf_spaces, path[0], path[-1], hops, target, size)
    if done is None:
        return None
    steps, entry, _ = done
    return ConfigPlan(path[0], path[-1], steps, path, CanonicalRange(target.node, target.addr, size), entry)


def dn_get_config_nodes(g: FlatGraph, src: str, dst: str, size: int | None = None) -> ConfigPlan:
    """Spaces that must be configured so that ``dst`` becomes reachable from ``src``.

    Takes the cheapest path of the flattened graph that can actually be
    configured (smallest vertex sequence among equals).  ``size`` is the
    amount of destination memory the plan should expose.
    """
    _check_vertex(g, src)
    _check_vertex(g, dst)
    found = shortest_paths(g, src).get(dst)
    if found is None:
        raise Unreachable(f"{dst} cannot be reached from {src}")
    plan = realize(g, found[1], size=size)
    if plan is not None:
        return plan
    # the cheapest route is blocked; walk simple paths in (cost, path) order
    heap = [(0, (src,))]
    expanded = 0
    while heap:
        cost, path = heapq.heappop(heap)
        v = path[-1]
        if v == dst:
            plan = realize(g, path, size=size)
            if plan is not None:
                return plan
            continue
        expanded += 1
        if expanded > SEARCH_LIMIT:
            raise Unreachable(f"search for a route from {src} to {dst} exceeded {SEARCH_LIMIT} steps")
        for w, e in g.edges.get(v, {}).items():
            if w not in path:
                heapq.heappush(heap, (cost + e.weight, path + (w,)))
    raise Unreachable(f"no configurable route from {src} to {dst}")


class Allocation(NamedTuple):
    node: str
    range: AddressRange

    def facts(self) -> str:
        return f"alloc({self.node},{self.range.base:#x},{self.range.size:#x})."


def dn_get_allocation_range(
    g: FlatGraph,
    src: str,
    dst_filter: str | None = None,
    size: int | None = None,
) -> Allocation:
    """Free memory reachable from ``src``.

    Memory needing the fewest configured spaces wins, then the smallest
    node id, then the lowest address.  Without ``size`` the whole first free
    range is returned.
    """
    if size is not None and size <= 0:
        raise InvalidArgument("allocation size must be positive")
    reach = shortest_paths(g, src)
    candidates = sorted(
        (cost, v) for v, (cost, _) in reach.items() if g.kinds[v] == MEMORY
        and (dst_filter is None or v == dst_filter)
    )
    for _, v in candidates:
        for r in g.free.get(v, ()):
            if size is None:
                return Allocation(v, r)
            if r.size >= size:
                return Allocation(v, AddressRange(r.base, size))
    target = f" in {dst_filter}" if dst_filter else ""
    raise NoAllocatableMemory(f"no free memory{target} reachable from {src}")


def dn_resolve_range(
    g_or_net: FlatGraph | DecodingNet,
    node: str,
    addr: int,
    size: int,
    dst_filter: str | None = None,
) -> list[CanonicalRange]:
    net = g_or_net.net if isinstance(g_or_net, FlatGraph) else g_or_net
    name = Name(node, addr)
    out = resolve_range(net, name, size)
    if dst_filter is not None:
        for r in out:
            if r.node != dst_filter:
                raise DestinationMismatch(name, (node, r.node), f"resolves outside {dst_filter}")
    return out


# -- plan execution ----------------------------------------------------------


def execute_plan(
    st: mon.MonitorState,
    subject: str,
    plan: ConfigPlan,
    obj: str,
    size: int | None = None,
    mid_prefix: str = "plan",
) -> tuple[mon.MonitorState, Name]:
    """Program the spaces of ``plan`` so that frame ``obj`` is visible from the source.

    The plan's route is laid out again for the frame's actual location and
    the current state, then installed from the destination backwards.
    Returns the new state and the name in ``plan.src`` at which the frame
    now appears.  Monitor errors propagate unchanged.
    """
    frame = st.objects[obj]
    if frame.base.node != plan.dst:
        raise InvalidArgument(f"{obj} lives in {frame.base.node}, not {plan.dst}")
    spaces = state_spaces(st)
    hops = [(s.asid, s.via) for s in plan.steps]
    size = _plan_size(spaces, hops, frame.size if size is None else size)
    done = _realize(st.net, spaces, plan.src, plan.dst, hops, frame.base, size)
    if done is None:
        raise Unreachable(f"{obj} cannot be routed to {plan.src} along {list(plan.path)}")
    steps, entry, _ = done
    for k in reversed(range(len(steps))):
        step = steps[k]
        if k + 1 < len(steps):
            target, offset = steps[k + 1].asid, steps[k + 1].slot.base
        else:
            target, offset = obj, 0
        mid = f"{mid_prefix}{k}.{step.asid}"
        st = mon.map_object(st, subject, step.asid, step.slot, target, offset, mid, via=step.target)
    return st, entry
