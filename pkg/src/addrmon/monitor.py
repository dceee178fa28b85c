"""Reference monitor for memory-management operations.

A :class:`MonitorState` holds the subjects, typed memory objects, the
mapping database (MDB) recording how everything was derived, the address
spaces with their mappings, and the access-control matrix.  Every
operation is a pure function from a state to a new state that raises a
:class:`~addrmon.errors.MonitorError` when one of its guards fails; a
rejected operation therefore never changes the state it was given.

Each state projects to a static decoding net: the platform nodes plus one
node per dynamic address space whose segments are that space's mappings.

Passing ``unsafe_skip_guards=True`` disables the policy guards (rights,
partitioning and canonical-name checks) while keeping structural checks.
It exists to show that the guards, not the inputs, cause rejections and
must not be used outside tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

from .authority import (
    TRANSLATION_KIND,
    AccessControlMatrix,
    Authority,
    MetaAuthority,
    Right,
    grants_access,
    parse_authority,
)
from .decoding_net import (
    ADDRESS_LIMIT,
    AddressRange,
    ConfSpace,
    DecodingNet,
    Name,
    Node,
    Outcome,
    TranslateSegment,
    Violation,
    decompose,
    loop_through,
    well_formed,
)
from .errors import (
    AddressSpaceMismatch,
    AlreadyDerived,
    DuplicateId,
    IllegalRetype,
    InsufficientRights,
    InvalidArgument,
    Misaligned,
    NonCanonicalBase,
    Overlap,
    OverlappingRoots,
    PartitioningViolation,
    ProjectionLoop,
    RangeConflict,
    StaticSpace,
    UnknownMapping,
    UnknownObject,
    UnknownSubject,
    WrongType,
)

DEFAULT_GRANULARITY = 0x1000
ADDRESS_SPACE_KIND = "AddressSpace"


class ObjectType(enum.Enum):
    RAM = "RAM"
    FRAME = "Frame"
    TSTRUCTURE = "TStructure"

    def __str__(self):
        return self.value


_RETYPES = {ObjectType.RAM: {ObjectType.RAM, ObjectType.FRAME, ObjectType.TSTRUCTURE}}

# Rights the retyping subject receives on the new object.  Grant doubles
# as ownership for RAM and TStructure; neither can ever be mapped.
_CHILD_RIGHTS = {
    ObjectType.FRAME: {
        Right.GRANT,
        Right.ACCESS,
        MetaAuthority(Right.GRANT),
        MetaAuthority(Right.ACCESS),
    },
    ObjectType.TSTRUCTURE: {Right.GRANT},
    ObjectType.RAM: {Right.GRANT, MetaAuthority(Right.GRANT)},
}


@dataclass(frozen=True)
class MemoryObject:
    oid: str
    otype: ObjectType
    base: Name
    size: int
    parent: str | None = None

    @property
    def range(self) -> AddressRange:
        return AddressRange(self.base.addr, self.size)


@dataclass(frozen=True)
class MappingRecord:
    """One installed translation: ``src`` in ``aspace`` -> ``target``.

    ``via`` is the name the segment points at.  It is the target's own
    name unless the space may only translate into whitelisted nodes, in
    which case it is the equivalent name in one of those.  ``depends_on``
    lists the mappings that route ``via`` to the target, and
    ``justification`` the rights the creator held when the record was made.
    """

    mid: str
    aspace: str
    src: AddressRange
    target: str
    target_offset: int
    via: Name
    creator: str
    justification: frozenset = frozenset()
    depends_on: frozenset = frozenset()


@dataclass(frozen=True)
class AddressSpace:
    asid: str
    granularity: int = DEFAULT_GRANULARITY
    static: bool = False
    backing: str | None = None
    targets: tuple[str, ...] | None = None
    mappings: frozenset = frozenset()


class MDB:
    """Derivation forest stored as a child -> parent map."""

    def __init__(self, parents: Mapping[str, str | None] | None = None):
        self._parents = dict(parents or {})
        self._children: dict[str, list[str]] | None = None

    @property
    def parents(self) -> Mapping[str, str | None]:
        return self._parents

    def __contains__(self, i):
        return i in self._parents

    def __eq__(self, other):
        if not isinstance(other, MDB):
            return NotImplemented
        return self._parents == other._parents

    __hash__ = None

    def __repr__(self):
        return f"MDB({len(self._parents)} entries)"

    def add(self, i: str, parent: str | None) -> MDB:
        parents = dict(self._parents)
        parents[i] = parent
        return MDB(parents)

    def remove(self, ids: Iterable[str]) -> MDB:
        gone = set(ids)
        return MDB({k: v for k, v in self._parents.items() if k not in gone})

    def roots(self) -> list[str]:
        return sorted(k for k, v in self._parents.items() if v is None)

    def children(self, i: str) -> list[str]:
        if self._children is None:
            kids: dict[str, list[str]] = {}
            for k, v in self._parents.items():
                if v is not None:
                    kids.setdefault(v, []).append(k)
            for v in kids.values():
                v.sort()
            self._children = kids
        return self._children.get(i, [])

    def descendants(self, i: str) -> list[str]:
        """All descendants of ``i`` in post-order (children before parents)."""
        out: list[str] = []
        stack = [(i, False)]
        while stack:
            cur, done = stack.pop()
            if done:
                if cur != i:
                    out.append(cur)
                continue
            stack.append((cur, True))
            for c in reversed(self.children(cur)):
                stack.append((c, False))
        return out


@dataclass(frozen=True)
class MonitorState:
    platform: DecodingNet
    conf_spaces: Mapping[str, ConfSpace] = field(default_factory=dict)
    subjects: frozenset = frozenset()
    objects: Mapping[str, MemoryObject] = field(default_factory=dict)
    aspaces: Mapping[str, AddressSpace] = field(default_factory=dict)
    mappings: Mapping[str, MappingRecord] = field(default_factory=dict)
    acm: AccessControlMatrix = field(default_factory=AccessControlMatrix)
    mdb: MDB = field(default_factory=MDB)

    @cached_property
    def net(self) -> DecodingNet:
        """The projected decoding net (cached; states are immutable)."""
        return project(self)

    def kind_of(self, oid: str) -> str | None:
        return self.acm.objects.get(oid)

    def known(self, i: str) -> bool:
        return i in self.objects or i in self.aspaces or i in self.mappings


# -- helpers -----------------------------------------------------------------

def _subject(st: MonitorState, s: str):
    if s not in st.subjects:
        raise UnknownSubject(f"unknown subject {s!r}")


def _fresh(st: MonitorState, i: str):
    if st.known(i) or i in st.subjects:
        raise DuplicateId(f"identifier {i!r} already in use")


def _object(st: MonitorState, oid: str) -> MemoryObject:
    try:
        return st.objects[oid]
    except KeyError:
        raise UnknownObject(f"unknown object {oid!r}") from None


def _space(st: MonitorState, asid: str) -> AddressSpace:
    try:
        return st.aspaces[asid]
    except KeyError:
        raise UnknownObject(f"unknown address space {asid!r}") from None


def _need(st: MonitorState, s: str, o: str, r: Authority, guards: bool, detail=""):
    if guards and not st.acm.check(s, o, r):
        raise InsufficientRights(s, o, r, detail)


def _is_canonical(net: DecodingNet, base: Name, size: int) -> bool:
    if base.node not in net or size <= 0:
        return False
    lo, hi = base.addr, base.addr + size
    for r in _merged(net[base.node].accept):
        if r[0] <= lo and hi <= r[1]:
            return True
    return False


def _merged(ranges: Sequence[AddressRange]):
    out: list[list[int]] = []
    for r in ranges:
        if out and out[-1][1] == r.base:
            out[-1][1] = r.end
        else:
            out.append([r.base, r.end])
    return out


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


# -- construction ------------------------------------------------------------

def empty_state(net: DecodingNet, conf_spaces: Mapping[str, ConfSpace] | None = None) -> MonitorState:
    """State with no subjects or objects.

    Every platform node becomes an address space: configurable nodes are
    dynamic and start with no mappings, all others are static.
    """
    conf_spaces = dict(conf_spaces or {})
    aspaces = {}
    acm = AccessControlMatrix()
    for nid in net:
        cs = conf_spaces.get(nid)
        if cs is None:
            aspaces[nid] = AddressSpace(nid, DEFAULT_GRANULARITY, static=True)
        else:
            aspaces[nid] = AddressSpace(nid, cs.granularity, static=False, targets=cs.targets)
        acm = acm.with_object(nid, ADDRESS_SPACE_KIND)
    return MonitorState(platform=net, conf_spaces=conf_spaces, aspaces=aspaces, acm=acm)


def add_subject(st: MonitorState, s: str) -> MonitorState:
    _fresh(st, s)
    return replace(st, subjects=st.subjects | {s}, acm=st.acm.with_subject(s))


def add_root(
    st: MonitorState,
    oid: str,
    base: Name,
    size: int,
    otype: ObjectType = ObjectType.RAM,
    *,
    unsafe_skip_guards: bool = False,
) -> MonitorState:
    """Register an initial memory object (an MDB root).

    RAM roots describe memory the system starts with; TStructure roots
    describe translation hardware registers.
    """
    otype = ObjectType(otype)
    if otype is ObjectType.FRAME:
        raise InvalidArgument("initial objects are RAM or TStructure")
    _fresh(st, oid)
    if size <= 0 or base.addr < 0 or base.addr + size > ADDRESS_LIMIT:
        raise InvalidArgument(f"bad root range {base}+{size:#x}")
    if base.node not in st.platform:
        raise NonCanonicalBase(f"{base} names no platform node")
    if not unsafe_skip_guards and not _is_canonical(st.platform, base, size):
        raise NonCanonicalBase(f"{base}+{size:#x} is not accepted by {base.node}")
    rng = AddressRange(base.addr, size)
    for other in st.objects.values():
        if other.parent is None and other.base.node == base.node and other.range.overlaps(rng):
            raise OverlappingRoots(f"{oid} overlaps {other.oid}")
    obj = MemoryObject(oid, otype, base, size)
    objects = dict(st.objects)
    objects[oid] = obj
    return replace(
        st,
        objects=objects,
        acm=st.acm.with_object(oid, otype.value),
        mdb=st.mdb.add(oid, None),
    )


def grant_initial(
    st: MonitorState,
    s: str,
    o: str,
    rights: Iterable[Authority | str],
    *,
    unsafe_skip_guards: bool = False,
) -> MonitorState:
    rights = [parse_authority(r) if isinstance(r, str) else r for r in rights]
    return replace(st, acm=st.acm.add(s, o, rights, enforce=not unsafe_skip_guards))


def init_state(
    net: DecodingNet,
    subjects: Iterable[str] = (),
    initial_ram: Iterable[tuple[str, Name, int]] = (),
    initial_acm: Iterable[tuple[str, str, Iterable[Authority | str]]] = (),
    conf_spaces: Mapping[str, ConfSpace] | None = None,
    initial_tstructs: Iterable[tuple[str, Name, int]] = (),
    *,
    unsafe_skip_guards: bool = False,
) -> MonitorState:
    st = empty_state(net, conf_spaces)
    for s in subjects:
        st = add_subject(st, s)
    for oid, base, size in initial_ram:
        st = add_root(st, oid, base, size, ObjectType.RAM, unsafe_skip_guards=unsafe_skip_guards)
    for oid, base, size in initial_tstructs:
        st = add_root(st, oid, base, size, ObjectType.TSTRUCTURE, unsafe_skip_guards=unsafe_skip_guards)
    for s, o, rights in initial_acm:
        st = grant_initial(st, s, o, rights, unsafe_skip_guards=unsafe_skip_guards)
    return st


# -- operations --------------------------------------------------------------

def retype(
    st: MonitorState,
    s: str,
    parent: str,
    new_type: ObjectType | str,
    offset: int,
    size: int,
    new_oid: str,
    *,
    unsafe_skip_guards: bool = False,
) -> MonitorState:
    """Derive a new object from a sub-range of a RAM object."""
    guards = not unsafe_skip_guards
    _subject(st, s)
    _fresh(st, new_oid)
    p = _object(st, parent)
    new_type = ObjectType(new_type)
    if new_type not in _RETYPES.get(p.otype, ()):
        raise IllegalRetype(f"cannot retype {p.otype} to {new_type}")
    _need(st, s, parent, Right.GRANT, guards)
    if size <= 0 or offset < 0 or offset + size > p.size:
        raise RangeConflict(f"[{offset:#x}+{size:#x}) outside {parent} of size {p.size:#x}")
    base = p.base.offset(offset)
    rng = AddressRange(base.addr, size)
    for c in st.mdb.children(parent):
        sib = st.objects.get(c)
        if sib is not None and sib.range.overlaps(rng):
            raise RangeConflict(f"{new_oid} overlaps existing child {c}")
    objects = dict(st.objects)
    objects[new_oid] = MemoryObject(new_oid, new_type, base, size, parent)
    acm = st.acm.with_object(new_oid, new_type.value).add(s, new_oid, _CHILD_RIGHTS[new_type])
    return replace(st, objects=objects, acm=acm, mdb=st.mdb.add(new_oid, parent))


def derive_address_space(
    st: MonitorState,
    s: str,
    tstruct: str,
    granularity: int,
    asid: str,
    *,
    unsafe_skip_guards: bool = False,
) -> MonitorState:
    """Create the (empty) address space defined by a translation structure."""
    guards = not unsafe_skip_guards
    _subject(st, s)
    _fresh(st, asid)
    t = _object(st, tstruct)
    if t.otype is not ObjectType.TSTRUCTURE:
        raise WrongType(f"{tstruct} is a {t.otype}, not a TStructure")
    _need(st, s, tstruct, Right.GRANT, guards)
    if any(sp.backing == tstruct for sp in st.aspaces.values()):
        raise AlreadyDerived(f"{tstruct} already defines an address space")
    if not _is_pow2(granularity):
        raise InvalidArgument(f"granularity {granularity:#x} is not a power of two")
    aspaces = dict(st.aspaces)
    aspaces[asid] = AddressSpace(asid, granularity, static=False, backing=tstruct)
    acm = st.acm.with_object(asid, ADDRESS_SPACE_KIND).add(s, asid, {Right.MAP, Right.GRANT})
    return replace(st, aspaces=aspaces, acm=acm, mdb=st.mdb.add(asid, tstruct))


def target_name(st: MonitorState, obj: str, offset: int) -> Name:
    """The name a mapping of ``obj`` at ``offset`` must reach."""
    if obj in st.objects:
        return st.objects[obj].base.offset(offset)
    return Name(obj, offset)


def locate_name(st: MonitorState, net: DecodingNet, targets, want: Name, size: int, via: Name | None = None):
    """Find a name in one of ``targets`` that routes onto ``want``..+size.

    Returns ``(via, depends_on)`` or None.  A caller-chosen ``via`` is only
    checked.  Otherwise the object's own node wins if it is whitelisted and
    the remaining candidates are tried in whitelist order, lowest address
    first.
    """
    by_segment = {(m.aspace, m.src.base): mid for mid, m in st.mappings.items()}

    def deps_of(frags, start):
        deps = set()
        for f in frags:
            if f.base < start + size and start < f.base + f.size:
                deps.update(by_segment[h] for h in f.hops if h in by_segment)
        return frozenset(deps)

    if via is not None:
        if via.node not in targets or via.node not in net:
            return None
        if via == want:
            return want, frozenset()
        if via.addr + size > ADDRESS_LIMIT:
            return None
        frags = decompose(net, via, size, stop={want.node})
        if len(frags) == 1 and frags[0].outcome is Outcome.STOPPED and frags[0].end == want:
            return via, deps_of(frags, via.addr)
        return None
    if want.node in targets and want.node in net:
        return want, frozenset()
    for w in targets:
        if w not in net:
            continue
        runs: list[list] = []
        for f in decompose(net, Name(w, 0), ADDRESS_LIMIT, stop={want.node}):
            if f.outcome is not Outcome.STOPPED or f.end.node != want.node:
                continue
            last = runs[-1] if runs else None
            if last and last[0] + last[1] == f.base and last[2] + last[1] == f.end.addr:
                last[1] += f.size
                last[3].append(f)
            else:
                runs.append([f.base, f.size, f.end.addr, [f]])
        for start, length, end_addr, frags in runs:
            if end_addr <= want.addr and want.addr + size <= end_addr + length:
                at = start + (want.addr - end_addr)
                return Name(w, at), deps_of(frags, at)
    return None


def map_object(
    st: MonitorState,
    s: str,
    aspace: str,
    dst: AddressRange,
    obj: str,
    obj_offset: int,
    mid: str,
    *,
    via: Name | None = None,
    unsafe_skip_guards: bool = False,
) -> MonitorState:
    """Install a mapping of ``obj`` (a Frame or an address space) at ``dst``.

    The subject needs Map on the address space and Grant on the object.
    ``via`` picks the whitelisted name the space translates to; by default
    the monitor chooses one.
    """
    guards = not unsafe_skip_guards
    _subject(st, s)
    _fresh(st, mid)
    space = _space(st, aspace)
    if space.static:
        raise StaticSpace(f"{aspace} has a fixed configuration")
    kind = st.kind_of(obj)
    if kind is None:
        raise UnknownObject(f"unknown object {obj!r}")
    _need(st, s, aspace, Right.MAP, guards)
    if guards and kind not in (ObjectType.FRAME.value, ADDRESS_SPACE_KIND):
        raise PartitioningViolation(f"{obj} is a {kind} and can never be mapped")
    _need(st, s, obj, Right.GRANT, guards)
    g = space.granularity
    if dst.base % g or dst.size % g:
        raise Misaligned(f"{dst} not aligned to {g:#x} in {aspace}")
    if obj_offset < 0:
        raise InvalidArgument("negative object offset")
    limit = st.objects[obj].size if obj in st.objects else ADDRESS_LIMIT
    if obj_offset + dst.size > limit:
        if guards:
            raise InsufficientRights(s, obj, Right.GRANT, "range exceeds the object")
        if obj_offset + dst.size > ADDRESS_LIMIT:
            raise InvalidArgument("mapping exceeds 64 bits")
    for other in space.mappings:
        if st.mappings[other].src.overlaps(dst):
            raise Overlap(f"{dst} overlaps mapping {other} in {aspace}")
    want = target_name(st, obj, obj_offset)
    if want.addr + dst.size > ADDRESS_LIMIT:
        raise InvalidArgument("mapping exceeds 64 bits")
    chosen, deps = want, frozenset()
    if space.targets:
        found = locate_name(st, st.net, space.targets, want, dst.size, via)
        if found is not None:
            chosen, deps = found
        elif guards or via is not None:
            raise AddressSpaceMismatch(
                f"{want} is not addressable from {aspace}'s targets {list(space.targets)}"
            )
    elif via is not None and via != want:
        raise AddressSpaceMismatch(f"{aspace} maps canonical names; {via} is not {want}")
    just = frozenset(
        [(aspace, r) for r in st.acm.rights(s, aspace)] + [(obj, r) for r in st.acm.rights(s, obj)]
    )
    rec = MappingRecord(mid, aspace, dst, obj, obj_offset, chosen, s, just, deps)
    mappings = dict(st.mappings)
    mappings[mid] = rec
    aspaces = dict(st.aspaces)
    aspaces[aspace] = replace(space, mappings=space.mappings | {mid})
    new = replace(st, mappings=mappings, aspaces=aspaces, mdb=st.mdb.add(mid, obj))
    loop = loop_through(new.net, aspace)
    if loop is not None:
        raise ProjectionLoop(f"mapping {mid} creates a translation loop via {loop}")
    return new


def _delete(st: MonitorState, ids: Iterable[str]) -> MonitorState:
    """Remove ``ids`` with all descendants and everything relying on them."""
    dead = set(ids)
    frontier = list(dead)
    while frontier:
        for i in frontier:
            dead.update(st.mdb.descendants(i))
        frontier = []
        for mid, m in st.mappings.items():
            if mid not in dead and (m.aspace in dead or m.target in dead or m.depends_on & dead):
                dead.add(mid)
                frontier.append(mid)
        for asid, sp in st.aspaces.items():
            if asid not in dead and sp.backing is not None and sp.backing in dead:
                dead.add(asid)
                frontier.append(asid)
    objects = {k: v for k, v in st.objects.items() if k not in dead}
    mappings = {k: v for k, v in st.mappings.items() if k not in dead}
    aspaces = {}
    for k, sp in st.aspaces.items():
        if k in dead:
            continue
        if sp.mappings & dead:
            sp = replace(sp, mappings=sp.mappings - dead)
        aspaces[k] = sp
    return replace(
        st,
        objects=objects,
        mappings=mappings,
        aspaces=aspaces,
        acm=st.acm.without_objects(dead),
        mdb=st.mdb.remove(dead),
    )


def unmap(st: MonitorState, s: str, mid: str, *, unsafe_skip_guards: bool = False) -> MonitorState:
    """Remove a mapping together with any mappings routed through it."""
    _subject(st, s)
    rec = st.mappings.get(mid)
    if rec is None:
        raise UnknownMapping(f"unknown mapping {mid!r}")
    _need(st, s, rec.aspace, Right.MAP, not unsafe_skip_guards)
    return _delete(st, {mid})


def copy_right(
    st: MonitorState,
    s_from: str,
    s_to: str,
    o: str,
    r: Authority | str,
    *,
    unsafe_skip_guards: bool = False,
) -> MonitorState:
    """Give ``s_to`` authority ``r`` on ``o``.

    ``s_from`` must hold the meta-authority to grant ``r``; copying a
    meta-authority needs that same meta-authority.
    """
    guards = not unsafe_skip_guards
    _subject(st, s_from)
    _subject(st, s_to)
    if isinstance(r, str):
        r = parse_authority(r)
    kind = st.kind_of(o)
    if kind is None:
        raise UnknownObject(f"unknown object {o!r}")
    if guards and kind == TRANSLATION_KIND and grants_access(r):
        raise PartitioningViolation(f"access to translation object {o!r}")
    need = MetaAuthority(r) if isinstance(r, Right) else r
    _need(st, s_from, o, need, guards)
    return replace(st, acm=st.acm.add(s_to, o, {r}, enforce=guards))


def revoke(st: MonitorState, s: str, o: str, *, unsafe_skip_guards: bool = False) -> MonitorState:
    """Delete ``o`` and, recursively, everything derived from or mapped via it."""
    _subject(st, s)
    derived_space = o in st.aspaces and st.aspaces[o].backing is not None
    if o not in st.objects and not derived_space:
        raise UnknownObject(f"{o!r} is not a revocable MDB entry")
    _need(st, s, o, Right.GRANT, not unsafe_skip_guards)
    return _delete(st, {o})


class Replacement(NamedTuple):
    """New contents for ``dst``; ``obj=None`` just clears the range."""

    dst: AddressRange
    obj: str | None = None
    obj_offset: int = 0
    mid: str | None = None


def modify_map(
    st: MonitorState,
    s: str,
    aspace: str,
    replacements: Sequence[Replacement],
    *,
    unsafe_skip_guards: bool = False,
) -> MonitorState:
    """Atomically replace the translation of several ranges of one space.

    All mappings overlapping any replaced range are removed first, then the
    new mappings are installed.  Either every step succeeds or the input
    state is returned untouched (by raising).
    """
    space = _space(st, aspace)
    if space.static:
        raise StaticSpace(f"{aspace} has a fixed configuration")
    victims = sorted(
        mid
        for mid in space.mappings
        if any(st.mappings[mid].src.overlaps(r.dst) for r in replacements)
    )
    for mid in victims:
        if mid in st.mappings:
            st = unmap(st, s, mid, unsafe_skip_guards=unsafe_skip_guards)
    for r in replacements:
        if r.obj is None:
            continue
        if r.mid is None:
            raise InvalidArgument("replacement needs a mapping id")
        st = map_object(st, s, aspace, r.dst, r.obj, r.obj_offset, r.mid, unsafe_skip_guards=unsafe_skip_guards)
    return st


# -- projection and static checking ------------------------------------------

def project(st: MonitorState) -> DecodingNet:
    nodes = dict(st.platform.nodes)
    for asid, sp in st.aspaces.items():
        if sp.static:
            continue
        segs = tuple(
            TranslateSegment(m.src, m.via.node, m.via.addr)
            for m in (st.mappings[mid] for mid in sp.mappings)
        )
        base = nodes.get(asid)
        if base is None:
            nodes[asid] = Node(asid, (), segs)
        else:
            nodes[asid] = Node(asid, base.accept, base.segments + segs, base.overlay)
    return DecodingNet(nodes)


def _reaches(net: DecodingNet, via: Name, size: int, want: Name) -> bool:
    if via == want:
        return True
    if via.node not in net:
        return False
    frags = decompose(net, via, size, stop={want.node})
    return (
        len(frags) == 1
        and frags[0].outcome is Outcome.STOPPED
        and frags[0].end == want
    )


def check_static_security(st: MonitorState) -> list[Violation]:
    """Everything wrong with ``st``; an empty list means the state is secure.

    Checks the configuration invariant (aligned, sized, disjoint mappings
    and immutable static spaces), the partitioning invariant (no access to
    translation structures, nothing mapped onto one), that every mapping
    is justified by the rights recorded when it was made and still routes
    to its target, MDB shape and cross-references, and that the projection
    is a well-formed net.
    """
    report: list[Violation] = []
    bad = report.append
    net = st.net
    acm = st.acm

    # cross references
    ids = set(st.objects) | set(st.aspaces)
    for (s, o) in acm.entries():
        if s not in st.subjects:
            bad(Violation("DanglingReference", s, f"ACM row for unknown subject {s}"))
        if o not in ids:
            bad(Violation("DanglingReference", o, f"ACM column for unknown object {o}"))
    for o in acm.objects:
        if o not in ids:
            bad(Violation("DanglingReference", o, "ACM knows a deleted object"))

    # objects and MDB shape
    for oid, obj in st.objects.items():
        if obj.parent is None:
            if not _is_canonical(st.platform, obj.base, obj.size):
                bad(Violation("NonCanonicalBase", oid, f"{obj.base}+{obj.size:#x}"))
        else:
            p = st.objects.get(obj.parent)
            if p is None:
                bad(Violation("DanglingReference", oid, f"parent {obj.parent} missing"))
            elif obj.otype not in _RETYPES.get(p.otype, ()):
                bad(Violation("MdbShape", oid, f"{p.otype} cannot derive {obj.otype}"))
            elif p.base.node != obj.base.node or not p.range.covers(obj.range):
                bad(Violation("MdbShape", oid, f"not inside parent {p.oid}"))
        if st.mdb.parents.get(oid, "-") != obj.parent:
            bad(Violation("MdbShape", oid, "MDB parent disagrees with object"))
    for parent in set(o.parent for o in st.objects.values() if o.parent):
        kids = sorted((o for o in st.objects.values() if o.parent == parent), key=lambda o: o.base)
        for a, b in zip(kids, kids[1:]):
            if a.range.overlaps(b.range):
                bad(Violation("MdbShape", parent, f"children {a.oid} and {b.oid} overlap"))

    # address spaces: configuration invariant
    for asid, sp in st.aspaces.items():
        if sp.backing is not None and st.mdb.parents.get(asid, "-") != sp.backing:
            bad(Violation("MdbShape", asid, "derived space missing from MDB"))
        if sp.static and sp.mappings:
            bad(Violation("Invariant1", asid, "static address space was modified"))
        recs = []
        for mid in sorted(sp.mappings):
            m = st.mappings.get(mid)
            if m is None:
                bad(Violation("DanglingReference", asid, f"unknown mapping {mid}"))
                continue
            recs.append(m)
            g = sp.granularity
            if m.src.base % g or m.src.size % g:
                bad(Violation("Invariant1", asid, f"{mid} {m.src} not aligned to {g:#x}"))
        recs.sort(key=lambda m: m.src)
        for a, b in zip(recs, recs[1:]):
            if a.src.overlaps(b.src):
                bad(Violation("Invariant1", asid, f"{a.mid} overlaps {b.mid}"))

    # partitioning invariant
    for (s, o), rights in acm.entries().items():
        if acm.objects.get(o) == TRANSLATION_KIND and any(map(grants_access, rights)):
            bad(Violation("PartitioningViolation", o, f"{s} has access to a translation object"))
    tstructs = [o for o in st.objects.values() if o.otype is ObjectType.TSTRUCTURE]

    # mappings
    for mid, m in sorted(st.mappings.items()):
        sp = st.aspaces.get(m.aspace)
        if sp is None or mid not in sp.mappings:
            bad(Violation("DanglingReference", mid, f"not listed in space {m.aspace}"))
        if st.mdb.parents.get(mid, "-") != m.target:
            bad(Violation("MdbShape", mid, "mapping is not a child of its target"))
        kind = acm.objects.get(m.target)
        if kind is None:
            bad(Violation("DanglingReference", mid, f"target {m.target} missing"))
            continue
        if kind not in (ObjectType.FRAME.value, ADDRESS_SPACE_KIND):
            bad(Violation("PartitioningViolation", mid, f"maps {kind} object {m.target}"))
        if m.target in st.objects and m.target_offset + m.src.size > st.objects[m.target].size:
            bad(Violation("Unjustified", mid, "mapping exceeds its target object"))
        need = {(m.aspace, Right.MAP), (m.target, Right.GRANT)}
        if m.creator not in st.subjects or not need <= m.justification:
            bad(Violation("Unjustified", mid, f"{m.creator} did not hold Map and Grant"))
        for dep in m.depends_on:
            if dep not in st.mappings:
                bad(Violation("DanglingReference", mid, f"depends on missing mapping {dep}"))
        if not _reaches(net, m.via, m.src.size, target_name(st, m.target, m.target_offset)):
            bad(Violation("NameResolution", mid, f"{m.via} no longer reaches {m.target}"))
        if tstructs and m.aspace in net:
            for f in decompose(net, Name(m.aspace, m.src.base), m.src.size):
                if f.outcome is not Outcome.ACCEPTED:
                    continue
                hit = AddressRange(f.end.addr, f.size)
                for t in tstructs:
                    if t.base.node == f.end.node and t.range.overlaps(hit):
                        bad(Violation("PartitioningViolation", mid, f"reaches translation object {t.oid}"))

    report.extend(well_formed(net))
    return sorted(set(report))


def invariants_hold(st: MonitorState) -> bool:
    return not check_static_security(st)
