"""Generated artefacts: facts files, translation tables, simulator config."""

from __future__ import annotations

import bisect
import configparser
import io
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, NamedTuple

from .decoding_net import (
    ADDRESS_LIMIT,
    AddressRange,
    ConfSpace,
    DecodingNet,
    Name,
    Outcome,
    decompose,
    format_facts,
)
from .errors import UnknownNode


def emit_facts(net: DecodingNet, conf_spaces: Mapping[str, ConfSpace] | None = None) -> str:
    return format_facts(net, conf_spaces)


class Entry(NamedTuple):
    local: AddressRange
    canonical: Name


class Gap(NamedTuple):
    local: AddressRange
    reason: str  # "undecodable" or "loop"


@dataclass(frozen=True)
class TranslationTable:
    """Local -> canonical translation for one node.

    ``entries`` and ``gaps`` are sorted, disjoint, and together cover the
    node's whole 64-bit address range.
    """

    node: str
    entries: tuple[Entry, ...]
    gaps: tuple[Gap, ...]

    def lookup(self, addr: int) -> Name | None:
        i = bisect.bisect_right(self._bases, addr) - 1
        if i >= 0:
            e = self.entries[i]
            if addr in e.local:
                return e.canonical.offset(addr - e.local.base)
        return None

    @cached_property
    def _bases(self):
        return [e.local.base for e in self.entries]

    def dump(self) -> str:
        lines = []
        for e in self.entries:
            lines.append(
                f"xlate({self.node}, {e.local.base:#x}, {e.local.size:#x}, "
                f"{e.canonical.node}, {e.canonical.addr:#x})."
            )
        for g in self.gaps:
            lines.append(f"hole({self.node}, {g.local.base:#x}, {g.local.size:#x}).")
        return "".join(line + "\n" for line in lines)


def emit_translation_table(net: DecodingNet, node: str) -> TranslationTable:
    if node not in net:
        raise UnknownNode(node)
    entries: list[Entry] = []
    gaps: list[Gap] = []
    for f in decompose(net, Name(node, 0), ADDRESS_LIMIT):
        if f.outcome is Outcome.ACCEPTED:
            if entries:
                last = entries[-1]
                if (
                    last.local.end == f.base
                    and last.canonical.node == f.end.node
                    and last.canonical.addr + last.local.size == f.end.addr
                ):
                    entries[-1] = Entry(AddressRange(last.local.base, last.local.size + f.size), last.canonical)
                    continue
            entries.append(Entry(AddressRange(f.base, f.size), f.end))
        else:
            reason = "loop" if f.outcome is Outcome.LOOP else "undecodable"
            if gaps and gaps[-1].local.end == f.base and gaps[-1].reason == reason:
                last = gaps[-1]
                gaps[-1] = Gap(AddressRange(last.local.base, last.local.size + f.size), reason)
            else:
                gaps.append(Gap(AddressRange(f.base, f.size), reason))
    return TranslationTable(node, tuple(entries), tuple(gaps))


def dump_tables(net: DecodingNet, nodes=None) -> str:
    return "".join(emit_translation_table(net, n).dump() for n in (nodes or sorted(net)))


# -- simulator configuration -------------------------------------------------

SIMCONFIG_HEADER = """\
# Per-initiator memory maps.  Each section lists the regions one
# initiator can address, as
#   region.<n> = <local-base> <size> -> <node>:<canonical-base> <sharing> <layout>
# sharing: shared (every other initiator reaches the same memory),
#          private (no other initiator does), partial (some do).
# layout:  identity (local address equals canonical address) or remapped.
"""


def initiators(net: DecodingNet) -> list[str]:
    referenced = set()
    for n in net.nodes.values():
        referenced.update(n.references())
    return sorted(nid for nid, n in net.nodes.items() if nid not in referenced and not n.accept)


def _coverage(canon, node: str, lo: int, hi: int) -> int:
    """Bytes of node:[lo, hi) inside the sorted canonical ranges ``canon``."""
    total = 0
    for (n, a, b) in canon:
        if n == node and a < hi and lo < b:
            total += min(b, hi) - max(a, lo)
    return total


def emit_simulator_config(net: DecodingNet) -> str:
    inits = initiators(net)
    if not inits:
        return ""
    tables = {i: emit_translation_table(net, i) for i in inits}
    canon = {
        i: [(e.canonical.node, e.canonical.addr, e.canonical.addr + e.local.size) for e in t.entries]
        for i, t in tables.items()
    }
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for i in inits:
        cp[i] = {}
        others = [o for o in inits if o != i]
        for k, e in enumerate(tables[i].entries):
            lo, hi = e.canonical.addr, e.canonical.addr + e.local.size
            seen = [_coverage(canon[o], e.canonical.node, lo, hi) for o in others]
            if others and all(s == hi - lo for s in seen):
                sharing = "shared"
            elif not any(seen):
                sharing = "private"
            else:
                sharing = "partial"
            layout = "identity" if e.local.base == e.canonical.addr else "remapped"
            cp[i][f"region.{k}"] = (
                f"{e.local.base:#x} {e.local.size:#x} -> {e.canonical} {sharing} {layout}"
            )
    buf = io.StringIO()
    cp.write(buf)
    return SIMCONFIG_HEADER + "\n" + buf.getvalue().rstrip("\n") + "\n"


def parse_simulator_config(text: str) -> dict[str, list[tuple]]:
    """Read a generated config back as ``{initiator: [(base, size, Name, sharing, layout)]}``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    out = {}
    for sec in cp.sections():
        rows = []
        for key in sorted(cp[sec], key=lambda k: int(k.split(".")[1])):
            base, size, _, canon, sharing, layout = cp[sec][key].split()
            node, _, addr = canon.rpartition(":")
            rows.append((int(base, 0), int(size, 0), Name(node, int(addr, 0)), sharing, layout))
        out[sec] = rows
    return out
