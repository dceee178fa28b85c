import copy
import random

import pytest
from hypothesis import given, strategies as st

from addrmon import monitor as mon
from addrmon import query as q
from addrmon import trace as tr
from addrmon.authority import Right
from addrmon.decoding_net import AddressRange, CanonicalRange, DecodingNet, Name, Node, resolve_range
from addrmon.dsl import builtin_source, compile_text
from addrmon.errors import (
    AddrmonError,
    DestinationMismatch,
    InsufficientRights,
    NoAllocatableMemory,
    Unreachable,
    UnknownNode,
)
from addrmon.query import Edge

from fuzz import OpGenerator, platform_text, random_initial_state, run_plan
from oracles import WINDOW, best_realizable, min_page_plan_cost, min_plan_cost, random_net, random_planning_net, walk_oracle


def topo(kind):
    return compile_text(builtin_source(kind))


def phi():
    return compile_text(platform_text("xeon_phi"))


# -- flatten -----------------------------------------------------------------

def test_empty_net_gives_empty_graph():
    g = q.flatten(DecodingNet())
    assert g.vertices == [] and g.edge_list() == []


def test_xeon_phi_graph():
    g = q.flatten(*phi())
    assert g.kinds == {
        "cpu": q.INITIATOR,
        "dma": q.INITIATOR,
        "phicore": q.INITIATOR,
        "dram": q.MEMORY,
        "gddr": q.MEMORY,
        "iommu_regs": q.MEMORY,
        "iommu": q.CONFIGURABLE,
        "smpt": q.CONFIGURABLE,
    }
    assert g.edges["dma"] == {"iommu": Edge(0, None)}
    assert g.edges["iommu"] == {
        "dram": Edge(1, "sysbus"),
        "iommu_regs": Edge(1, "sysbus"),
        "smpt": Edge(1, "sysbus"),
    }
    assert g.edges["smpt"] == {"gddr": Edge(1, "gddr")}
    assert g.edges["cpu"] == {"dram": Edge(0, None), "iommu_regs": Edge(0, None), "smpt": Edge(0, None)}


def test_dma_core_reaches_gddr_through_iommu():
    g = q.flatten(*phi())
    dist = q.shortest_paths(g, "dma")
    assert dist["gddr"] == (2, ("dma", "iommu", "smpt", "gddr"))


def fixed_reachability(net):
    """Vertex-to-memory reachability by walking every aligned address of the window."""
    referenced = {r for n in net.nodes.values() for r in n.references()}
    vertices = {n for n, node in net.nodes.items() if node.accept or n not in referenced}
    out = {}
    for u in vertices:
        hit = set()
        for a in range(0, WINDOW, 0x40):
            kind, end = walk_oracle(net, Name(u, a))
            if kind == "accepted" and end.node != u:
                hit.add(end.node)
        out[u] = hit
    return out


@pytest.mark.parametrize("seed", range(25))
def test_fixed_net_graph_is_condensed_reachability(seed):
    net = random_net(random.Random(seed), align=0x40)
    g = q.flatten(net)
    assert {u: set(g.edges[u]) for u in g.vertices} == fixed_reachability(net)
    assert all(e.weight == 0 for u in g.vertices for e in g.edges[u].values())


def test_flatten_is_deterministic():
    net, conf = compile_text(platform_text("dual_phi"))
    assert q.flatten(net, conf) == q.flatten(net, dict(reversed(list(conf.items()))))
    assert q.flatten(net, conf).edge_list() == q.flatten(net, conf).edge_list()


# -- planning ----------------------------------------------------------------

def test_offload_plan_is_iommu_then_smpt():
    net, conf = phi()
    plan = q.dn_get_config_nodes(q.flatten(net, conf), "dma", "gddr")
    assert plan.spaces == ["iommu", "smpt"]
    assert plan.facts() == "plan(dma,gddr,[iommu,smpt])."
    assert plan.target == CanonicalRange("gddr", 0, 0x10000)


def test_offload_plan_executes_through_monitor():
    net, conf = phi()
    g = q.flatten(net, conf)
    st = mon.init_state(
        net,
        ["driver"],
        [("card", Name("gddr", 0x100000), 0x40000)],
        [("driver", "card", [Right.GRANT]), ("driver", "iommu", [Right.MAP, Right.GRANT]),
         ("driver", "smpt", [Right.MAP, Right.GRANT])],
        conf,
    )
    st = mon.retype(st, "driver", "card", mon.ObjectType.FRAME, 0, 0x10000, "buf")
    plan = q.dn_get_config_nodes(g, "dma", "gddr")
    after, name = q.execute_plan(st, "driver", plan, "buf")
    assert q.dn_resolve_range(after.net, name.node, name.addr, 0x10000, "gddr") == [
        CanonicalRange("gddr", 0x100000, 0x10000)
    ]
    assert sorted(after.mappings) == ["plan0.iommu", "plan1.smpt"]
    # the IOMMU maps the smpt space itself, so it hangs off that space
    assert after.mdb.parents["plan0.iommu"] == "smpt"
    assert after.mdb.parents["plan1.smpt"] == "buf"
    assert mon.check_static_security(after) == []


def test_plan_without_rights_is_rejected_by_monitor():
    net, conf = phi()
    st = mon.init_state(
        net,
        ["driver"],
        [("card", Name("gddr", 0), 0x10000)],
        [("driver", "card", [Right.GRANT]), ("driver", "smpt", [Right.MAP, Right.GRANT])],
        conf,
    )
    st = mon.retype(st, "driver", "card", mon.ObjectType.FRAME, 0, 0x10000, "buf")
    plan = q.dn_get_config_nodes(q.flatten(net, conf), "dma", "gddr")
    with pytest.raises(InsufficientRights):
        q.execute_plan(st, "driver", plan, "buf")


def test_two_card_plan():
    net, conf = compile_text(platform_text("dual_phi"))
    plan = q.dn_get_config_nodes(q.flatten(net, conf), "phi0.dma", "phi1.gddr")
    assert plan.facts() == "plan(phi0.dma,phi1.gddr,[phi0.iommu,phi1.smpt])."
    after, name = run_plan(net, conf, plan)
    assert resolve_range(after.net, name, plan.target.size) == [plan.target]


def test_already_reachable_gives_empty_plan():
    g = q.flatten(*topo("uniform"))
    plan = q.dn_get_config_nodes(g, "core0", "dram")
    assert plan.steps == () and plan.facts() == "plan(core0,dram,[])."
    assert resolve_range(g.net, plan.entry, plan.target.size) == [plan.target]


def test_private_memory_unreachable():
    g = q.flatten(*topo("private"))
    with pytest.raises(Unreachable):
        q.dn_get_config_nodes(g, "core0", "priv1")
    with pytest.raises(UnknownNode):
        q.dn_get_config_nodes(g, "core0", "nowhere")


def test_route_blocked_by_revisit_is_skipped():
    # c may translate into bus b or straight into m; the initiator only
    # reaches c through b, so going back through b would revisit it
    net = DecodingNet(
        [
            Node("i", (), (q.TranslateSegment(AddressRange(0, 0x10000), "b", 0),)),
            Node("b", (), (q.TranslateSegment(AddressRange(0, 0x10000), "c", 0),
                           q.TranslateSegment(AddressRange(0x10000, 0x10000), "m", 0))),
            Node("c"),
            Node("m", (AddressRange(0, 0x10000),)),
        ]
    )
    conf = {"c": q.ConfSpace(0x1000, ("b", "m"))}
    g = q.flatten(net, conf)
    assert g.edges["c"]["m"] == Edge(1, "m")
    plan = q.dn_get_config_nodes(g, "i", "m")
    assert plan.steps[0].via == "m"
    after, name = run_plan(net, conf, plan)
    assert resolve_range(after.net, name, plan.target.size) == [plan.target]
    # with b as the only way out of c the route can never be configured
    g2 = q.flatten(net, {"c": q.ConfSpace(0x1000, ("b",))})
    assert min_plan_cost(g2, "i", "m") == 1
    with pytest.raises(Unreachable):
        q.dn_get_config_nodes(g2, "i", "m")


def _pairs(g):
    srcs = sorted(v for v, k in g.kinds.items() if k == q.INITIATOR)
    dsts = sorted(v for v, k in g.kinds.items() if k != q.INITIATOR)
    return [(s, d) for s in srcs for d in dsts if s != d]


@given(st.integers(0, 2**32))
def test_plan_is_cheapest_realizable_path(seed):
    net, conf = random_planning_net(random.Random(seed))
    g = q.flatten(net, conf)
    for s, d in _pairs(g):
        want = best_realizable(g, s, d, lambda p: q.realize(g, p) is not None)
        try:
            plan = q.dn_get_config_nodes(g, s, d)
        except Unreachable:
            assert want is None
            continue
        assert (len(plan), plan.path) == want
        assert len(plan) >= min_plan_cost(g, s, d)


@given(st.integers(0, 2**32))
def test_plan_length_is_exact_minimum(seed):
    net, conf = random_planning_net(random.Random(seed))
    g = q.flatten(net, conf)
    for s, d in _pairs(g):
        try:
            got = len(q.dn_get_config_nodes(g, s, d))
        except Unreachable:
            got = None
        assert got == min_page_plan_cost(net, conf, s, d)


def test_flat_minimum_can_be_unattainable():
    # i0 reaches c0 only through b0 and b1, and c0 reaches m7 only through
    # b1 again, so the one-step flat route would revisit b1
    net, conf = random_planning_net(random.Random(56))
    g = q.flatten(net, conf)
    assert min_plan_cost(g, "i0", "m7") == 1
    assert min_page_plan_cost(net, conf, "i0", "m7") is None
    with pytest.raises(Unreachable):
        q.dn_get_config_nodes(g, "i0", "m7")


@given(st.integers(0, 2**32))
def test_plans_execute_through_monitor(seed):
    net, conf = random_planning_net(random.Random(seed))
    g = q.flatten(net, conf)
    for s, d in _pairs(g):
        if g.kinds[d] != q.MEMORY:
            continue
        try:
            plan = q.dn_get_config_nodes(g, s, d)
        except Unreachable:
            continue
        after, name = run_plan(net, conf, plan)
        assert q.dn_resolve_range(after.net, name.node, name.addr, plan.target.size, d) == [plan.target]
        assert mon.check_static_security(after) == []


# -- allocation --------------------------------------------------------------

def test_uniform_allocation_is_dram():
    g = q.flatten(*topo("uniform"))
    a = q.dn_get_allocation_range(g, "core0")
    assert a == q.Allocation("dram", AddressRange(0, 0x10000))
    assert a.facts() == "alloc(dram,0x0,0x10000)."


def test_private_allocation_of_other_core_fails():
    g = q.flatten(*topo("private"))
    with pytest.raises(NoAllocatableMemory):
        q.dn_get_allocation_range(g, "core0", "priv1")
    assert q.dn_get_allocation_range(g, "core0", "priv0").node == "priv0"


def test_single_node_allocates_itself():
    net = DecodingNet([Node("ram", (AddressRange(0x100, 0x200),))])
    g = q.flatten(net)
    assert q.dn_get_allocation_range(g, "ram") == q.Allocation("ram", AddressRange(0x100, 0x200))


def test_allocation_skips_used_memory():
    net, conf = topo("uniform")
    g = q.flatten(net, conf, {"dram": [AddressRange(0, 0x3000)]})
    assert q.dn_get_allocation_range(g, "core0", size=0x1000) == q.Allocation("dram", AddressRange(0x3000, 0x1000))
    with pytest.raises(NoAllocatableMemory):
        q.dn_get_allocation_range(g, "core0", size=0x20000)


def test_allocation_prefers_fewest_configured_spaces():
    g = q.flatten(*phi())
    assert q.dn_get_allocation_range(g, "dma").node == "dram"
    assert q.dn_get_allocation_range(g, "dma", "gddr").node == "gddr"


# -- resolve -----------------------------------------------------------------

def test_resolve_range_swapped_crosses_over():
    net, conf = topo("swapped")
    assert q.dn_resolve_range(net, "core0", 0x7000, 0x2000) == [
        CanonicalRange("dram", 0xf000, 0x1000),
        CanonicalRange("dram", 0x0, 0x1000),
    ]


def test_resolve_range_filter():
    g = q.flatten(*topo("private"))
    assert q.dn_resolve_range(g, "core0", 0x10000, 0x100, "priv0") == [CanonicalRange("priv0", 0, 0x100)]
    with pytest.raises(DestinationMismatch):
        q.dn_resolve_range(g, "core0", 0x0, 0x100, "priv0")


# -- cache -------------------------------------------------------------------

def test_invalidate_noop_is_identity():
    net, conf = phi()
    g = q.flatten(net, conf)
    assert q.invalidate_cache(g, [], net, conf) == g


def test_invalidate_after_map_and_revoke():
    net, conf = phi()
    plan = q.dn_get_config_nodes(q.flatten(net, conf), "dma", "gddr")
    after, _ = run_plan(net, conf, plan)
    before = mon.init_state(net, [], [], [], conf)
    g0 = q.flatten_state(before)
    g1 = q.invalidate_cache(g0, plan.spaces, after.net, q.state_spaces(after), q.state_used(after))
    assert g1 == q.flatten_state(after)
    assert g1 != g0
    revoked = mon.revoke(after, "k", "plan_frame")
    g2 = q.invalidate_cache(g1, plan.spaces, revoked.net, q.state_spaces(revoked), q.state_used(revoked))
    assert g2 == q.flatten_state(revoked)


def _changed(a, b):
    return {k for k in set(a.aspaces) | set(b.aspaces) if a.aspaces.get(k) != b.aspaces.get(k)}


@given(st.integers(0, 2**32))
def test_invalidate_matches_rebuild_under_fuzz(seed):
    rng = random.Random(seed)
    state = random_initial_state(rng)
    gen = OpGenerator(rng)
    g = q.flatten_state(state)
    for _ in range(25):
        try:
            nxt = tr.apply_op(state, gen(state))
        except AddrmonError:
            continue
        g = q.invalidate_cache(g, _changed(state, nxt), nxt.net, q.state_spaces(nxt), q.state_used(nxt))
        assert g == q.flatten_state(nxt)
        state = nxt


def test_planning_never_mutates_state():
    net, conf = phi()
    st0 = mon.init_state(net, [], [], [], conf)
    snapshot = copy.deepcopy(st0)
    g = q.flatten_state(st0)
    q.dn_get_config_nodes(g, "dma", "gddr")
    q.dn_get_allocation_range(g, "dma")
    assert st0 == snapshot
