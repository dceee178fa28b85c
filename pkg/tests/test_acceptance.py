"""End-to-end acceptance criteria.

Each test records PASS or FAIL in ``conftest.ACCEPTANCE`` (shown in the
terminal summary) and prints one line when run with ``-s``.
"""

import copy
import random
import time
from contextlib import contextmanager
from importlib import resources

import pytest

from addrmon import corpus
from addrmon import monitor as mon
from addrmon import query as q
from addrmon import trace as tr
from addrmon.codegen import emit_facts, emit_translation_table
from addrmon.decoding_net import ADDRESS_LIMIT, Name, parse_facts, resolve, resolve_range, well_formed
from addrmon.dsl import TOPOLOGIES, builtin_source, compile_text
from addrmon.errors import AddrmonError, ResolutionError, Unreachable

from conftest import ACCEPTANCE
from fuzz import OpGenerator, build_tree, random_initial_state, run_plan
from oracles import (
    best_realizable,
    interval_oracle,
    min_page_plan_cost,
    min_plan_cost,
    random_net,
    random_planning_net,
    walk_oracle,
)

pytestmark = pytest.mark.acceptance

DATA = resources.files("addrmon") / "data"


@contextmanager
def criterion(k: int, title: str):
    try:
        yield
    except BaseException:
        ACCEPTANCE[k] = ("FAIL", title)
        print(f"\ncriterion {k}: FAIL  {title}")
        raise
    ACCEPTANCE[k] = ("PASS", title)
    print(f"\ncriterion {k}: PASS  {title}")


def outcome(net, name):
    try:
        return resolve(net, name)
    except ResolutionError as e:
        return e.code


# -- 1 -----------------------------------------------------------------------

def test_1_topology_suite():
    window, d, p = 1 << 16, 0x8000, 0x4000
    h = d // 2
    with criterion(1, "built-in topologies satisfy their predicates over a 2^16 window"):
        t0 = time.perf_counter()
        for kind in TOPOLOGIES:
            net, _ = compile_text(builtin_source(kind, d, p))
            assert well_formed(net) == []
            r0 = [outcome(net, Name("core0", a)) for a in range(window)]
            r1 = [outcome(net, Name("core1", a)) for a in range(window)]
            swapped, private = "swapped" in kind, kind.startswith("private")
            if swapped:
                # crossed halves: core0 sees at A what core1 sees at A + half
                assert all(r0[a] == r1[(a + h) % d] for a in range(d))
                assert r0[:h] == r1[h:d] and r0[h:d] == r1[:h]
            else:
                assert r0[:d] == r1[:d]
            if private:
                seen0 = {n.node for n in r0 if isinstance(n, Name)}
                seen1 = {n.node for n in r1 if isinstance(n, Name)}
                assert "priv0" in seen0 and "priv0" not in seen1
                assert "priv1" in seen1 and "priv1" not in seen0
            if not swapped and not private:
                assert r0 == r1
            assert all(isinstance(x, Name) and x.node == "dram" for x in r0[:d] + r1[:d])
            assert not any(isinstance(x, Name) for x in r0[d + (p if private else 0):])
        elapsed = time.perf_counter() - t0
        assert elapsed < 10, elapsed


# -- 2 -----------------------------------------------------------------------

def test_2_mapping_trace():
    text = (DATA / "traces" / "mapping_trace.txt").read_text()
    lines = text.splitlines()
    net, conf = compile_text(builtin_source("uniform"))

    def check(t):
        return tr.check_text(net, conf, t)

    with criterion(2, "mapping trace validates, prefixes validate, removed rights reject at the right line"):
        assert str(check(text)) == "VALID"
        for k in range(len(lines) + 1):
            assert isinstance(check("\n".join(lines[:k])), tr.Valid), k
        # dropping either grant makes the first use of that memory fail
        grants = [i for i, l in enumerate(lines) if l.startswith("init acm")]
        assert len(grants) == 2
        for i in grants:
            mutated = lines[:i] + ["# removed"] + lines[i + 1:]
            obj = lines[i].split()[3]
            first_use = next(j for j in range(i + 1, len(lines)) if f" {obj} " in lines[j] + " ")
            v = check("\n".join(mutated))
            assert isinstance(v, tr.Rejected) and v.code == "InsufficientRights"
            assert v.lineno == first_use + 1


# -- 3 -----------------------------------------------------------------------

def test_3_bug_corpus():
    with criterion(3, "bug corpus rejects every scenario; guards are what reject"):
        scenarios = corpus.builtin_corpus()
        assert len(scenarios) >= 9
        for cls in corpus.CLASSES:
            assert sum(sc.cls == cls for sc in scenarios) >= 3, cls
        for sc in scenarios:
            r = corpus.run_scenario(sc)
            assert r.actual.startswith("REJECTED") and r.passed, r.diff()
            if sc.guarded:
                assert r.unguarded != sc.expect


# -- 4 -----------------------------------------------------------------------

def test_4_oracle_equivalence():
    nets, window = 500, 1 << 12
    with criterion(4, f"resolve and resolve_range match the walker on {nets} random nets"):
        rng = random.Random(4)
        t0 = time.perf_counter()
        for k in range(nets):
            net = random_net(rng, max_nodes=20, max_segments=8, dag=k % 2 == 0)
            start = rng.choice(sorted(net))
            want = [walk_oracle(net, Name(start, a)) for a in range(window)]
            for a, (kind, end) in enumerate(want):
                got = outcome(net, Name(start, a))
                assert got == (end if kind == "accepted" else kind.capitalize()), (k, start, a)
            bad = next((a for a, w in enumerate(want) if w[0] != "accepted"), window)
            if bad:
                flat = [Name(r.node, r.base + i) for r in resolve_range(net, Name(start, 0), bad) for i in range(r.size)]
                assert flat == [w[1] for w in want[:bad]]
            if bad < window:
                with pytest.raises(ResolutionError) as e:
                    resolve_range(net, Name(start, 0), window)
                assert e.value.name == Name(start, bad)
        elapsed = time.perf_counter() - t0
        assert elapsed < 60, elapsed


# -- 5 -----------------------------------------------------------------------

def test_5_dynamic_security():
    total = 10_000
    with criterion(5, f"{total} fuzzed monitor operations preserve security"):
        rng = random.Random(5)
        t0 = time.perf_counter()
        done = accepted = 0
        while done < total:
            state = random_initial_state(rng)
            assert mon.check_static_security(state) == []
            gen = OpGenerator(rng)
            for _ in range(100):
                op = gen(state)
                snapshot = copy.deepcopy(state)
                done += 1
                try:
                    nxt = tr.apply_op(state, op)
                except AddrmonError:
                    assert state == snapshot
                    continue
                accepted += 1
                assert mon.check_static_security(nxt) == [], op
                state = nxt
        assert accepted > total // 10
        elapsed = time.perf_counter() - t0
        assert elapsed < 120, elapsed


# -- 6 -----------------------------------------------------------------------

def test_6_plan_minimality_and_soundness():
    with criterion(6, "plans are minimal and make the destination reachable"):
        net, conf = compile_text((DATA / "platforms" / "xeon_phi.dsl").read_text())
        g = q.flatten(net, conf)
        plan = q.dn_get_config_nodes(g, "dma", "gddr")
        assert plan.spaces == ["iommu", "smpt"]
        after, entry = run_plan(net, conf, plan)
        assert q.dn_resolve_range(after.net, "dma", entry.addr, plan.target.size, "gddr") == [plan.target]

        pairs = executed = 0
        for seed in range(150):
            net, conf = random_planning_net(random.Random(seed))
            g = q.flatten(net, conf)
            assert len(g.vertices) <= 15
            srcs = sorted(v for v, k in g.kinds.items() if k == q.INITIATOR)
            dsts = sorted(v for v, k in g.kinds.items() if k != q.INITIATOR)
            for s in srcs:
                for d in dsts:
                    if s == d:
                        continue
                    pairs += 1
                    exact = min_page_plan_cost(net, conf, s, d)
                    try:
                        plan = q.dn_get_config_nodes(g, s, d)
                    except Unreachable:
                        assert exact is None, (seed, s, d)
                        continue
                    assert len(plan) == exact, (seed, s, d)
                    assert len(plan) >= min_plan_cost(g, s, d)
                    assert (len(plan), plan.path) == best_realizable(g, s, d, lambda p: q.realize(g, p) is not None)
                    if g.kinds[d] == q.MEMORY:
                        after, entry = run_plan(net, conf, plan)
                        got = q.dn_resolve_range(after.net, entry.node, entry.addr, plan.target.size, d)
                        assert got == [plan.target]
                        assert mon.check_static_security(after) == []
                        executed += 1
        assert pairs > 1000 and executed > 300


# -- 7 -----------------------------------------------------------------------

def _mentions(st, ids):
    hits = set()
    for asid, sp in st.aspaces.items():
        hits |= {asid, sp.backing} & ids
        hits |= set(sp.mappings) & ids
    for mid, m in st.mappings.items():
        hits |= {mid, m.aspace, m.target} & ids
        hits |= set(m.depends_on) & ids
    for s, o in st.acm.entries():
        hits |= {o} & ids
    hits |= set(st.acm.objects) & ids
    hits |= set(st.mdb.parents) & ids
    hits |= {p for p in st.mdb.parents.values() if p} & ids
    for n in st.net.nodes.values():
        hits |= {n.id, n.overlay} & ids
        hits |= {s.dst_node for s in n.segments} & ids
    return hits


def test_7_revoke_completeness():
    with criterion(7, "revoke leaves no reference to deleted entries"):
        rng = random.Random(7)
        checked = 0
        for _ in range(25):
            st = build_tree(rng, max_entries=200)
            assert len(st.mdb.parents) <= 200
            inner = sorted(i for i in st.mdb.parents if st.mdb.children(i))
            for victim in rng.sample(inner, min(4, len(inner))):
                if victim not in st.objects and victim not in st.aspaces:
                    continue
                holders = sorted(s for s, rs in st.acm.columns(victim) if mon.Right.GRANT in rs)
                if not holders:
                    continue
                gone = {victim, *st.mdb.descendants(victim)}
                after = mon.revoke(st, holders[0], victim)
                assert _mentions(after, gone) == set()
                assert well_formed(after.net) == []
                assert mon.check_static_security(after) == []
                checked += 1
        assert checked >= 25


# -- 8 -----------------------------------------------------------------------

def test_8_codegen_agreement():
    platforms = sorted(p.name for p in (DATA / "platforms").iterdir() if p.name.endswith(".dsl"))
    with criterion(8, "translation tables agree with resolution; facts round-trip"):
        rng = random.Random(8)
        for name in platforms:
            net, conf = compile_text((DATA / "platforms" / name).read_text())
            back, back_conf = parse_facts(emit_facts(net, conf))
            assert back == net and back_conf == conf
            for n in net:
                t = emit_translation_table(net, n)
                rows = [(e.local.base, e.local.size, "accepted", e.canonical) for e in t.entries]
                rows += [(x.local.base, x.local.size, x.reason, None) for x in t.gaps]
                # the interval walker gives the outcome of every address of every piece
                assert sorted(rows, key=lambda r: r[0]) == interval_oracle(net, n, 0, ADDRESS_LIMIT)
                for e in t.entries:
                    lo, hi = e.local.base, e.local.end
                    for a in {lo, hi - 1, *(rng.randrange(lo, hi) for _ in range(50))}:
                        assert t.lookup(a) == resolve(net, Name(n, a))


# -- 9 -----------------------------------------------------------------------

def test_9_planning_time():
    with criterion(9, "planning on a 50-vertex graph takes under 100 ms"):
        worst = 0.0
        for seed in range(5):
            net, conf = random_planning_net(random.Random(seed), counts=(4, 20, 26, 0))
            g = q.flatten(net, conf)
            assert len(g.vertices) == 50
            for s in sorted(v for v, k in g.kinds.items() if k == q.INITIATOR):
                for d in sorted(v for v, k in g.kinds.items() if k == q.MEMORY):
                    t0 = time.perf_counter()
                    try:
                        q.dn_get_config_nodes(g, s, d)
                    except Unreachable:
                        pass
                    worst = max(worst, time.perf_counter() - t0)
        assert worst < 0.1, worst
