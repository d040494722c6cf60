"""Region abstraction, region game, corners, cycles."""

import random
from fractions import Fraction as F

import pytest

from oracles import sample_in_region
from wtg.model import GameError, parse_game
from wtg.regions import (
    Region,
    all_regions,
    build_region_game,
    corner_moves,
    cycle_weight_bounds,
    enumerate_simple_cycles,
    region_of,
    scc_decompose,
    successor_chain,
)

POINT = lambda k: Region((k,), (True,), ())
OPEN = lambda k: Region((k,), (False,), ((0,),))


def test_one_clock_region_catalog():
    regs = all_regions(1, 3)
    assert len(regs) == 7
    expected = {POINT(0), OPEN(0), POINT(1), OPEN(1), POINT(2), OPEN(2), POINT(3)}
    assert set(regs) == expected
    assert [str(r) for r in sorted(regs, key=Region.sort_key)] == [
        "{0}", "(0,1)", "{1}", "(1,2)", "{2}", "(2,3)", "{3}",
    ]


def test_region_of_and_contains():
    rng = random.Random(7)
    for region in all_regions(1, 3):
        for _ in range(50):
            v = sample_in_region(region, rng)
            assert region.contains(v)
            assert region_of(v, 3) == region
    assert region_of((F(5, 2),), 3) == OPEN(2)
    with pytest.raises(GameError):
        region_of((F(7, 2),), 3)


def test_time_successor_chain():
    chain = successor_chain(POINT(0), 3)
    assert [str(r) for r in chain] == ["{0}", "(0,1)", "{1}", "(1,2)", "{2}", "(2,3)", "{3}"]
    assert successor_chain(POINT(3), 3) == [POINT(3)]
    assert successor_chain(OPEN(2), 3) == [OPEN(2), POINT(3)]


def test_multi_clock_regions():
    regs = all_regions(2, 1)
    assert len(regs) == 11  # 4 corners + 4 open edges + 3 interior orderings
    interior = region_of((F(1, 3), F(2, 3)), 1)
    assert interior.order == ((0,), (1,))
    chain = successor_chain(interior, 1)
    # y reaches 1 first, then x
    assert chain[1].points == (False, True) and chain[1].floors == (0, 1)
    corners = set(interior.corners())
    assert corners == {(0, 0), (0, 1), (1, 1)}
    assert interior.reset([1]) == region_of((F(1, 3), F(0)), 1)


def test_empty_game_region_states():
    game = parse_game(
        '{"clocks": ["x"], "clock_bound": 3, "locations":'
        ' [{"name": "t", "owner": "min", "rate": 0, "target": true}], "transitions": []}'
    )
    rg = build_region_game(game)
    assert len(rg) == 7 and not rg.transitions


def test_figure1_region_game_shape(figure1):
    rg = build_region_game(figure1)
    assert len(rg) == 35
    l3 = figure1.loc_index("l3")
    for si, state in enumerate(rg.states):
        if state.loc_idx == l3:
            assert rg.is_target(si) and not rg.out[si]
        else:
            assert rg.out[si], f"deadlocked region state {si}"


def test_l5_loop_merges_guard_regions(figure1):
    rg = build_region_game(figure1)
    l5 = figure1.loc_index("l5")
    src = rg.state_index[(l5, OPEN(1))]
    loops = [
        e
        for ei in rg.out[src]
        for e in [rg.transitions[ei]]
        if rg.states[e.dst] == rg.states[rg.state_index[(l5, POINT(0))]]
        and figure1.transitions[e.trans_idx].target == "l5"
    ]
    assert len(loops) == 1
    assert [str(r) for r in loops[0].guard_regions] == ["(1,2)", "{2}", "(2,3)", "{3}"]


def test_guard_agreement_sampled(figure1):
    # valuations in one region satisfy exactly the same guards
    rng = random.Random(11)
    guards = [t.guard for t in figure1.transitions]
    for region in all_regions(1, 3):
        expected = [region.satisfies(g) for g in guards]
        for _ in range(200):
            v = sample_in_region(region, rng)
            assert [all(a.holds(v[0]) for a in g) for g in guards] == expected


def test_scc_structure(figure1):
    rg = build_region_game(figure1)
    scc = scc_decompose(rg)
    assert len(scc) == 35  # all singletons; the two loops are self-loops
    l1 = rg.state_index[(figure1.loc_index("l1"), POINT(0))]
    l5 = rg.state_index[(figure1.loc_index("l5"), POINT(0))]
    assert scc.component_of[l1] != scc.component_of[l5]
    # topological: every edge goes forward (or stays inside its component)
    for e in rg.transitions:
        assert scc.component_of[e.src] <= scc.component_of[e.dst]


def test_figure1_cycles(figure1):
    rg = build_region_game(figure1)
    found = {}
    for _, cyc in enumerate_simple_cycles(rg):
        state = rg.states[rg.transitions[cyc.edges[0]].src]
        name = figure1.location(state.loc_idx).name
        found[(name, str(state.region))] = (cyc.min_weight, cyc.max_weight)
    assert found == {("l1", "{0}"): (1, 3), ("l5", "{0}"): (-5, -1)}


def test_zero_rate_cycle_bounds():
    game = parse_game(
        """
        {"clocks": ["x"], "clock_bound": 3,
         "locations": [
           {"name": "a", "owner": "min", "rate": 0},
           {"name": "b", "owner": "max", "rate": 0},
           {"name": "t", "owner": "min", "rate": 0, "target": true}],
         "transitions": [
           {"from": "a", "to": "b", "guard": [{"clock": "x", "op": "le", "const": 3}], "reset": [], "weight": 2},
           {"from": "b", "to": "a", "guard": [{"clock": "x", "op": "le", "const": 3}], "reset": [], "weight": -1},
           {"from": "a", "to": "t", "guard": [{"clock": "x", "op": "le", "const": 3}], "reset": [], "weight": 0}]}
        """
    )
    rg = build_region_game(game)
    cycles = list(enumerate_simple_cycles(rg))
    # without resets a cycle cannot advance the region: one 2-cycle per region
    assert len(cycles) == 7
    assert all((c.min_weight, c.max_weight) == (1, 1) for _, c in cycles)


def test_cycle_sandwich_and_closure_bounds(figure1):
    from wtg.model import Play, cumulated_weight

    rg = build_region_game(figure1)
    l5 = figure1.loc_index("l5")
    (cycle,) = [c for _, c in enumerate_simple_cycles(rg) if rg.transitions[c.edges[0]].src == rg.state_index[(l5, POINT(0))]]
    loop_ti = rg.transitions[cycle.edges[0]].trans_idx
    rng = random.Random(3)
    weights = []
    for _ in range(200):
        t = F(1) + F(rng.randrange(1, 2000), 1000)  # t in (1, 3]
        w = cumulated_weight(figure1, Play((l5, (F(0),)), ((loop_ti, t),)))
        assert cycle.min_weight <= w <= cycle.max_weight
        weights.append(w)
    # closure corners attain the bounds: weight 1-2t at t=3 and t=1
    assert cycle.min_weight == 1 - 2 * 3
    assert cycle.max_weight == 1 - 2 * 1
    assert min(weights) > cycle.min_weight - 1 and max(weights) < cycle.max_weight + 1


def test_corner_moves_project(figure1):
    rg = build_region_game(figure1)
    for edge in rg.transitions:
        dst_corners = set(rg.states[edge.dst].region.corners())
        src_corners = set(rg.states[edge.src].region.corners())
        moves = list(corner_moves(rg, edge))
        assert moves
        for v, w, wt in moves:
            assert v in src_corners and w in dst_corners
            assert isinstance(wt, int)


def test_cycle_bounds_against_brute_force(figure1):
    # independent check: enumerate every corner-to-corner delay chain
    rg = build_region_game(figure1)
    for _, cyc in enumerate_simple_cycles(rg):
        edges = [rg.transitions[i] for i in cyc.edges]
        totals = []

        def extend(pos, corner, acc):
            if pos == len(edges):
                totals.append(acc)
                return
            for v, w, wt in corner_moves(rg, edges[pos]):
                if v == corner:
                    extend(pos + 1, w, acc + wt)

        for start in rg.states[edges[0].src].region.corners():
            extend(0, start, 0)
        assert (min(totals), max(totals)) == (cyc.min_weight, cyc.max_weight)


def test_cycle_cap(figure1):
    rg = build_region_game(figure1)
    with pytest.raises(GameError) as err:
        list(enumerate_simple_cycles(rg, cap=1))
    assert err.value.kind == "cycle_cap_exceeded"


def test_reachable_only_subset(figure1):
    full = build_region_game(figure1)
    reach = build_region_game(figure1, reachable_only=True)
    assert len(reach) < len(full)
    full_keys = set(full.state_index)
    assert set(reach.state_index) <= full_keys
    # every zero-valuation state is present
    for li in range(len(figure1.locations)):
        assert (li, POINT(0)) in reach.state_index
