"""Divergence, +oo / -oo classification, pruning, witness strategies."""

import json
import random
from fractions import Fraction as F

import pytest

from wtg.analysis import (
    FINITE,
    MINUS_INF,
    MIXED,
    NEGATIVE,
    PLUS_INF,
    POSITIVE,
    TRIVIAL,
    ValueClassification,
    attractor,
    avoidance_strategy,
    buchi_strategy,
    check_divergence,
    classify_values,
    prune_game,
)
from wtg.model import GameError, Play, cumulated_weight, parse_game, serialize_game
from wtg.regions import Region, build_region_game, some_delay_into

POINT = lambda k: Region((k,), (True,), ())


def variant(figure1, tweaks):
    doc = json.loads(serialize_game(figure1))
    for (src, dst), fields in tweaks.items():
        for t in doc["transitions"]:
            if t["from"] == src and t["to"] == dst:
                t.update(fields)
    return parse_game(json.dumps(doc))


def labels_by_location(rg, cls):
    out = {}
    for si, state in enumerate(rg.states):
        name = rg.game.location(state.loc_idx).name
        out.setdefault(name, {})[str(state.region)] = cls.labels[si]
    return out


def test_figure1_divergent(figure1):
    rg = build_region_game(figure1)
    report = check_divergence(rg)
    assert report.divergent and report.witness is None
    l1 = rg.state_index[(figure1.loc_index("l1"), POINT(0))]
    l5 = rg.state_index[(figure1.loc_index("l5"), POINT(0))]
    assert report.sign_of_state(rg, l1) == POSITIVE
    assert report.sign_of_state(rg, l5) == NEGATIVE
    others = set(report.signs) - {POSITIVE, NEGATIVE}
    assert others == {TRIVIAL}


def test_weight3_variant_witness(figure1):
    game = variant(figure1, {("l5", "l5"): {"weight": 3}})
    rg = build_region_game(game)
    report = check_divergence(rg)
    assert not report.divergent
    wit = report.witness
    assert wit.kind == "unsigned_cycle"
    assert (wit.min_weight, wit.max_weight) == (-3, 1)
    src = rg.transitions[wit.edges[0]].src
    assert rg.states[src].loc_idx == game.loc_index("l5")
    with pytest.raises(GameError) as err:
        classify_values(rg)
    assert err.value.kind == "not_divergent"


def test_acyclic_game_vacuously_divergent():
    game = parse_game(
        """
        {"clocks": ["x"], "clock_bound": 2,
         "locations": [
           {"name": "a", "owner": "min", "rate": 1},
           {"name": "t", "owner": "min", "rate": 0, "target": true}],
         "transitions": [
           {"from": "a", "to": "t", "guard": [{"clock": "x", "op": "le", "const": 2}], "reset": [], "weight": 0}]}
        """
    )
    rg = build_region_game(game)
    report = check_divergence(rg)
    assert report.divergent and set(report.signs) == {TRIVIAL}
    cls = classify_values(rg, report)
    assert set(cls.labels) == {FINITE}


def test_composed_witness():
    # two oppositely signed simple cycles in one SCC, no single unsigned one
    game = parse_game(
        """
        {"clocks": ["x"], "clock_bound": 3,
         "locations": [
           {"name": "a", "owner": "min", "rate": 0},
           {"name": "t", "owner": "min", "rate": 0, "target": true}],
         "transitions": [
           {"from": "a", "to": "a", "guard": [{"clock": "x", "op": "le", "const": 3}], "reset": ["x"], "weight": 2},
           {"from": "a", "to": "a", "guard": [{"clock": "x", "op": "le", "const": 3}], "reset": ["x"], "weight": -2},
           {"from": "a", "to": "t", "guard": [{"clock": "x", "op": "le", "const": 3}], "reset": [], "weight": 0}]}
        """
    )
    rg = build_region_game(game)
    report = check_divergence(rg)
    assert not report.divergent
    wit = report.witness
    assert wit.kind == "composed_cycle"
    assert wit.min_weight <= 0 <= wit.max_weight


def test_classification_figure1(figure1):
    rg = build_region_game(figure1)
    cls = classify_values(rg)
    by_loc = labels_by_location(rg, cls)
    assert by_loc["l1"] == {
        "{0}": PLUS_INF, "(0,1)": PLUS_INF, "{1}": PLUS_INF,
        "(1,2)": FINITE, "{2}": FINITE, "(2,3)": FINITE, "{3}": FINITE,
    }
    assert set(by_loc["l5"].values()) == {MINUS_INF}
    assert set(by_loc["l2"].values()) == {FINITE}
    assert set(by_loc["l4"].values()) == {FINITE}
    assert set(by_loc["l3"].values()) == {FINITE}


def test_attractor_is_fixpoint(figure1):
    rg = build_region_game(figure1)
    targets = [si for si in range(len(rg.states)) if rg.is_target(si)]
    attr = attractor(rg, targets, "min")
    assert attractor(rg, attr, "min") == attr


def test_prune_figure1(figure1):
    rg = build_region_game(figure1)
    cls = classify_values(rg)
    pruned = prune_game(rg, cls)
    assert len(pruned) == 25
    l4 = figure1.loc_index("l4")
    for si, state in enumerate(pruned.states):
        if state.loc_idx == l4:
            dests = {
                figure1.transitions[pruned.transitions[ei].trans_idx].target
                for ei in pruned.out[si]
            }
            assert dests == {"l3"}
    # idempotence: pruned game is all finite, pruning again changes nothing
    cls2 = classify_values(pruned)
    assert set(cls2.labels) == {FINITE}
    assert len(prune_game(pruned, cls2)) == len(pruned)


def test_prune_identity_when_all_finite():
    game = parse_game(
        """
        {"clocks": ["x"], "clock_bound": 2,
         "locations": [
           {"name": "a", "owner": "min", "rate": 1},
           {"name": "b", "owner": "max", "rate": -1},
           {"name": "t", "owner": "min", "rate": 0, "target": true}],
         "transitions": [
           {"from": "a", "to": "b", "guard": [{"clock": "x", "op": "le", "const": 2}], "reset": [], "weight": 1},
           {"from": "b", "to": "t", "guard": [{"clock": "x", "op": "le", "const": 2}], "reset": [], "weight": 0},
           {"from": "a", "to": "t", "guard": [{"clock": "x", "op": "le", "const": 2}], "reset": [], "weight": 0}]}
        """
    )
    rg = build_region_game(game)
    cls = classify_values(rg)
    assert set(cls.labels) == {FINITE}
    assert len(prune_game(rg, cls)) == len(rg)


def test_prune_error_when_nothing_remains():
    game = parse_game(
        """
        {"clocks": ["x"], "clock_bound": 2,
         "locations": [
           {"name": "a", "owner": "min", "rate": 0},
           {"name": "t", "owner": "min", "rate": 0, "target": true}],
         "transitions": [
           {"from": "a", "to": "a", "guard": [{"clock": "x", "op": "le", "const": 2}], "reset": ["x"], "weight": 1}]}
        """
    )
    rg = build_region_game(game)
    cls = classify_values(rg)
    assert set(cls.labels) == {PLUS_INF, FINITE}  # targets stay finite
    with pytest.raises(GameError) as err:
        prune_game(rg, cls)
    assert err.value.kind == "all_pruned"


def test_avoidance_strategy_never_reaches_target(figure1):
    # region-level walk: the region game abstracts reachability exactly, so
    # checking on region states covers all concrete plays with these choices
    rg = build_region_game(figure1)
    cls = classify_values(rg)
    avoid = avoidance_strategy(rg, cls)
    plus = cls.plus
    rng = random.Random(5)
    bound = 10 * len(rg)
    starts = sorted(plus)
    for trial in range(1000):
        si = starts[rng.randrange(len(starts))]
        for _ in range(bound):
            assert not rg.is_target(si)
            if rg.owner(si) == "max":
                ei = avoid[si]
            else:
                stay = [e for e in rg.out[si] if rg.transitions[e].dst in plus]
                assert stay, "Min escaped the +oo trap"
                ei = stay[rng.randrange(len(stay))]
            si = rg.transitions[ei].dst
        assert si in plus


def test_avoidance_strategy_concrete_plays(figure1):
    from oracles import sample_in_region
    from wtg.model import apply_edge

    rg = build_region_game(figure1)
    cls = classify_values(rg)
    avoid = avoidance_strategy(rg, cls)
    rng = random.Random(9)
    for _ in range(20):
        si = sorted(cls.plus)[rng.randrange(len(cls.plus))]
        state = rg.states[si]
        config = (state.loc_idx, sample_in_region(state.region, rng))
        for _ in range(30):
            edge = rg.transitions[avoid[si]]
            grd = edge.guard_regions[rng.randrange(len(edge.guard_regions))]
            t = some_delay_into(grd, config[1])
            config, _w = apply_edge(figure1, config, edge.trans_idx, t)
            si = edge.dst
            assert not rg.is_target(si)


def test_buchi_strategy_drives_weight_down(figure1):
    from oracles import sample_in_region
    from wtg.model import apply_edge

    rg = build_region_game(figure1)
    cls = classify_values(rg)
    sigma = buchi_strategy(rg, cls)
    wb = figure1.weight_bounds()
    n = 20
    step_bound = (n + wb.edge_max * len(rg)) * len(rg)
    rng = random.Random(13)
    for si in sorted(cls.minus):
        state = rg.states[si]
        config = (state.loc_idx, sample_in_region(state.region, rng))
        total = F(0)
        cur = si
        for _ in range(step_bound):
            edge = rg.transitions[sigma[cur]]
            grd = edge.guard_regions[0]
            t = some_delay_into(grd, config[1])
            config, w = apply_edge(figure1, config, edge.trans_idx, t)
            total += w
            cur = edge.dst
            if total <= -n:
                break
        assert total <= -n
