"""Exact piecewise-affine machinery and value iteration on known games."""

import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtg.model import GameError, Interval, parse_game
from wtg.regions import build_region_game
from wtg.analysis import classify_values, prune_game
from wtg.values import (
    INF,
    PA,
    apply_F,
    extract_cells,
    initial_value_map,
    is_inf,
    pa_envelope,
    value_iterate,
    suffix_extremum,
)

from oracles import grid_error_bound, grid_values


@pytest.fixture(scope="module")
def fig1_solved(figure1):
    rg = build_region_game(figure1)
    pruned = prune_game(rg, classify_values(rg))
    vm, trace = value_iterate(pruned)
    return figure1, rg, pruned, vm, trace


# -- PA basics -------------------------------------------------------------


def test_polyline_eval_and_limits():
    pa = PA.polyline([(0, 1), (2, 3), (3, 3)])
    assert pa.eval(0) == 1
    assert pa.eval(F(1, 2)) == F(3, 2)
    assert pa.eval(2) == 3
    assert pa.eval(3) == 3
    assert pa.limit(2, "left") == 3
    assert pa.limit(2, "right") == 3
    with pytest.raises(GameError):
        pa.eval(4)
    with pytest.raises(GameError):
        pa.limit(0, "left")


def test_jump_values_survive_refine_and_canonical():
    # value at the breakpoint differs from both side limits
    pa = PA((F(0), F(1), F(2)), (F(0), F(5), F(0)), ((F(0), F(0)), (F(0), F(0))))
    assert pa.eval(1) == 5
    assert pa.limit(1, "left") == 0 and pa.limit(1, "right") == 0
    refined = pa.refine([F(1, 2), F(3, 2)])
    assert refined.eval(1) == 5 and refined.eval(F(1, 2)) == 0
    assert refined.canonical().eval(1) == 5
    # a removable breakpoint goes away
    smooth = PA.polyline([(0, 0), (1, 1), (2, 2)]).canonical()
    assert smooth.xs == (F(0), F(2))


def test_combine_inserts_crossing():
    a = PA.affine(0, 3, -2, 3)
    b = PA.affine(0, 3, 1, 1)
    low = a.combine(b, "min")
    assert F(2, 3) in low.xs
    assert low.eval(F(2, 3)) == F(5, 3)
    assert low.eval(0) == 1 and low.eval(3) == -3
    high = a.combine(b, "max")
    assert high.eval(0) == 3 and high.eval(3) == 4


def test_envelope_spec_examples():
    dom = Interval(F(0), F(3))
    env = pa_envelope([(dom, (F(-2), F(3))), (dom, (F(0), F(1)))], "min")
    assert env.xs == (F(0), F(1), F(3))
    env = pa_envelope([(dom, (F(-2), F(3))), (dom, (F(1), F(1)))], "min")
    assert env.xs == (F(0), F(2, 3), F(3))


def test_envelope_partial_fragments():
    # max over fragments defined on different spans ignores the gaps
    left = (Interval(F(0), F(2)), (F(1), F(0)))
    right = (Interval(F(1), F(3)), (F(0), F(1)))
    env = pa_envelope([left, right], "max")
    assert env.eval(F(1, 2)) == F(1, 2)
    assert env.eval(F(3, 2)) == F(3, 2)
    assert env.eval(F(5, 2)) == 1


def test_envelope_vs_pointwise_min_random_points():
    rnd = random.Random(7)
    dom = Interval(F(0), F(3))
    frags = [(dom, (F(rnd.randint(-4, 4)), F(rnd.randint(-6, 6)))) for _ in range(9)]
    env = pa_envelope(frags, "min")
    for _ in range(10000):
        x = F(rnd.randint(0, 3 * 97), 97)
        want = min(s * x + c for _, (s, c) in frags)
        assert env.eval(x) == want


# -- suffix extremum against a brute-force oracle ---------------------------


def _brute_suffix(g: PA, x, b, mode):
    """ext of g over [x, b): exact, from values and one-sided limits."""
    cands = [g.eval(x), g.limit(x, "right"), g.limit(b, "left")]
    for t in g.xs:
        if x < t < b:
            cands += [g.eval(t), g.limit(t, "left"), g.limit(t, "right")]
    finite = [c for c in cands if not is_inf(c)]
    if mode == "max":
        return INF if any(is_inf(c) for c in cands) else max(finite)
    return min(finite) if finite else INF


@st.composite
def random_pa(draw):
    # fixed domain [0, 3] so any two draws can be enveloped together
    interior = draw(
        st.sets(
            st.fractions(min_value=F(1, 8), max_value=F(23, 8), max_denominator=8),
            max_size=3,
        )
    )
    xs = sorted({F(0), F(3)} | interior)
    pieces, vals = [], []
    for _ in range(len(xs) - 1):
        if draw(st.integers(min_value=0, max_value=6)) == 0:
            pieces.append(INF)
        else:
            s = draw(st.integers(min_value=-3, max_value=3))
            c = draw(st.fractions(min_value=-4, max_value=4, max_denominator=4))
            pieces.append((F(s), F(c)))
    for _ in range(len(xs)):
        if draw(st.integers(min_value=0, max_value=9)) == 0:
            vals.append(INF)
        else:
            vals.append(draw(st.fractions(min_value=-5, max_value=5, max_denominator=4)))
    return PA(tuple(xs), tuple(vals), tuple(pieces))


@settings(max_examples=200, deadline=None)
@given(random_pa(), st.booleans(), st.fractions(min_value=0, max_value=1, max_denominator=16))
def testsuffix_extremum_match_brute_force(g, use_max, frac):
    mode = "max" if use_max else "min"
    a, b = g.xs[0], g.xs[-1]
    if b - a < F(1, 8):
        return
    h = suffix_extremum(g, a, b, mode)
    # sample strictly inside (a, b), including h's own breakpoints
    probes = {a + (b - a) * F(k, 7) for k in range(1, 7)}
    probes |= {x for x in h.xs if a < x < b}
    probes.add(a + (b - a) * max(frac, F(1, 16)) * F(15, 16))
    for x in probes:
        if not a < x < b:
            continue
        assert h.eval(x) == _brute_suffix(g, x, b, mode), (x, mode)


@settings(max_examples=120, deadline=None)
@given(random_pa(), random_pa(), st.booleans())
def test_combine_matches_pointwise(p, q, use_max):
    mode = "max" if use_max else "min"
    r = p.combine(q, mode)
    probes = set(p.xs) | set(q.xs) | set(r.xs)
    probes |= {(x0 + x1) / 2 for x0, x1 in zip(sorted(probes), sorted(probes)[1:])}
    for x in probes:
        pv, qv = p.eval(x), q.eval(x)
        if mode == "max":
            want = INF if (is_inf(pv) or is_inf(qv)) else max(pv, qv)
        else:
            finite = [v for v in (pv, qv) if not is_inf(v)]
            want = min(finite) if finite else INF
        assert r.eval(x) == want


# -- hand-solved one-location games -----------------------------------------


def _single_loc_game(owner, rate, guard, weight):
    return parse_game(
        {
            "clocks": ["x"],
            "clock_bound": 2,
            "locations": [
                {"name": "a", "owner": owner, "rate": rate, "target": False},
                {"name": "t", "owner": "min", "rate": 0, "target": True},
            ],
            "transitions": [
                {"from": "a", "to": "t", "guard": guard, "reset": [], "weight": weight}
            ],
        }
    )


@pytest.mark.parametrize(
    "owner,rate,guard,expected",
    [
        # Min pays rate 1 while waiting for the window [1, 2]
        (
            "min",
            1,
            [{"clock": "x", "op": "ge", "const": 1}, {"clock": "x", "op": "le", "const": 2}],
            PA.polyline([(0, 1), (1, 0), (2, 0)]),
        ),
        # Max with a negative rate leaves immediately
        (
            "max",
            -1,
            [{"clock": "x", "op": "le", "const": 2}],
            PA.constant(0, 2, F(0)),
        ),
        # Max with a positive rate waits until the deadline
        (
            "max",
            2,
            [{"clock": "x", "op": "le", "const": 2}],
            PA.polyline([(0, 4), (2, 0)]),
        ),
        # Min escapes once the strict window opens: infimum not attained, and
        # at x = 2 the window is already empty, so the value blows up there
        (
            "min",
            3,
            [{"clock": "x", "op": "gt", "const": 1}, {"clock": "x", "op": "lt", "const": 2}],
            PA((F(0), F(1), F(2)), (F(3), F(0), INF), ((F(-3), F(3)), (F(0), F(0)))),
        ),
    ],
)
def test_single_transition_games_solved_by_hand(owner, rate, guard, expected):
    game = _single_loc_game(owner, rate, guard, 0)
    rg = build_region_game(game)
    vm, trace = value_iterate(prune_game(rg, classify_values(rg)))
    got = vm.per_location[0]
    assert got.equals(expected), (got.canonical(), expected.canonical())
    assert trace.converged


# -- Figure 1 ----------------------------------------------------------------


def test_figure1_l4_exact_polyline(fig1_solved):
    game, _, _, vm, _ = fig1_solved
    pa = vm.per_location[game.loc_index("l4")]
    assert pa.equals(PA.polyline([(0, 1), (2, 3), (3, 3)]))


def test_figure1_l2_constant_one(fig1_solved):
    game, _, _, vm, _ = fig1_solved
    pa = vm.per_location[game.loc_index("l2")]
    assert pa.equals(PA.constant(0, 3, F(1)))


def test_figure1_l1_infinite_then_zero(fig1_solved):
    game, _, _, vm, _ = fig1_solved
    pa = vm.per_location[game.loc_index("l1")]
    for x in (0, F(1, 2), 1):
        assert is_inf(pa.eval(x))
    for x in (F(9, 8), 2, F(5, 2), 3):
        assert pa.eval(x) == 0


def test_figure1_one_step_red_curve(figure1):
    rg = build_region_game(figure1)
    v1 = apply_F(rg, initial_value_map(rg))
    pa = v1.per_location[figure1.loc_index("l2")]
    assert pa.equals(PA.polyline([(0, 3), (1, 1), (3, 1)]))


def test_figure1_fixpoint_and_monotone_iterates(figure1):
    rg = build_region_game(figure1)
    pruned = prune_game(rg, classify_values(rg))
    vm, trace = value_iterate(pruned, keep_snapshots=True)
    again = apply_F(pruned, vm)
    for a, b in zip(again.per_location, vm.per_location):
        assert a.equals(b)
    # iterates only ever come down from +oo
    for prev, nxt in zip(trace.snapshots, trace.snapshots[1:]):
        for p_prev, p_nxt in zip(prev.per_location, nxt.per_location):
            assert p_nxt.leq(p_prev)


def test_figure1_fixpoint_pointwise_with_limits(fig1_solved):
    game, _, pruned, vm, _ = fig1_solved
    again = apply_F(pruned, vm)
    rnd = random.Random(3)
    for li in range(len(game.locations)):
        p, q = vm.per_location[li], again.per_location[li]
        for _ in range(200):
            x = F(rnd.randint(0, 3 * 64), 64)
            assert p.eval(x) == q.eval(x)
        for x in set(p.xs) | set(q.xs):
            if x > 0:
                assert p.limit(x, "left") == q.limit(x, "left")
            if x < 3:
                assert p.limit(x, "right") == q.limit(x, "right")


def test_figure1_value_bound(fig1_solved):
    game, _, pruned, vm, _ = fig1_solved
    cap = game.weight_bounds().edge_max * len(pruned)
    for pa in vm.per_location:
        for v in pa.canonical().vals:
            if not is_inf(v):
                assert abs(v) <= cap


def test_figure1_matches_grid_oracle(fig1_solved):
    game, _, _, vm, _ = fig1_solved
    grid = grid_values(game)
    err = grid_error_bound(game)
    checked = 0
    for name in ("l1", "l2", "l3", "l4"):
        li = game.loc_index(name)
        pa = vm.per_location[li]
        for k, ov in enumerate(grid[li]):
            x = F(k, 64)
            mv = pa.eval(x)
            if ov is None:
                # within-horizon blowup: the exact value is infinite here
                assert is_inf(mv), (name, x)
            else:
                assert not is_inf(mv)
                assert abs(mv - ov) <= err, (name, x, mv, ov)
                checked += 1
    assert checked > 400


def test_extract_cells_figure1(fig1_solved):
    game, _, _, vm, _ = fig1_solved
    cells = extract_cells(vm)
    l4 = game.loc_index("l4")
    assert cells.breakpoints[l4] == (F(0), F(2), F(3))
    assert vm.per_location[l4].finite_segment_count() == 2
    assert cells.alpha_cells == 2


# -- guardrails --------------------------------------------------------------


def test_multi_clock_rejected():
    game = parse_game(
        {
            "clocks": ["x", "y"],
            "clock_bound": 1,
            "locations": [
                {"name": "a", "owner": "min", "rate": 1, "target": False},
                {"name": "t", "owner": "min", "rate": 0, "target": True},
            ],
            "transitions": [
                {
                    "from": "a",
                    "to": "t",
                    "guard": [{"clock": "x", "op": "le", "const": 1}],
                    "reset": [],
                    "weight": 0,
                }
            ],
        }
    )
    rg = build_region_game(game)
    with pytest.raises(GameError) as exc:
        apply_F(rg, initial_value_map(rg))
    assert exc.value.kind == "multi_clock"


def test_no_convergence_reports_residual(figure1):
    rg = build_region_game(figure1)
    pruned = prune_game(rg, classify_values(rg))
    with pytest.raises(GameError) as exc:
        value_iterate(pruned, max_iters=1)
    assert exc.value.kind == "no_convergence"
    assert "residual" in exc.value.detail
