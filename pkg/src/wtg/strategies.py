"""Strategy synthesis: near-optimal, attractor, switching and mixtures.

Deterministic memoryless strategies are tables of (cell, transition, delay
rule), cells being intervals on which the converged value function is
affine.  Delay rules are symbolic so one entry serves every clock value in
its cell: fire now, fire at an exact point, or fire near an open bound
with a slack small enough to stay within the requested optimality margin.
The switching strategy glues a near-optimal table to an attractor table
at a step threshold; the stochastic mixture plays both at once.
"""

from __future__ import annotations

import random
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction

from .analysis import FINITE, NEGATIVE, buchi_strategy
from .model import (
    MAX,
    MIN,
    Game,
    GameError,
    Interval,
    apply_edge,
    parse_rational,
    rational_str,
)
from .regions import Region, RegionGame, region_of, some_delay_into
from .values import (
    INF,
    PA,
    ValueMap,
    edge_objective,
    extract_cells,
    is_inf,
    region_extremum,
    suffix_extremum,
)


def _err(kind: str, detail: str) -> GameError:
    return GameError(kind, detail, stage="strategies")


# -- delay rules -------------------------------------------------------------


@dataclass(frozen=True)
class DelayRule:
    """Symbolic delay: how long to wait before firing, given the clock.

    kinds:
      immediate          fire with delay 0
      to_point           wait until the clock reads `point` exactly
      to_point_interior  aim just inside an open bound: fire when the clock
                         reads point -/+ min(slack, half the gap to anchor),
                         the sign depending on `side`; from clock values
                         already past that reading, fire at once (the
                         realized cost error only shrinks there)
    """

    kind: str
    point: Fraction | None = None
    slack: Fraction | None = None
    side: str = "below"
    anchor: Fraction | None = None

    @staticmethod
    def immediate() -> "DelayRule":
        return DelayRule("immediate")

    @staticmethod
    def to_point(point) -> "DelayRule":
        return DelayRule("to_point", point=Fraction(point))

    @staticmethod
    def interior(point, slack, side, anchor) -> "DelayRule":
        if slack <= 0:
            raise _err("bad_slack", f"slack must be positive, got {slack}")
        return DelayRule(
            "to_point_interior",
            point=Fraction(point),
            slack=Fraction(slack),
            side=side,
            anchor=Fraction(anchor),
        )

    def firing_clock(self) -> Fraction:
        """Clock reading this rule aims for (pointed rules only)."""
        if self.kind == "to_point":
            return self.point
        if self.kind != "to_point_interior":
            raise _err("no_firing_point", "immediate rules have no firing clock")
        gap = abs(self.point - self.anchor)
        step = min(self.slack, gap / 2)
        return self.point - step if self.side == "below" else self.point + step

    def delay_from(self, x) -> Fraction:
        x = Fraction(x)
        if self.kind == "immediate":
            return Fraction(0)
        if self.kind == "to_point":
            if x > self.point:
                raise _err("late_for_point", f"clock {x} already past {self.point}")
            return self.point - x
        return max(Fraction(0), self.firing_clock() - x)

    def to_json(self) -> dict:
        if self.kind == "immediate":
            return {"rule": "immediate"}
        if self.kind == "to_point":
            return {"rule": "to_point", "point": rational_str(self.point)}
        return {
            "rule": "to_point_interior",
            "point": rational_str(self.point),
            "slack": rational_str(self.slack),
            "side": self.side,
            "anchor": rational_str(self.anchor),
        }

    @staticmethod
    def from_json(raw: dict) -> "DelayRule":
        kind = raw.get("rule")
        if kind == "immediate":
            return DelayRule.immediate()
        if kind == "to_point":
            return DelayRule.to_point(parse_rational(raw["point"]))
        if kind == "to_point_interior":
            return DelayRule.interior(
                parse_rational(raw["point"]),
                parse_rational(raw["slack"]),
                raw.get("side", "below"),
                parse_rational(raw["anchor"]),
            )
        raise _err("bad_rule", f"unknown delay rule {kind!r}")


@dataclass(frozen=True)
class UniformSegment:
    """Continuous delay: fire at a clock reading drawn uniformly on [lo, hi].

    Draws below the current clock collapse to firing at once, matching the
    point rules' late fallback.  Tree walkers cannot enumerate these; they
    exist for sampled play and for densities in expectation integrals.
    """

    lo: Fraction
    hi: Fraction

    kind = "uniform_segment"

    def delay_from(self, x, u) -> Fraction:
        draw = Fraction(self.lo) + (Fraction(self.hi) - Fraction(self.lo)) * Fraction(u)
        return max(Fraction(0), draw - Fraction(x))

    def to_json(self) -> dict:
        return {
            "rule": "uniform_segment",
            "lo": rational_str(Fraction(self.lo)),
            "hi": rational_str(Fraction(self.hi)),
        }


def parse_delay(raw: dict):
    if raw.get("rule") == "uniform_segment":
        return UniformSegment(parse_rational(raw["lo"]), parse_rational(raw["hi"]))
    return DelayRule.from_json(raw)


@dataclass(frozen=True)
class Atom:
    """One weighted choice inside a cell."""

    prob: Fraction
    trans_idx: int
    rule: DelayRule | UniformSegment
    origin: str = "s1"  # which component strategy contributed this atom


@dataclass(frozen=True)
class StrategyCell:
    loc_idx: int
    interval: Interval  # degenerate (point) cells allowed
    atoms: tuple[Atom, ...]


class CellStrategy:
    """Lookup table from (location, clock) to a distribution of actions."""

    kind = "stochastic"

    def __init__(self, game: Game, cells):
        self.game = game
        self.by_loc: dict[int, list[StrategyCell]] = {}
        for cell in cells:
            total = sum(a.prob for a in cell.atoms)
            if total != 1:
                raise _err("bad_distribution", f"cell atoms sum to {total}, not 1")
            self.by_loc.setdefault(cell.loc_idx, []).append(cell)
        for lst in self.by_loc.values():
            lst.sort(key=lambda c: (c.interval.lo, c.interval.hi))

    def cells(self):
        for li in sorted(self.by_loc):
            yield from self.by_loc[li]

    def cell_at(self, loc_idx: int, x) -> StrategyCell:
        x = Fraction(x)
        for cell in self.by_loc.get(loc_idx, []):
            if cell.interval.contains(x):
                return cell
        raise _err(
            "no_cell",
            f"no action for location {self.game.location(loc_idx).name} at clock {x}",
        )

    def decide(self, config, steps: int):
        loc_idx, valuation = config
        x = valuation[0]
        cell = self.cell_at(loc_idx, x)
        if any(isinstance(a.rule, UniformSegment) for a in cell.atoms):
            raise _err(
                "continuous_delay",
                "cell mixes in a continuous delay component; enumerate-style "
                "callers must use sampling instead",
            )
        return [(a.prob, a.trans_idx, a.rule.delay_from(x)) for a in cell.atoms]

    def sample(self, config, steps: int, rnd) -> tuple[int, Fraction]:
        """One concrete (transition, delay) draw; handles continuous parts."""
        loc_idx, valuation = config
        x = Fraction(valuation[0])
        cell = self.cell_at(loc_idx, x)
        atom = cell.atoms[-1]
        if len(cell.atoms) > 1:
            u = Fraction(rnd.getrandbits(53), 1 << 53)
            acc = Fraction(0)
            for a in cell.atoms:
                acc += a.prob
                if u < acc:
                    atom = a
                    break
        if isinstance(atom.rule, UniformSegment):
            v = Fraction(rnd.getrandbits(53), 1 << 53)
            return atom.trans_idx, atom.rule.delay_from(x, v)
        return atom.trans_idx, atom.rule.delay_from(x)

    def to_json(self) -> dict:
        cells = []
        for cell in self.cells():
            iv = cell.interval
            cells.append(
                {
                    "location": self.game.location(cell.loc_idx).name,
                    "interval": {
                        "lo": rational_str(iv.lo),
                        "hi": rational_str(iv.hi),
                        "lo_open": iv.lo_open,
                        "hi_open": iv.hi_open,
                    },
                    "atoms": [
                        {
                            "prob": rational_str(a.prob),
                            "transition": a.trans_idx,
                            "delay": a.rule.to_json(),
                            "origin": a.origin,
                        }
                        for a in cell.atoms
                    ],
                }
            )
        out = {"kind": self.kind, "cells": cells}
        owner = getattr(self, "owner", None)
        if owner is not None:
            out["owner"] = owner
        return out


class MemorylessDetStrategy(CellStrategy):
    """Single-atom cells; optionally carries an attractor rank certificate.

    `owner` records whose guarantee the table certifies; the table itself
    may also store certificate entries for the opponent's states (the
    attractor strategy does), which mixed-play walkers never consult.
    """

    kind = "deterministic"

    def __init__(self, game: Game, cells, ranks=None, owner=None):
        for cell in cells:
            if len(cell.atoms) != 1 or cell.atoms[0].prob != 1:
                raise _err("not_deterministic", "deterministic cells hold one sure atom")
        super().__init__(game, cells)
        self.ranks = ranks
        self.owner = owner

    def action(self, loc_idx: int, x) -> tuple[int, DelayRule]:
        atom = self.cell_at(loc_idx, x).atoms[0]
        return atom.trans_idx, atom.rule


class StochasticStrategy(CellStrategy):
    kind = "stochastic"


@dataclass
class SwitchingStrategy:
    """Play the near-optimal table, then the attractor table from step K."""

    sigma1: MemorylessDetStrategy
    sigma2: MemorylessDetStrategy
    K: int

    def decide(self, config, steps: int):
        table = self.sigma1 if steps < self.K else self.sigma2
        return table.decide(config, steps)

    def to_json(self) -> dict:
        return {
            "kind": "switching",
            "K": self.K,
            "sigma1": self.sigma1.to_json(),
            "sigma2": self.sigma2.to_json(),
        }


def parse_strategy(game: Game, raw: dict):
    kind = raw.get("kind")
    if kind == "switching":
        return SwitchingStrategy(
            parse_strategy(game, raw["sigma1"]),
            parse_strategy(game, raw["sigma2"]),
            int(raw["K"]),
        )
    cells = []
    for c in raw.get("cells", []):
        ivr = c["interval"]
        iv = Interval(
            parse_rational(ivr["lo"]),
            parse_rational(ivr["hi"]),
            bool(ivr.get("lo_open", False)),
            bool(ivr.get("hi_open", False)),
        )
        atoms = tuple(
            Atom(
                parse_rational(a["prob"]),
                int(a["transition"]),
                parse_delay(a["delay"]),
                a.get("origin", "s1"),
            )
            for a in c["atoms"]
        )
        cells.append(StrategyCell(game.loc_index(c["location"]), iv, atoms))
    if kind == "deterministic":
        return MemorylessDetStrategy(game, cells, owner=raw.get("owner"))
    return StochasticStrategy(game, cells)


# -- cell validity ------------------------------------------------------------


def _interval_covers(outer: Interval, inner: Interval) -> bool:
    lo_ok = outer.lo < inner.lo or (outer.lo == inner.lo and (not outer.lo_open or inner.lo_open))
    hi_ok = outer.hi > inner.hi or (outer.hi == inner.hi and (not outer.hi_open or inner.hi_open))
    return lo_ok and hi_ok and not inner.is_empty()


def check_strategy_cells(game: Game, strat) -> list[str]:
    """Violations of 'every atom's rule is enabled on its whole cell'."""
    if isinstance(strat, SwitchingStrategy):
        return check_strategy_cells(game, strat.sigma1) + check_strategy_cells(game, strat.sigma2)
    clock = game.clocks[0]
    bad = []
    for cell in strat.cells():
        iv = cell.interval
        loc = game.location(cell.loc_idx)
        for atom in cell.atoms:
            guard = game.transitions[atom.trans_idx].guard_interval(clock, game.clock_bound)
            rule = atom.rule
            where = f"{loc.name} {iv} -> transition {atom.trans_idx}"
            if rule.kind == "uniform_segment":
                span = Interval(rule.lo, max(rule.hi, iv.hi), False, iv.hi > rule.hi and iv.hi_open)
                if not _interval_covers(guard, span):
                    bad.append(f"{where}: uniform span {span} violates guard {guard}")
            elif rule.kind == "immediate":
                if not _interval_covers(guard, iv):
                    bad.append(f"{where}: guard {guard} does not cover the cell")
            elif rule.kind == "to_point":
                if not guard.contains(rule.point):
                    bad.append(f"{where}: point {rule.point} violates guard {guard}")
                if rule.point < iv.hi:
                    bad.append(f"{where}: point {rule.point} unreachable from {iv}")
            else:
                u = rule.firing_clock()
                if not guard.contains(u):
                    bad.append(f"{where}: firing clock {u} violates guard {guard}")
                # clock values past the firing point fall back to delay 0
                if iv.hi > u:
                    late = Interval(u, iv.hi, True, iv.hi_open)
                    if not _interval_covers(guard, late):
                        bad.append(f"{where}: late part {late} violates guard {guard}")
    return bad


# -- attainment: turning an extremum into a concrete delay ---------------------


def _gap_slope(g: PA, x, side: str) -> Fraction:
    """Slope of g on the open gap to one side of x (0 where infinite)."""
    if side == "right":
        i = bisect_right(g.xs, x) - 1
    else:
        i = bisect_left(g.xs, x) - 1
    i = min(max(i, 0), len(g.pieces) - 1)
    p = g.pieces[i]
    return Fraction(0) if is_inf(p) else p[0]


def _interior_rule(point, cap, side, anchor, tol, slope) -> DelayRule:
    """Aim near `point` from one side, within tol/2 of the limit there."""
    if tol <= 0:
        raise _err(
            "empty_arg_inf",
            "the extremum is approached but never attained; a positive "
            "optimality margin is required to pick a concrete delay",
        )
    slack = tol / (2 * (1 + abs(slope)))
    return DelayRule.interior(point, min(slack, cap), side, anchor)


def _attain_rule(g: PA, win_lo, win_hi, lo_closed: bool, target, tol, floor_anchor) -> DelayRule:
    """Delay rule firing in [win_lo, win_hi) where g reads `target`.

    `target` must be the extremum of g over that window under one-sided
    limit semantics: attainment then only happens at the closed left end,
    at breakpoints, or on constant pieces, and otherwise the extremum is a
    one-sided limit at a breakpoint or at the right end.  Interior rules
    keep the firing clock within the affine piece adjacent to the approach
    point so the realized error stays below tol/2; `floor_anchor` bounds
    below-side rules away from clock values the rule must still serve.
    """
    if lo_closed and win_lo < win_hi and g.eval(win_lo) == target:
        return DelayRule.to_point(win_lo)
    for t in g.xs:
        if win_lo < t < win_hi and g.eval(t) == target:
            return DelayRule.to_point(t)
    for i, p in enumerate(g.pieces):
        if is_inf(p) or p[0] != 0 or p[1] != target:
            continue
        lo = max(win_lo, g.xs[i])
        hi = min(win_hi, g.xs[i + 1])
        if lo < hi:
            return DelayRule.to_point((lo + hi) / 2)
    # the window start counts as an approach point too; below-side firing
    # there is allowed only when valid firing points extend below it, which
    # floor_anchor < win_lo marks (own-region windows, never later regions)
    approach_pts = [win_lo] + [t for t in g.xs if win_lo < t < win_hi] + [win_hi]
    for pt in approach_pts:
        if pt > floor_anchor and g.limit(pt, "left") == target:
            anchor = floor_anchor
            for t in g.xs:
                if anchor < t < pt:
                    anchor = t
            return _interior_rule(
                pt, (pt - anchor) / 2, "below", anchor, tol, _gap_slope(g, pt, "left")
            )
        if pt < win_hi and g.limit(pt, "right") == target:
            ceil = win_hi
            for t in g.xs:
                if pt < t < win_hi:
                    ceil = t
                    break
            return _interior_rule(
                pt, (ceil - pt) / 2, "above", ceil, tol, _gap_slope(g, pt, "right")
            )
    raise _err("no_attainment", f"extremum {target} not located in [{win_lo}, {win_hi})")


def _rule_for_const_region(g: PA, grd: Region, target, tol) -> DelayRule:
    """Rule attaining (or tol/2-approaching) the extremum over a later region."""
    iv = grd.interval(0)
    if iv.is_point():
        return DelayRule.to_point(iv.lo)
    return _attain_rule(g, iv.lo, iv.hi, False, target, tol, iv.lo)


def _rule_for_suffix(g: PA, h: PA, region_iv: Interval, cell: Interval, tol) -> DelayRule:
    """Rule realizing the wait-within-own-region extremum on one cell.

    On each cell the suffix envelope h either coincides with g (extremum
    at the current clock: fire now) or is constant (extremum further
    right: one firing point serves the whole cell).
    """
    c_lo, c_hi = _affine_on_cell(h, cell)
    g_lo, g_hi = _affine_on_cell(g, cell)
    if (c_lo, c_hi) == (g_lo, g_hi):
        return DelayRule.immediate()
    assert c_lo == c_hi, "suffix pieces are either the objective or constant"
    return _attain_rule(g, cell.hi, region_iv.hi, True, c_lo, tol, cell.lo)


# -- arg-inf / arg-sup synthesis ----------------------------------------------


def _cells_of_region(region: Region, cuts) -> list[Interval]:
    iv = region.interval(0)
    if iv.is_point():
        return [iv]
    inner = sorted(x for x in set(cuts) if iv.lo < x < iv.hi)
    points = [iv.lo, *inner, iv.hi]
    out = []
    for x0, x1 in zip(points, points[1:]):
        out.append(Interval(x0, x1, True, True))
    for x in inner:
        out.append(Interval(x, x, False, False))
    out.sort(key=lambda c: (c.lo, c.hi))
    return out


def _affine_on_cell(pa: PA, cell: Interval):
    """(value at lo, value at hi), one-sided limits on open cells."""
    if cell.is_point():
        v = pa.eval(cell.lo)
        return v, v
    return pa.limit(cell.lo, "right"), pa.limit(cell.hi, "left")


def _matches(c_lo, c_hi, v_lo, v_hi) -> bool:
    if is_inf(c_lo) or is_inf(c_hi):
        return False
    return c_lo == v_lo and c_hi == v_hi


def _synth_argopt(rg: RegionGame, vm: ValueMap, eps: Fraction, K: int, player: str, vm_next=None):
    """Per-cell choices exactly matching the converged one-step backup.

    Selection is exact: on every cell of the refinement at least one
    (edge, guard region) candidate agrees with the value function, because
    the backup is the min (resp. max) of finitely many functions affine
    there.  The eps/K margin is spent only on realizing choices whose
    extremum is a one-sided limit rather than an attained value.

    With vm_next the successor values come from a different table than the
    one being matched, which turns the fixed-point argopt into one stage of
    a finite-horizon backup (vm must then equal the backup of vm_next).
    """
    game = rg.game
    succ = vm if vm_next is None else vm_next
    eps = Fraction(eps)
    if eps < 0:
        raise _err("bad_eps", "optimality margin must be nonnegative")
    if K <= 0:
        raise _err("bad_K", f"per-step budget divisor must be positive, got {K}")
    tol = eps / K
    mode = "min" if player == MIN else "max"
    cells_out = []
    for si, state in enumerate(rg.states):
        loc = game.location(state.loc_idx)
        if loc.is_target or loc.owner != player:
            continue
        region = state.region
        region_iv = region.interval(0)
        v_pa = vm.per_location[state.loc_idx]
        probe = region_iv.lo if region_iv.is_point() else region_iv.midpoint()
        if is_inf(v_pa.eval(probe)):
            continue  # infinite-valued states get whole-region cells elsewhere
        rate = loc.rate
        cuts = set(x for x in v_pa.xs if region_iv.lo < x < region_iv.hi)
        cands = []  # (trans_idx, guard region, kind, payload, g) in priority order
        for ei in rg.out[si]:
            edge = rg.transitions[ei]
            g = edge_objective(rg, succ, edge)
            for grd in edge.guard_regions:
                if grd == region:
                    if region_iv.is_point():
                        cands.append((edge.trans_idx, grd, "point", g.eval(region_iv.lo), g))
                    else:
                        h = suffix_extremum(g, region_iv.lo, region_iv.hi, mode)
                        cands.append((edge.trans_idx, grd, "pa", h, g))
                        cuts.update(x for x in h.xs if region_iv.lo < x < region_iv.hi)
                else:
                    cands.append((edge.trans_idx, grd, "const", region_extremum(g, grd, mode), g))
        if not cands:
            raise _err("dead_state", f"no moves at {loc.name} {region}")
        for cell in _cells_of_region(region, cuts):
            v_lo, v_hi = _affine_on_cell(v_pa, cell)
            if is_inf(v_lo) or is_inf(v_hi):
                continue
            chosen = None
            fallback = None  # first valid limit-approach realization
            unattained = False
            for ti, grd, kind, payload, g in cands:
                if kind == "point":
                    c_lo = c_hi = INF if is_inf(payload) else payload - rate * cell.lo
                elif kind == "const":
                    if is_inf(payload):
                        c_lo = c_hi = INF
                    else:
                        c_lo = payload - rate * cell.lo
                        c_hi = payload - rate * cell.hi
                else:
                    h_lo, h_hi = _affine_on_cell(payload, cell)
                    c_lo = INF if is_inf(h_lo) else h_lo - rate * cell.lo
                    c_hi = INF if is_inf(h_hi) else h_hi - rate * cell.hi
                if not _matches(c_lo, c_hi, v_lo, v_hi):
                    continue
                try:
                    if kind == "point":
                        rule = DelayRule.immediate()
                    elif kind == "const":
                        rule = _rule_for_const_region(g, grd, payload, tol)
                    else:
                        rule = _rule_for_suffix(g, payload, region_iv, cell, tol)
                except GameError as e:
                    if e.kind == "empty_arg_inf":
                        unattained = True
                        continue
                    raise
                sc = StrategyCell(state.loc_idx, cell, (Atom(Fraction(1), ti, rule, "s1"),))
                if rule.kind != "to_point_interior":
                    chosen = sc  # exact attainment beats any earlier approach rule
                    break
                if fallback is None:
                    fallback = sc
            if chosen is None:
                chosen = fallback
            if chosen is None:
                if unattained:
                    raise _err(
                        "empty_arg_inf",
                        f"the one-step extremum at {loc.name} {cell} is only "
                        "approached in the limit; pass a positive margin",
                    )
                raise _err(
                    "no_optimal_edge",
                    f"no transition realizes the value at {loc.name} {cell} "
                    "(is the value map converged?)",
                )
            cells_out.append(chosen)
    return cells_out


def synth_sigma1(rg: RegionGame, vm: ValueMap, cls, eps, K: int) -> MemorylessDetStrategy:
    """Near-optimal memoryless table for the minimizer.

    On finite-valued cells picks a one-step choice within eps/K of the
    converged backup; on cells whose value is -oo (present only when an
    unpruned game is supplied) follows the cycling strategy that drives
    the weight below any bound.
    """
    cells = _synth_argopt(rg, vm, Fraction(eps), K, MIN)
    cells.extend(_infinite_label_cells(rg, cls, MIN))
    return MemorylessDetStrategy(rg.game, cells, owner=MIN)


def synth_max_memoryless(rg: RegionGame, vm: ValueMap, cls, eps) -> MemorylessDetStrategy:
    """Near-optimal memoryless table for the maximizer.

    The per-step budget divisor is the N-free switching bound, so the
    whole table stays eps-close along plays of any length the switching
    analysis considers.
    """
    alpha = extract_cells(vm).alpha_cells
    K_max = compute_K(rg.game.weight_bounds(), len(rg), len(rg.game.locations), alpha, 0)
    cells = _synth_argopt(rg, vm, Fraction(eps), K_max, MAX)
    cells.extend(_infinite_label_cells(rg, cls, MAX))
    return MemorylessDetStrategy(rg.game, cells, owner=MAX)


def _first_region_rule(rg: RegionGame, state_region: Region, edge) -> DelayRule:
    """Deterministic concrete delay into an edge's earliest guard region."""
    grd = edge.guard_regions[0]
    iv = grd.interval(0)
    if grd == state_region:
        return DelayRule.immediate()
    if iv.is_point():
        return DelayRule.to_point(iv.lo)
    return DelayRule.interior(iv.hi, (iv.hi - iv.lo) / 2, "below", iv.lo)


def _infinite_label_cells(rg: RegionGame, cls, player: str):
    """Whole-region actions for states outside the finite part.

    Minimizer cells on -oo states follow the certified cycling strategy;
    anything else infinite-valued gets a deterministic filler edge so the
    table stays total on the supplied game.
    """
    if cls is None:
        return []
    game = rg.game
    cells = []
    cycling = buchi_strategy(rg, cls) if (player == MIN and cls.minus) else {}
    for si, state in enumerate(rg.states):
        loc = game.location(state.loc_idx)
        if loc.is_target or loc.owner != player or cls.labels[si] == FINITE:
            continue
        if si in cycling:
            edge = rg.transitions[cycling[si]]
        elif rg.out[si]:
            edge = rg.transitions[rg.out[si][0]]
        else:
            continue
        rule = _first_region_rule(rg, state.region, edge)
        cells.append(
            StrategyCell(
                state.loc_idx,
                state.region.interval(0),
                (Atom(Fraction(1), edge.trans_idx, rule, "s1"),),
            )
        )
    return cells


# -- attractor strategy --------------------------------------------------------


def synth_attractor(rg: RegionGame) -> MemorylessDetStrategy:
    """Reach the targets within one pass of the region game.

    Ranks are the classic attractor levels: minimizer states step to a
    lower rank, maximizer states cannot avoid doing so.  Every conforming
    play reaches a target within max-rank steps.  The table is total, with
    maximizer entries recording the rank-worst reply as part of the
    certificate; mixed-play walkers consult minimizer entries only.
    """
    game = rg.game
    ranks: dict[int, int] = {si: 0 for si in range(len(rg)) if rg.is_target(si)}
    choice: dict[int, int] = {}
    changed = True
    while changed:
        changed = False
        for si in range(len(rg)):
            if si in ranks:
                continue
            pick, pick_rank = None, None
            succ_ranks = []
            complete = True
            for ei in rg.out[si]:
                dst = rg.transitions[ei].dst
                if dst in ranks:
                    succ_ranks.append(ranks[dst])
                    if pick_rank is None or ranks[dst] < pick_rank:
                        pick, pick_rank = ei, ranks[dst]
                else:
                    complete = False
            if not succ_ranks:
                continue
            if rg.owner(si) == MIN:
                ranks[si] = 1 + pick_rank
                choice[si] = pick
                changed = True
            elif complete:
                ranks[si] = 1 + max(succ_ranks)
                choice[si] = max(
                    rg.out[si], key=lambda ei: ranks[rg.transitions[ei].dst]
                )
                changed = True
    missing = [si for si in range(len(rg)) if si not in ranks]
    if missing:
        st = rg.states[missing[0]]
        raise _err(
            "unreachable_state",
            f"{game.location(st.loc_idx).name} {st.region} cannot be forced "
            "to the targets; prune the game first",
        )
    cells = []
    for si, state in enumerate(rg.states):
        if si not in choice:
            continue
        edge = rg.transitions[choice[si]]
        rule = _first_region_rule(rg, state.region, edge)
        cells.append(
            StrategyCell(
                state.loc_idx,
                state.region.interval(0),
                (Atom(Fraction(1), edge.trans_idx, rule, "s2"),),
            )
        )
    return MemorylessDetStrategy(game, cells, ranks=ranks, owner=MIN)


# -- switching parameter and thresholds -----------------------------------------


def compute_K(bounds, rg_size: int, n_locations: int, alpha_cells: int, N: int) -> int:
    """Switching step bound from the game's measured quantities."""
    if min(rg_size, n_locations, alpha_cells) < 0 or N < 0:
        raise _err("bad_K_inputs", "all switching-bound inputs must be nonnegative")
    we, r, l, a = bounds.edge_max, rg_size, n_locations, alpha_cells
    return (we * r * (l * a + 2) + N) * (r * (l * a + 1) + 1)


def make_switching(sigma1, sigma2, K: int) -> SwitchingStrategy:
    return SwitchingStrategy(sigma1, sigma2, K)


@dataclass(frozen=True)
class PThreshold:
    """Mixture weight above which the stochastic table inherits the
    switching guarantee; exact, with the individual lower bounds kept."""

    value: Fraction
    components: dict
    K: int

    def summary(self) -> dict:
        out = {
            "K": self.K,
            "components": {k: rational_str(v) for k, v in self.components.items()},
        }
        if len(str(self.value.denominator)) <= 40:
            out["value"] = rational_str(self.value)
        else:
            # astronomically close to 1: report a readable distance instead
            import math

            gap = 1 - self.value
            exp10 = math.floor(math.log10(gap.numerator) - math.log10(gap.denominator))
            out["value"] = f"1 - about 10^{exp10}"
            out["one_minus_value_numerator_digits"] = len(str(gap.numerator))
        return out


def compute_p_threshold(dv_sigma, eps, K: int, bounds) -> PThreshold:
    dv = Fraction(dv_sigma)
    eps = Fraction(eps)
    if eps <= 0:
        raise _err("bad_eps", "threshold needs a positive epsilon")
    we = bounds.edge_max
    pow2 = Fraction(2) ** K
    slack_term = Fraction(1) / (1 + eps / (4 * pow2 * K * we))
    comps = {"slack": slack_term, "half": Fraction(1, 2)}
    best = max(slack_term, Fraction(1, 2))
    if dv < -Fraction(5, 4) * eps:
        negative_term = pow2 / (pow2 + 1 - (dv + Fraction(5, 4) * eps) / (dv + eps))
        comps["negative_case"] = negative_term
        best = max(best, negative_term)
    return PThreshold(best, comps, K)


# -- stochastic mixture ----------------------------------------------------------


def build_eta_p(sw: SwitchingStrategy, rg: RegionGame, signs, p) -> StochasticStrategy:
    """Mix the two tables: in negative components the minimizer hedges.

    Cells inside negative-signed components take the near-optimal action
    with probability p and the attractor action with probability 1-p; all
    other cells keep the near-optimal action surely.  When both tables
    agree on transition and rule the atoms recombine into one.  `rg` must
    be the region game `signs` was computed on (states are looked up by
    location and region, so a differently pruned game would misindex).
    """
    p = Fraction(p)
    if not 0 < p < 1:
        raise _err("bad_mixture", f"mixture weight must be in (0,1), got {p}")
    game = rg.game
    cells = []
    for cell in sw.sigma1.cells():
        iv = cell.interval
        probe = iv.lo if iv.is_point() else iv.midpoint()
        region = region_of((probe,), game.clock_bound)
        si = rg.state_index.get((cell.loc_idx, region))
        a1 = cell.atoms[0]
        negative = si is not None and signs.sign_of_state(rg, si) == NEGATIVE
        if not negative:
            cells.append(
                StrategyCell(cell.loc_idx, iv, (Atom(Fraction(1), a1.trans_idx, a1.rule, "s1"),))
            )
            continue
        t2, r2 = sw.sigma2.action(cell.loc_idx, probe)
        if (t2, r2) == (a1.trans_idx, a1.rule):
            atoms = (Atom(Fraction(1), a1.trans_idx, a1.rule, "both"),)
        else:
            atoms = (
                Atom(p, a1.trans_idx, a1.rule, "s1"),
                Atom(1 - p, t2, r2, "s2"),
            )
        cells.append(StrategyCell(cell.loc_idx, iv, atoms))
    return StochasticStrategy(game, cells)


# -- simple adversaries and the empirical switching bound -------------------------


class RandomAdversary:
    """Seeded maximizer: uniform over region edges, midpoint delays.

    Stateful across calls (one fresh draw per decision), so it is meant
    for sampled trajectories, not exhaustive tree walks.
    """

    def __init__(self, rg: RegionGame, seed: int, player: str = MAX):
        self.rg = rg
        self.player = player
        self.rnd = random.Random(seed)

    def decide(self, config, steps: int):
        loc_idx, valuation = config
        rg = self.rg
        si = rg.state_of(loc_idx, valuation)
        if not rg.out[si]:
            raise _err("dead_state", f"adversary stuck at state {si}")
        ei = self.rnd.choice(rg.out[si])
        edge = rg.transitions[ei]
        grd = self.rnd.choice(edge.guard_regions)
        return [(Fraction(1), edge.trans_idx, some_delay_into(grd, valuation))]


def empirical_switch_K(
    rg: RegionGame,
    sigma1: MemorylessDetStrategy,
    runs: int = 40,
    max_steps: int = 240,
    seed: int = 0,
) -> int:
    """Observed analogue of the switching step bound.

    Samples near-optimal play against random adversaries and returns four
    times (one plus) the longest observed region-state cycle whose weight
    stayed above -1.  The closed-form bound is astronomically conservative;
    this one is for experiments and is reported alongside it, never
    substituted into a guarantee.
    """
    game = rg.game
    rnd = random.Random(seed)
    starts = [si for si in range(len(rg)) if not rg.is_target(si)]
    worst = 1
    for run in range(runs):
        si = starts[rnd.randrange(len(starts))]
        state = rg.states[si]
        iv = state.region.interval(0)
        x = iv.lo if iv.is_point() else iv.lo + (iv.hi - iv.lo) * Fraction(rnd.randrange(1, 97), 97)
        config = (state.loc_idx, (x,))
        adversary = RandomAdversary(rg, seed * 1009 + run)
        seen: list[tuple[int, Fraction]] = []
        cum = Fraction(0)
        for _ in range(max_steps):
            li, valuation = config
            if game.location(li).is_target:
                break
            here = rg.state_of(li, valuation)
            for pos, (past_idx, past_cum) in enumerate(seen):
                if past_idx == here and cum - past_cum > -1:
                    worst = max(worst, len(seen) - pos)
            seen.append((here, cum))
            decider = sigma1 if game.location(li).owner == MIN else adversary
            _, ti, delay = decider.decide(config, len(seen))[0]
            config, w = apply_edge(game, config, ti, delay)
            cum += w
    return 4 * (worst + 1)
