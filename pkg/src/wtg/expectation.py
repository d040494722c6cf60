"""Exact play-tree measures, certified truncation, best response, sampling.

Under strategies whose delays are point rules (Dirac atoms), the measure
over plays is a countable sum: every finite transition sequence carries an
exact rational probability and expected weight, computed by recursion on
the sequence.  Truncating the infinite sum is certified through geometric
decay of the alive mass: a strategy carrying constants (alpha, m) promises
that from any reachable prefix the target is hit within m steps with
probability at least alpha, against every opponent.  The decay constants
are certified structurally from the strategy's own table, never sampled.
The Monte Carlo estimator draws per-run generator streams from a splitmix
expansion of (seed, run index), so results do not depend on scheduling.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

from .model import (
    MAX,
    MIN,
    Config,
    Game,
    GameError,
    Interval,
    apply_edge,
)
from .regions import RegionGame, region_of
from .strategies import (
    CellStrategy,
    DelayRule,
    MemorylessDetStrategy,
    SwitchingStrategy,
    UniformSegment,
    _synth_argopt,
)
from .values import INF, PA, ValueMap, apply_F, is_inf

# A path is a sequence of game transition indices; the strategies supply
# the delays, so paths abstract plays the way guards abstract valuations.
Path = tuple


def _err(kind: str, detail: str) -> GameError:
    return GameError(kind, detail, stage="expectation")


def _act(game: Game, min_s, max_s, config: Config, steps: int):
    """Action distribution of whoever owns the current location."""
    strat = min_s if game.location(config[0]).owner == MIN else max_s
    if strat is None:
        raise _err("missing_strategy", f"no strategy for {game.location(config[0]).name}")
    return strat.decide(config, steps)


# -- exact path measures ---------------------------------------------------


@dataclass(frozen=True)
class PathProbability:
    path: Path
    prob: Fraction

    def __post_init__(self):
        assert 0 <= self.prob <= 1


@dataclass(frozen=True)
class PathExpectation:
    path: Path
    value: Fraction


def _measures(game, min_s, max_s, config, path, idx, steps, memo):
    """(prob, expected weight) of following path[idx:] from config.

    The expectation recursion charges each edge weight against the
    probability of completing the remaining suffix, so a path abandoned
    midway contributes nothing.
    """
    if idx == len(path):
        return Fraction(1), Fraction(0)
    if game.location(config[0]).is_target:
        return Fraction(0), Fraction(0)  # play stopped; longer paths unreachable
    key = (config, idx)
    hit = memo.get(key)
    if hit is not None:
        return hit
    p_total, e_total = Fraction(0), Fraction(0)
    for q, ti, delay in _act(game, min_s, max_s, config, steps):
        if q == 0 or ti != path[idx]:
            continue
        nxt, w = apply_edge(game, config, ti, delay)
        p_suf, e_suf = _measures(game, min_s, max_s, nxt, path, idx + 1, steps + 1, memo)
        p_total += q * p_suf
        e_total += q * (w * p_suf + e_suf)
    memo[key] = (p_total, e_total)
    return p_total, e_total


def path_probability(game: Game, start: Config, min_s, max_s, path, start_step: int = 0) -> PathProbability:
    """Exact probability of following the transition sequence from start.

    Both strategies must resolve to finitely many point-delay atoms at
    every prefix; a continuous delay component raises, because the exact
    engine only sums over atoms.
    """
    path = tuple(path)
    p, _ = _measures(game, min_s, max_s, start, path, 0, start_step, {})
    return PathProbability(path, p)


def path_expectation(game: Game, start: Config, min_s, max_s, path, start_step: int = 0) -> PathExpectation:
    """Exact expected cumulated weight carried by one transition sequence."""
    path = tuple(path)
    _, e = _measures(game, min_s, max_s, start, path, 0, start_step, {})
    return PathExpectation(path, e)


# -- decay constants and tail bounds ---------------------------------------


@dataclass(frozen=True)
class HypothesisConstants:
    """Certified decay pair: within m steps the target is hit w.p. >= alpha.

    The promise is uniform: it holds from every reachable prefix and
    against every opponent behavior, which is what makes the tail of the
    expectation series geometrically summable.
    """

    alpha: Fraction
    m: int

    def __post_init__(self):
        object.__setattr__(self, "alpha", Fraction(self.alpha))
        if not 0 < self.alpha <= 1:
            raise _err("bad_constants", f"decay probability {self.alpha} outside (0, 1]")
        if int(self.m) != self.m or self.m < 1:
            raise _err("bad_constants", f"window length {self.m} is not a positive integer")
        object.__setattr__(self, "m", int(self.m))


def _range_sum(a: int, b: int) -> Fraction:
    # sum of the integers in [a, b], zero when empty
    if b < a:
        return Fraction(0)
    return Fraction((a + b) * (b - a + 1), 2)


def tail_bound(c: HypothesisConstants, bounds, horizon: int):
    """Upper bound on the total weight mass carried past the horizon.

    Target paths of length j contribute at most j * w_edge per unit of
    probability, and the mass at length j decays like beta^(j // m) with
    beta = 1 - alpha.  Summing j * w_edge * beta^(j // m) over j > horizon
    in closed form: the partial block at the horizon's depth, then the
    full blocks via geometric and arithmetico-geometric series.
    """
    if horizon < 0:
        raise _err("bad_horizon", f"horizon must be nonnegative, got {horizon}")
    alpha, m = Fraction(c.alpha), int(c.m)
    if alpha <= 0:
        raise _err("no_tail_bound", "zero decay probability gives no summable tail")
    beta = 1 - alpha
    w = Fraction(bounds.edge_max)
    k0 = horizon // m
    partial = beta**k0 * _range_sum(horizon + 1, (k0 + 1) * m - 1)
    if beta == 0:
        return w * partial
    k1 = k0 + 1
    s_geo = beta**k1 / alpha
    s_lin = beta**k1 * (k1 * alpha + beta) / alpha**2
    return w * (partial + m * m * s_lin + Fraction(m * (m - 1), 2) * s_geo)


def _alive_tail_factor(c: HypothesisConstants, bounds, level: int):
    """Tail weight per unit of alive mass at the given level.

    Conditioned on still running after `level` steps, the mass alive k
    steps later is at most beta^(k // m); target paths of length
    level + 1 + k then carry at most (level + 1 + k) * w_edge each.
    Summed exactly via sum_k beta^(k//m) = m / alpha and
    sum_k k * beta^(k//m) = m^2 beta / alpha^2 + m(m-1) / (2 alpha).
    """
    alpha, m = Fraction(c.alpha), int(c.m)
    beta = 1 - alpha
    w = Fraction(bounds.edge_max)
    return w * (
        (level + 1) * Fraction(m) / alpha
        + m * m * beta / alpha**2
        + Fraction(m * (m - 1), 2) / alpha
    )


# -- structural certification of the decay constants -----------------------


class _ReachModel:
    """Worst-case target-reach probabilities on a finite clock partition.

    Cut points: the integers up to the clock bound, the strategy cell
    endpoints and every atom's firing clock.  On each atomic piece (a cut
    point, or an open interval between neighbours) the strategy's atoms
    move to a piece that does not depend on the exact clock value, so
    reach probabilities within k steps are piecewise constant.  Opponent
    moves are over-approximated: any guard-compatible piece at or beyond
    the current one counts, which can only lower the certified floor.
    When a region game is supplied, opponent moves keep to its states;
    the certificate then covers every opponent playing in that arena,
    which is where the table itself is defined.
    """

    def __init__(self, game: Game, min_s, rg: RegionGame | None = None):
        self.game = game
        self.min_s = min_s
        self.kept = None if rg is None else set(rg.state_index)
        bound = Fraction(game.clock_bound)
        pts = {Fraction(i) for i in range(game.clock_bound + 1)}
        if not hasattr(min_s, "cells"):
            raise _err(
                "no_cells",
                "structural certification needs a finite cell table, "
                f"got {type(min_s).__name__}",
            )
        for cell in min_s.cells():
            pts.add(max(Fraction(0), cell.interval.lo))
            pts.add(min(bound, cell.interval.hi))
            for atom in cell.atoms:
                if isinstance(atom.rule, UniformSegment):
                    raise _err(
                        "continuous_delay",
                        "structural certification needs point-delay atoms",
                    )
                if atom.rule.kind != "immediate":
                    fc = atom.rule.firing_clock()
                    if 0 <= fc <= bound:
                        pts.add(fc)
        self.points = sorted(pts)
        cells = []
        for a, b in zip(self.points, self.points[1:]):
            cells.append(Interval(a, a))
            cells.append(Interval(a, b, True, True))
        cells.append(Interval(bound, bound))
        self.cells = cells
        self.n_cells = len(cells)
        self.moves = {}  # node -> ("t",) | ("min", atoms) | ("max", options)
        self.rows = []  # rows[k][node] = certified reach floor within k steps
        self.rows.append([None] * (len(game.locations) * self.n_cells))

    def node(self, loc_idx: int, x: Fraction) -> int:
        return loc_idx * self.n_cells + self._cell_idx(Fraction(x))

    def _cell_idx(self, x: Fraction) -> int:
        lo, hi = 0, len(self.cells) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            c = self.cells[mid]
            if c.hi < x or (c.hi == x and c.hi_open):
                lo = mid + 1
            else:
                hi = mid
        return lo

    def _landing(self, cell: Interval, fire: Fraction) -> int:
        # from clock values past the firing point the rule fires at once
        if fire >= cell.hi:
            return self._cell_idx(fire)
        return self._cell_idx(cell.lo) if cell.is_point() else self._cell_idx(cell.midpoint())

    def _build_moves(self, node: int):
        game = self.game
        loc_idx, ci = divmod(node, self.n_cells)
        loc = game.location(loc_idx)
        cell = self.cells[ci]
        if loc.is_target:
            self.moves[node] = ("t",)
            return
        zero = 0  # the partition starts with the point piece at clock 0
        if loc.owner == MIN:
            probe = cell.lo if cell.is_point() else cell.midpoint()
            scell = self.min_s.cell_at(loc_idx, probe)
            atoms = []
            for atom in scell.atoms:
                trans = game.transitions[atom.trans_idx]
                dst = game.loc_index(trans.target)
                if atom.rule.kind == "immediate":
                    land = ci
                else:
                    land = self._landing(cell, atom.rule.firing_clock())
                nxt = dst * self.n_cells + (zero if trans.reset else land)
                atoms.append((atom.prob, nxt))
            self.moves[node] = ("min", tuple(atoms))
            return
        options = []
        for ti in game.transitions_from(loc_idx):
            trans = game.transitions[ti]
            giv = trans.guard_interval(game.clocks[0], game.clock_bound)
            dst = game.loc_index(trans.target)
            for cj, cand in enumerate(self.cells):
                if cand.hi < cell.lo or cand.intersect(giv).is_empty():
                    continue
                cl = zero if trans.reset else cj
                if not self._in_arena(dst, cl):
                    continue
                options.append(dst * self.n_cells + cl)
        self.moves[node] = ("max", tuple(set(options)))

    def _in_arena(self, loc_idx: int, cell_idx: int) -> bool:
        if self.kept is None:
            return True
        cell = self.cells[cell_idx]
        probe = cell.lo if cell.is_point() else cell.midpoint()
        reg = region_of((probe,), self.game.clock_bound)
        return (loc_idx, reg) in self.kept

    def successors(self, node: int):
        if node not in self.moves:
            self._build_moves(node)
        mv = self.moves[node]
        if mv[0] == "t":
            return ()
        if mv[0] == "min":
            return tuple(n for _, n in mv[1])
        return mv[1]

    def reachable(self, start_node: int):
        seen = {start_node}
        stack = [start_node]
        while stack:
            for nxt in self.successors(stack.pop()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    def floor(self, k: int, node: int) -> Fraction:
        """Certified lower bound on reaching the target within k steps."""
        while len(self.rows) <= k:
            self.rows.append([None] * len(self.rows[0]))
        row = self.rows[k]
        if row[node] is not None:
            return row[node]
        if node not in self.moves:
            self._build_moves(node)
        mv = self.moves[node]
        if mv[0] == "t":
            row[node] = Fraction(1)
            return row[node]
        if k == 0:
            row[node] = Fraction(0)
            return row[node]
        if mv[0] == "min":
            val = sum((q * self.floor(k - 1, n) for q, n in mv[1]), Fraction(0))
        elif mv[1]:
            val = min(self.floor(k - 1, n) for n in mv[1])
        else:
            val = Fraction(0)  # dead end: the opponent can stall forever
        row[node] = val
        return val


def hypothesis_constants(rg: RegionGame, min_s, start: Config, m: int | None = None) -> HypothesisConstants:
    """Certify decay constants for a point-delay strategy table.

    The window defaults to the region game size.  The floor is the worst
    certified m-step reach probability over every piece reachable from
    the start, minimized over all opponent behavior; a zero floor means
    the table cannot promise termination and is rejected.
    """
    game = rg.game
    if m is None:
        m = len(rg)
    model = _ReachModel(game, min_s, rg)
    start_node = model.node(start[0], start[1][0])
    alpha = min(model.floor(m, node) for node in model.reachable(start_node))
    if alpha <= 0:
        raise _err(
            "not_proper",
            f"some reachable piece has no certified target path within {m} steps",
        )
    return HypothesisConstants(alpha, m)


# -- certified truncation ---------------------------------------------------


@dataclass(frozen=True)
class CertifiedExpectation:
    """Truncated expectation with a sound radius for the discarded tail."""

    truncated_value: Fraction
    tail_radius: Fraction
    horizon: int
    reached_mass: Fraction | None = None


def certified_expectation(
    game: Game,
    start: Config,
    min_s,
    max_s,
    c: HypothesisConstants,
    tol,
    max_levels: int = 4000,
    width_cap: int = 100000,
    start_step: int = 0,
) -> CertifiedExpectation:
    """Expected cumulated weight, explored breadth-first to a certified tail.

    Level n holds every configuration alive after n steps, merged, with
    its probability mass and mass-weighted cumulated weight; target hits
    bank their contribution as they occur.  The loop stops once the alive
    mass times the per-mass tail factor drops under tol (radius zero when
    the tree dies out).  A full window of m levels without any target mass
    while alive contradicts the supplied constants and is rejected.
    """
    tol = Fraction(tol)
    if tol <= 0:
        raise _err("bad_tolerance", f"tolerance must be positive, got {tol}")
    bounds = game.weight_bounds()
    frontier = {start: (Fraction(1), Fraction(0))}
    value = Fraction(0)
    reached = Fraction(0)
    level = 0
    last_gain = 0
    if game.location(start[0]).is_target:
        return CertifiedExpectation(Fraction(0), Fraction(0), 0, Fraction(1))
    while True:
        alive = sum((mass for mass, _ in frontier.values()), Fraction(0))
        if alive == 0:
            return CertifiedExpectation(value, Fraction(0), level, reached)
        radius = alive * _alive_tail_factor(c, bounds, level)
        if radius <= tol:
            return CertifiedExpectation(value, radius, level, reached)
        if level - last_gain >= c.m:
            raise _err(
                "not_proper",
                f"no target mass for {c.m} consecutive levels at level {level}; "
                "the supplied decay constants do not hold",
            )
        if level >= max_levels:
            raise _err(
                "certification_failure",
                f"tail radius {float(radius):.6g} still above {float(tol):.6g} "
                f"after {max_levels} levels",
            )
        nxt = {}
        gained = False
        for config, (mass, wsum) in frontier.items():
            for q, ti, delay in _act(game, min_s, max_s, config, start_step + level):
                if q == 0:
                    continue
                succ, w = apply_edge(game, config, ti, delay)
                bundle = (q * mass, q * (wsum + mass * w))
                if game.location(succ[0]).is_target:
                    value += bundle[1]
                    reached += bundle[0]
                    gained = True
                else:
                    old = nxt.get(succ)
                    if old is None:
                        nxt[succ] = bundle
                    else:
                        nxt[succ] = (old[0] + bundle[0], old[1] + bundle[1])
        if len(nxt) > width_cap:
            raise _err(
                "tree_width",
                f"{len(nxt)} distinct configurations at level {level + 1} "
                f"exceed the cap {width_cap}",
            )
        level += 1
        if gained:
            last_gain = level
        frontier = nxt


# -- opponent best response -------------------------------------------------


class HorizonStrategy:
    """Depth-indexed opponent tables realizing a finite-horizon backup.

    The table for step s matches the stage backup with margin eps/2^(s+1),
    so the whole play loses at most eps/2 against the computed value.
    Tables are synthesized on first use; past the horizon the last table
    (the one-step greedy) repeats, where the certified value no longer
    depends on the choice.
    """

    kind = "horizon"

    def __init__(self, rg: RegionGame, vms, eps: Fraction, horizon: int):
        self.rg = rg
        self.game = rg.game
        self.vms = vms  # vms[d] = value of playing d more steps
        self.eps = Fraction(eps)
        self.horizon = horizon
        self.owner = MAX
        self._tables: dict[int, MemorylessDetStrategy] = {}

    def _table(self, step: int) -> MemorylessDetStrategy:
        step = min(step, self.horizon - 1)
        table = self._tables.get(step)
        if table is None:
            remaining = self.horizon - step
            margin = self.eps / 2 ** (step + 1)
            cells = _synth_argopt(
                self.rg, self.vms[remaining], margin, 1, MAX, vm_next=self.vms[remaining - 1]
            )
            table = MemorylessDetStrategy(self.game, cells, owner=MAX)
            self._tables[step] = table
        return table

    def decide(self, config: Config, steps: int):
        return self._table(steps).decide(config, steps)

    def action(self, loc_idx: int, x, steps: int = 0):
        return self._table(steps).action(loc_idx, x)


def _atom_stage_value(game: Game, vm_prev: ValueMap, atom, loc_idx: int, x: Fraction):
    """Edge weight plus continuation for one atom fired from clock x."""
    if isinstance(atom.rule, UniformSegment):
        raise _err("continuous_delay", "stage backup needs point-delay atoms")
    t = atom.rule.delay_from(x)
    (dst, valuation), w = apply_edge(game, (loc_idx, (x,)), atom.trans_idx, t)
    land = vm_prev.per_location[dst].eval(valuation[0])
    return INF if is_inf(land) else w + land


def _atom_stage_piece(game: Game, vm_prev: ValueMap, atom, loc, lo: Fraction, hi: Fraction):
    """(slope, intercept) of one atom's stage cost on the open gap (lo, hi).

    The gap never straddles a firing clock (those are cut in advance), so
    the atom either waits out the whole gap (cost falls at the location
    rate, landing fixed) or fires at once (cost follows the continuation
    row shifted by the transition weight).
    """
    if isinstance(atom.rule, UniformSegment):
        raise _err("continuous_delay", "stage backup needs point-delay atoms")
    trans = game.transitions[atom.trans_idx]
    dst = game.loc_index(trans.target)
    row = vm_prev.per_location[dst]
    rate = Fraction(loc.rate)
    wt = Fraction(trans.weight)
    fire = None
    if atom.rule.kind != "immediate":
        fire = atom.rule.firing_clock()
    if fire is not None and fire >= hi:
        land = row.eval(0) if trans.reset else row.eval(fire)
        if is_inf(land):
            return INF
        return (-rate, rate * fire + wt + land)
    # fires at once throughout the gap
    if trans.reset:
        land = row.eval(0)
        return INF if is_inf(land) else (Fraction(0), wt + land)
    mid = (lo + hi) / 2
    sub = row.refine((lo, hi))
    piece = sub.pieces[bisect_right(sub.xs, mid) - 1]
    return INF if is_inf(piece) else (piece[0], piece[1] + wt)


def _composed_row(game: Game, min_s, vm_prev: ValueMap, loc_idx: int) -> PA:
    """One-step backup at a controlled location under the fixed table.

    Built breakpoint by breakpoint: cuts at the table's cell endpoints,
    every atom firing clock and every continuation breakpoint; on each
    gap the covering cell's atoms mix affinely.  Clock values no cell
    covers read +oo, mirroring value rows outside the explored regions.
    """
    bound = Fraction(game.clock_bound)
    loc = game.location(loc_idx)
    cells = min_s.by_loc.get(loc_idx, [])
    cuts = {Fraction(0), bound}
    for cell in cells:
        cuts.add(max(Fraction(0), cell.interval.lo))
        cuts.add(min(bound, cell.interval.hi))
        for atom in cell.atoms:
            if isinstance(atom.rule, UniformSegment):
                raise _err("continuous_delay", "stage backup needs point-delay atoms")
            if atom.rule.kind != "immediate":
                fc = atom.rule.firing_clock()
                if 0 < fc < bound:
                    cuts.add(fc)
            trans = game.transitions[atom.trans_idx]
            if not trans.reset:
                dst = game.loc_index(trans.target)
                cuts.update(
                    x for x in vm_prev.per_location[dst].xs if 0 < x < bound
                )
    xs = sorted(cuts)

    def locate(x: Fraction):
        for cell in cells:
            if cell.interval.contains(x):
                return cell
        return None

    vals = []
    for x in xs:
        cell = locate(x)
        if cell is None:
            vals.append(INF)
            continue
        total = Fraction(0)
        for atom in cell.atoms:
            v = _atom_stage_value(game, vm_prev, atom, loc_idx, x)
            if is_inf(v):
                total = INF
                break
            total += atom.prob * v
        vals.append(total)
    pieces = []
    for a, b in zip(xs, xs[1:]):
        cell = locate((a + b) / 2)
        if cell is None:
            pieces.append(INF)
            continue
        slope, intercept = Fraction(0), Fraction(0)
        for atom in cell.atoms:
            piece = _atom_stage_piece(game, vm_prev, atom, loc, a, b)
            if is_inf(piece):
                slope = INF
                break
            slope += atom.prob * piece[0]
            intercept += atom.prob * piece[1]
        pieces.append(INF if is_inf(slope) else (slope, intercept))
    return PA(tuple(xs), tuple(vals), tuple(pieces)).canonical()


def _stage_backup(rg: RegionGame, min_s, vm_prev: ValueMap) -> ValueMap:
    full = apply_F(rg, vm_prev)
    rows = []
    for li, loc in enumerate(rg.game.locations):
        if loc.is_target or loc.owner == MAX:
            rows.append(full.per_location[li].canonical())
        else:
            rows.append(_composed_row(rg.game, min_s, vm_prev, li))
    return ValueMap(tuple(rows))


def best_response(
    rg: RegionGame,
    min_s,
    start: Config,
    eps,
    c: HypothesisConstants,
    max_depth: int = 100000,
) -> tuple[HorizonStrategy, CertifiedExpectation]:
    """Opponent strategy maximizing the expectation against a fixed table.

    Backward induction on the weight accumulated up to hitting the target
    or exhausting d remaining steps; the opponent rows take the exact
    stage extremum, the fixed table's rows compose its atoms.  The horizon
    is the first depth whose certified alive mass makes both the weight
    still in flight and the discarded tail worth at most eps/2 together,
    uniformly over opponent behavior.  The returned value brackets the
    true supremum within that radius; the returned depth-indexed tables
    realize it up to a further eps/2.
    """
    game = rg.game
    eps = Fraction(eps)
    if eps <= 0:
        raise _err("bad_eps", f"optimality margin must be positive, got {eps}")
    bounds = game.weight_bounds()
    alpha, m = c.alpha, c.m
    beta = 1 - alpha
    try:
        model = _ReachModel(game, min_s, rg)
        start_node = model.node(start[0], start[1][0])
    except GameError:
        model = None

    horizon = None
    radius = None
    for d in range(max_depth + 1):
        alive = beta ** (d // m)
        if model is not None:
            alive = min(alive, 1 - model.floor(d, start_node))
        bound_d = alive * (d * Fraction(bounds.edge_max) + _alive_tail_factor(c, bounds, d))
        if bound_d <= eps / 2:
            horizon, radius = d, bound_d
            break
    if horizon is None:
        raise _err(
            "certification_failure",
            f"no horizon within {max_depth} steps certifies margin {float(eps) / 2:.6g}",
        )

    zero = ValueMap(
        tuple(PA.constant(0, game.clock_bound, Fraction(0)) for _ in game.locations)
    )
    vms = [zero]
    for _ in range(max(horizon, 1)):  # tables need at least the one-step backup
        vms.append(_stage_backup(rg, min_s, vms[-1]))
    value = vms[horizon].value_at(start[0], start[1][0])
    if is_inf(value):
        raise _err("unreachable_start", f"the fixed table does not cover {start}")
    strat = HorizonStrategy(rg, vms, eps, max(horizon, 1))
    return strat, CertifiedExpectation(value, radius, horizon)


# -- Monte Carlo ------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # splitmix64 finalizer: xor-shift 30, 27, 31 with the two fixed multipliers
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class _SplitMix:
    """splitmix64 stream: state steps by the golden-ratio increment."""

    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & _MASK64

    def next64(self) -> int:
        self.state = (self.state + _GOLD) & _MASK64
        return _mix64(self.state)

    def getrandbits(self, k: int) -> int:
        return self.next64() >> (64 - k)


def run_stream(seed: int, run: int) -> _SplitMix:
    """Independent per-run generator: state seeded at seed + (run+1)*golden."""
    return _SplitMix((seed + (run + 1) * _GOLD) & _MASK64)


@dataclass
class ZoneTally:
    """Per-run classification against a step threshold.

    Runs that reach the target split into: longer than the threshold
    ("long"), within it without any fallback draw ("short_pure"), and
    within it with at least one ("short_mixed").  Fallback draws are the
    atoms tagged as coming from the strategy's second component; masses
    are empirical fractions of all runs, gamma the mean weight per zone.
    """

    threshold: int
    runs: int
    reached: int
    cutoff: int
    counts: dict
    masses: dict
    gammas: dict


_ZONES = ("long", "short_pure", "short_mixed")


def _epochs_of(strat):
    """Step thresholds at which a strategy changes table."""
    if isinstance(strat, SwitchingStrategy):
        return (strat.K,)
    return ()


def _table_at(strat, step: int):
    if isinstance(strat, SwitchingStrategy):
        return strat.sigma1 if step < strat.K else strat.sigma2
    return strat


def _chain_eligible(strat) -> bool:
    tables = [strat.sigma1, strat.sigma2] if isinstance(strat, SwitchingStrategy) else [strat]
    for table in tables:
        if not isinstance(table, CellStrategy):
            return False
        for cell in table.cells():
            for atom in cell.atoms:
                if not isinstance(atom.rule, DelayRule):
                    return False
    return True


class _Chain:
    """Play graph compiled to integer-indexed nodes with u64 cut points.

    Point-delay tables make every successor configuration a function of
    the cell alone, so the reachable configurations per epoch form a small
    finite set; each node stores (cumulative threshold, weight, successor,
    fallback flag, target flag, step count) per atom and simulation becomes
    one draw and one list scan per step.  Without table switches, runs of
    single-atom nodes collapse into one multi-step hop; the raw one-step
    entries are kept so a hop never jumps across the cutoff.
    """

    _HOP_CAP = 64

    def __init__(self, game: Game, min_s, max_s, epochs):
        self.game = game
        self.min_s = min_s
        self.max_s = max_s
        self.epochs = epochs  # sorted step thresholds where tables change
        self.collapse = not epochs
        self.index = {}
        self.entries = []
        self.raw_entries = []

    def node(self, epoch: int, config: Config) -> int:
        key = (epoch, config[0], config[1])
        ni = self.index.get(key)
        if ni is None:
            ni = len(self.entries)
            self.index[key] = ni
            raw = self._compile(epoch, config)
            self.entries.append(None)
            self.raw_entries.append(raw)
            self.entries[ni] = self._collapsed(epoch, config, raw)
        return ni

    def _compile(self, epoch: int, config: Config):
        game = self.game
        loc = game.location(config[0])
        if loc.is_target:
            return ()
        step_probe = 0 if epoch == 0 else self.epochs[epoch - 1]
        strat = self.min_s if loc.owner == MIN else self.max_s
        table = _table_at(strat, step_probe)
        cell = table.cell_at(config[0], config[1][0])
        out = []
        acc = Fraction(0)
        for atom in cell.atoms:
            acc += atom.prob
            t = atom.rule.delay_from(config[1][0])
            succ, w = apply_edge(game, config, atom.trans_idx, t)
            thr = (acc.numerator << 64) // acc.denominator
            out.append(
                (
                    thr,
                    float(w),
                    succ,
                    1 if atom.origin == "s2" else 0,
                    game.location(succ[0]).is_target,
                    1,
                )
            )
        return tuple(out)

    def _collapsed(self, epoch: int, config: Config, raw):
        if not self.collapse or len(raw) != 1 or raw[0][4]:
            return raw
        thr, w, succ, s2, hit, k = raw[0]
        seen = {config, succ}
        while k < self._HOP_CAP and not hit:
            step = self._compile(epoch, succ)
            if len(step) != 1:
                break
            _, w2, succ2, s22, hit, _ = step[0]
            if succ2 in seen and not hit:
                break  # closed deterministic loop; leave it to the cutoff
            seen.add(succ2)
            w += w2
            s2 += s22
            succ = succ2
            k += 1
        return ((thr, w, succ, s2, hit, k),)


def monte_carlo(
    game: Game,
    start: Config,
    min_s,
    max_s,
    runs: int,
    seed: int,
    max_steps: int = 400,
    switch_bound: int | None = None,
):
    """Sample mean of the cumulated weight with a normal 95% interval.

    Each run draws from its own splitmix64 stream expanded from
    (seed, run index).  Runs stop at the target or at max_steps; cutoff
    runs keep their partial weight in the mean and are flagged in the
    tally.  Point-delay cell tables compile to a finite play graph walked
    with raw 64-bit draws; other strategies (continuous delays, custom
    deciders) fall back to exact-arithmetic sampling.
    """
    if runs < 1:
        raise _err("bad_runs", f"need at least one run, got {runs}")
    if switch_bound is None:
        for strat in (min_s, max_s):
            if isinstance(strat, SwitchingStrategy):
                switch_bound = strat.K
                break
        else:
            switch_bound = max_steps
    epochs = sorted(set(_epochs_of(min_s)) | set(_epochs_of(max_s)))
    fast = _chain_eligible(min_s) and _chain_eligible(max_s)

    weights = []
    stats = []  # (reached, length, fallback draws) per run
    if fast:
        chain = _Chain(game, min_s, max_s, epochs)
        start_node = chain.node(0, start)
        entries = chain.entries
        raw_entries = chain.raw_entries
        node_of = chain.node
        start_is_target = game.location(start[0]).is_target
        n_epochs = len(epochs)
        # the draw below inlines run_stream(seed, run).next64()
        for run in range(runs):
            state = (seed + (run + 1) * _GOLD) & _MASK64
            node = start_node
            epoch = 0
            w = 0.0
            steps = 0
            fallbacks = 0
            reached = start_is_target
            while not reached and steps < max_steps:
                entry = entries[node]
                if len(entry) == 1:
                    thr, ew, succ, s2, hit, ds = entry[0]
                    if steps + ds > max_steps:  # hop would jump the cutoff
                        thr, ew, succ, s2, hit, ds = raw_entries[node][0]
                else:
                    state = (state + _GOLD) & _MASK64
                    z = ((state ^ (state >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
                    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
                    u = z ^ (z >> 31)
                    for thr, ew, succ, s2, hit, ds in entry:
                        if u < thr:
                            break
                w += ew
                fallbacks += s2
                steps += ds
                if hit:
                    reached = True
                    break
                if epoch < n_epochs and steps >= epochs[epoch]:
                    epoch += 1
                node = node_of(epoch, succ)
            weights.append(w)
            stats.append((reached, steps, fallbacks))
    else:
        for run in range(runs):
            rnd = run_stream(seed, run)
            config = start
            w = Fraction(0)
            steps = 0
            fallbacks = 0
            reached = game.location(config[0]).is_target
            while not reached and steps < max_steps:
                ti, delay, s2 = _sample_action(game, min_s, max_s, config, steps, rnd)
                config, ew = apply_edge(game, config, ti, delay)
                w += ew
                fallbacks += s2
                steps += 1
                reached = game.location(config[0]).is_target
            weights.append(float(w))
            stats.append((reached, steps, fallbacks))

    mean = sum(weights) / runs
    if runs > 1:
        var = sum((x - mean) ** 2 for x in weights) / (runs - 1)
        ci95 = 1.96 * math.sqrt(var / runs)
    else:
        ci95 = 0.0

    counts = {z: 0 for z in _ZONES}
    sums = {z: 0.0 for z in _ZONES}
    reached_total = 0
    cutoff = 0
    for wgt, (reached, length, fallbacks) in zip(weights, stats):
        if not reached:
            cutoff += 1
            continue
        reached_total += 1
        if length > switch_bound:
            zone = "long"
        elif fallbacks == 0:
            zone = "short_pure"
        else:
            zone = "short_mixed"
        counts[zone] += 1
        sums[zone] += wgt
    tally = ZoneTally(
        threshold=switch_bound,
        runs=runs,
        reached=reached_total,
        cutoff=cutoff,
        counts=counts,
        masses={z: counts[z] / runs for z in _ZONES},
        gammas={z: (sums[z] / counts[z] if counts[z] else None) for z in _ZONES},
    )
    return mean, ci95, tally


def _sample_action(game, min_s, max_s, config, steps, rnd):
    """One concrete draw; tracks whether a fallback-tagged atom fired."""
    strat = min_s if game.location(config[0]).owner == MIN else max_s
    table = _table_at(strat, steps)
    if isinstance(table, CellStrategy):
        cell = table.cell_at(config[0], config[1][0])
        atom = cell.atoms[-1]
        if len(cell.atoms) > 1:
            u = Fraction(rnd.getrandbits(53), 1 << 53)
            acc = Fraction(0)
            for cand in cell.atoms:
                acc += cand.prob
                if u < acc:
                    atom = cand
                    break
        if isinstance(atom.rule, UniformSegment):
            v = Fraction(rnd.getrandbits(53), 1 << 53)
            delay = atom.rule.delay_from(config[1][0], v)
        else:
            delay = atom.rule.delay_from(config[1][0])
        return atom.trans_idx, delay, 1 if atom.origin == "s2" else 0
    choices = table.decide(config, steps)
    pick = choices[-1]
    if len(choices) > 1:
        u = Fraction(rnd.getrandbits(53), 1 << 53)
        acc = Fraction(0)
        for cand in choices:
            acc += cand[0]
            if u < acc:
                pick = cand
                break
    return pick[1], pick[2], 0
