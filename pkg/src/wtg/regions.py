"""Region abstraction and the finite region game.

Regions are the classic clock-equivalence classes for integer constants up
to the clock bound: per-clock integer parts, which clocks sit exactly on an
integer, and the ordering of fractional parts.  Clocks are bounded, so a
region whose every guard-relevant clock passed the bound is a dead end and
is simply not generated.

The corner-point abstraction walks integer corners of region closures; for
one clock its path-weight extrema are exactly the infimum/supremum of play
weights along the region path (closure-attained).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import networkx as nx

from .model import Game, GameError, Interval, Transition, Valuation

CYCLE_CAP_DEFAULT = 100_000


@dataclass(frozen=True, order=True)
class Region:
    """One clock region: floors, point flags, fractional-part ordering.

    `order` lists groups of clock indices with equal nonzero fractional
    part, in increasing order of that part; point clocks appear in no group.
    """

    floors: tuple[int, ...]
    points: tuple[bool, ...]
    order: tuple[tuple[int, ...], ...]

    def is_point_region(self) -> bool:
        return all(self.points)

    def sort_key(self):
        """Orders one-clock regions by time ({0} < (0,1) < {1} < ...)."""
        return (self.floors, tuple(not p for p in self.points), self.order)

    def interval(self, clock_idx: int = 0) -> Interval:
        """Projection onto one clock: {k} or the open unit interval (k, k+1)."""
        k = Fraction(self.floors[clock_idx])
        if self.points[clock_idx]:
            return Interval(k, k)
        return Interval(k, k + 1, True, True)

    def satisfies(self, guard: tuple) -> bool:
        """Uniform guard satisfaction (guards have integer constants)."""
        return all(self._atom_holds(a) for a in guard)

    def _atom_holds(self, atom) -> bool:
        # resolved against the projection interval; uniform on the region
        idx = atom._clock_idx
        f, pt, c = self.floors[idx], self.points[idx], atom.const
        if atom.op == "lt":
            return f < c if pt else f + 1 <= c
        if atom.op == "le":
            return f <= c if pt else f + 1 <= c
        if atom.op == "eq":
            return pt and f == c
        if atom.op == "ge":
            return f >= c
        if atom.op == "gt":
            return f > c if pt else f >= c
        raise GameError("bad_op", f"unknown op {atom.op!r}")

    def contains(self, valuation: Valuation) -> bool:
        fracs = {}
        for i, v in enumerate(valuation):
            f, pt = self.floors[i], self.points[i]
            if pt:
                if v != f:
                    return False
            else:
                if not (f < v < f + 1):
                    return False
                fracs[i] = v - f
        seen = []
        for group in self.order:
            vals = {fracs[i] for i in group}
            if len(vals) != 1:
                return False
            seen.append(vals.pop())
        return seen == sorted(set(seen)) and len(seen) == len(set(seen))

    def reset(self, clock_indices) -> "Region":
        reset = set(clock_indices)
        floors = tuple(0 if i in reset else f for i, f in enumerate(self.floors))
        points = tuple(True if i in reset else p for i, p in enumerate(self.points))
        order = tuple(
            g for g in (tuple(i for i in grp if i not in reset) for grp in self.order) if g
        )
        return Region(floors, points, order)

    def corners(self) -> list[tuple[int, ...]]:
        """Integer points of the closure: round a suffix of frac groups up."""
        out = []
        k = len(self.order)
        for up_from in range(k, -1, -1):
            corner = list(self.floors)
            for gi in range(up_from, k):
                for ci in self.order[gi]:
                    corner[ci] += 1
            out.append(tuple(corner))
        return out

    def time_successor(self) -> "Region | None":
        """Immediate successor region, or None once a clock must pass the bound.

        The bound itself is not stored here; generation stops when a point
        clock sits at the caller's bound (checked in successor_chain).
        """
        point_idx = [i for i, p in enumerate(self.points) if p]
        if point_idx:
            # points leave the integer first: new lowest fractional group
            floors = self.floors
            points = tuple(False for _ in self.points)
            order = (tuple(point_idx),) + self.order
            return Region(floors, points, order)
        if not self.order:
            return None  # no clocks at all; nothing to advance
        top = self.order[-1]
        floors = tuple(f + 1 if i in top else f for i, f in enumerate(self.floors))
        points = tuple(i in top for i in range(len(self.points)))
        return Region(floors, points, self.order[:-1])

    def __str__(self) -> str:
        parts = []
        for i, (f, p) in enumerate(zip(self.floors, self.points)):
            parts.append(f"{{{f}}}" if p else f"({f},{f + 1})")
        if len(parts) == 1:
            return parts[0]
        tags = ";".join(parts)
        ordering = ",".join("<".join(str(i) for i in g) for g in self.order)
        return f"[{tags}|{ordering}]"


def region_of(valuation: Valuation, bound: int) -> Region:
    """Region containing the valuation; clocks must lie within [0, bound]."""
    floors, points, fracs = [], [], {}
    for i, v in enumerate(valuation):
        v = Fraction(v)
        if not 0 <= v <= bound:
            raise GameError("out_of_bounds", f"clock value {v} outside [0, {bound}]")
        f = int(v)
        if v == f:
            floors.append(f)
            points.append(True)
        else:
            floors.append(f)
            points.append(False)
            fracs[i] = v - f
    groups: dict[Fraction, list[int]] = {}
    for i, fr in fracs.items():
        groups.setdefault(fr, []).append(i)
    order = tuple(tuple(sorted(groups[fr])) for fr in sorted(groups))
    return Region(tuple(floors), tuple(points), order)


def successor_chain(region: Region, bound: int) -> list[Region]:
    """The region itself followed by all time successors within the bound."""
    out = [region]
    cur = region
    while True:
        if any(p and f >= bound for f, p in zip(cur.floors, cur.points)):
            break  # advancing would push a clock past the bound
        cur = cur.time_successor()
        if cur is None:
            break
        out.append(cur)
    return out


def all_regions(n_clocks: int, bound: int) -> list[Region]:
    """Every region of [0, bound]^n, in a deterministic order."""
    regions = []
    for floors in itertools.product(range(bound + 1), repeat=n_clocks):
        open_allowed = [f < bound for f in floors]
        for points in itertools.product((True, False), repeat=n_clocks):
            if any(not p and not ok for p, ok in zip(points, open_allowed)):
                continue
            frac_clocks = [i for i, p in enumerate(points) if not p]
            for order in _ordered_partitions(frac_clocks):
                regions.append(Region(tuple(floors), tuple(points), order))
    return regions


def _ordered_partitions(items: list[int]):
    """All partitions of items into a sequence of nonempty groups."""
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for sub in _ordered_partitions(rest):
        # first joins an existing group
        for gi in range(len(sub)):
            yield sub[:gi] + (tuple(sorted(sub[gi] + (first,))),) + sub[gi + 1 :]
        # or forms its own group at any position
        for gi in range(len(sub) + 1):
            yield sub[:gi] + ((first,),) + sub[gi:]


@dataclass(frozen=True)
class RegionState:
    loc_idx: int
    region: Region


@dataclass(frozen=True)
class RegionTransition:
    """Merged region edge: all guard regions landing on the same successor.

    A region edge groups, per underlying game transition, the time-successor
    regions that satisfy the guard and map (after resets) to one destination
    state.  Self-loops through resetting transitions therefore come out as a
    single edge whose guard regions span the whole enabled window.
    """

    src: int
    trans_idx: int
    guard_regions: tuple[Region, ...]
    dst: int


class RegionGame:
    """Finite turn-based game of (location, region) states."""

    def __init__(self, game: Game, states, transitions, reachable_only: bool):
        self.game = game
        self.states: list[RegionState] = states
        self.transitions: list[RegionTransition] = transitions
        self.reachable_only = reachable_only
        self.state_index = {
            (s.loc_idx, s.region): i for i, s in enumerate(states)
        }
        self.out = [[] for _ in states]
        self.into = [[] for _ in states]
        for ei, e in enumerate(transitions):
            self.out[e.src].append(ei)
            self.into[e.dst].append(ei)

    def __len__(self) -> int:
        return len(self.states)

    def is_target(self, state_idx: int) -> bool:
        return self.game.location(self.states[state_idx].loc_idx).is_target

    def owner(self, state_idx: int) -> str:
        return self.game.location(self.states[state_idx].loc_idx).owner

    def state_of(self, loc_idx: int, valuation: Valuation) -> int:
        region = region_of(valuation, self.game.clock_bound)
        key = (loc_idx, region)
        if key not in self.state_index:
            raise GameError("no_region_state", f"state ({loc_idx}, {region}) not in region game")
        return self.state_index[key]

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(len(self.states)))
        g.add_edges_from((e.src, e.dst) for e in self.transitions)
        return g

    def restricted(self, keep) -> "RegionGame":
        """Subgame induced by a state subset (indices are renumbered)."""
        keep = sorted(set(keep))
        old_to_new = {old: new for new, old in enumerate(keep)}
        states = [self.states[i] for i in keep]
        transitions = [
            RegionTransition(old_to_new[e.src], e.trans_idx, e.guard_regions, old_to_new[e.dst])
            for e in self.transitions
            if e.src in old_to_new and e.dst in old_to_new
        ]
        return RegionGame(self.game, states, transitions, self.reachable_only)


def build_region_game(game: Game, reachable_only: bool = False) -> RegionGame:
    """Construct the region game over all regions (or the reachable part).

    Edges follow the concrete semantics: delay within the source region to a
    time successor satisfying the guard, then jump with resets applied.
    `reachable_only` restricts to states reachable from some zero valuation.
    """
    n = len(game.clocks)
    regions = all_regions(n, game.clock_bound)
    states = [
        RegionState(li, r) for li in range(len(game.locations)) for r in regions
    ]
    index = {(s.loc_idx, s.region): i for i, s in enumerate(states)}

    def edges_from(si: int, state: RegionState):
        loc = game.location(state.loc_idx)
        if loc.is_target:
            return
        chain = successor_chain(state.region, game.clock_bound)
        for ti in game.transitions_from(state.loc_idx):
            trans = game.transitions[ti]
            dst_loc = game.loc_index(trans.target)
            reset_idx = [game.clocks.index(c) for c in trans.reset]
            grouped: dict[int, list[Region]] = {}
            for r2 in chain:
                if not r2.satisfies(trans.guard):
                    continue
                dst_region = r2.reset(reset_idx)
                di = index[(dst_loc, dst_region)]
                grouped.setdefault(di, []).append(r2)
            for di, guard_regions in grouped.items():
                yield RegionTransition(si, ti, tuple(guard_regions), di)

    if not reachable_only:
        transitions = []
        for si, st in enumerate(states):
            transitions.extend(edges_from(si, st))
        return RegionGame(game, states, transitions, False)

    # BFS from every location's zero valuation
    zero = region_of(game.zero_valuation(), game.clock_bound)
    frontier = [index[(li, zero)] for li in range(len(game.locations))]
    seen = set(frontier)
    kept_edges = []
    while frontier:
        si = frontier.pop()
        for e in edges_from(si, states[si]):
            kept_edges.append(e)
            if e.dst not in seen:
                seen.add(e.dst)
                frontier.append(e.dst)
    keep = sorted(seen)
    remap = {old: new for new, old in enumerate(keep)}
    new_states = [states[i] for i in keep]
    new_edges = [
        RegionTransition(remap[e.src], e.trans_idx, e.guard_regions, remap[e.dst])
        for e in kept_edges
    ]
    return RegionGame(game, new_states, new_edges, True)


def delay_window(region: Region, valuation: Valuation) -> Interval:
    """Delays t >= 0 with valuation + t inside the region.

    The valuation must lie in a region from which `region` is a (reflexive)
    time successor; the answer is then a nonempty interval because all
    clocks advance together.
    """
    lo, lo_open = Fraction(0), False
    hi, hi_open = None, False
    for i, v in enumerate(valuation):
        iv = region.interval(i)
        a, b = iv.lo - v, iv.hi - v
        if (a, not iv.lo_open) > (lo, not lo_open):
            lo, lo_open = a, iv.lo_open
        if hi is None or (b, iv.hi_open) < (hi, hi_open):
            hi, hi_open = b, iv.hi_open
    return Interval(lo, hi, lo_open, hi_open)


def some_delay_into(region: Region, valuation: Valuation) -> Fraction:
    """A concrete valid delay carrying the valuation into the region."""
    win = delay_window(region, valuation)
    if win.is_empty():
        raise GameError("no_delay", f"region {region} not reachable from {valuation}")
    return win.midpoint()


def find_region_deadlocks(game: Game, reachable_only: bool = True):
    """Non-target region states with no outgoing region edge."""
    rg = build_region_game(game, reachable_only=reachable_only)
    for si, state in enumerate(rg.states):
        if rg.is_target(si):
            continue
        if not rg.out[si]:
            yield game.location(state.loc_idx).name, str(state.region)


def corner_moves(rg: RegionGame, edge: RegionTransition):
    """Corner-graph moves realizing one region edge.

    Yields (src_corner, dst_corner, weight): an integer delay d >= 0 carries
    a source corner onto a corner of some guard region, the reset maps it
    into the destination region, and the weight is d*rate + transition weight.
    """
    game = rg.game
    src_state = rg.states[edge.src]
    rate = game.location(src_state.loc_idx).rate
    trans = game.transitions[edge.trans_idx]
    reset_idx = {game.clocks.index(c) for c in trans.reset}
    weight = trans.weight
    for grd in edge.guard_regions:
        landing = set(grd.corners())
        for v in src_state.region.corners():
            for w in landing:
                diffs = {wi - vi for wi, vi in zip(w, v)}
                if len(diffs) != 1:
                    continue
                d = diffs.pop()
                if d < 0:
                    continue
                dst_corner = tuple(0 if i in reset_idx else wi for i, wi in enumerate(w))
                yield v, dst_corner, d * rate + weight


def path_weight_bounds(rg: RegionGame, edge_indices) -> tuple[int, int]:
    """Exact inf/sup of play weights along a region path (closure-attained).

    Dynamic program over region corners; bounds are integers because corners,
    rates and weights are.  Raises if the path is not connected.
    """
    edges = [rg.transitions[i] for i in edge_indices]
    if not edges:
        return 0, 0
    for a, b in zip(edges, edges[1:]):
        if a.dst != b.src:
            raise GameError("broken_path", "region path edges do not chain")
    lo = {c: 0 for c in rg.states[edges[0].src].region.corners()}
    hi = dict(lo)
    for edge in edges:
        nlo, nhi = {}, {}
        for v, w, wt in corner_moves(rg, edge):
            if v in lo:
                cand = lo[v] + wt
                if w not in nlo or cand < nlo[w]:
                    nlo[w] = cand
            if v in hi:
                cand = hi[v] + wt
                if w not in nhi or cand > nhi[w]:
                    nhi[w] = cand
        if not nlo:
            raise GameError("broken_path", "no corner move realizes a path edge")
        lo, hi = nlo, nhi
    return min(lo.values()), max(hi.values())


def cycle_weight_bounds(rg: RegionGame, edge_indices) -> tuple[int, int]:
    """Weight bounds of plays following a cyclic region path."""
    edges = [rg.transitions[i] for i in edge_indices]
    if not edges or edges[-1].dst != edges[0].src:
        raise GameError("broken_path", "not a cyclic region path")
    return path_weight_bounds(rg, edge_indices)


@dataclass(frozen=True)
class SccInfo:
    """Strongly connected components with a topological order."""

    component_of: tuple[int, ...]
    members: tuple[tuple[int, ...], ...]  # indexed by component id, topological

    def __len__(self) -> int:
        return len(self.members)


def _state_sort_key(rg: RegionGame, si: int):
    s = rg.states[si]
    return (rg.game.location(s.loc_idx).name, s.region.sort_key())


def scc_decompose(rg: RegionGame) -> SccInfo:
    """SCCs of the region game, topologically ordered, deterministically.

    Components are sorted topologically (sources first); ties and member
    lists are ordered by location name then region.
    """
    graph = rg.digraph()
    comps = [frozenset(c) for c in nx.strongly_connected_components(graph)]
    cond = nx.DiGraph()
    cond.add_nodes_from(range(len(comps)))
    comp_of = {}
    for ci, comp in enumerate(comps):
        for si in comp:
            comp_of[si] = ci
    for e in rg.transitions:
        a, b = comp_of[e.src], comp_of[e.dst]
        if a != b:
            cond.add_edge(a, b)
    order = list(
        nx.lexicographical_topological_sort(
            cond, key=lambda ci: min(_state_sort_key(rg, si) for si in comps[ci])
        )
    )
    new_id = {old: new for new, old in enumerate(order)}
    component_of = tuple(new_id[comp_of[si]] for si in range(len(rg.states)))
    members = tuple(
        tuple(sorted(comps[old], key=lambda si: _state_sort_key(rg, si)))
        for old in order
    )
    return SccInfo(component_of, members)


@dataclass(frozen=True)
class RegionCycle:
    """A simple cycle of region edges with exact play-weight bounds."""

    edges: tuple[int, ...]
    min_weight: int
    max_weight: int


def enumerate_cycles(rg: RegionGame, cap: int = CYCLE_CAP_DEFAULT, nodes=None):
    """Simple cycles (edge-index tuples) of the region game, or a node subset.

    Node cycles come from the standard simple-cycle enumeration; parallel
    region edges (distinct underlying transitions) multiply them out.  Raises
    once more than `cap` cycles would be produced.
    """
    by_pair: dict[tuple[int, int], list[int]] = {}
    for ei, e in enumerate(rg.transitions):
        by_pair.setdefault((e.src, e.dst), []).append(ei)
    graph = rg.digraph()
    if nodes is not None:
        graph = graph.subgraph(nodes)
    count = 0
    for node_cycle in nx.simple_cycles(graph):
        pairs = [
            (node_cycle[i], node_cycle[(i + 1) % len(node_cycle)])
            for i in range(len(node_cycle))
        ]
        for combo in itertools.product(*(by_pair[p] for p in pairs)):
            count += 1
            if count > cap:
                raise GameError(
                    "cycle_cap_exceeded", f"more than {cap} simple cycles", stage="regions"
                )
            yield tuple(combo)


def enumerate_simple_cycles(
    rg: RegionGame, scc: SccInfo | None = None, cap: int = CYCLE_CAP_DEFAULT
):
    """All simple cycles with weight bounds, grouped per SCC.

    Yields (component id, RegionCycle).  Raises a cap-overflow error naming
    the offending component once more than `cap` cycles exist in total.
    """
    if scc is None:
        scc = scc_decompose(rg)
    budget = cap
    for ci, members in enumerate(scc.members):
        if len(members) == 1 and not any(
            rg.transitions[ei].dst == members[0] for ei in rg.out[members[0]]
        ):
            continue  # trivial singleton, no self-loop
        try:
            for edges in enumerate_cycles(rg, cap=budget, nodes=members):
                budget -= 1
                lo, hi = cycle_weight_bounds(rg, edges)
                yield ci, RegionCycle(tuple(edges), lo, hi)
        except GameError as err:
            if err.kind != "cycle_cap_exceeded":
                raise
            raise GameError(
                "cycle_cap_exceeded",
                f"component {ci} pushes the simple-cycle count past {cap}",
                stage="regions",
            ) from None
