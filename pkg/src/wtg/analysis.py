"""Divergence decision and classification of infinite-value states.

Cycle signs come from exact corner-point weight bounds.  A game is
divergent when every strongly connected component of its region game only
carries cycles of uniform sign (all plays of weight >= 1, or all <= -1).
On divergent games the states of deterministic value +oo are those outside
the minimizer's attractor of the targets, and the -oo states are the
minimizer's winning region of the Buchi objective "revisit a negative SCC
forever", solved by the classical repeated-attractor fixpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx

from .model import MAX, MIN, GameError
from .regions import (
    CYCLE_CAP_DEFAULT,
    RegionGame,
    SccInfo,
    enumerate_cycles,
    path_weight_bounds,
    scc_decompose,
)

POSITIVE = "positive"
NEGATIVE = "negative"
TRIVIAL = "trivial"
MIXED = "mixed"

FINITE = "finite"
PLUS_INF = "plus_infinity"
MINUS_INF = "minus_infinity"


@dataclass(frozen=True)
class DivergenceWitness:
    """A cyclic region path that is neither positive nor negative.

    kind is "unsigned_cycle" for a single simple cycle, "composed_cycle"
    when repetitions of a positive and a negative cycle had to be chained,
    and "signed_pair" if no straddling composition was found within the
    search budget (the two offending cycles are then concatenated here
    purely for reporting).
    """

    edges: tuple[int, ...]
    min_weight: int
    max_weight: int
    kind: str


@dataclass(frozen=True)
class DivergenceReport:
    divergent: bool
    signs: tuple[str, ...]  # per SCC id
    scc: SccInfo
    witness: DivergenceWitness | None

    def sign_of_state(self, rg: RegionGame, si: int) -> str:
        return self.signs[self.scc.component_of[si]]


def _scc_sign(rg: RegionGame, members, cap: int):
    """Sign of one SCC plus witness material (an unsigned cycle, or a
    positive/negative example pair)."""
    has_cycle = False
    positive_ok = True
    negative_ok = True
    example_pos = example_neg = None
    for edges in enumerate_cycles(rg, cap=cap, nodes=members):
        has_cycle = True
        lo, hi = path_weight_bounds(rg, edges)
        if lo <= 0 and hi >= 0:
            return MIXED, DivergenceWitness(tuple(edges), lo, hi, "unsigned_cycle")
        if lo >= 1:
            negative_ok = False
            example_pos = example_pos or (tuple(edges), lo, hi)
        else:  # hi <= -1
            positive_ok = False
            example_neg = example_neg or (tuple(edges), lo, hi)
        if not positive_ok and not negative_ok:
            return MIXED, _compose_witness(rg, example_pos, example_neg)
    if not has_cycle:
        return TRIVIAL, None
    return (POSITIVE if positive_ok else NEGATIVE), None


def _compose_witness(rg: RegionGame, pos, neg, reps: int = 24):
    """Chain a^pos + connector + b^neg + connector into an unsigned cycle.

    Both cycles live in one SCC, so connecting paths exist; weight bounds of
    the composition are exact (corner DP), and suitable repetition counts
    (a, b) exist because the cycle weights pull in opposite directions.
    """
    pos_edges, _, _ = pos
    neg_edges, _, _ = neg
    u = rg.transitions[pos_edges[0]].src
    v = rg.transitions[neg_edges[0]].src
    graph = nx.DiGraph()
    for ei, e in enumerate(rg.transitions):
        if not graph.has_edge(e.src, e.dst):
            graph.add_edge(e.src, e.dst, idx=ei)
    try:
        uv = nx.shortest_path(graph, u, v)
        vu = nx.shortest_path(graph, v, u)
    except nx.NetworkXNoPath:
        return DivergenceWitness(pos_edges + neg_edges, pos[1] + neg[1], pos[2] + neg[2], "signed_pair")
    to_edges = lambda nodes: tuple(
        graph.edges[a, b]["idx"] for a, b in zip(nodes, nodes[1:])
    )
    uv_e, vu_e = to_edges(uv), to_edges(vu)
    for total in range(2, 2 * reps + 1):
        for a in range(1, total):
            b = total - a
            edges = pos_edges * a + uv_e + neg_edges * b + vu_e
            lo, hi = path_weight_bounds(rg, edges)
            if lo <= 0 and hi >= 0:
                return DivergenceWitness(edges, lo, hi, "composed_cycle")
    return DivergenceWitness(
        pos_edges + neg_edges, pos[1] + neg[1], pos[2] + neg[2], "signed_pair"
    )


def check_divergence(
    rg: RegionGame, scc: SccInfo | None = None, cap: int = CYCLE_CAP_DEFAULT
) -> DivergenceReport:
    """Classify every SCC's cycle sign; divergent iff none is mixed.

    Uniform signs of simple cycles cover all cyclic region paths: weight
    bounds add along concatenations, so composed cycles inside a Positive
    (resp. Negative) SCC keep min >= 1 (resp. max <= -1).
    """
    if scc is None:
        scc = scc_decompose(rg)
    signs = []
    witness = None
    for members in scc.members:
        sign, wit = _scc_sign(rg, members, cap)
        signs.append(sign)
        if wit is not None and witness is None:
            witness = wit
    return DivergenceReport(witness is None, tuple(signs), scc, witness)


def _out_within(rg: RegionGame, si: int, allowed) -> list[int]:
    return [ei for ei in rg.out[si] if rg.transitions[ei].dst in allowed]


def attractor(rg: RegionGame, base, player: str, allowed=None) -> set[int]:
    """States from which `player` forces reaching `base` inside `allowed`.

    Standard backward fixpoint: a player state joins once one successor is
    attracted, an opponent state once all are.  Deadlocked states never join
    (the play stops there), except base states themselves.
    """
    if allowed is None:
        allowed = range(len(rg.states))
    allowed = set(allowed)
    attracted = set(base) & allowed
    remaining = {}  # opponent state -> count of edges not yet into the attractor
    for s in allowed:
        if rg.owner(s) != player:
            n = len(_out_within(rg, s, allowed))
            if n:
                remaining[s] = n
    frontier = list(attracted)
    while frontier:
        s = frontier.pop()
        for ei in rg.into[s]:
            p = rg.transitions[ei].src
            if p not in allowed or p in attracted:
                continue
            if rg.owner(p) == player:
                attracted.add(p)
                frontier.append(p)
            elif p in remaining:
                remaining[p] -= 1
                if remaining[p] == 0:
                    attracted.add(p)
                    frontier.append(p)
    return attracted


def buchi_win(rg: RegionGame, recur, player: str, allowed) -> set[int]:
    """Winning region of "visit `recur` infinitely often" for `player`.

    Repeated-attractor fixpoint: repeatedly discard the opponent's
    attractor of the subset from which `recur` is unreachable.
    """
    other = MAX if player == MIN else MIN
    region = set(allowed)
    goal = set(recur) & region
    while True:
        reach = attractor(rg, goal, player, region)
        escaped = region - reach
        if not escaped:
            return region
        removed = attractor(rg, escaped, other, region)
        region -= removed
        goal -= removed
        if not region:
            return region


@dataclass(frozen=True)
class ValueClassification:
    labels: tuple[str, ...]  # per region state

    @property
    def finite(self):
        return frozenset(i for i, l in enumerate(self.labels) if l == FINITE)

    @property
    def plus(self):
        return frozenset(i for i, l in enumerate(self.labels) if l == PLUS_INF)

    @property
    def minus(self):
        return frozenset(i for i, l in enumerate(self.labels) if l == MINUS_INF)


def classify_values(
    rg: RegionGame,
    divergence: DivergenceReport | None = None,
    cap: int = CYCLE_CAP_DEFAULT,
) -> ValueClassification:
    """Label every region state Finite / +oo / -oo.

    +oo: Max keeps the play out of the targets, i.e. the complement of
    Min's attractor.  -oo (needs divergence): within the attractor
    subgame, Min wins the Buchi objective over negative-SCC states.
    """
    if divergence is None:
        divergence = check_divergence(rg, cap=cap)
    if not divergence.divergent:
        raise GameError(
            "not_divergent",
            "the -oo characterization requires a divergent game",
            stage="analysis",
        )
    targets = [si for si in range(len(rg.states)) if rg.is_target(si)]
    reach_min = attractor(rg, targets, MIN)

    # negative SCCs of the attractor subgame (its cycles are a subset of the
    # full game's, so signs stay uniform)
    recur = _negative_recurrence(rg, reach_min, cap)
    minus = buchi_win(rg, recur, MIN, reach_min)

    labels = []
    for si in range(len(rg.states)):
        if si not in reach_min:
            labels.append(PLUS_INF)
        elif si in minus:
            labels.append(MINUS_INF)
        else:
            labels.append(FINITE)
    return ValueClassification(tuple(labels))


def _restricted_scc(rg: RegionGame, allowed):
    graph = nx.DiGraph()
    graph.add_nodes_from(allowed)
    graph.add_edges_from(
        (e.src, e.dst) for e in rg.transitions if e.src in allowed and e.dst in allowed
    )
    return [tuple(sorted(c)) for c in nx.strongly_connected_components(graph)]


def prune_game(rg: RegionGame, cls: ValueClassification) -> RegionGame:
    """Subgame of the Finite states; verified to introduce no deadlock.

    Removing +oo states never strands a survivor (attractor closure), and
    removing -oo states cannot either: a Max state all of whose successors
    are -oo would itself be -oo, and likewise for Min.
    """
    keep = sorted(cls.finite)
    if not any(not rg.is_target(si) for si in keep):
        raise GameError("all_pruned", "no finite non-target states remain", stage="analysis")
    pruned = rg.restricted(keep)
    for si in range(len(pruned.states)):
        if not pruned.is_target(si) and not pruned.out[si]:
            raise GameError(
                "prune_deadlock",
                f"pruning stranded state {pruned.states[si]}",
                stage="analysis",
            )
    return pruned


def avoidance_strategy(rg: RegionGame, cls: ValueClassification) -> dict[int, int]:
    """Max's memoryless witness for +oo: per Max state, an edge that keeps
    the play outside Min's attractor (Min states outside cannot enter it)."""
    plus = cls.plus
    choice = {}
    for si in plus:
        if rg.owner(si) != MAX or rg.is_target(si):
            continue
        stay = [ei for ei in rg.out[si] if rg.transitions[ei].dst in plus]
        if stay:
            choice[si] = stay[0]
    return choice


def _negative_recurrence(rg: RegionGame, allowed, cap: int) -> set[int]:
    recur = set()
    for members in _restricted_scc(rg, allowed):
        sign, _ = _scc_sign(rg, members, cap)
        if sign == NEGATIVE:
            recur.update(members)
    return recur


def buchi_strategy(
    rg: RegionGame, cls: ValueClassification, cap: int = CYCLE_CAP_DEFAULT
) -> dict[int, int]:
    """Min's memoryless witness for -oo.

    The -oo region is a trap for Max, so Min can follow attractor ranks
    toward the negative recurrence set and, once on it, step anywhere that
    stays inside; every closed loop of the resulting play is negative.
    """
    minus = set(cls.minus)
    targets = [si for si in range(len(rg.states)) if rg.is_target(si)]
    recur = _negative_recurrence(rg, attractor(rg, targets, MIN), cap) & minus

    # attractor ranks to recur, inside the trap
    rank = {si: 0 for si in recur}
    changed = True
    while changed:
        changed = False
        for si in minus:
            if si in rank:
                continue
            within = _out_within(rg, si, minus)
            got = [rank[rg.transitions[ei].dst] for ei in within if rg.transitions[ei].dst in rank]
            if rg.owner(si) == MIN:
                if got:
                    rank[si] = 1 + min(got)
                    changed = True
            elif within and len(got) == len(within):
                rank[si] = 1 + max(got)
                changed = True

    big = len(rg.states) + 1
    choice = {}
    for si in minus:
        if rg.owner(si) != MIN or rg.is_target(si):
            continue
        within = _out_within(rg, si, minus)
        if not within:
            continue
        if si in recur:
            choice[si] = within[0]
        else:
            choice[si] = min(within, key=lambda ei: rank.get(rg.transitions[ei].dst, big))
    return choice
