"""Independent oracles the test suite checks the library against.

Everything here is deliberately written from the concrete game semantics,
avoiding the library's region/value machinery: a discretized value
iteration on a delay grid, a brute-force walk of the stochastic play tree,
and direct partial sums for tail bounds.  Slow but obviously correct.
"""

from __future__ import annotations

from fractions import Fraction

from wtg.model import Game, apply_edge


def grid_values(game: Game, horizon: int = 20, steps_per_unit: int = 64):
    """Bounded-horizon values on a uniform delay/valuation grid.

    Returns per-location lists `val[loc][k]` of Fractions (None for "target
    not reachable within the horizon"), where k indexes clock value
    k/steps_per_unit.  Only one-clock games.  All delays are restricted to
    grid multiples, so the result is within horizon*step*rate_max of the
    true bounded-horizon value.
    """
    if len(game.clocks) != 1:
        raise ValueError("grid oracle handles one clock only")
    den = steps_per_unit
    top = game.clock_bound * den
    n_loc = len(game.locations)

    # per transition: enabled grid window [lo_k, hi_k] in scaled clock units
    windows = []
    for trans in game.transitions:
        iv = trans.guard_interval(game.clocks[0], game.clock_bound)
        if iv is None or iv.is_empty():
            windows.append(None)
            continue
        lo_k = int(iv.lo * den) + (1 if iv.lo_open else 0)
        hi_k = int(iv.hi * den) - (1 if iv.hi_open else 0)
        windows.append((max(lo_k, 0), min(hi_k, top)))

    # values scaled by den so everything stays integral; None means the
    # target is not reached within the remaining horizon
    val = [[None] * (top + 1) for _ in range(n_loc)]
    for li, loc in enumerate(game.locations):
        if loc.is_target:
            val[li] = [0] * (top + 1)

    for _ in range(horizon):
        new = []
        for li, loc in enumerate(game.locations):
            if loc.is_target:
                new.append(val[li])
                continue
            is_min = loc.owner == "min"
            best = [None] * (top + 1)
            poisoned = [False] * (top + 1)  # Max sees an unresolved branch
            for ti in game.transitions_from(li):
                win = windows[ti]
                if win is None or win[0] > win[1]:
                    continue
                lo_k, hi_k = win
                trans = game.transitions[ti]
                di = game.loc_index(trans.target)
                rate, wt = loc.rate, trans.weight * den
                succ = (lambda m: val[di][0]) if trans.reset else (lambda m: val[di][m])
                # suffix extremum of m*rate + wt + succ(m), plus a "suffix
                # contains None" flag, over m in [lo_k, hi_k]
                suf = [None] * (hi_k + 2)
                suf_none = [False] * (hi_k + 2)
                for m in range(hi_k, lo_k - 1, -1):
                    suf[m], suf_none[m] = suf[m + 1], suf_none[m + 1]
                    s = succ(m)
                    if s is None:
                        suf_none[m] = True
                    else:
                        f = m * rate + wt + s
                        if suf[m] is None or (f < suf[m] if is_min else f > suf[m]):
                            suf[m] = f
                for k in range(min(hi_k, top) + 1):
                    a = max(k, lo_k)
                    if a > hi_k:
                        continue
                    if suf_none[a]:
                        poisoned[k] = True
                    if suf[a] is not None:
                        cand = suf[a] - k * rate
                        if best[k] is None or (cand < best[k] if is_min else cand > best[k]):
                            best[k] = cand
            if not is_min:
                best = [None if poisoned[k] else best[k] for k in range(top + 1)]
            new.append(best)
        val = new

    step = Fraction(1, den)
    return [[None if v is None else v * step for v in row] for row in val]


def grid_error_bound(game: Game, horizon: int = 20, steps_per_unit: int = 64) -> Fraction:
    """Worst-case rounding slack of the grid oracle."""
    rate_max = max((abs(l.rate) for l in game.locations), default=0)
    return Fraction(horizon * rate_max, steps_per_unit)


def walk_play_tree(game: Game, strategies, start, depth: int):
    """Exhaustively unroll a stochastic play tree to a fixed depth.

    `strategies` maps owner ("min"/"max") to a `decide(config, steps)`
    callable returning a finite list of (prob, trans_idx, delay) atoms.
    Returns a list of (transition index sequence, probability, expected
    cumulated weight contribution) triples, one per maximal explored path;
    paths hitting a target stop there.
    """
    out = []

    def rec(config, prob, weight, seq, steps):
        li = config[0]
        if game.location(li).is_target or steps == depth:
            out.append((tuple(seq), prob, prob * weight))
            return
        atoms = strategies[game.location(li).owner].decide(config, steps)
        total = sum(q for q, _, _ in atoms)
        assert total == 1, f"atom probabilities sum to {total}"
        for q, ti, t in atoms:
            nxt, w = apply_edge(game, config, ti, t)
            rec(nxt, prob * q, weight + w, seq + [ti], steps + 1)

    rec(start, Fraction(1), Fraction(0), [], 0)
    return out


def tree_path_probability(paths, prefix):
    """Probability that the play follows exactly the given transition prefix."""
    prefix = tuple(prefix)
    n = len(prefix)
    return sum(
        p for seq, p, _ in paths if seq[:n] == prefix and len(seq) >= n
    )


def tail_partial_sum(w_edge_max: int, alpha: Fraction, m: int, start: int, terms: int) -> Fraction:
    """Direct partial sum of the dominating tail series.

    Sums j * w_edge_max * (1-alpha)^floor(j/m) for j = start+1 .. start+terms.
    """
    q = 1 - alpha
    total = Fraction(0)
    for j in range(start + 1, start + terms + 1):
        total += j * w_edge_max * q ** (j // m)
    return total


def sample_in_region(region, rng, den: int = 97):
    """A random clock valuation lying in the region (exact rationals)."""
    n = len(region.floors)
    vals = [None] * n
    fracs = sorted(rng.sample(range(1, den), len(region.order)))
    for gi, group in enumerate(region.order):
        for ci in group:
            vals[ci] = Fraction(region.floors[ci]) + Fraction(fracs[gi], den)
    for ci in range(n):
        if region.points[ci]:
            vals[ci] = Fraction(region.floors[ci])
    return tuple(vals)


def sample_play(game: Game, strategies, start, max_steps: int, rnd):
    """One sampled trajectory through a stochastic strategy profile.

    Strategies may expose `sample(config, steps, rnd)` (preferred, handles
    continuous delay parts) or the atom-list `decide` protocol, in which
    case an atom is drawn here.  Returns (configs, transition indices,
    per-step weights, reached_target); configs includes the start.
    """
    configs = [start]
    seq: list[int] = []
    weights: list[Fraction] = []
    config = start
    for steps in range(max_steps):
        if game.location(config[0]).is_target:
            break
        strat = strategies[game.location(config[0]).owner]
        if hasattr(strat, "sample"):
            ti, t = strat.sample(config, steps, rnd)
        else:
            atoms = strat.decide(config, steps)
            ti, t = atoms[-1][1], atoms[-1][2]
            u = Fraction(rnd.getrandbits(53), 1 << 53)
            acc = Fraction(0)
            for q, a_ti, a_t in atoms:
                acc += q
                if u < acc:
                    ti, t = a_ti, a_t
                    break
        config, w = apply_edge(game, config, ti, t)
        configs.append(config)
        seq.append(ti)
        weights.append(w)
    return configs, seq, weights, game.location(config[0]).is_target
