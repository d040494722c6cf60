"""Exact piecewise-affine value functions and value iteration (one clock).

Values live on [0, M] as piecewise-affine functions with rational
breakpoints, explicit values at breakpoints (guards may force jumps there)
and +oo as a first-class piece.  The one-step operator backs up, per region
edge, the extremum of u*rate + weight + V(successor) over the guard
regions, split into a constant part (regions strictly later than the
current one) and a running suffix extremum (delays inside the current
region); envelopes across edges give the new value.  All arithmetic is
exact; +oo uses the float infinity sentinel, never mixed into arithmetic.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction

from .model import MAX, MIN, GameError
from .regions import Region, RegionGame, all_regions

INF = float("inf")


def is_inf(v) -> bool:
    return v == INF


def _ext(mode: str, values):
    """Extremum with +oo absorbing for max and neutral for min."""
    values = list(values)
    if not values:
        return INF
    if mode == "max":
        return INF if any(is_inf(v) for v in values) else max(values)
    finite = [v for v in values if not is_inf(v)]
    return min(finite) if finite else INF


@dataclass(frozen=True)
class PA:
    """Piecewise-affine function on [xs[0], xs[-1]] with explicit breakpoint
    values; pieces are (slope, intercept) on the open gaps, or +oo."""

    xs: tuple[Fraction, ...]
    vals: tuple  # value at each breakpoint: Fraction or INF
    pieces: tuple  # per gap: (slope, intercept) or INF

    def __post_init__(self):
        assert len(self.vals) == len(self.xs) and len(self.pieces) == len(self.xs) - 1
        assert all(x0 < x1 for x0, x1 in zip(self.xs, self.xs[1:]))

    @staticmethod
    def constant(lo, hi, value) -> "PA":
        piece = INF if is_inf(value) else (Fraction(0), Fraction(value))
        return PA((Fraction(lo), Fraction(hi)), (value, value), (piece,))

    @staticmethod
    def affine(lo, hi, slope, intercept) -> "PA":
        s, i = Fraction(slope), Fraction(intercept)
        return PA(
            (Fraction(lo), Fraction(hi)),
            (s * lo + i, s * hi + i),
            ((s, i),),
        )

    @staticmethod
    def polyline(points) -> "PA":
        """Continuous polyline through (x, value) vertices."""
        xs = tuple(Fraction(x) for x, _ in points)
        vals = tuple(Fraction(v) for _, v in points)
        pieces = []
        for (x0, v0), (x1, v1) in zip(zip(xs, vals), zip(xs[1:], vals[1:])):
            s = (v1 - v0) / (x1 - x0)
            pieces.append((s, v0 - s * x0))
        return PA(xs, vals, tuple(pieces))

    # -- queries ---------------------------------------------------------

    def _gap(self, x: Fraction) -> int:
        i = bisect_right(self.xs, x) - 1
        return min(max(i, 0), len(self.pieces) - 1)

    def eval(self, x):
        x = Fraction(x)
        if x < self.xs[0] or x > self.xs[-1]:
            raise GameError("out_of_domain", f"{x} outside [{self.xs[0]}, {self.xs[-1]}]", "values")
        i = bisect_right(self.xs, x) - 1
        if self.xs[i] == x:
            return self.vals[i]
        p = self.pieces[i]
        return INF if is_inf(p) else p[0] * x + p[1]

    def limit(self, x, side: str):
        """One-sided limit at x from the adjacent open gap."""
        x = Fraction(x)
        if side == "right":
            if not self.xs[0] <= x < self.xs[-1]:
                raise GameError("out_of_domain", f"no right limit at {x}", "values")
            i = bisect_right(self.xs, x) - 1
        else:
            if not self.xs[0] < x <= self.xs[-1]:
                raise GameError("out_of_domain", f"no left limit at {x}", "values")
            i = bisect_left(self.xs, x) - 1
        p = self.pieces[i]
        return INF if is_inf(p) else p[0] * x + p[1]

    # -- structural ops --------------------------------------------------

    def refine(self, extra) -> "PA":
        """Insert breakpoints (values taken from the containing pieces)."""
        extra = sorted(set(Fraction(x) for x in extra) - set(self.xs))
        if not extra:
            return self
        xs, vals, pieces = list(self.xs), list(self.vals), list(self.pieces)
        for x in extra:
            if x <= xs[0] or x >= xs[-1]:
                continue
            i = bisect_right(xs, x) - 1
            p = pieces[i]
            v = INF if is_inf(p) else p[0] * x + p[1]
            xs.insert(i + 1, x)
            vals.insert(i + 1, v)
            pieces.insert(i + 1, p)
        return PA(tuple(xs), tuple(vals), tuple(pieces))

    def map_affine(self, slope, intercept) -> "PA":
        """Pointwise self(x) + slope*x + intercept."""
        s, c = Fraction(slope), Fraction(intercept)
        vals = tuple(v if is_inf(v) else v + s * x + c for x, v in zip(self.xs, self.vals))
        pieces = tuple(p if is_inf(p) else (p[0] + s, p[1] + c) for p in self.pieces)
        return PA(self.xs, vals, pieces)

    def combine(self, other: "PA", mode: str) -> "PA":
        """Exact pointwise min/max envelope."""
        assert (self.xs[0], self.xs[-1]) == (other.xs[0], other.xs[-1])
        xs = sorted(set(self.xs) | set(other.xs))
        a, b = self.refine(xs), other.refine(xs)
        # insert interior crossings of finite pieces
        crossings = []
        for i in range(len(a.pieces)):
            p, q = a.pieces[i], b.pieces[i]
            if is_inf(p) or is_inf(q) or p[0] == q[0]:
                continue
            x = (q[1] - p[1]) / (p[0] - q[0])
            if a.xs[i] < x < a.xs[i + 1]:
                crossings.append(x)
        if crossings:
            xs = sorted(set(xs) | set(crossings))
            a, b = a.refine(xs), b.refine(xs)
        vals = tuple(_ext(mode, (u, v)) for u, v in zip(a.vals, b.vals))
        pieces = []
        for i in range(len(a.pieces)):
            p, q = a.pieces[i], b.pieces[i]
            if is_inf(p) and is_inf(q):
                pieces.append(INF)
            elif is_inf(p):
                pieces.append(INF if mode == "max" else q)
            elif is_inf(q):
                pieces.append(INF if mode == "max" else p)
            else:
                mid = (a.xs[i] + a.xs[i + 1]) / 2
                pv, qv = p[0] * mid + p[1], q[0] * mid + q[1]
                better_p = pv <= qv if mode == "min" else pv >= qv
                pieces.append(p if better_p else q)
        return PA(tuple(a.xs), vals, tuple(pieces))

    def canonical(self) -> "PA":
        """Drop breakpoints that neither bend nor jump the function."""
        xs, vals, pieces = list(self.xs), list(self.vals), list(self.pieces)
        i = 1
        while i < len(xs) - 1:
            left, right, v = pieces[i - 1], pieces[i], vals[i]
            same = (
                (is_inf(left) and is_inf(right) and is_inf(v))
                or (
                    not is_inf(left)
                    and left == right
                    and not is_inf(v)
                    and v == left[0] * xs[i] + left[1]
                )
            )
            if same:
                del xs[i], vals[i], pieces[i]
            else:
                i += 1
        return PA(tuple(xs), tuple(vals), tuple(pieces))

    def equals(self, other: "PA") -> bool:
        a, b = self.canonical(), other.canonical()
        return a.xs == b.xs and a.vals == b.vals and a.pieces == b.pieces

    def leq(self, other: "PA") -> bool:
        """Exact pointwise <= on the whole domain."""
        xs = sorted(set(self.xs) | set(other.xs))
        a, b = self.refine(xs), other.refine(xs)
        for u, v in zip(a.vals, b.vals):
            if is_inf(v):
                continue
            if is_inf(u) or u > v:
                return False
        for i, (p, q) in enumerate(zip(a.pieces, b.pieces)):
            if is_inf(q):
                continue
            if is_inf(p):
                return False
            x0, x1 = a.xs[i], a.xs[i + 1]
            for x in (x0, x1):
                if p[0] * x + p[1] > q[0] * x + q[1]:
                    return False
        return True

    def sup_diff(self, other: "PA"):
        """Exact sup |self - other|; INF when the +oo patterns differ."""
        xs = sorted(set(self.xs) | set(other.xs))
        a, b = self.refine(xs), other.refine(xs)
        best = Fraction(0)
        for u, v in zip(a.vals, b.vals):
            if is_inf(u) != is_inf(v):
                return INF
            if not is_inf(u):
                best = max(best, abs(u - v))
        for i, (p, q) in enumerate(zip(a.pieces, b.pieces)):
            if is_inf(p) != is_inf(q):
                return INF
            if is_inf(p):
                continue
            for x in (a.xs[i], a.xs[i + 1]):
                best = max(best, abs((p[0] - q[0]) * x + (p[1] - q[1])))
        return best

    def breakpoints_of_finite_part(self) -> tuple[Fraction, ...]:
        c = self.canonical()
        keep = set()
        for i, p in enumerate(c.pieces):
            if not is_inf(p):
                keep.add(c.xs[i])
                keep.add(c.xs[i + 1])
        return tuple(sorted(keep))

    def finite_segment_count(self) -> int:
        return sum(1 for p in self.canonical().pieces if not is_inf(p))


def pa_envelope(fragments, mode: str) -> PA:
    """Exact lower/upper envelope of affine fragments.

    `fragments` is a sequence of (Interval, (slope, intercept)); the result
    covers the union of their spans, +oo where nothing is defined (min
    mode) and on any overlap gap for max mode accordingly.
    """
    fragments = list(fragments)
    if not fragments:
        raise GameError("empty_envelope", "no fragments given", "values")
    lo = min(iv.lo for iv, _ in fragments)
    hi = max(iv.hi for iv, _ in fragments)
    acc = PA.constant(lo, hi, INF)
    for iv, (s, c) in fragments:
        s, c = Fraction(s), Fraction(c)
        xs = sorted({lo, hi, iv.lo, iv.hi})
        vals, pieces = [], []
        for x in xs:
            inside = iv.contains(x)
            vals.append(s * x + c if inside else INF)
        for x0, x1 in zip(xs, xs[1:]):
            mid = (x0 + x1) / 2
            pieces.append((s, c) if iv.contains(mid) else INF)
        frag = PA(tuple(xs), tuple(vals), tuple(pieces))
        if mode == "max":
            # +oo outside a fragment's span must not absorb the envelope
            merged = acc.combine(frag, "max") if _covers(acc) and _covers(frag) else _max_partial(acc, frag)
            acc = merged
        else:
            acc = acc.combine(frag, "min")
    return acc.canonical()


def _covers(pa: PA) -> bool:
    return not any(is_inf(p) for p in pa.pieces) and not any(is_inf(v) for v in pa.vals)


def _max_partial(a: PA, b: PA) -> PA:
    """Max treating +oo as 'undefined' (ignored) rather than absorbing."""
    xs = sorted(set(a.xs) | set(b.xs))
    a, b = a.refine(xs), b.refine(xs)
    crossings = []
    for i in range(len(a.pieces)):
        p, q = a.pieces[i], b.pieces[i]
        if is_inf(p) or is_inf(q) or p[0] == q[0]:
            continue
        x = (q[1] - p[1]) / (p[0] - q[0])
        if a.xs[i] < x < a.xs[i + 1]:
            crossings.append(x)
    if crossings:
        xs = sorted(set(xs) | set(crossings))
        a, b = a.refine(xs), b.refine(xs)
    vals = []
    for u, v in zip(a.vals, b.vals):
        if is_inf(u):
            vals.append(v)
        elif is_inf(v):
            vals.append(u)
        else:
            vals.append(max(u, v))
    pieces = []
    for i in range(len(a.pieces)):
        p, q = a.pieces[i], b.pieces[i]
        if is_inf(p):
            pieces.append(q)
        elif is_inf(q):
            pieces.append(p)
        else:
            mid = (a.xs[i] + a.xs[i + 1]) / 2
            pieces.append(p if p[0] * mid + p[1] >= q[0] * mid + q[1] else q)
    return PA(tuple(a.xs), tuple(vals), tuple(pieces))


# -- the one-step operator ------------------------------------------------


@dataclass
class ValueMap:
    """One PA per location, all on [0, M]."""

    per_location: tuple[PA, ...]

    def canonical(self) -> "ValueMap":
        return ValueMap(tuple(p.canonical() for p in self.per_location))

    def equals(self, other: "ValueMap") -> bool:
        return all(a.equals(b) for a, b in zip(self.per_location, other.per_location))

    def value_at(self, loc_idx: int, x):
        return self.per_location[loc_idx].eval(x)


def initial_value_map(rg: RegionGame) -> ValueMap:
    game = rg.game
    m = game.clock_bound
    pas = []
    for loc in game.locations:
        pas.append(PA.constant(0, m, Fraction(0) if loc.is_target else INF))
    return ValueMap(tuple(pas))


def region_extremum(g: PA, region: Region, mode: str):
    """Extremum of g over one guard region, via closure one-sided limits.

    Point regions contribute their exact value; open regions contribute
    both endpoint limits and all interior breakpoint values/limits.
    """
    iv = region.interval(0)
    if iv.is_point():
        return g.eval(iv.lo)
    a, b = iv.lo, iv.hi
    cands = [g.limit(a, "right"), g.limit(b, "left")]
    for x in g.xs:
        if a < x < b:
            cands.append(g.eval(x))
            cands.append(g.limit(x, "left"))
            cands.append(g.limit(x, "right"))
    return _ext(mode, cands)


def _scal(mode: str, *vals):
    """Extremum over scalars where None marks 'nothing yet'."""
    vals = [v for v in vals if v is not None]
    return _ext(mode, vals) if vals else None


def suffix_extremum(g: PA, a: Fraction, b: Fraction, mode: str) -> PA:
    """h(x) = ext of g over [x, b), for x in (a, b), returned on [a, b].

    The right end b is approached but never attained (one-sided limit);
    the point x itself always counts.  Output endpoint slots hold limits
    and are never read by callers.  Walks the pieces right to left with
    `best` = extremum of g over [y1, b) past the current segment (y0, y1).
    """
    a, b = Fraction(a), Fraction(b)
    g = g.refine([a, b])
    ys = [x for x in g.xs if a <= x <= b]
    best = None  # ext over the empty set just below b
    rev_xs = [b]
    rev_vals = [g.limit(b, "left")]
    rev_pieces = []
    for j in range(len(ys) - 2, -1, -1):
        y0, y1 = ys[j], ys[j + 1]
        p = g.pieces[g._gap((y0 + y1) / 2)]
        if y1 != b:
            best = _scal(mode, best, g.eval(y1))
        # within(x) = ext of the piece over [x, y1)
        if is_inf(p):
            within_affine, within_const = None, INF
        else:
            s, c = p
            if (s > 0) == (mode == "max") and s != 0:
                within_affine, within_const = None, s * y1 + c
            else:
                within_affine, within_const = p, None
        const = _scal(mode, within_const, best)
        if within_affine is None:
            # constant segment (const is INF or a number; never None here)
            rev_pieces.append(INF if is_inf(const) else (Fraction(0), Fraction(const)))
        elif const is None or (is_inf(const) and mode == "min"):
            rev_pieces.append(within_affine)
        elif is_inf(const):
            rev_pieces.append(INF)
        else:
            s, c = within_affine
            cross = None
            if s != 0:
                xc = (Fraction(const) - c) / s
                if y0 < xc < y1:
                    cross = xc
            if cross is None:
                mid = (y0 + y1) / 2
                pv = s * mid + c
                use_p = pv <= const if mode == "min" else pv >= const
                rev_pieces.append(within_affine if use_p else (Fraction(0), Fraction(const)))
            else:
                # the sloped piece wins left of the crossing, const right of it
                rev_pieces.append((Fraction(0), Fraction(const)))
                rev_xs.append(cross)
                rev_vals.append(Fraction(const))
                rev_pieces.append(within_affine)
        # fold the whole open segment (both end limits), then the point y0
        lim0 = INF if is_inf(p) else p[0] * y0 + p[1]
        lim1 = INF if is_inf(p) else p[0] * y1 + p[1]
        best = _scal(mode, best, lim0, lim1)
        slot = best if y0 == a else _scal(mode, best, g.eval(y0))
        if y0 != a:
            best = _scal(mode, best, g.eval(y0))
        rev_xs.append(y0)
        rev_vals.append(INF if slot is None else slot)
    return PA(tuple(reversed(rev_xs)), tuple(reversed(rev_vals)), tuple(reversed(rev_pieces)))


def edge_objective(rg: RegionGame, vm: ValueMap, edge) -> PA:
    """g(u) = u*rate + weight + V(successor at u), composing any reset."""
    game = rg.game
    loc = game.location(rg.states[edge.src].loc_idx)
    trans = game.transitions[edge.trans_idx]
    dst_loc = game.loc_index(trans.target)
    m = game.clock_bound
    if trans.reset:
        land = vm.per_location[dst_loc].eval(0)
        if is_inf(land):
            return PA.constant(0, m, INF)
        return PA.affine(0, m, loc.rate, trans.weight + land)
    return vm.per_location[dst_loc].map_affine(loc.rate, trans.weight)


def _candidate_for_edge(rg: RegionGame, vm: ValueMap, edge, mode: str):
    """Per-edge candidate PA on the source region (open part + point)."""
    game = rg.game
    src = rg.states[edge.src]
    rate = game.location(src.loc_idx).rate
    g = edge_objective(rg, vm, edge)

    src_iv = src.region.interval(0)
    cands = []  # PA fragments over the source interval, pre -rate*x shift
    for grd in edge.guard_regions:
        if grd == src.region:
            if src_iv.is_point():
                cands.append(("point", g.eval(src_iv.lo)))
            else:
                h = suffix_extremum(g, src_iv.lo, src_iv.hi, mode)
                cands.append(("pa", h))
        else:
            e = region_extremum(g, grd, mode)
            cands.append(("const", e))
    return cands, rate


def _fold_candidates(cands, src_iv, mode: str):
    """Envelope of point/const/pa candidates over the source interval."""
    if src_iv.is_point():
        vals = []
        for kind, v in cands:
            vals.append(v if kind != "pa" else v.eval(src_iv.lo))
        return _ext(mode, vals)
    lo, hi = src_iv.lo, src_iv.hi
    acc = None
    for kind, v in cands:
        if kind == "const":
            pa = PA.constant(lo, hi, v)
        else:
            pa = v
        acc = pa if acc is None else acc.combine(pa, mode)
    return acc


def apply_F(rg: RegionGame, vm: ValueMap) -> ValueMap:
    """One exact backup of the value map over the region game."""
    game = rg.game
    if len(game.clocks) != 1:
        raise GameError(
            "multi_clock",
            "exact value iteration handles one clock; use the simulation tools",
            "values",
        )
    m = game.clock_bound
    regions = sorted(all_regions(1, m), key=Region.sort_key)
    new_pas = []
    for li, loc in enumerate(game.locations):
        if loc.is_target:
            new_pas.append(PA.constant(0, m, Fraction(0)))
            continue
        mode = "min" if loc.owner == MIN else "max"
        xs = [Fraction(0)]
        vals = []
        pieces = []
        point_vals = {}
        open_frags = {}
        for region in regions:
            key = (li, region)
            si = rg.state_index.get(key)
            iv = region.interval(0)
            if si is None:
                result = INF if iv.is_point() else PA.constant(iv.lo, iv.hi, INF)
            else:
                per_edge = []
                for ei in rg.out[si]:
                    cands, rate = _candidate_for_edge(rg, vm, rg.transitions[ei], mode)
                    folded = _fold_candidates(cands, iv, mode)
                    if iv.is_point():
                        per_edge.append(folded if is_inf(folded) else folded - rate * iv.lo)
                    else:
                        per_edge.append(folded.map_affine(-rate, 0))
                if not per_edge:
                    result = INF if iv.is_point() else PA.constant(iv.lo, iv.hi, INF)
                elif iv.is_point():
                    result = _ext(mode, per_edge)
                else:
                    acc = per_edge[0]
                    for nxt in per_edge[1:]:
                        acc = acc.combine(nxt, mode)
                    result = acc
            if iv.is_point():
                point_vals[iv.lo] = result
            else:
                open_frags[(iv.lo, iv.hi)] = result
        # assemble the location PA on [0, m]
        for k in range(m):
            a, b = Fraction(k), Fraction(k + 1)
            frag = open_frags[(a, b)]
            frag = frag.refine([a, b])
            sub_xs = list(frag.xs)
            vals.append(point_vals[a])
            for j, x in enumerate(sub_xs[:-1]):
                if j > 0:
                    xs.append(x)
                    vals.append(frag.vals[j])
                pieces.append(frag.pieces[j])
            xs.append(b)
        vals.append(point_vals[Fraction(m)])
        new_pas.append(PA(tuple(xs), tuple(vals), tuple(pieces)).canonical())
    return ValueMap(tuple(new_pas))


@dataclass
class IterationTrace:
    iterations: int
    converged: bool
    residual: object = None  # sup gap of the last two iterates (Fraction or INF)
    snapshots: list = field(default_factory=list)


def default_max_iters(rg: RegionGame) -> int:
    wb = rg.game.weight_bounds()
    return 4 * len(rg) * (wb.edge_max + 1)


def value_iterate(
    rg: RegionGame, max_iters: int | None = None, keep_snapshots: bool = False
) -> tuple[ValueMap, IterationTrace]:
    """Iterate the backup operator from +oo (targets 0) to the exact fixpoint.

    Stops at exact stabilization (piecewise-affine equality).  On pruned
    divergent games stabilization is reached; hitting max_iters reports the
    residual between the last two iterates instead of silently looping.
    """
    if max_iters is None:
        max_iters = default_max_iters(rg)
    vm = initial_value_map(rg).canonical()
    trace = IterationTrace(0, False)
    if keep_snapshots:
        trace.snapshots.append(vm)
    for it in range(1, max_iters + 1):
        nxt = apply_F(rg, vm).canonical()
        trace.iterations = it
        if keep_snapshots:
            trace.snapshots.append(nxt)
        if nxt.equals(vm):
            trace.converged = True
            return vm, trace
        vm = nxt
    last = apply_F(rg, vm).canonical()
    trace.residual = max(
        (a.sup_diff(b) for a, b in zip(vm.per_location, last.per_location)),
        default=Fraction(0),
    )
    raise GameError(
        "no_convergence",
        f"value iteration did not stabilize in {max_iters} steps"
        f" (residual {trace.residual})",
        "values",
    )


@dataclass(frozen=True)
class CellDecomposition:
    """Minimal affine-piece breakpoints of the converged values."""

    breakpoints: tuple[tuple[Fraction, ...], ...]  # per location, finite part
    alpha_cells: int  # largest per-location interior cell count


def extract_cells(vm: ValueMap) -> CellDecomposition:
    bps = []
    alpha = 1
    for pa in vm.per_location:
        b = pa.breakpoints_of_finite_part()
        bps.append(b)
        alpha = max(alpha, pa.finite_segment_count())
    return CellDecomposition(tuple(bps), alpha)
