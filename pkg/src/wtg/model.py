"""Core game model: clocks, guards, transitions, locations, exact arithmetic.

Weights and guard constants are integers in input files; all derived
quantities (delays, edge weights, values) are `fractions.Fraction`.
Floats are confined to the Monte Carlo sampler and plot emission.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

OPS = ("lt", "le", "eq", "ge", "gt")

MIN = "min"
MAX = "max"


class GameError(Exception):
    """Domain error carrying a machine-readable kind and stage."""

    def __init__(self, kind: str, detail: str, stage: str = "model"):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail
        self.stage = stage


def parse_rational(s) -> Fraction:
    """Accept 'p/q' strings, plain integer strings, ints, and Fractions."""
    if isinstance(s, Fraction):
        return s
    if isinstance(s, int):
        return Fraction(s)
    if isinstance(s, str):
        try:
            return Fraction(s.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise GameError("bad_rational", f"cannot parse rational {s!r}") from e
    raise GameError("bad_rational", f"cannot parse rational {s!r}")


def rational_str(q: Fraction) -> str:
    """Serialize in lowest terms with an explicit denominator ('3/2', '1/1')."""
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True, order=True)
class Interval:
    """Rational interval with independent endpoint strictness.

    Degenerate forms: a point when lo == hi and both ends closed;
    empty when lo > hi, or lo == hi with a strict end.
    """

    lo: Fraction
    hi: Fraction
    lo_open: bool = False
    hi_open: bool = False

    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and (self.lo_open or self.hi_open)

    def is_point(self) -> bool:
        return self.lo == self.hi and not (self.lo_open or self.hi_open)

    def contains(self, v: Fraction) -> bool:
        if v < self.lo or (v == self.lo and self.lo_open):
            return False
        if v > self.hi or (v == self.hi and self.hi_open):
            return False
        return True

    def intersect(self, other: "Interval") -> "Interval":
        if (self.lo, not self.lo_open) < (other.lo, not other.lo_open):
            lo, lo_open = other.lo, other.lo_open
        else:
            lo, lo_open = self.lo, self.lo_open
        if (self.hi, self.hi_open) < (other.hi, other.hi_open):
            hi, hi_open = self.hi, self.hi_open
        else:
            hi, hi_open = other.hi, other.hi_open
        return Interval(lo, hi, lo_open, hi_open)

    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def __str__(self) -> str:
        if self.is_point():
            return f"{{{self.lo}}}"
        l = "(" if self.lo_open else "["
        r = ")" if self.hi_open else "]"
        return f"{l}{self.lo},{self.hi}{r}"


@dataclass(frozen=True)
class GuardAtom:
    """Single non-diagonal constraint `clock op const` with integer const."""

    clock: str
    op: str
    const: int

    def holds(self, v: Fraction) -> bool:
        if self.op == "lt":
            return v < self.const
        if self.op == "le":
            return v <= self.const
        if self.op == "eq":
            return v == self.const
        if self.op == "ge":
            return v >= self.const
        if self.op == "gt":
            return v > self.const
        raise GameError("bad_op", f"unknown op {self.op!r}")


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: tuple[GuardAtom, ...]
    reset: tuple[str, ...]
    weight: int

    def guard_interval(self, clock: str, bound: int) -> Interval:
        """Conjunction of this guard's constraints on one clock, within [0, bound]."""
        iv = Interval(Fraction(0), Fraction(bound))
        for atom in self.guard:
            if atom.clock != clock:
                continue
            c = Fraction(atom.const)
            if atom.op == "lt":
                iv = iv.intersect(Interval(Fraction(0), c, False, True))
            elif atom.op == "le":
                iv = iv.intersect(Interval(Fraction(0), c))
            elif atom.op == "eq":
                iv = iv.intersect(Interval(c, c))
            elif atom.op == "ge":
                iv = iv.intersect(Interval(c, Fraction(bound)))
            elif atom.op == "gt":
                iv = iv.intersect(Interval(c, Fraction(bound), True, False))
        return iv


@dataclass(frozen=True)
class Location:
    name: str
    owner: str  # MIN or MAX; irrelevant on targets
    rate: int  # weight accrued per time unit spent here
    is_target: bool = False


@dataclass(frozen=True)
class WeightBounds:
    """Largest absolute location rate, transition weight, and edge weight.

    The edge bound is M * rate_max + trans_max: no single edge can cost
    more, because delays never exceed the clock bound.
    """

    rate_max: int
    trans_max: int
    edge_max: int


Valuation = tuple  # tuple[Fraction, ...] aligned with Game.clocks
Config = tuple  # (location index, Valuation)


@dataclass(frozen=True)
class Game:
    clocks: tuple[str, ...]
    clock_bound: int
    locations: tuple[Location, ...]
    transitions: tuple[Transition, ...]
    _loc_index: Mapping[str, int] = field(default=None, repr=False, compare=False)
    _out: Mapping[int, tuple[int, ...]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_loc_index", {l.name: i for i, l in enumerate(self.locations)}
        )
        out = {i: [] for i in range(len(self.locations))}
        for ti, t in enumerate(self.transitions):
            out[self._loc_index[t.source]].append(ti)
            for atom in t.guard:
                # cache the clock position for region-level guard checks
                object.__setattr__(atom, "_clock_idx", self.clocks.index(atom.clock))
        object.__setattr__(self, "_out", {i: tuple(v) for i, v in out.items()})

    def loc_index(self, name: str) -> int:
        try:
            return self._loc_index[name]
        except KeyError:
            raise GameError("unknown_location", f"no location named {name!r}") from None

    def location(self, i: int) -> Location:
        return self.locations[i]

    def transitions_from(self, loc_idx: int) -> tuple[int, ...]:
        return self._out[loc_idx]

    def zero_valuation(self) -> Valuation:
        return tuple(Fraction(0) for _ in self.clocks)

    def weight_bounds(self) -> WeightBounds:
        rate_max = max((abs(l.rate) for l in self.locations), default=0)
        trans_max = max((abs(t.weight) for t in self.transitions), default=0)
        return WeightBounds(rate_max, trans_max, self.clock_bound * rate_max + trans_max)


def _require(cond: bool, kind: str, detail: str):
    if not cond:
        raise GameError(kind, detail)


def parse_game(data) -> Game:
    """Build a Game from a JSON string or an already-decoded dict.

    Performs schema-level validation (types, name resolution, op names,
    integer constants within [0, clock_bound]).  Semantic validation that
    needs the region abstraction lives in validate_game.
    """
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as e:
            raise GameError("bad_json", str(e)) from e
    _require(isinstance(data, dict), "bad_schema", "top level must be an object")
    for key in ("clocks", "clock_bound", "locations", "transitions"):
        _require(key in data, "bad_schema", f"missing key {key!r}")

    clocks = data["clocks"]
    _require(
        isinstance(clocks, list) and clocks and all(isinstance(c, str) for c in clocks),
        "bad_schema",
        "clocks must be a non-empty list of names",
    )
    _require(len(set(clocks)) == len(clocks), "bad_schema", "duplicate clock names")
    bound = data["clock_bound"]
    _require(
        isinstance(bound, int) and not isinstance(bound, bool) and bound >= 1,
        "bad_schema",
        "clock_bound must be a positive integer",
    )

    locations = []
    for raw in data["locations"]:
        _require(isinstance(raw, dict), "bad_schema", "location entries must be objects")
        name = raw.get("name")
        _require(isinstance(name, str) and name, "bad_schema", "location needs a name")
        is_target = bool(raw.get("target", False))
        owner = raw.get("owner", MIN)
        _require(owner in (MIN, MAX), "bad_schema", f"owner of {name!r} must be min or max")
        rate = raw.get("rate", 0)
        _require(
            isinstance(rate, int) and not isinstance(rate, bool),
            "bad_schema",
            f"rate of {name!r} must be an integer",
        )
        locations.append(Location(name, owner, rate, is_target))
    names = [l.name for l in locations]
    _require(len(set(names)) == len(names), "bad_schema", "duplicate location names")
    name_set = set(names)

    transitions = []
    for raw in data["transitions"]:
        _require(isinstance(raw, dict), "bad_schema", "transition entries must be objects")
        src, dst = raw.get("from"), raw.get("to")
        _require(src in name_set, "bad_schema", f"transition source {src!r} undeclared")
        _require(dst in name_set, "bad_schema", f"transition target {dst!r} undeclared")
        guard = []
        for g in raw.get("guard", []):
            _require(
                isinstance(g, dict) and set(g) == {"clock", "op", "const"},
                "bad_schema",
                "guard atoms need clock/op/const",
            )
            _require(g["clock"] in clocks, "bad_schema", f"guard clock {g['clock']!r} undeclared")
            _require(g["op"] in OPS, "bad_schema", f"guard op {g['op']!r} not in {OPS}")
            c = g["const"]
            _require(
                isinstance(c, int) and not isinstance(c, bool) and 0 <= c <= bound,
                "bad_schema",
                f"guard constant {c!r} outside 0..{bound}",
            )
            guard.append(GuardAtom(g["clock"], g["op"], c))
        reset = raw.get("reset", [])
        _require(
            isinstance(reset, list) and all(r in clocks for r in reset),
            "bad_schema",
            "reset must list declared clocks",
        )
        w = raw.get("weight", 0)
        _require(
            isinstance(w, int) and not isinstance(w, bool),
            "bad_schema",
            "transition weight must be an integer",
        )
        transitions.append(Transition(src, dst, tuple(guard), tuple(sorted(set(reset))), w))

    return Game(tuple(clocks), bound, tuple(locations), tuple(transitions))


def load_game(path: str) -> Game:
    with open(path, "r", encoding="utf-8") as f:
        return parse_game(f.read())


def serialize_game(game: Game) -> str:
    """Canonical JSON form; parse(serialize(g)) == g and bytes round-trip."""
    doc = {
        "clocks": list(game.clocks),
        "clock_bound": game.clock_bound,
        "locations": [
            {"name": l.name, "owner": l.owner, "rate": l.rate, "target": l.is_target}
            for l in game.locations
        ],
        "transitions": [
            {
                "from": t.source,
                "to": t.target,
                "guard": [{"clock": a.clock, "op": a.op, "const": a.const} for a in t.guard],
                "reset": list(t.reset),
                "weight": t.weight,
            }
            for t in game.transitions
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


@dataclass
class ValidationReport:
    ok: bool
    errors: list
    warnings: list


def validate_game(game: Game, check_all_regions: bool = False) -> ValidationReport:
    """Semantic validation beyond the JSON schema.

    Checks:
      * at least one target location, and targets have no outgoing transitions;
      * every guard is satisfiable and upper-bounds every clock by clock_bound
        (the standing boundedness assumption);
      * no deadlocks outside targets, verified on the region game (reachable
        part by default, every region when check_all_regions is set).
    """
    errors, warnings = [], []
    if not any(l.is_target for l in game.locations):
        errors.append(("no_target", "game has no target location"))
    for t in game.transitions:
        if game.location(game.loc_index(t.source)).is_target:
            errors.append(("target_outgoing", f"target {t.source!r} has an outgoing transition"))
        for clock in game.clocks:
            iv = t.guard_interval(clock, game.clock_bound)
            if iv.is_empty():
                errors.append(
                    ("empty_guard", f"guard of {t.source}->{t.target} unsatisfiable on {clock}")
                )
            has_upper = any(
                a.clock == clock and a.op in ("lt", "le", "eq") and a.const <= game.clock_bound
                for a in t.guard
            )
            if not has_upper:
                errors.append(
                    (
                        "unbounded_guard",
                        f"guard of {t.source}->{t.target} does not bound {clock} by"
                        f" {game.clock_bound}",
                    )
                )
    if not errors:
        from .regions import find_region_deadlocks  # deferred: regions imports model

        for loc, region in find_region_deadlocks(game, reachable_only=not check_all_regions):
            errors.append(
                ("deadlock", f"location {loc!r} has no enabled transition from region {region}")
            )
    return ValidationReport(not errors, errors, warnings)


def valid_delay_interval(game: Game, config: Config, trans_idx: int) -> Interval:
    """Set of delays t >= 0 after which the transition's guard holds.

    Guards are non-diagonal interval constraints, so the answer is a single
    (possibly empty) interval.  All clocks advance by the same t.  The cap
    at clock_bound - max(valuation) never truncates for validated games,
    whose guards upper-bound every clock.
    """
    _, valuation = config
    t = game.transitions[trans_idx]
    lo, lo_open = Fraction(0), False
    hi, hi_open = Fraction(game.clock_bound) - max(valuation), False
    for atom in t.guard:
        x = valuation[game.clocks.index(atom.clock)]
        c = Fraction(atom.const)
        if atom.op in ("le", "eq"):
            if c - x < hi:
                hi, hi_open = c - x, False
        if atom.op == "lt":
            if c - x <= hi:
                hi, hi_open = c - x, True
        if atom.op in ("ge", "eq"):
            if c - x > lo:
                lo, lo_open = c - x, False
        if atom.op == "gt":
            if c - x >= lo:
                lo, lo_open = c - x, True
    return Interval(lo, hi, lo_open, hi_open)


def apply_edge(game: Game, config: Config, trans_idx: int, t: Fraction) -> tuple[Config, Fraction]:
    """Fire one edge: delay t in the current location, then take the transition.

    Returns the successor configuration and the edge weight
    t * rate(location) + weight(transition).  Raises on invalid delays.
    """
    loc_idx, valuation = config
    t = Fraction(t)
    trans = game.transitions[trans_idx]
    if game.location(loc_idx).name != trans.source:
        raise GameError("wrong_source", f"transition starts at {trans.source!r}")
    iv = valid_delay_interval(game, config, trans_idx)
    if t < 0 or not iv.contains(t):
        raise GameError(
            "invalid_delay",
            f"delay {t} from {game.location(loc_idx).name} does not satisfy the guard of"
            f" {trans.source}->{trans.target}",
        )
    reset = set(trans.reset)
    new_val = tuple(
        Fraction(0) if c in reset else v + t for c, v in zip(game.clocks, valuation)
    )
    weight = t * game.location(loc_idx).rate + trans.weight
    return (game.loc_index(trans.target), new_val), weight


@dataclass(frozen=True)
class Play:
    """Finite play: a start configuration and the (transition, delay) steps."""

    start: Config
    steps: tuple[tuple[int, Fraction], ...]  # (transition index, delay)


def unroll_play(game: Game, play: Play) -> list[tuple[Config, Fraction]]:
    """Configurations visited and per-edge weights; validates every step."""
    out = []
    cfg = play.start
    for trans_idx, t in play.steps:
        cfg, w = apply_edge(game, cfg, trans_idx, t)
        out.append((cfg, w))
    return out


def cumulated_weight(game: Game, play: Play) -> Fraction:
    """Sum of edge weights along the play (delay * rate + transition weight)."""
    return sum((w for _, w in unroll_play(game, play)), Fraction(0))
