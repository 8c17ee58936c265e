"""Problem-instance data model: buses, lines, generators, loads and interface bids."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

from .errors import ModelError, ValidationError

INF = math.inf


@dataclass(frozen=True)
class Bus:
    id: int
    area: int


@dataclass(frozen=True)
class Line:
    """DC branch.  Positive flow runs from ``from_bus`` to ``to_bus``."""

    id: int
    from_bus: int
    to_bus: int
    reactance: float
    capacity: float = INF

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.capacity)

    @property
    def susceptance(self) -> float:
        return 1.0 / self.reactance


@dataclass(frozen=True)
class Generator:
    """Offer with cost ``fixed_cost + cost*g + quad*g**2`` over ``[pmin, pmax]``."""

    id: str
    bus: int
    cost: float
    pmin: float
    pmax: float
    quad: float = 0.0
    fixed_cost: float = 0.0

    def marginal_cost(self, mw: float) -> float:
        return self.cost + 2.0 * self.quad * mw

    def total_cost(self, mw: float) -> float:
        return self.fixed_cost + self.cost * mw + self.quad * mw * mw


@dataclass(frozen=True)
class Load:
    bus: int
    mw: float


@dataclass(frozen=True)
class InterfaceBid:
    """Buy ``s`` MW at ``buy_bus`` and sell it at ``sell_bus`` (different areas).

    ``price_gap`` is the anticipated price difference the bidder asks for,
    ``max_mw`` the largest quantity it will clear.
    """

    id: str
    buy_bus: int
    sell_bus: int
    price_gap: float
    max_mw: float


@dataclass(frozen=True)
class ScenarioSpec:
    """Named overrides applied on top of a base case.

    ``capacities`` and ``price_gaps`` map a line/bid reference to a value; the
    key ``"*"`` addresses every line (bid) and is applied before specific keys.
    Line references are line ids or ``"from-to"`` endpoint pairs.
    """

    name: str
    capacities: tuple[tuple[str, float], ...] = ()
    price_gaps: tuple[tuple[str, float], ...] = ()
    removals: tuple[str, ...] = ()
    reactances: tuple[tuple[str, float], ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.capacities or self.price_gaps or self.removals or self.reactances)


@dataclass(frozen=True)
class GridCase:
    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    bids: tuple[InterfaceBid, ...] = ()
    base_mva: float = 100.0
    reference_bus: int | None = None
    allow_boundary_injections: bool = False
    notes: tuple[str, ...] = ()
    scenarios: tuple[ScenarioSpec, ...] = field(default=(), compare=False)

    # -- lookups -----------------------------------------------------------
    def bus_area(self) -> dict[int, int]:
        return {b.id: b.area for b in self.buses}

    @property
    def areas(self) -> tuple[int, ...]:
        return tuple(sorted({b.area for b in self.buses}))

    def line(self, ref: int | str) -> Line:
        """Resolve a line by id or by ``"from-to"`` endpoints (either order)."""
        ref = str(ref).strip()
        if "-" in ref:
            a, b = (int(t) for t in ref.split("-", 1))
            hits = [ln for ln in self.lines if {ln.from_bus, ln.to_bus} == {a, b}]
            if len(hits) != 1:
                raise ValidationError(f"line reference {ref!r} matches {len(hits)} lines")
            return hits[0]
        for ln in self.lines:
            if ln.id == int(ref):
                return ln
        raise ValidationError(f"unknown line {ref!r}")

    def bid(self, bid_id: str) -> InterfaceBid:
        for b in self.bids:
            if b.id == bid_id:
                return b
        raise ValidationError(f"unknown bid {bid_id!r}")

    def demand(self) -> dict[int, float]:
        """Aggregate load per bus (MW)."""
        out: dict[int, float] = defaultdict(float)
        for ld in self.loads:
            out[ld.bus] += ld.mw
        return dict(out)

    def tie_lines(self) -> tuple[Line, ...]:
        area = self.bus_area()
        return tuple(ln for ln in self.lines if area[ln.from_bus] != area[ln.to_bus])

    def boundary_buses(self) -> tuple[int, ...]:
        ids = set()
        for ln in self.tie_lines():
            ids.update((ln.from_bus, ln.to_bus))
        return tuple(sorted(ids))

    def with_changes(self, **kw) -> "GridCase":
        return replace(self, **kw)

    def scenario(self, name: str) -> ScenarioSpec:
        for sc in self.scenarios:
            if sc.name == name:
                return sc
        known = ", ".join(s.name for s in self.scenarios) or "none"
        raise ValidationError(f"unknown scenario {name!r} (known: {known})")

    # -- validation --------------------------------------------------------
    def validate(self, check_boundary: bool = True) -> "GridCase":
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate bus ids")
        if not ids:
            raise ValidationError("case has no buses")
        known = set(ids)

        line_ids = [ln.id for ln in self.lines]
        if len(set(line_ids)) != len(line_ids):
            raise ValidationError("duplicate line ids")
        for ln in self.lines:
            if ln.from_bus not in known or ln.to_bus not in known:
                raise ValidationError(f"line {ln.id} references an unknown bus")
            if ln.from_bus == ln.to_bus:
                raise ValidationError(f"line {ln.id} is a self-loop")
            if not (math.isfinite(ln.reactance) and ln.reactance > 0):
                raise ValidationError(f"line {ln.id}: reactance must be positive and finite")
            if not ln.capacity > 0:
                raise ValidationError(f"line {ln.id}: capacity must be positive")

        gen_ids = [g.id for g in self.generators]
        if len(set(gen_ids)) != len(gen_ids):
            raise ValidationError("duplicate generator ids")
        for g in self.generators:
            if g.bus not in known:
                raise ValidationError(f"generator {g.id} references unknown bus {g.bus}")
            if g.pmin > g.pmax:
                raise ValidationError(f"generator {g.id}: pmin exceeds pmax")
            if g.quad < 0:
                raise ValidationError(f"generator {g.id}: quadratic coefficient must be >= 0")
        for ld in self.loads:
            if ld.bus not in known:
                raise ValidationError(f"load references unknown bus {ld.bus}")

        area = self.bus_area()
        bid_ids = [b.id for b in self.bids]
        if len(set(bid_ids)) != len(bid_ids):
            raise ValidationError("duplicate bid ids")
        for b in self.bids:
            if b.buy_bus not in known or b.sell_bus not in known:
                raise ValidationError(f"bid {b.id} references an unknown bus")
            if area[b.buy_bus] == area[b.sell_bus]:
                raise ValidationError(f"bid {b.id}: buy and sell buses lie in the same area")
            if b.max_mw < 0:
                raise ValidationError(f"bid {b.id}: negative quantity limit")

        if self.reference_bus is not None and self.reference_bus not in known:
            raise ValidationError(f"reference bus {self.reference_bus} not in case")

        if check_boundary:
            self.check_boundary_rules()
        return self

    def check_boundary_rules(self) -> None:
        """Settlement preconditions on boundary buses.

        Generators and loads may not sit on a boundary bus unless the case opts in
        with ``allow_boundary_injections``.  A bid must either touch two boundary
        buses, or none (it is then inactive in this topology).
        """
        boundary = set(self.boundary_buses())
        if not self.allow_boundary_injections:
            for g in self.generators:
                if g.bus in boundary:
                    raise ModelError(f"generator {g.id} sits on boundary bus {g.bus}")
            for ld in self.loads:
                if ld.bus in boundary and ld.mw != 0.0:
                    raise ModelError(f"load sits on boundary bus {ld.bus}")
        for b in self.bids:
            ends = (b.buy_bus in boundary, b.sell_bus in boundary)
            if ends[0] != ends[1]:
                raise ModelError(f"bid {b.id} has only one end on a boundary bus")
        if self.reference_bus is not None and boundary and self.reference_bus not in boundary:
            raise ModelError(f"reference bus {self.reference_bus} is not a boundary bus")
