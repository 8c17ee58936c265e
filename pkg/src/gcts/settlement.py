"""Congestion-rent decomposition, merchandise surplus, bid profit and theorem checks.

Rent components ``psi`` are indexed by a line group (the internal lines of one
area, or the tie-lines between one pair of areas) and a payer (one area's
internal transactions, or one interface bid):

* bid ``b`` buying at ``p`` and selling at ``q`` on any line group ``G``::

      psi(G, b) = sum_{l in G} mu_l (S[l, p] - S[l, q]) s_b

* area ``i`` on its own internal lines::

      psi(i, i) = mu_i' S'_i (g_i - d_i)

  with ``S'_i`` the slack-free internal sensitivities;

* every other (group, area) pair is zero by construction.

Summing over payers gives the group rent ``beta``; summing over groups gives
the payer share ``gamma``.  An area's share equals its merchandise surplus and
a bid's share equals its profit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .grid import slack_free_internal_ptdf
from .market import MarketSolution, solve_local_ed

log = logging.getLogger(__name__)

FD_STEP = 1e-4


# ----------------------------------------------------------------- keys


@dataclass(frozen=True, order=True)
class LineGroup:
    """Internal lines of one area (``kind="area"``) or ties of an area pair (``kind="tie"``)."""

    kind: str
    areas: tuple[int, ...]

    @classmethod
    def internal(cls, area: int) -> LineGroup:
        return cls("area", (area,))

    @classmethod
    def tie(cls, a: int, b: int) -> LineGroup:
        return cls("tie", tuple(sorted((a, b))))

    @property
    def label(self) -> str:
        if self.kind == "area":
            return f"area {self.areas[0]} lines"
        return "tie {}-{}".format(*self.areas)


@dataclass(frozen=True, order=True)
class Payer:
    """Internal transactions of an area (``kind="area"``) or one interface bid."""

    kind: str
    key: str

    @classmethod
    def area(cls, area: int) -> Payer:
        return cls("area", str(area))

    @classmethod
    def bid(cls, bid_id: str) -> Payer:
        return cls("bid", bid_id)

    @property
    def label(self) -> str:
        return f"{self.kind} {self.key}"


@dataclass(frozen=True)
class RentComponent:
    line_group: LineGroup
    payer: Payer
    amount: float


# ----------------------------------------------------------------- dual bundle


def with_duals(solution: MarketSolution, multipliers) -> MarketSolution:
    """Copy of ``solution`` whose dual bundle is taken from recovered multipliers."""
    mu = {l: 0.0 for l in solution.mu}
    mu.update(multipliers.mu)
    return replace(solution, lam=multipliers.lam, mu=mu, rho=dict(multipliers.rho))


def _line_group(solution: MarketSolution, line_id: int) -> LineGroup:
    net = solution.context.network
    owner = solution.context.line_owner[line_id]
    if owner is not None:
        return LineGroup.internal(owner)
    ln = next(x for x in net.lines if x.id == line_id)
    return LineGroup.tie(net.area_of[ln.from_bus], net.area_of[ln.to_bus])


def _groups(solution: MarketSolution) -> dict[LineGroup, list[int]]:
    """Every line group of the grid with its bounded lines (possibly none)."""
    net = solution.context.network
    out: dict[LineGroup, list[int]] = {LineGroup.internal(a): [] for a in net.areas}
    for ln in net.lines:
        grp = _line_group(solution, ln.id)
        out.setdefault(grp, [])
        if ln.bounded:
            out[grp].append(ln.id)
    return dict(sorted(out.items()))


def _active_mu(solution: MarketSolution, lines) -> dict[int, float]:
    return {l: solution.mu.get(l, 0.0) for l in lines if solution.mu.get(l, 0.0) != 0.0}


# ----------------------------------------------------------------- components


def _bid_component(solution: MarketSolution, bid_id: str, lines) -> float:
    ctx = solution.context
    bid = ctx.case.bid(bid_id)
    qty = solution.bids.get(bid_id, 0.0)
    k = [b.id for b in ctx.case.bids].index(bid_id)
    if not ctx.active_bids[k] or qty == 0.0:
        return 0.0
    return float(
        sum(m * (ctx.sensitivity(l, bid.buy_bus) - ctx.sensitivity(l, bid.sell_bus)) for l, m in _active_mu(solution, lines).items())
        * qty
    )


def psi_tie_from_bid(solution: MarketSolution, bid_id: str, areas: tuple[int, int]) -> float:
    """Rent that bid ``bid_id`` contributes to the tie-lines between ``areas``."""
    grp = LineGroup.tie(*areas)
    return _bid_component(solution, bid_id, _groups(solution).get(grp, []))


def psi_internal_from_bid(solution: MarketSolution, bid_id: str, area: int) -> float:
    """Rent that bid ``bid_id`` contributes to the internal lines of ``area``."""
    return _bid_component(solution, bid_id, _groups(solution)[LineGroup.internal(area)])


def psi_internal_self(solution: MarketSolution, area: int) -> float:
    """Rent that an area's own generation and load contribute to its internal lines."""
    ctx = solution.context
    mu = _active_mu(solution, _groups(solution)[LineGroup.internal(area)])
    if not mu or area not in ctx.equivalents:
        return 0.0
    sf = slack_free_internal_ptdf(ctx.network, area, ctx.equivalents, ctx.ref_bus)
    inj = solution.net_injections()
    p = np.array([inj[b] for b in sf.bus_ids])
    mu_vec = np.array([mu.get(l, 0.0) for l in sf.line_ids])
    return float(mu_vec @ sf.matrix @ p)


def rent_components(solution: MarketSolution) -> list[RentComponent]:
    """The full psi matrix, one entry per (line group, payer), zeros included."""
    ctx = solution.context
    groups = _groups(solution)
    payers = [Payer.area(a) for a in ctx.areas] + [Payer.bid(b.id) for b in ctx.case.bids]
    out = []
    for grp, lines in groups.items():
        for payer in payers:
            if payer.kind == "bid":
                amount = _bid_component(solution, payer.key, lines)
            elif grp.kind == "area" and str(grp.areas[0]) == payer.key:
                amount = psi_internal_self(solution, grp.areas[0])
            else:
                amount = 0.0
            out.append(RentComponent(grp, payer, amount))
    return out


# ----------------------------------------------------------------- ledger


@dataclass(frozen=True)
class RentLedger:
    """Rent components with their per-group totals (beta) and per-payer shares (gamma)."""

    components: tuple[RentComponent, ...]
    beta: dict[LineGroup, float]
    gamma: dict[Payer, float]

    def psi(self, group: LineGroup, payer: Payer) -> float:
        for c in self.components:
            if c.line_group == group and c.payer == payer:
                return c.amount
        return 0.0

    @property
    def imbalance(self) -> float:
        return abs(sum(self.beta.values()) - sum(self.gamma.values()))


def aggregate_rents(components) -> RentLedger:
    comps = tuple(components)
    beta: dict[LineGroup, float] = {}
    gamma: dict[Payer, float] = {}
    for c in comps:
        beta[c.line_group] = beta.get(c.line_group, 0.0) + c.amount
        gamma[c.payer] = gamma.get(c.payer, 0.0) + c.amount
    ledger = RentLedger(comps, dict(sorted(beta.items())), dict(sorted(gamma.items())))
    scale = 1.0 + sum(abs(c.amount) for c in comps)
    if ledger.imbalance > 1e-9 * scale:
        log.error("rent ledger is internally inconsistent by %.3g", ledger.imbalance)
    return ledger


# ----------------------------------------------------------------- surplus and profit


@dataclass(frozen=True)
class AreaSettlement:
    area: int
    from_generators: float  # negative: payments to generators
    from_loads: float
    from_bids: float

    @property
    def merchandise_surplus(self) -> float:
        return self.from_generators + self.from_loads + self.from_bids


@dataclass(frozen=True)
class BidSettlement:
    """Money flows of one bid or one group of bids.

    ``clearing_cost`` values the cleared quantity at the marginal price gap
    between the sell and buy boundary multipliers, which equals the offered
    gap for a partially cleared bid and exceeds it for a bid at its limit.
    """

    name: str
    quantity: float
    revenue: float
    clearing_cost: float
    offer_cost: float

    @property
    def profit(self) -> float:
        return self.revenue - self.clearing_cost


def area_settlement(solution: MarketSolution, area: int, prices: Mapping[int, float] | None = None) -> AreaSettlement:
    ctx = solution.context
    net = ctx.network
    lmp = solution.lmp if prices is None else prices
    gens = sum(-lmp[g.bus] * solution.dispatch[g.id] for g in ctx.case.generators if net.area_of[g.bus] == area)
    loads = sum(lmp[b] * mw for b, mw in ctx.case.demand().items() if net.area_of[b] == area)
    pos = solution.boundary_positions()
    bids = sum(lmp[b] * pos[ctx.boundary_pos[b]] for b in net.boundary_buses(area))
    return AreaSettlement(area, float(gens), float(loads), float(bids))


def merchandise_surplus(solution: MarketSolution, area: int, prices: Mapping[int, float] | None = None) -> float:
    """Collections from loads and bids minus payments to generators in ``area``."""
    return area_settlement(solution, area, prices).merchandise_surplus


def bid_settlement(solution: MarketSolution, bid_ids, name: str | None = None, prices=None) -> BidSettlement:
    """Revenue, clearing cost and profit of one bid or a group of bids."""
    ctx = solution.context
    lmp = solution.lmp if prices is None else prices
    qty = rev = cost = offer = 0.0
    for bid_id in [bid_ids] if isinstance(bid_ids, str) else bid_ids:
        bid = ctx.case.bid(bid_id)
        s = solution.bids.get(bid_id, 0.0)
        k = [b.id for b in ctx.case.bids].index(bid_id)
        if not ctx.active_bids[k] or s == 0.0:
            continue
        gap = solution.rho[bid.sell_bus] - solution.rho[bid.buy_bus]
        qty += s
        rev += (lmp[bid.sell_bus] - lmp[bid.buy_bus]) * s
        cost += gap * s
        offer += bid.price_gap * s
    label = name if name is not None else (bid_ids if isinstance(bid_ids, str) else ",".join(bid_ids))
    return BidSettlement(label, qty, rev, cost, offer)


def bid_profit(solution: MarketSolution, bid_ids, prices=None) -> BidSettlement:
    return bid_settlement(solution, bid_ids, prices=prices)


def bid_groups(solution: MarketSolution) -> dict[str, list[str]]:
    """Bids keyed by the unordered pair of areas they connect, e.g. ``"1-2"``."""
    area = solution.context.network.area_of
    out: dict[str, list[str]] = {}
    for b in solution.case.bids:
        pair = sorted((area[b.buy_bus], area[b.sell_bus]))
        out.setdefault(f"{pair[0]}-{pair[1]}", []).append(b.id)
    return dict(sorted(out.items()))


# ----------------------------------------------------------------- theorem checks


def verify_theorem2(solution: MarketSolution, ledger: RentLedger) -> dict[LineGroup, float]:
    """Per group: |beta - sum of mu * flow| over the group's lines."""
    out = {}
    for grp, lines in _groups(solution).items():
        rent = sum(solution.rent(l) for l in lines)
        out[grp] = abs(ledger.beta.get(grp, 0.0) - rent)
    return out


def verify_theorem3(report: SettlementReport, ledger: RentLedger) -> dict[Payer, float]:
    """Per payer: |gamma - merchandise surplus| for areas, |gamma - profit| for bids."""
    out = {}
    for a, row in report.areas.items():
        out[Payer.area(a)] = abs(ledger.gamma.get(Payer.area(a), 0.0) - row.merchandise_surplus)
    for b, row in report.bids.items():
        out[Payer.bid(b)] = abs(ledger.gamma.get(Payer.bid(b), 0.0) - row.profit)
    return out


@dataclass(frozen=True)
class SensitivityCheck:
    """One area's cost sensitivity to one bid against the price-based prediction."""

    area: int
    bid: str
    predicted: float
    backward: float
    forward: float

    @property
    def residual(self) -> float:
        lo, hi = min(self.backward, self.forward), max(self.backward, self.forward)
        if math.isnan(lo) or math.isnan(hi):
            return math.inf
        return max(0.0, lo - self.predicted, self.predicted - hi)

    @property
    def central(self) -> float:
        return 0.5 * (self.backward + self.forward)


def _local_cost(solution: MarketSolution, area: int, positions: np.ndarray) -> float:
    ctx = solution.context
    sched = {b: float(positions[k]) for k, b in enumerate(ctx.boundary)}
    return solve_local_ed(ctx.case, area, sched, ctx.ref_bus, raise_infeasible=False).cost


def _one_sided(c_hi: float, c_lo: float, step: float) -> float:
    if math.isinf(c_hi) and math.isinf(c_lo):
        return math.nan
    return (c_hi - c_lo) / step


def verify_theorem4(solution: MarketSolution, step: float = FD_STEP, prices=None) -> list[SensitivityCheck]:
    """Compare each area's local-dispatch cost sensitivity to each bid with its price prediction.

    The prediction is the boundary price times the area's position change plus
    the area's internal line multipliers times the flow change that the bid's
    boundary positions cause on those lines.  The finite-difference side
    uses forward and backward steps; a prediction inside their interval (a
    subgradient at a kink) has zero residual.
    """
    ctx = solution.context
    net = ctx.network
    lmp = solution.lmp if prices is None else prices
    base = solution.boundary_positions()
    M = ctx.bid_incidence
    out = []
    for area in ctx.areas:
        if area not in ctx.equivalents:
            continue
        c0 = _local_cost(solution, area, base)
        own = set(net.boundary_buses(area))
        mu = _active_mu(solution, [ln.id for ln in net.area_lines(area) if ln.bounded])
        for k, bid in enumerate(ctx.case.bids):
            col = M[:, k]
            if not col.any():
                out.append(SensitivityCheck(area, bid.id, 0.0, 0.0, 0.0))
                continue
            pred = 0.0
            for j, b in enumerate(ctx.boundary):
                if not col[j]:
                    continue
                if b in own:
                    pred += lmp[b] * col[j]
                pred += sum(m * ctx.sensitivity(l, b) for l, m in mu.items()) * col[j]
            fwd = _one_sided(_local_cost(solution, area, base + step * col), c0, step)
            bwd = _one_sided(c0, _local_cost(solution, area, base - step * col), step)
            out.append(SensitivityCheck(area, bid.id, float(pred), bwd, fwd))
    return out


# ----------------------------------------------------------------- report


@dataclass(frozen=True)
class SettlementReport:
    """Settlement of one cleared market with its rent ledger and theorem residuals."""

    areas: dict[int, AreaSettlement]
    bids: dict[str, BidSettlement]
    bid_groups: dict[str, BidSettlement]
    ledger: RentLedger
    total_rent: float
    theorem2: dict[LineGroup, float] = field(default_factory=dict)
    theorem3: dict[Payer, float] = field(default_factory=dict)
    theorem4: tuple[SensitivityCheck, ...] = ()
    adequacy: float = 0.0

    @property
    def max_theorem2(self) -> float:
        return max(self.theorem2.values(), default=0.0)

    @property
    def max_theorem3(self) -> float:
        return max(self.theorem3.values(), default=0.0)

    @property
    def max_theorem4(self) -> float:
        return max((c.residual for c in self.theorem4), default=0.0)

    def group_share(self, group: str) -> float:
        """Rent share of a bid group (sum of its bids' gamma)."""
        return sum(self.ledger.gamma.get(Payer.bid(b), 0.0) for b in self._group_members[group])

    @property
    def _group_members(self) -> dict[str, list[str]]:
        return {name: row.name.split(",") for name, row in self.bid_groups.items()}


def revenue_adequacy(report: SettlementReport) -> float:
    """|total line rent - (sum of merchandise surpluses + sum of bid profits)|."""
    collected = sum(a.merchandise_surplus for a in report.areas.values())
    collected += sum(b.profit for b in report.bids.values())
    return abs(report.total_rent - collected)


def settle(solution: MarketSolution, multipliers=None, check_sensitivities: bool = True) -> SettlementReport:
    """Full settlement of a cleared market.

    ``multipliers`` (recovered line and boundary multipliers) replace the
    solution's own dual bundle when given.
    """
    sol = with_duals(solution, multipliers) if multipliers is not None else solution
    ctx = sol.context
    ledger = aggregate_rents(rent_components(sol))
    areas = {a: area_settlement(sol, a) for a in ctx.areas}
    bids = {b.id: bid_settlement(sol, b.id) for b in ctx.case.bids}
    groups = {}
    for name, members in bid_groups(sol).items():
        row = bid_settlement(sol, members)
        groups[name] = replace(row, name=",".join(members))
    report = SettlementReport(areas, bids, groups, ledger, float(sol.total_rent))
    report = replace(
        report,
        theorem2=verify_theorem2(sol, ledger),
        theorem3=verify_theorem3(report, ledger),
        theorem4=tuple(verify_theorem4(sol)) if check_sensitivities else (),
    )
    return replace(report, adequacy=revenue_adequacy(report))


__all__ = [
    "LineGroup",
    "Payer",
    "RentComponent",
    "RentLedger",
    "AreaSettlement",
    "BidSettlement",
    "SensitivityCheck",
    "SettlementReport",
    "psi_tie_from_bid",
    "psi_internal_self",
    "psi_internal_from_bid",
    "rent_components",
    "aggregate_rents",
    "area_settlement",
    "merchandise_surplus",
    "bid_settlement",
    "bid_profit",
    "bid_groups",
    "verify_theorem2",
    "verify_theorem3",
    "verify_theorem4",
    "revenue_adequacy",
    "settle",
    "with_duals",
]
