"""Interchange clearing, pooled dispatch benchmark, local dispatch and price formulas.

The clearing model dispatches generators area by area and schedules interface
bids ``s``.  Each area's Ward-equivalent boundary injection must equal the net
position its bids create, ``W_i (g_i - d_i) = M_i s``, and every area's line
flows see the rest of the grid only through those boundary positions.

Dual bookkeeping.  The solver returns the balance multiplier ``lam``, the
coupling multipliers ``rho_coupling`` and signed line multipliers ``mu``.
These are converted to boundary multipliers ``rho`` for which the LMP at any
bus ``n`` of area ``i`` reads::

    LMP_n = lam - sum_l S[l, n] mu_l + W_i[:, n] . rho_i

with ``S`` the shift factors of the whole grid (reference: ``ref_bus``).  The
gauge is fixed by ``rho[ref_bus] = 0`` so that ``lam`` is the reference-bus
price.  A marginal bid then satisfies ``rho[sell] - rho[buy] = price_gap``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Mapping, Sequence

import numpy as np

from .case import GridCase, InterfaceBid
from .errors import GctsError, InfeasibleError, ModelError, SolverFailure
from .grid import AreaView, EquivalentBoundary, GridNetwork, build_network, dc_flow
from .optimizer import MathProgram, SolveResult, solve

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6


# ----------------------------------------------------------------- context


@dataclass(frozen=True, eq=False)
class MarketContext:
    """Network data shared by clearing, recovery and settlement for one case."""

    case: GridCase
    network: GridNetwork
    equivalents: Mapping[int, EquivalentBoundary]
    ref_bus: int
    _cache: dict = field(default_factory=dict, repr=False)

    @cached_property
    def views(self) -> dict[int | None, AreaView]:
        out = {a: self.network.area_view(a, self.equivalents) for a in self.network.areas}
        if self.equivalents:
            out[None] = self.network.area_view(None, self.equivalents)
        return out

    @property
    def areas(self) -> tuple[int, ...]:
        return self.network.areas

    @property
    def boundary(self) -> tuple[int, ...]:
        return self.network.boundary_buses()

    @cached_property
    def boundary_pos(self) -> dict[int, int]:
        return {b: k for k, b in enumerate(self.boundary)}

    @cached_property
    def bounded_lines(self) -> tuple[int, ...]:
        return tuple(ln.id for ln in self.network.lines if ln.bounded)

    @cached_property
    def line_owner(self) -> dict[int, int | None]:
        return {ln.id: self.network.line_area(ln) for ln in self.network.lines}

    @cached_property
    def active_bids(self) -> tuple[bool, ...]:
        bnd = self.network.boundary
        return tuple(b.buy_bus in bnd and b.sell_bus in bnd for b in self.case.bids)

    @cached_property
    def bid_incidence(self) -> np.ndarray:
        """Boundary-by-bid matrix: +1 at the buy bus, -1 at the sell bus."""
        m = np.zeros((len(self.boundary), len(self.case.bids)))
        for k, (bid, active) in enumerate(zip(self.case.bids, self.active_bids)):
            if active:
                m[self.boundary_pos[bid.buy_bus], k] = 1.0
                m[self.boundary_pos[bid.sell_bus], k] = -1.0
        return m

    def area_boundary_idx(self, area: int) -> list[int]:
        return [self.boundary_pos[b] for b in self.network.boundary_buses(area)]

    def view_for_line(self, line_id: int) -> AreaView:
        return self.views[self.line_owner[line_id]]

    def sensitivity(self, line_id: int, bus: int) -> float:
        """Shift factor of any line to any bus, assembled from the owner's view."""
        key = ("sf", line_id, bus)
        if key not in self._cache:
            self._cache[key] = self.view_for_line(line_id).sensitivity(line_id, bus, self.ref_bus)
        return self._cache[key]

    def sensitivities(self, line_ids: Sequence[int], buses: Sequence[int]) -> np.ndarray:
        return np.array([[self.sensitivity(l, b) for b in buses] for l in line_ids]).reshape(
            len(line_ids), len(buses)
        )

    def injection_weights(self, bus: int) -> np.ndarray:
        """Weights of a unit injection at ``bus`` on its own area's boundary buses."""
        area = self.network.area_of[bus]
        return self.equivalents[area].column(bus)

    def demand_vector(self, buses: Sequence[int]) -> np.ndarray:
        d = self.case.demand()
        return np.array([d.get(b, 0.0) for b in buses])

    def gen_buses(self) -> list[int]:
        return [g.bus for g in self.case.generators]


def resolve_reference(case: GridCase, ref_bus: int | None = None) -> int:
    boundary = case.boundary_buses()
    ref = ref_bus if ref_bus is not None else case.reference_bus
    if ref is None:
        ref = boundary[0] if boundary else min(b.id for b in case.buses)
    if ref not in case.bus_area():
        raise ModelError(f"reference bus {ref} is not in the case")
    if boundary and ref not in boundary:
        raise ModelError(f"reference bus {ref} must be a boundary bus")
    return ref


@lru_cache(maxsize=64)
def market_context(case: GridCase, ref_bus: int | None = None) -> MarketContext:
    case.validate()
    ref = resolve_reference(case, ref_bus)
    net = build_network(case)
    return MarketContext(case, net, net.equivalents(), ref)


# ----------------------------------------------------------------- solution


@dataclass(frozen=True, eq=False)
class MarketSolution:
    """Dispatch, bid clearing and the dual bundle of one clearing run."""

    kind: str  # "gcts" | "jed"
    context: MarketContext
    dispatch: dict[str, float]
    bids: dict[str, float]
    flows: dict[int, float]
    lam: float
    mu: dict[int, float]
    rho: dict[int, float]
    rho_coupling: dict[int, float]
    gen_lower: dict[str, float]
    gen_upper: dict[str, float]
    bid_lower: dict[str, float]
    bid_upper: dict[str, float]
    objective: float
    market_cost: float
    result: SolveResult = field(repr=False)
    duals_unique: bool = True

    @property
    def case(self) -> GridCase:
        return self.context.case

    @property
    def ref_bus(self) -> int:
        return self.context.ref_bus

    def net_injections(self) -> dict[int, float]:
        p = {b: 0.0 for b in self.context.network.bus_ids}
        for g in self.case.generators:
            p[g.bus] += self.dispatch[g.id]
        for b, mw in self.case.demand().items():
            p[b] -= mw
        return p

    def boundary_positions(self) -> np.ndarray:
        """Net bid positions ``M s`` per boundary bus."""
        s = np.array([self.bids[b.id] for b in self.case.bids])
        return self.context.bid_incidence @ s if len(s) else np.zeros(len(self.context.boundary))

    @cached_property
    def lmp(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for a in self.context.areas:
            out.update(lmp_from_duals(self, a))
        return dict(sorted(out.items()))

    def rent(self, line_id: int) -> float:
        return self.mu.get(line_id, 0.0) * self.flows[line_id]

    @property
    def total_rent(self) -> float:
        return sum(self.rent(l) for l in self.mu)


# ----------------------------------------------------------------- model assembly


def _gen_rows(ctx: MarketContext):
    gens = ctx.case.generators
    c = np.array([g.cost for g in gens])
    q = np.array([g.quad for g in gens])
    lb = np.array([g.pmin for g in gens])
    ub = np.array([g.pmax for g in gens])
    return c, q, lb, ub


def build_gcts(case: GridCase, ref_bus: int | None = None) -> MathProgram:
    """Clearing program over generator outputs ``g`` and bid quantities ``s``."""
    return _build_gcts(market_context(case, ref_bus))


def _build_gcts(ctx: MarketContext) -> MathProgram:
    case, net = ctx.case, ctx.network
    case.check_boundary_rules()
    gens, bids = case.generators, case.bids
    ng, nb = len(gens), len(bids)
    n = ng + nb
    c_g, q, g_lo, g_hi = _gen_rows(ctx)
    M = ctx.bid_incidence
    dem = case.demand()
    gen_area = np.array([net.area_of[g.bus] for g in gens], dtype=int)

    eq_rows, eq_rhs, eq_labels = [], [], []
    row = np.zeros(n)
    row[:ng] = 1.0
    eq_rows.append(row)
    eq_rhs.append(sum(dem.values()))
    eq_labels.append("balance")

    for a in ctx.areas:
        if a not in ctx.equivalents:
            continue
        eq = ctx.equivalents[a]
        for r, b in enumerate(eq.boundary):
            row = np.zeros(n)
            for k, g in enumerate(gens):
                if gen_area[k] == a:
                    row[k] = eq.column(g.bus)[r]
            row[ng:] = -M[ctx.boundary_pos[b]]
            rhs = sum(mw * eq.column(bus)[r] for bus, mw in dem.items() if net.area_of[bus] == a)
            eq_rows.append(row)
            eq_rhs.append(rhs)
            eq_labels.append(f"couple:{b}")

    ub_rows, ub_rhs, ub_labels = [], [], []
    for ln in net.lines:
        if not ln.bounded:
            continue
        owner = ctx.line_owner[ln.id]
        coef = np.zeros(n)
        offset = 0.0
        if owner is not None:
            for k, g in enumerate(gens):
                if gen_area[k] == owner:
                    coef[k] = ctx.sensitivity(ln.id, g.bus)
            offset = sum(
                mw * ctx.sensitivity(ln.id, bus) for bus, mw in dem.items() if net.area_of[bus] == owner
            )
        # other areas reach this line only through their boundary positions
        if nb:
            s_bnd = np.array(
                [0.0 if net.area_of[b] == owner else ctx.sensitivity(ln.id, b) for b in ctx.boundary]
            )
            coef[ng:] = s_bnd @ M
        ub_rows += [coef, -coef]
        ub_rhs += [ln.capacity + offset, ln.capacity - offset]
        ub_labels += [f"+flow:{ln.id}", f"-flow:{ln.id}"]

    s_hi = np.array([b.max_mw if act else 0.0 for b, act in zip(bids, ctx.active_bids)])
    lb = np.concatenate([g_lo, np.zeros(nb)])
    ub = np.concatenate([g_hi, s_hi])
    c = np.concatenate([c_g, [b.price_gap for b in bids]])
    P = None
    if np.any(q):
        P = np.zeros((n, n))
        P[np.arange(ng), np.arange(ng)] = 2.0 * q
    return MathProgram(
        c=c,
        A_eq=np.array(eq_rows).reshape(-1, n),
        b_eq=np.array(eq_rhs),
        A_ub=np.array(ub_rows).reshape(-1, n),
        b_ub=np.array(ub_rhs),
        lb=lb,
        ub=ub,
        P=P,
        var_labels=[f"g:{g.id}" for g in gens] + [f"s:{b.id}" for b in bids],
        eq_labels=eq_labels,
        ub_labels=ub_labels,
    )


def _infeasibility_report(ctx: MarketContext, kind: str) -> InfeasibleError:
    case = ctx.case
    load = sum(case.demand().values())
    pmin = sum(g.pmin for g in case.generators)
    pmax = sum(g.pmax for g in case.generators)
    details = {"load": load, "pmin_total": pmin, "pmax_total": pmax, "bounded_lines": list(ctx.bounded_lines)}
    if not pmin - FEAS_TOL <= load <= pmax + FEAS_TOL:
        msg = f"{kind}: load {load:.4g} MW outside generation range [{pmin:.4g}, {pmax:.4g}] MW"
        details["binding"] = "generation bounds"
    else:
        msg = f"{kind}: no dispatch satisfies the limits of lines {list(ctx.bounded_lines)}"
        details["binding"] = "line limits" if ctx.bounded_lines else "interface bid limits"
        if kind == "gcts" and not ctx.bounded_lines:
            msg = f"{kind}: interface bids cannot carry the required boundary exchange"
    return InfeasibleError(msg, details)


def _check(res: SolveResult, ctx: MarketContext, kind: str) -> None:
    if res.status == "infeasible":
        raise _infeasibility_report(ctx, kind)
    if not res.optimal:
        raise SolverFailure(f"{kind} solve failed: {res.status} {res.message}")


def clear_gcts(case: GridCase, ref_bus: int | None = None, canonical: bool = True) -> MarketSolution:
    """Clear the interchange model and return the dispatch with its dual bundle.

    Optimal schedules are often not unique (parallel bids between the same
    areas, for instance).  The reported point is the least-norm one among all
    optimal points, so it does not depend on the reference bus or on the
    solver's pivoting.  Likewise, if the multipliers are not unique
    (``duals_unique`` is then False) the bundle is replaced by a
    reference-independent selection from the optimal dual set.
    ``canonical=False`` keeps the solver's primal and dual vertex instead.
    """
    ctx = market_context(case, ref_bus)
    prog = _build_gcts(ctx)
    res = solve(prog)
    _check(res, ctx, "gcts")
    if not canonical:
        return _gcts_solution(ctx, prog, res)
    sol = _gcts_solution(ctx, prog, res, _least_norm_optimum(prog, res))
    from .recovery import canonical_duals

    lam, mu, rho, unique = canonical_duals(sol)
    if unique:
        return sol
    log.info("%s: multipliers are not unique; reporting the minimum-spread selection", case.name)
    return replace(sol, lam=lam, mu=mu, rho=rho, duals_unique=False)


def _signed_mu(prog: MathProgram, res: SolveResult) -> dict[int, float]:
    mu: dict[int, float] = {}
    for k, label in enumerate(prog.ub_labels):
        sign = 1.0 if label[0] == "+" else -1.0
        lid = int(label.split(":")[1])
        mu[lid] = mu.get(lid, 0.0) + sign * float(res.ub_duals[k])
    return mu


def _least_norm_optimum(prog: MathProgram, res: SolveResult) -> np.ndarray:
    """Least-norm point of the optimal face identified by complementary slackness.

    Constraints with a positive multiplier are held as equalities and, for a
    strictly convex cost term, the corresponding variables are held at their
    (unique) optimal values.  Any feasible point of that face is optimal.
    """
    n = prog.n
    tol = 1e-9 * (1.0 + np.abs(prog.c).max(initial=0.0))
    eye = np.eye(n)
    rows = [prog.A_eq, prog.A_ub[res.ub_duals > tol]]
    rhs = [prog.b_eq, prog.b_ub[res.ub_duals > tol]]
    at_lo = res.lower_duals > tol
    at_up = (res.upper_duals > tol) & ~at_lo
    fixed = at_lo | at_up
    if prog.P is not None:
        fixed |= np.diag(prog.P) > 0
    target = np.where(at_lo, prog.lb, np.where(at_up, prog.ub, res.x))
    rows.append(eye[fixed])
    rhs.append(target[fixed])
    face = MathProgram(
        c=np.zeros(n),
        A_eq=np.vstack(rows),
        b_eq=np.concatenate(rhs),
        A_ub=prog.A_ub,
        b_ub=prog.b_ub,
        lb=prog.lb,
        ub=prog.ub,
        P=eye,
    )
    out = solve(face, backend="qp")
    if not out.optimal:
        log.warning("least-norm selection failed (%s); keeping the solver's point", out.status)
        return res.x
    gap = abs(prog.objective(out.x) - res.objective)
    if gap > 1e-7 * (1.0 + abs(res.objective)):
        log.warning("least-norm selection moved the objective by %.3g; keeping the solver's point", gap)
        return res.x
    return out.x


def _gcts_solution(ctx: MarketContext, prog: MathProgram, res: SolveResult, x: np.ndarray | None = None) -> MarketSolution:
    case, net = ctx.case, ctx.network
    ng = len(case.generators)
    x = res.x if x is None else x
    dispatch = {g.id: float(x[k]) for k, g in enumerate(case.generators)}
    bids = {b.id: float(x[ng + k]) for k, b in enumerate(case.bids)}
    lam = float(res.eq_duals[0])
    rho_c = {int(lbl.split(":")[1]): float(res.eq_duals[k]) for k, lbl in enumerate(prog.eq_labels) if lbl.startswith("couple:")}
    mu = _signed_mu(prog, res)

    # fold multipliers of lines outside each boundary bus's area into rho
    rho = {}
    for b, val in rho_c.items():
        area = net.area_of[b]
        extra = sum(m * ctx.sensitivity(l, b) for l, m in mu.items() if ctx.line_owner[l] != area and m)
        rho[b] = val + extra
    if rho:
        shift = rho[ctx.ref_bus]
        rho = {b: v - shift for b, v in rho.items()}
        lam += shift

    sol = MarketSolution(
        kind="gcts",
        context=ctx,
        dispatch=dispatch,
        bids=bids,
        flows={},
        lam=lam,
        mu=mu,
        rho=rho,
        rho_coupling=rho_c,
        gen_lower={g.id: float(res.lower_duals[k]) for k, g in enumerate(case.generators)},
        gen_upper={g.id: float(res.upper_duals[k]) for k, g in enumerate(case.generators)},
        bid_lower={b.id: float(res.lower_duals[ng + k]) for k, b in enumerate(case.bids)},
        bid_upper={b.id: float(res.upper_duals[ng + k]) for k, b in enumerate(case.bids)},
        objective=float(prog.objective(x)),
        market_cost=_market_cost(case, dispatch, bids),
        result=res,
    )
    flows = dc_flow(net, sol.net_injections())
    sol.flows.update({ln.id: float(f) for ln, f in zip(net.lines, flows)})
    return sol


def _market_cost(case: GridCase, dispatch: Mapping[str, float], bids: Mapping[str, float]) -> float:
    cost = sum(g.total_cost(dispatch[g.id]) for g in case.generators)
    return cost + sum(b.price_gap * bids.get(b.id, 0.0) for b in case.bids)


# ----------------------------------------------------------------- pooled dispatch


def solve_jed(case: GridCase, ref_bus: int | None = None) -> MarketSolution:
    """Single pooled dispatch over the whole grid; bids are ignored."""
    case.validate(check_boundary=False)
    ctx = market_context(case.with_changes(bids=(), allow_boundary_injections=True), ref_bus)
    net = ctx.network
    gens = case.generators
    ng = len(gens)
    c, q, lb, ub = _gen_rows(ctx)
    dem = case.demand()
    ub_rows, ub_rhs, ub_labels = [], [], []
    for ln in net.lines:
        if not ln.bounded:
            continue
        coef = np.array([ctx.sensitivity(ln.id, g.bus) for g in gens])
        offset = sum(mw * ctx.sensitivity(ln.id, b) for b, mw in dem.items())
        ub_rows += [coef, -coef]
        ub_rhs += [ln.capacity + offset, ln.capacity - offset]
        ub_labels += [f"+flow:{ln.id}", f"-flow:{ln.id}"]
    P = np.diag(2.0 * q) if np.any(q) else None
    prog = MathProgram(
        c=c,
        A_eq=np.ones((1, ng)),
        b_eq=np.array([sum(dem.values())]),
        A_ub=np.array(ub_rows).reshape(-1, ng),
        b_ub=np.array(ub_rhs),
        lb=lb,
        ub=ub,
        P=P,
        var_labels=[f"g:{g.id}" for g in gens],
        eq_labels=["balance"],
        ub_labels=ub_labels,
    )
    res = solve(prog)
    _check(res, ctx, "jed")
    dispatch = {g.id: float(res.x[k]) for k, g in enumerate(gens)}
    sol = MarketSolution(
        kind="jed",
        context=ctx,
        dispatch=dispatch,
        bids={},
        flows={},
        lam=float(res.eq_duals[0]),
        mu=_signed_mu(prog, res),
        rho={},
        rho_coupling={},
        gen_lower={g.id: float(res.lower_duals[k]) for k, g in enumerate(gens)},
        gen_upper={g.id: float(res.upper_duals[k]) for k, g in enumerate(gens)},
        bid_lower={},
        bid_upper={},
        objective=float(res.objective),
        market_cost=_market_cost(case, dispatch, {}),
        result=res,
    )
    flows = dc_flow(net, sol.net_injections())
    sol.flows.update({ln.id: float(f) for ln, f in zip(net.lines, flows)})
    return sol


# ----------------------------------------------------------------- prices


def lmp_from_duals(solution: MarketSolution, area: int) -> dict[int, float]:
    """Locational prices of every bus in ``area`` from the dual bundle."""
    ctx = solution.context
    net = ctx.network
    out = {}
    mu = {l: m for l, m in solution.mu.items() if m}
    for n in net.area_buses(area):
        val = solution.lam - sum(m * ctx.sensitivity(l, n) for l, m in mu.items())
        if solution.rho and area in ctx.equivalents:
            eq = ctx.equivalents[area]
            val += float(eq.column(n) @ np.array([solution.rho[b] for b in eq.boundary]))
        out[n] = val
    return out


def bid_price_from_duals(solution: MarketSolution, boundary_bus: int) -> float:
    """Price an interface bid pays or earns at ``boundary_bus``.

    It is the sensitivity of the optimal cost to a net withdrawal at that bus
    through the bid incidence, which coincides with the bus LMP.
    """
    ctx = solution.context
    if boundary_bus not in ctx.network.boundary:
        raise ValueError(f"bus {boundary_bus} is not a boundary bus")
    val = solution.lam + solution.rho.get(boundary_bus, 0.0)
    val -= sum(m * ctx.sensitivity(l, boundary_bus) for l, m in solution.mu.items() if m)
    return val


# ----------------------------------------------------------------- local dispatch


@dataclass(frozen=True)
class LocalDispatch:
    area: int
    dispatch: dict[str, float]
    cost: float
    coupling_duals: dict[int, float]
    mu: dict[int, float]
    status: str = "optimal"


def solve_local_ed(
    case: GridCase,
    area: int,
    boundary_schedule: Mapping[int, float],
    ref_bus: int | None = None,
    raise_infeasible: bool = True,
) -> LocalDispatch:
    """Cheapest dispatch of one area for fixed boundary positions.

    ``boundary_schedule`` maps every boundary bus to its net position (MW,
    positive for export out of its area).  The area's own positions fix its
    Ward-equivalent export; the other areas' positions enter its line flows.
    """
    ctx = market_context(case, ref_bus)
    net = ctx.network
    eq = ctx.equivalents[area]
    gens = [g for g in case.generators if net.area_of[g.bus] == area]
    ng = len(gens)
    dem = {b: mw for b, mw in case.demand().items() if net.area_of[b] == area}

    a_eq = np.zeros((len(eq.boundary), ng))
    b_eq = np.zeros(len(eq.boundary))
    for k, g in enumerate(gens):
        a_eq[:, k] = eq.column(g.bus)
    for b, mw in dem.items():
        b_eq += mw * eq.column(b)
    b_eq += np.array([boundary_schedule.get(b, 0.0) for b in eq.boundary])

    ub_rows, ub_rhs, ub_labels = [], [], []
    for ln in net.area_lines(area):
        if not ln.bounded:
            continue
        coef = np.array([ctx.sensitivity(ln.id, g.bus) for g in gens])
        offset = sum(mw * ctx.sensitivity(ln.id, b) for b, mw in dem.items())
        offset -= sum(
            boundary_schedule.get(b, 0.0) * ctx.sensitivity(ln.id, b)
            for b in ctx.boundary
            if net.area_of[b] != area
        )
        ub_rows += [coef, -coef]
        ub_rhs += [ln.capacity + offset, ln.capacity - offset]
        ub_labels += [f"+flow:{ln.id}", f"-flow:{ln.id}"]

    q = np.array([g.quad for g in gens])
    prog = MathProgram(
        c=np.array([g.cost for g in gens]),
        A_eq=a_eq,
        b_eq=b_eq,
        A_ub=np.array(ub_rows).reshape(-1, ng),
        b_ub=np.array(ub_rhs),
        lb=np.array([g.pmin for g in gens]),
        ub=np.array([g.pmax for g in gens]),
        P=np.diag(2.0 * q) if np.any(q) else None,
        constant=sum(g.fixed_cost for g in gens),
        var_labels=[f"g:{g.id}" for g in gens],
        eq_labels=[f"couple:{b}" for b in eq.boundary],
        ub_labels=ub_labels,
    )
    res = solve(prog)
    if res.status == "infeasible":
        if raise_infeasible:
            raise InfeasibleError(f"area {area}: boundary schedule cannot be met", {"schedule": dict(boundary_schedule)})
        return LocalDispatch(area, {}, math.inf, {}, {}, "infeasible")
    if not res.optimal:
        raise SolverFailure(f"local dispatch of area {area} failed: {res.status} {res.message}")
    return LocalDispatch(
        area=area,
        dispatch={g.id: float(res.x[k]) for k, g in enumerate(gens)},
        cost=float(res.objective),
        coupling_duals={b: float(res.eq_duals[k]) for k, b in enumerate(eq.boundary)},
        mu=_signed_mu(prog, res),
    )


# ----------------------------------------------------------------- convergence


def with_complete_bid_coverage(case: GridCase, price_gap: float, max_mw: float | None = None) -> GridCase:
    """Replace the bids by one bid per ordered pair of boundary buses in different areas."""
    area = case.bus_area()
    boundary = case.boundary_buses()
    cap = max_mw if max_mw is not None else 2.0 * sum(g.pmax for g in case.generators)
    bids = []
    for p in boundary:
        for q in boundary:
            if area[p] != area[q]:
                bids.append(InterfaceBid(f"c{p}-{q}", p, q, price_gap, cap))
    return case.with_changes(bids=tuple(bids))


@dataclass(frozen=True)
class SweepPoint:
    price_gap: float
    gcts_cost: float
    jed_cost: float

    @property
    def gap(self) -> float:
        return self.gcts_cost - self.jed_cost

    @property
    def relative_gap(self) -> float:
        return self.gap / max(1.0, abs(self.jed_cost))


def default_schedule() -> list[float]:
    return [2.0**-k for k in range(7)] + [0.0]


def convergence_sweep(
    case: GridCase, schedule: Sequence[float] | None = None, ref_bus: int | None = None
) -> list[SweepPoint]:
    """Cost gap between interchange clearing and pooled dispatch along a price-gap schedule."""
    jed = solve_jed(case, ref_bus)
    out = []
    for dpi in schedule if schedule is not None else default_schedule():
        sol = clear_gcts(with_complete_bid_coverage(case, dpi), ref_bus)
        out.append(SweepPoint(float(dpi), sol.objective, jed.objective))
    return out


__all__ = [
    "MarketContext",
    "MarketSolution",
    "LocalDispatch",
    "SweepPoint",
    "market_context",
    "build_gcts",
    "clear_gcts",
    "solve_jed",
    "solve_local_ed",
    "lmp_from_duals",
    "bid_price_from_duals",
    "with_complete_bid_coverage",
    "convergence_sweep",
    "default_schedule",
    "GctsError",
]
