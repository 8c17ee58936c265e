"""Price recovery from marginal-unit stationarity conditions.

Unknowns are the balance price ``lam``, the signed multipliers of congested
lines and one boundary multiplier per boundary bus (see :mod:`gcts.market`
for the price formula).  Every marginal generator contributes the row
``LMP(bus) = marginal cost``, every marginal bid ``rho[sell] - rho[buy] =
price_gap`` and the reference bus pins ``rho[ref] = 0``.

Rows are assembled by the agent that owns them: an area builds its generator
rows from its own network, the Ward equivalents published by the other areas
and the boundary shift factors that each line owner publishes for its
congested lines.  Bid rows belong to the importing (sell-side) area.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import qr

from .errors import ConvergenceError, DegeneracyError, GctsError
from .grid import EquivalentBoundary, ShiftFactorMatrix
from .kernels import consensus_rounds
from .market import MarketContext, MarketSolution

log = logging.getLogger(__name__)

MARGINAL_TOL = 1e-6
RANK_TOL = 1e-9


# ----------------------------------------------------------------- active sets


@dataclass(frozen=True)
class ActiveSets:
    congested: tuple[tuple[int, int], ...]  # (line id, +1 at +capacity / -1 at -capacity)
    marginal_gens: tuple[str, ...]
    gens_at_lower: tuple[str, ...]
    gens_at_upper: tuple[str, ...]
    marginal_bids: tuple[str, ...]
    bids_at_lower: tuple[str, ...]
    bids_at_upper: tuple[str, ...]
    ambiguous: tuple[str, ...] = ()

    @property
    def congested_lines(self) -> tuple[int, ...]:
        return tuple(l for l, _ in self.congested)

    @property
    def counts(self) -> dict[str, int]:
        return {
            "N_L": len(self.congested),
            "N_G": len(self.gens_at_lower) + len(self.gens_at_upper),
            "N_S": len(self.bids_at_lower) + len(self.bids_at_upper),
            "N_m": len(self.marginal_gens) + len(self.marginal_bids),
        }


def detect_active_sets(solution: MarketSolution, tol: float = MARGINAL_TOL) -> ActiveSets:
    """Classify lines, generators and bids against their limits."""
    ctx = solution.context
    case = ctx.case
    congested, amb = [], []
    for ln in ctx.network.lines:
        if not ln.bounded:
            continue
        f = solution.flows[ln.id]
        if abs(f) >= ln.capacity - tol:
            sign = 1 if f > 0 else -1
            congested.append((ln.id, sign))
            if abs(solution.mu.get(ln.id, 0.0)) <= tol:
                amb.append(f"line {ln.id}: at capacity with zero multiplier")
    m_g, lo_g, hi_g = [], [], []
    for g in case.generators:
        x = solution.dispatch[g.id]
        if x <= g.pmin + tol:
            lo_g.append(g.id)
            if solution.gen_lower.get(g.id, 0.0) <= tol and g.pmax - g.pmin > tol:
                amb.append(f"generator {g.id}: at lower limit with zero multiplier")
        elif x >= g.pmax - tol:
            hi_g.append(g.id)
            if solution.gen_upper.get(g.id, 0.0) <= tol:
                amb.append(f"generator {g.id}: at upper limit with zero multiplier")
        else:
            m_g.append(g.id)
    m_s, lo_s, hi_s = [], [], []
    for b, active in zip(case.bids, ctx.active_bids):
        if not active:
            continue
        x = solution.bids[b.id]
        if x <= tol:
            lo_s.append(b.id)
            if solution.bid_lower.get(b.id, 0.0) <= tol and b.max_mw > tol:
                amb.append(f"bid {b.id}: at zero with zero multiplier")
        elif x >= b.max_mw - tol:
            hi_s.append(b.id)
            if solution.bid_upper.get(b.id, 0.0) <= tol:
                amb.append(f"bid {b.id}: at its limit with zero multiplier")
        else:
            m_s.append(b.id)
    for msg in amb:
        log.warning("weakly active constraint (possible degeneracy): %s", msg)
    return ActiveSets(
        tuple(congested), tuple(m_g), tuple(lo_g), tuple(hi_g), tuple(m_s), tuple(lo_s), tuple(hi_s), tuple(amb)
    )


# ----------------------------------------------------------------- agents


@dataclass(frozen=True)
class PublishedRows:
    """Boundary shift factors of congested lines, published by each line's owner."""

    ref_bus: int
    boundary: tuple[int, ...]
    rows: Mapping[int, np.ndarray]  # line id -> S[l, boundary]

    def to_bus(self, line_id: int, eq: EquivalentBoundary) -> dict[int, float]:
        idx = [self.boundary.index(b) for b in eq.boundary]
        r = self.rows[line_id][idx]
        return {n: float(r @ eq.column(n)) for n in eq.buses}


def publish_congested_rows(ctx: MarketContext, lines: Sequence[int]) -> PublishedRows:
    rows = {}
    for l in lines:
        view = ctx.view_for_line(l)
        rows[l] = view.ptdf(ctx.ref_bus).row(l, ctx.boundary)
    return PublishedRows(ctx.ref_bus, ctx.boundary, rows)


@dataclass(frozen=True)
class AreaKnowledge:
    """Everything one area may use to build its rows."""

    area: int
    own_ptdf: ShiftFactorMatrix
    own_lines: frozenset[int]
    equivalent: EquivalentBoundary | None
    published: PublishedRows

    def sensitivity(self, line_id: int, bus: int) -> float:
        if line_id in self.own_lines:
            return self.own_ptdf.entry(line_id, bus)
        if self.equivalent is None:
            raise GctsError(f"area {self.area} has no boundary; foreign line {line_id} unexpected")
        return self.published.to_bus(line_id, self.equivalent)[bus]


def _knowledge(ctx: MarketContext, area: int, published: PublishedRows) -> AreaKnowledge:
    view = ctx.views[area]
    return AreaKnowledge(
        area=area,
        own_ptdf=view.ptdf(ctx.ref_bus),
        own_lines=frozenset(ln.id for ln in ctx.network.area_lines(area)),
        equivalent=ctx.equivalents.get(area),
        published=published,
    )


# ----------------------------------------------------------------- system


@dataclass(frozen=True)
class StationarityRow:
    owner: int
    kind: str  # gen | bid | gauge
    label: str
    coeffs: np.ndarray
    rhs: float


@dataclass(frozen=True, eq=False)
class StationaritySystem:
    unknowns: tuple[str, ...]
    rows: tuple[StationarityRow, ...]
    context: MarketContext = field(repr=False)
    active: ActiveSets = field(repr=False)
    published: PublishedRows = field(repr=False)
    inequalities: tuple[StationarityRow, ...] = ()  # ``coeffs @ x <= rhs`` for non-marginal units

    @property
    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(self.unknowns)))
        return np.vstack([r.coeffs for r in self.rows])

    @property
    def rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows])

    @property
    def owners(self) -> tuple[int, ...]:
        return tuple(sorted({r.owner for r in self.rows}))

    def reduced(self) -> tuple[np.ndarray, np.ndarray, list[dict]]:
        """Independent rows chosen by pivoted QR plus the pivot log."""
        A, b = self.matrix, self.rhs
        if A.shape[0] == 0:
            return A, b, []
        _, R, piv = qr(A.T, pivoting=True, mode="economic")
        diag = np.abs(np.diag(R)) if R.size else np.zeros(0)
        scale = diag[0] if len(diag) and diag[0] > 0 else 1.0
        rank = int(np.sum(diag > RANK_TOL * max(1.0, scale)))
        log_rows = []
        for k, p in enumerate(piv):
            log_rows.append(
                {
                    "row": self.rows[p].label,
                    "owner": self.rows[p].owner,
                    "kept": k < rank,
                    "pivot": float(diag[k]) if k < len(diag) else 0.0,
                }
            )
        keep = sorted(piv[:rank])
        return A[keep], b[keep], log_rows


def _unknown_layout(ctx: MarketContext, active: ActiveSets) -> tuple[str, ...]:
    return ("lambda",) + tuple(f"mu:{l}" for l in active.congested_lines) + tuple(f"rho:{b}" for b in ctx.boundary)


def _gen_coeffs(know: AreaKnowledge, ctx: MarketContext, bus: int, active: ActiveSets, layout) -> np.ndarray:
    """Coefficients of ``LMP(bus)`` in the unknowns, from the area's knowledge only."""
    row = np.zeros(len(layout))
    row[0] = 1.0
    for k, l in enumerate(active.congested_lines):
        row[1 + k] = -know.sensitivity(l, bus)
    if know.equivalent is not None:
        w = know.equivalent.column(bus)
        for b, wb in zip(know.equivalent.boundary, w):
            row[layout.index(f"rho:{b}")] = wb
    return row


def assemble_stationarity(solution: MarketSolution, active: ActiveSets | None = None) -> StationaritySystem:
    """Build one row per marginal unit plus the reference-bus gauge row."""
    ctx = solution.context
    case, net = ctx.case, ctx.network
    active = active or detect_active_sets(solution)
    layout = _unknown_layout(ctx, active)
    published = publish_congested_rows(ctx, active.congested_lines)
    know = {a: _knowledge(ctx, a, published) for a in ctx.areas}
    rows: list[StationarityRow] = []
    ineq: list[StationarityRow] = []
    marg = set(active.marginal_gens)
    lower, upper = set(active.gens_at_lower), set(active.gens_at_upper)
    for g in case.generators:
        area = net.area_of[g.bus]
        coeffs = _gen_coeffs(know[area], ctx, g.bus, active, layout)
        cost = g.marginal_cost(solution.dispatch[g.id])
        if g.id in marg:
            rows.append(StationarityRow(area, "gen", f"gen:{g.id}", coeffs, cost))
        elif g.pmax - g.pmin <= MARGINAL_TOL:
            continue
        elif g.id in lower:
            ineq.append(StationarityRow(area, "gen", f"gen:{g.id}", coeffs, cost))  # LMP <= cost
        elif g.id in upper:
            ineq.append(StationarityRow(area, "gen", f"gen:{g.id}", -coeffs, -cost))  # LMP >= cost
    marg_b = set(active.marginal_bids)
    for b, act in zip(case.bids, ctx.active_bids):
        if not act:
            continue
        coeffs = np.zeros(len(layout))
        coeffs[layout.index(f"rho:{b.sell_bus}")] = 1.0
        coeffs[layout.index(f"rho:{b.buy_bus}")] = -1.0
        owner = net.area_of[b.sell_bus]
        if b.id in marg_b:
            rows.append(StationarityRow(owner, "bid", f"bid:{b.id}", coeffs, b.price_gap))
        elif b.id in active.bids_at_lower:
            ineq.append(StationarityRow(owner, "bid", f"bid:{b.id}", coeffs, b.price_gap))
        elif b.id in active.bids_at_upper:
            ineq.append(StationarityRow(owner, "bid", f"bid:{b.id}", -coeffs, -b.price_gap))
    if ctx.boundary:
        coeffs = np.zeros(len(layout))
        coeffs[layout.index(f"rho:{ctx.ref_bus}")] = 1.0
        rows.append(StationarityRow(net.area_of[ctx.ref_bus], "gauge", f"gauge:{ctx.ref_bus}", coeffs, 0.0))
    # congested line multipliers carry the sign of the binding direction
    for k, (l, sign) in enumerate(active.congested):
        coeffs = np.zeros(len(layout))
        coeffs[1 + k] = -float(sign)
        owner = ctx.line_owner[l]
        ineq.append(StationarityRow(owner if owner is not None else -1, "line", f"line:{l}", coeffs, 0.0))
    return StationaritySystem(layout, tuple(rows), ctx, active, published, tuple(ineq))


# ----------------------------------------------------------------- LICQ


@dataclass(frozen=True)
class LicqReport:
    ok: bool
    rank: int
    n_unknowns: int
    n_rows: int
    redundant_rows: tuple[str, ...]
    free_unknowns: tuple[str, ...]
    pivot_log: tuple[dict, ...]

    def describe(self) -> str:
        if self.ok:
            return f"LICQ holds: rank {self.rank} = {self.n_unknowns} unknowns"
        return (
            f"degenerate: rank {self.rank} < {self.n_unknowns} unknowns; "
            f"undetermined: {', '.join(self.free_unknowns) or '-'}"
        )


def check_licq(system: StationaritySystem) -> LicqReport:
    """Rank test of the marginal-unit rows (the active-constraint gradients)."""
    A = system.matrix
    n = len(system.unknowns)
    kept, _, log_rows = system.reduced()
    rank = kept.shape[0]
    free: list[str] = []
    if rank < n:
        _, s, vt = np.linalg.svd(A if A.size else np.zeros((1, n)))
        null = vt[rank:]
        weight = np.abs(null).max(axis=0)
        free = [u for u, w in zip(system.unknowns, weight) if w > 1e-8]
    redundant = tuple(r["row"] for r in log_rows if not r["kept"])
    return LicqReport(rank == n, rank, n, A.shape[0], redundant, tuple(free), tuple(log_rows))


# ----------------------------------------------------------------- solutions


@dataclass(frozen=True, eq=False)
class RecoveredMultipliers:
    lam: float
    mu: dict[int, float]
    rho: dict[int, float]
    certified: bool
    licq: LicqReport
    system: StationaritySystem = field(repr=False)
    method: str = "direct"
    trace: "ConsensusTrace | None" = None

    @property
    def vector(self) -> np.ndarray:
        vals = {"lambda": self.lam}
        vals.update({f"mu:{l}": m for l, m in self.mu.items()})
        vals.update({f"rho:{b}": r for b, r in self.rho.items()})
        return np.array([vals[u] for u in self.system.unknowns])


def _unpack(system: StationaritySystem, x: np.ndarray):
    lam = float(x[0])
    mu = {l: float(x[1 + k]) for k, l in enumerate(system.active.congested_lines)}
    off = 1 + len(mu)
    rho = {b: float(x[off + k]) for k, b in enumerate(system.context.boundary)}
    return lam, mu, rho


def _selection_weights(system: StationaritySystem) -> np.ndarray:
    """Quadratic form used to pick one point from a non-unique solution set.

    Penalizes the size of the line multipliers, the spread of the boundary
    multipliers and, with a vanishing weight, the mean boundary price.  A change of reference
    bus shifts every boundary multiplier by one constant, so none of the three
    terms depends on it.  The form is positive definite on the gauge-fixed
    unknowns.
    """
    ctx = system.context
    layout = system.unknowns
    n = len(layout)
    H = np.zeros((n, n))
    n_mu = len(system.active.congested)
    H[1 : 1 + n_mu, 1 : 1 + n_mu] = np.eye(n_mu)
    n_rho = n - 1 - n_mu
    if n_rho:
        H[1 + n_mu :, 1 + n_mu :] = np.eye(n_rho) - np.full((n_rho, n_rho), 1.0 / n_rho)
    know = {a: _knowledge(ctx, a, system.published) for a in ctx.areas}
    buses = ctx.boundary or tuple(ctx.network.bus_ids[:1])
    T = np.vstack([_gen_coeffs(know[ctx.network.area_of[b]], ctx, b, system.active, layout) for b in buses])
    mean = T.mean(axis=0)
    H += 1e-12 * np.outer(mean, mean)
    return H


def _min_selection(system: StationaritySystem, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    H = _selection_weights(system)
    n, m = H.shape[0], A.shape[0]
    kkt = np.block([[H, A.T], [A, np.zeros((m, m))]])
    sol, *_ = np.linalg.lstsq(kkt, np.concatenate([np.zeros(n), b]), rcond=None)
    return sol[:n]


def solve_direct(system: StationaritySystem, allow_degenerate: bool = False) -> RecoveredMultipliers:
    """Solve the stationarity system by dense factorization.

    A rank-deficient system raises :class:`DegeneracyError` unless
    ``allow_degenerate`` is set, in which case a reference-independent
    minimum-spread solution is returned with ``certified=False``.
    """
    report = check_licq(system)
    A, b, _ = system.reduced()
    if report.ok:
        x = np.linalg.solve(A, b) if A.shape[0] == A.shape[1] else np.linalg.lstsq(A, b, rcond=None)[0]
    elif allow_degenerate:
        log.warning("stationarity system is degenerate: %s", report.describe())
        x = _min_selection(system, A, b)
    else:
        raise DegeneracyError(report.describe(), report)
    resid = np.abs(system.matrix @ x - system.rhs).max(initial=0.0) if system.rows else 0.0
    if resid > 1e-6 * (1.0 + np.abs(system.rhs).max(initial=0.0)):
        raise GctsError(f"stationarity rows are inconsistent (residual {resid:.3g}); active sets misclassified")
    lam, mu, rho = _unpack(system, x)
    return RecoveredMultipliers(lam, mu, rho, report.ok, report, system)


# ----------------------------------------------------------------- distributed


@dataclass(frozen=True)
class ConsensusTrace:
    rounds: int
    residual: np.ndarray  # sqrt(sum_i ||x_i - x_direct||^2) per round
    disagreement: np.ndarray
    agents: tuple[int, ...]
    backend: str

    @property
    def monotone(self) -> bool:
        r = self.residual
        return bool(np.all(np.diff(r) <= 1e-12 * max(1.0, r[0])))


def metropolis_weights(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric doubly stochastic weights for an undirected graph."""
    m = adjacency.shape[0]
    deg = adjacency.sum(axis=1)
    W = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j and adjacency[i, j]:
                W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, i] = 1.0 - W[i].sum()
    return W


def _agent_graph(system: StationaritySystem, agents: Sequence[int], topology: str) -> np.ndarray:
    m = len(agents)
    if topology == "complete" or m <= 2:
        return np.ones((m, m)) - np.eye(m)
    # areas that share a tie-line talk to each other
    net = system.context.network
    pos = {a: k for k, a in enumerate(agents)}
    adj = np.zeros((m, m))
    for ln in net.tie_lines():
        a, b = net.area_of[ln.from_bus], net.area_of[ln.to_bus]
        if a in pos and b in pos:
            adj[pos[a], pos[b]] = adj[pos[b], pos[a]] = 1.0
    return adj


def solve_distributed(
    system: StationaritySystem,
    agents: Sequence[int] | None = None,
    max_rounds: int = 10_000,
    tol: float = 1e-6,
    topology: str = "complete",
    reference: RecoveredMultipliers | None = None,
) -> RecoveredMultipliers:
    """Synchronous consensus projection over the row owners.

    Each agent keeps an estimate that satisfies its own rows; every round it
    averages with its neighbours and projects the correction back onto the
    null space of its rows.  The controller stops once all agents are within
    ``tol`` of the direct solution (which it computes for verification).
    """
    report = check_licq(system)
    if not report.ok:
        raise DegeneracyError("distributed recovery needs a non-degenerate system: " + report.describe(), report)
    direct = reference or solve_direct(system)
    agents = tuple(agents) if agents is not None else system.owners
    missing = {r.owner for r in system.rows} - set(agents)
    if missing:
        raise GctsError(f"rows owned by {sorted(missing)} have no agent")
    n = len(system.unknowns)
    m = len(agents)
    proj = np.zeros((m, n, n))
    x0 = np.zeros((m, n))
    for i, a in enumerate(agents):
        own = [r for r in system.rows if r.owner == a]
        if own:
            A = np.vstack([r.coeffs for r in own])
            b = np.array([r.rhs for r in own])
            pinv = np.linalg.pinv(A, rcond=1e-12)
            x0[i] = pinv @ b
            proj[i] = np.eye(n) - pinv @ A
        else:
            proj[i] = np.eye(n)
    adj = _agent_graph(system, agents, topology)
    if m > 1:
        from scipy.sparse.csgraph import connected_components

        if connected_components(adj, directed=False)[0] > 1:
            raise GctsError("agent communication graph is disconnected")
    W = metropolis_weights(adj) if m > 1 else np.ones((1, 1))
    target = direct.vector
    from .kernels import BACKEND

    x, rounds, res, dis = consensus_rounds(
        np.ascontiguousarray(proj), np.ascontiguousarray(W), np.ascontiguousarray(x0), target, tol, max_rounds, True
    )
    trace = ConsensusTrace(int(rounds), np.asarray(res), np.asarray(dis), agents, BACKEND)
    err = np.abs(x - target).max(initial=0.0)
    if err > tol:
        raise ConvergenceError(f"no consensus within {max_rounds} rounds (error {err:.3g})", float(res[-1]), int(rounds))
    lam, mu, rho = _unpack(system, x.mean(axis=0))
    return RecoveredMultipliers(lam, mu, rho, True, report, system, "distributed", trace)


# ----------------------------------------------------------------- prices


@dataclass(frozen=True)
class RecoveredPrices:
    lmp: dict[int, float]
    bid_price: dict[int, float]


def recover_prices(multipliers: RecoveredMultipliers) -> RecoveredPrices:
    """Every area prices its own buses from the recovered multipliers."""
    system = multipliers.system
    ctx = system.context
    active = system.active
    layout = system.unknowns
    x = multipliers.vector
    lmp: dict[int, float] = {}
    for a in ctx.areas:
        know = _knowledge(ctx, a, system.published)
        for n in ctx.network.area_buses(a):
            lmp[n] = float(_gen_coeffs(know, ctx, n, active, layout) @ x)
    lmp = dict(sorted(lmp.items()))
    return RecoveredPrices(lmp, {b: lmp[b] for b in ctx.boundary})


def dual_feasibility(multipliers: RecoveredMultipliers, tol: float = 1e-6) -> list[str]:
    """Non-marginal units or congested lines whose sign condition the prices violate."""
    x = multipliers.vector
    out = []
    for r in multipliers.system.inequalities:
        v = float(r.coeffs @ x - r.rhs)
        if v > tol * (1.0 + abs(r.rhs)):
            out.append(f"{r.label} violated by {v:.3g}")
    return out


def canonical_duals(solution: MarketSolution) -> tuple[float, dict[int, float], dict[int, float], bool]:
    """Dual bundle of ``solution`` with a unique, reference-independent selection.

    When the marginal rows determine the multipliers the solver's values are
    kept.  Otherwise the point of the optimal dual set with least boundary
    spread and smallest line multipliers is chosen.
    """
    from .optimizer import MathProgram, solve

    system = assemble_stationarity(solution)
    report = check_licq(system)
    if report.ok:
        return solution.lam, dict(solution.mu), dict(solution.rho), True
    A, b, _ = system.reduced()
    n = len(system.unknowns)
    G = np.vstack([r.coeffs for r in system.inequalities]) if system.inequalities else np.zeros((0, n))
    h = np.array([r.rhs for r in system.inequalities])
    prog = MathProgram(
        c=np.zeros(n),
        A_eq=A,
        b_eq=b,
        A_ub=G,
        b_ub=h,
        lb=np.full(n, -np.inf),
        ub=np.full(n, np.inf),
        P=2.0 * _selection_weights(system),
    )
    res = solve(prog, tol=1e-6)
    if not res.optimal:
        log.warning("dual selection failed (%s); keeping solver multipliers", res.status)
        return solution.lam, dict(solution.mu), dict(solution.rho), False
    lam, mu_act, rho = _unpack(system, res.x)
    mu = {l: 0.0 for l in solution.mu}
    mu.update(mu_act)
    return lam, mu, rho, False
