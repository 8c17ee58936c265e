"""Random multi-area test instances.

Each area is a connected random graph; areas are joined by tie-lines whose
endpoints form the boundary.  Generators and loads sit on internal buses only,
every ordered pair of boundary buses in different areas gets a bid, and a
few lines are limited to a fraction of their unconstrained flow so that the
instance is congested.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .case import Bus, Generator, GridCase, InterfaceBid, Line, Load
from .errors import GctsError, InfeasibleError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstanceOptions:
    min_areas: int = 2
    max_areas: int = 3
    min_buses: int = 4
    max_buses: int = 20
    quadratic: bool = False
    congested_lines: tuple[int, int] = (1, 2)
    congestion_factor: float = 0.7
    price_gap: tuple[float, float] = (0.01, 0.5)
    quad_range: tuple[float, float] = (0.005, 0.05)


def _area_graph(rng: np.random.Generator, buses: list[int]) -> list[tuple[int, int]]:
    """Random spanning tree plus a few chords."""
    order = list(rng.permutation(buses))
    edges = []
    for k in range(1, len(order)):
        edges.append((int(order[k]), int(order[rng.integers(0, k)])))
    extra = rng.integers(0, max(1, len(buses) // 2) + 1)
    for _ in range(extra):
        a, b = (int(x) for x in rng.choice(buses, 2, replace=False))
        if (a, b) not in edges and (b, a) not in edges:
            edges.append((a, b))
    return edges


def _tie_pairs(n_areas: int) -> list[tuple[int, int]]:
    if n_areas == 2:
        return [(1, 2), (1, 2)]
    return [(1, 2), (2, 3), (1, 3)]


def random_case(seed: int, options: InstanceOptions | None = None) -> GridCase:
    """Congested random case with complete bid coverage; deterministic in ``seed``."""
    from .market import clear_gcts

    opt = options or InstanceOptions()
    rng = np.random.default_rng(seed)
    n_areas = int(rng.integers(opt.min_areas, opt.max_areas + 1))

    buses, lines, area_buses = [], [], {}
    next_bus = 1
    for a in range(1, n_areas + 1):
        size = int(rng.integers(opt.min_buses, opt.max_buses + 1))
        ids = list(range(next_bus, next_bus + size))
        next_bus += size
        area_buses[a] = ids
        buses += [Bus(b, a) for b in ids]
        for f, t in _area_graph(rng, ids):
            lines.append((f, t))

    # ties: endpoints drawn from a small pool per area so some buses host several
    pool = {a: [int(b) for b in rng.choice(ids, min(2, len(ids) - 2), replace=False)] for a, ids in area_buses.items()}
    ties = []
    for a, b in _tie_pairs(n_areas):
        f, t = int(rng.choice(pool[a])), int(rng.choice(pool[b]))
        if (f, t) not in ties:
            ties.append((f, t))
    boundary = {b for tie in ties for b in tie}

    line_objs = []
    for k, (f, t) in enumerate(lines + ties, start=1):
        line_objs.append(Line(k, f, t, float(rng.uniform(0.05, 0.5))))

    gens, loads = [], []
    for a, ids in area_buses.items():
        internal = [b for b in ids if b not in boundary]
        n_gen = int(rng.integers(1, min(4, len(internal)) + 1))
        for b in rng.choice(internal, n_gen, replace=False):
            quad = float(rng.uniform(*opt.quad_range)) if opt.quadratic else 0.0
            gens.append(
                Generator(
                    f"G{len(gens) + 1}",
                    int(b),
                    round(float(rng.uniform(10.0, 50.0)), 3),
                    0.0,
                    round(float(rng.uniform(60.0, 200.0)), 1),
                    quad,
                )
            )
        for b in internal:
            if rng.random() < 0.6:
                loads.append(Load(b, round(float(rng.uniform(5.0, 60.0)), 1)))
    demand = sum(l.mw for l in loads)
    capacity = sum(g.pmax for g in gens)
    if demand > 0.6 * capacity:
        scale = 0.6 * capacity / demand
        loads = [Load(l.bus, round(l.mw * scale, 1)) for l in loads]

    area_of = {b.id: b.area for b in buses}
    bnd = sorted(boundary)
    bids = []
    for p in bnd:
        for q in bnd:
            if area_of[p] != area_of[q]:
                gap = round(float(rng.uniform(*opt.price_gap)), 4)
                bids.append(InterfaceBid(f"b{p}-{q}", p, q, gap, 2.0 * capacity))

    case = GridCase(
        name=f"random-{seed}{'-qp' if opt.quadratic else ''}",
        buses=tuple(buses),
        lines=tuple(line_objs),
        generators=tuple(gens),
        loads=tuple(loads),
        bids=tuple(bids),
        reference_bus=bnd[0],
    )

    # limit a few loaded lines below their unconstrained flow, skipping any
    # limit that leaves no feasible dispatch (e.g. a radial feeder to a load)
    free = clear_gcts(case)
    loaded = [ln for ln in case.lines if abs(free.flows[ln.id]) > 1.0]
    if not loaded:
        raise GctsError(f"seed {seed}: no line carries flow")
    want = int(rng.integers(opt.congested_lines[0], opt.congested_lines[1] + 1))
    limited = {ln.id: ln for ln in case.lines}
    n_limited = 0
    for k in rng.permutation(len(loaded)):
        if n_limited == want:
            break
        ln = loaded[int(k)]
        cap = round(opt.congestion_factor * abs(free.flows[ln.id]), 3)
        trial = dict(limited)
        trial[ln.id] = Line(ln.id, ln.from_bus, ln.to_bus, ln.reactance, cap)
        candidate = case.with_changes(lines=tuple(trial.values()))
        try:
            clear_gcts(candidate, canonical=False)
        except InfeasibleError:
            continue
        limited, n_limited = trial, n_limited + 1
    if not n_limited:
        raise GctsError(f"seed {seed}: no line can be limited without losing feasibility")
    return case.with_changes(lines=tuple(limited.values()))


@dataclass(frozen=True)
class InstanceDraw:
    seed: int
    case: GridCase | None
    reason: str = ""


def instance_stream(options: InstanceOptions | None = None, start: int = 0):
    """Endless stream of draws; infeasible or trivial seeds carry a reason instead of a case."""
    seed = start
    while True:
        try:
            yield InstanceDraw(seed, random_case(seed, options))
        except GctsError as exc:
            yield InstanceDraw(seed, None, str(exc))
        seed += 1


__all__ = ["InstanceOptions", "InstanceDraw", "random_case", "instance_stream"]
