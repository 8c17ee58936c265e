"""DC network algebra: Laplacians, shift factors, boundary equivalents and flows.

Flows follow the ``from_bus -> to_bus`` sign convention.  Shift factors are
MW of line flow per MW injected at a bus and withdrawn at the reference bus.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .case import GridCase, Line
from .errors import NetworkStructureError, ReductionError, ValidationError

log = logging.getLogger(__name__)

BALANCE_TOL = 1e-6


def laplacian(bus_ids: Sequence[int], lines: Iterable[Line]) -> np.ndarray:
    """Susceptance Laplacian over ``bus_ids`` (lines must stay inside that set)."""
    index = {b: k for k, b in enumerate(bus_ids)}
    lap = np.zeros((len(bus_ids), len(bus_ids)))
    for ln in lines:
        i, j = index[ln.from_bus], index[ln.to_bus]
        b = ln.susceptance
        lap[i, i] += b
        lap[j, j] += b
        lap[i, j] -= b
        lap[j, i] -= b
    return lap


def flow_operator(bus_ids: Sequence[int], lines: Sequence[Line]) -> np.ndarray:
    """Matrix H with ``flow = H @ theta``."""
    index = {b: k for k, b in enumerate(bus_ids)}
    h = np.zeros((len(lines), len(bus_ids)))
    for r, ln in enumerate(lines):
        h[r, index[ln.from_bus]] = ln.susceptance
        h[r, index[ln.to_bus]] = -ln.susceptance
    return h


def _components(n: int, edges: Iterable[tuple[int, int]]) -> tuple[int, np.ndarray]:
    rows, cols = [], []
    for i, j in edges:
        rows.append(i)
        cols.append(j)
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return connected_components(adj, directed=False)


def _shift_factors(
    bus_ids: Sequence[int], lines: Sequence[Line], lap: np.ndarray, ref_bus: int
) -> np.ndarray:
    index = {b: k for k, b in enumerate(bus_ids)}
    if ref_bus not in index:
        raise ValidationError(f"reference bus {ref_bus} is not in the network")
    r = index[ref_bus]
    keep = [k for k in range(len(bus_ids)) if k != r]
    h = flow_operator(bus_ids, lines)
    s = np.zeros((len(lines), len(bus_ids)))
    if keep and len(lines):
        red = lap[np.ix_(keep, keep)]
        s[:, keep] = np.linalg.solve(red, h[:, keep].T).T
    return s


@dataclass(frozen=True, eq=False)
class ShiftFactorMatrix:
    """Line-by-bus sensitivities.  ``reference`` is ``None`` for slack-free matrices."""

    matrix: np.ndarray
    line_ids: tuple[int, ...]
    bus_ids: tuple[int, ...]
    reference: int | None

    @cached_property
    def _line_pos(self) -> dict[int, int]:
        return {l: k for k, l in enumerate(self.line_ids)}

    @cached_property
    def _bus_pos(self) -> dict[int, int]:
        return {b: k for k, b in enumerate(self.bus_ids)}

    def entry(self, line_id: int, bus: int) -> float:
        return float(self.matrix[self._line_pos[line_id], self._bus_pos[bus]])

    def row(self, line_id: int, buses: Sequence[int] | None = None) -> np.ndarray:
        r = self.matrix[self._line_pos[line_id]]
        if buses is None:
            return r.copy()
        return r[[self._bus_pos[b] for b in buses]]

    def block(self, line_ids: Sequence[int], buses: Sequence[int]) -> np.ndarray:
        rows = [self._line_pos[l] for l in line_ids]
        cols = [self._bus_pos[b] for b in buses]
        return self.matrix[np.ix_(rows, cols)]

    def has_bus(self, bus: int) -> bool:
        return bus in self._bus_pos

    def has_line(self, line_id: int) -> bool:
        return line_id in self._line_pos


@dataclass(frozen=True, eq=False)
class EquivalentBoundary:
    """Ward equivalent of one area seen from its boundary buses.

    ``susceptance`` couples the boundary buses through the area's own lines;
    ``injection_map`` (boundary x internal) moves internal injections onto the
    boundary so that flows outside the area are unchanged.
    """

    area: int
    boundary: tuple[int, ...]
    internal: tuple[int, ...]
    susceptance: np.ndarray
    injection_map: np.ndarray

    @cached_property
    def _internal_pos(self) -> dict[int, int]:
        return {b: k for k, b in enumerate(self.internal)}

    @cached_property
    def _boundary_pos(self) -> dict[int, int]:
        return {b: k for k, b in enumerate(self.boundary)}

    @property
    def buses(self) -> tuple[int, ...]:
        return self.internal + self.boundary

    def column(self, bus: int) -> np.ndarray:
        """Boundary weights for an injection at ``bus`` (unit vector on boundary buses)."""
        if bus in self._internal_pos:
            return self.injection_map[:, self._internal_pos[bus]].copy()
        col = np.zeros(len(self.boundary))
        col[self._boundary_pos[bus]] = 1.0
        return col

    def full_map(self, buses: Sequence[int]) -> np.ndarray:
        """Boundary-by-``buses`` map, columns from :meth:`column`."""
        if not buses:
            return np.zeros((len(self.boundary), 0))
        return np.column_stack([self.column(b) for b in buses])

    def equivalent_injection(self, injections: Mapping[int, float]) -> np.ndarray:
        """Boundary injections equivalent to net injections on this area's buses."""
        out = np.zeros(len(self.boundary))
        for bus, mw in injections.items():
            if mw:
                out += mw * self.column(bus)
        return out


@dataclass(frozen=True, eq=False)
class GridNetwork:
    case: GridCase
    bus_ids: tuple[int, ...]
    lines: tuple[Line, ...]
    area_of: Mapping[int, int]
    laplacian: np.ndarray
    flow_matrix: np.ndarray
    boundary: frozenset[int] = field(default_factory=frozenset)
    _cache: dict = field(default_factory=dict, repr=False)

    @cached_property
    def index(self) -> dict[int, int]:
        return {b: k for k, b in enumerate(self.bus_ids)}

    @property
    def line_ids(self) -> tuple[int, ...]:
        return tuple(ln.id for ln in self.lines)

    @property
    def areas(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.area_of.values())))

    def is_boundary(self, bus: int) -> bool:
        return bus in self.boundary

    def is_tie(self, line: Line) -> bool:
        return self.area_of[line.from_bus] != self.area_of[line.to_bus]

    def line_area(self, line: Line) -> int | None:
        """Owning area of an internal line; ``None`` for tie-lines."""
        a = self.area_of[line.from_bus]
        return a if a == self.area_of[line.to_bus] else None

    def line(self, line_id: int) -> Line:
        for ln in self.lines:
            if ln.id == line_id:
                return ln
        raise KeyError(line_id)

    def area_buses(self, area: int) -> tuple[int, ...]:
        return tuple(b for b in self.bus_ids if self.area_of[b] == area)

    def boundary_buses(self, area: int | None = None) -> tuple[int, ...]:
        return tuple(
            b for b in self.bus_ids if b in self.boundary and (area is None or self.area_of[b] == area)
        )

    def internal_buses(self, area: int) -> tuple[int, ...]:
        return tuple(b for b in self.area_buses(area) if b not in self.boundary)

    def area_lines(self, area: int) -> tuple[Line, ...]:
        return tuple(ln for ln in self.lines if self.line_area(ln) == area)

    def tie_lines(self) -> tuple[Line, ...]:
        return tuple(ln for ln in self.lines if self.is_tie(ln))

    def area_laplacian(self, area: int) -> tuple[tuple[int, ...], np.ndarray]:
        """Laplacian of the area's own lines, ordered internal buses first."""
        buses = self.internal_buses(area) + self.boundary_buses(area)
        return buses, laplacian(buses, self.area_lines(area))

    def partition(self, area: int) -> dict[str, np.ndarray]:
        """Blocks II, IB, BI, BB of the area's own-line Laplacian."""
        buses, lap = self.area_laplacian(area)
        n_i = len(self.internal_buses(area))
        return {
            "II": lap[:n_i, :n_i],
            "IB": lap[:n_i, n_i:],
            "BI": lap[n_i:, :n_i],
            "BB": lap[n_i:, n_i:],
        }

    def vector(self, values: Mapping[int, float]) -> np.ndarray:
        out = np.zeros(len(self.bus_ids))
        for bus, v in values.items():
            out[self.index[bus]] += v
        return out

    def equivalents(self) -> dict[int, EquivalentBoundary]:
        """Ward equivalents of every area that has boundary buses."""
        if "equivalents" not in self._cache:
            self._cache["equivalents"] = {
                a: ward_reduce(self, a) for a in self.areas if self.boundary_buses(a)
            }
        return dict(self._cache["equivalents"])

    def area_view(self, area: int | None, equivalents: Mapping[int, EquivalentBoundary] | None = None) -> "AreaView":
        """Network as known to ``area`` (``None``: the boundary coordinator)."""
        eqs = self.equivalents() if equivalents is None else equivalents
        if area is None:
            return AreaView.build(None, (), (), self.tie_lines(), eqs)
        return AreaView.build(area, self.area_buses(area), self.area_lines(area), self.tie_lines(), eqs)


def build_network(case: GridCase) -> GridNetwork:
    """Assemble and check the network of ``case``."""
    case.validate(check_boundary=False)
    bus_ids = tuple(sorted(b.id for b in case.buses))
    area_of = case.bus_area()
    index = {b: k for k, b in enumerate(bus_ids)}
    n, labels = _components(
        len(bus_ids), ((index[ln.from_bus], index[ln.to_bus]) for ln in case.lines)
    )
    if n > 1:
        comps = [[bus_ids[k] for k in np.flatnonzero(labels == c)] for c in range(n)]
        raise NetworkStructureError(
            f"network is disconnected into {n} components: "
            + "; ".join(str(c) for c in comps),
            comps,
        )
    lines = tuple(case.lines)
    boundary = frozenset(case.boundary_buses())
    net = GridNetwork(
        case=case,
        bus_ids=bus_ids,
        lines=lines,
        area_of=dict(area_of),
        laplacian=laplacian(bus_ids, lines),
        flow_matrix=flow_operator(bus_ids, lines),
        boundary=boundary,
    )
    log.debug("network %s: %d buses, %d lines, %d boundary", case.name, len(bus_ids), len(lines), len(boundary))
    return net


def ward_reduce(network: GridNetwork, area: int) -> EquivalentBoundary:
    """Eliminate the area's internal buses, keeping its boundary buses."""
    internal = network.internal_buses(area)
    boundary = network.boundary_buses(area)
    blocks = network.partition(area)
    if not internal:
        return EquivalentBoundary(area, boundary, (), blocks["BB"].copy(), np.zeros((len(boundary), 0)))

    # every internal bus must reach a boundary bus through the area's own lines
    allb = internal + boundary
    pos = {b: k for k, b in enumerate(allb)}
    edges = [(pos[l.from_bus], pos[l.to_bus]) for l in network.area_lines(area)]
    _, labels = _components(len(allb), edges)
    grounded = {labels[pos[b]] for b in boundary}
    island = [b for b in internal if labels[pos[b]] not in grounded]
    if island:
        raise ReductionError(
            f"area {area}: internal buses {island} are not connected to any boundary bus",
            [island],
        )

    b_ii, b_ib, b_bi, b_bb = blocks["II"], blocks["IB"], blocks["BI"], blocks["BB"]
    x = np.linalg.solve(b_ii, b_ib)  # B_II^-1 B_IB
    reduced = b_bb - b_bi @ x
    reduced = 0.5 * (reduced + reduced.T)
    injection_map = -np.linalg.solve(b_ii, b_ib).T  # -B_BI B_II^-1 by symmetry
    return EquivalentBoundary(area, boundary, internal, reduced, injection_map)


@dataclass(frozen=True, eq=False)
class AreaView:
    """One operator's model: its own area in full, every other area reduced.

    Built only from the owner's buses and lines, the tie-lines, and the
    :class:`EquivalentBoundary` objects published by the other areas.
    """

    area: int | None
    bus_ids: tuple[int, ...]
    lines: tuple[Line, ...]
    line_area: Mapping[int, int | None]
    equivalents: Mapping[int, EquivalentBoundary]
    laplacian: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        area: int | None,
        own_buses: Sequence[int],
        own_lines: Sequence[Line],
        tie_lines: Sequence[Line],
        equivalents: Mapping[int, EquivalentBoundary],
    ) -> "AreaView":
        buses = list(own_buses)
        seen = set(buses)
        for a in sorted(equivalents):
            if a == area:
                continue
            for b in equivalents[a].boundary:
                if b not in seen:
                    buses.append(b)
                    seen.add(b)
        for ln in tie_lines:
            for b in (ln.from_bus, ln.to_bus):
                if b not in seen:
                    buses.append(b)
                    seen.add(b)
        bus_ids = tuple(sorted(buses))
        lines = tuple(own_lines) + tuple(tie_lines)
        lap = laplacian(bus_ids, lines)
        index = {b: k for k, b in enumerate(bus_ids)}
        for a, eq in equivalents.items():
            if a == area:
                continue
            idx = [index[b] for b in eq.boundary]
            lap[np.ix_(idx, idx)] += eq.susceptance
        line_area = {ln.id: area for ln in own_lines}
        line_area.update({ln.id: None for ln in tie_lines})
        return cls(area, bus_ids, lines, line_area, dict(equivalents), lap)

    @cached_property
    def _bus_area(self) -> dict[int, int]:
        out = {}
        for a, eq in self.equivalents.items():
            for b in eq.buses:
                out[b] = a
        return out

    def bus_area(self, bus: int) -> int:
        return self._bus_area[bus]

    def ptdf(self, ref_bus: int) -> ShiftFactorMatrix:
        return _view_ptdf(self, ref_bus)

    def sensitivity(self, line_id: int, bus: int, ref_bus: int) -> float:
        """Shift factor of a line this view owns to any bus in the grid."""
        s = self.ptdf(ref_bus)
        if s.has_bus(bus):
            return s.entry(line_id, bus)
        return inter_area_ptdf(self, line_id, bus, ref_bus)


def _view_ptdf(view: AreaView, ref_bus: int) -> ShiftFactorMatrix:
    hit = view._cache.get(ref_bus)
    if hit is None:
        mat = _shift_factors(view.bus_ids, view.lines, view.laplacian, ref_bus)
        hit = ShiftFactorMatrix(mat, tuple(ln.id for ln in view.lines), view.bus_ids, ref_bus)
        view._cache[ref_bus] = hit
    return hit


def ptdf(network: GridNetwork, ref_bus: int) -> ShiftFactorMatrix:
    """Full-network injection shift factors with withdrawal at ``ref_bus``."""
    key = ("ptdf", ref_bus)
    if key not in network._cache:
        mat = _shift_factors(network.bus_ids, network.lines, network.laplacian, ref_bus)
        network._cache[key] = ShiftFactorMatrix(mat, network.line_ids, network.bus_ids, ref_bus)
    return network._cache[key]


def inter_area_ptdf(view: AreaView, line_id: int, bus: int, ref_bus: int) -> float:
    """Sensitivity of a line owned by ``view`` to a bus inside another area.

    Computed on demand from the line's shift factors to that area's boundary
    and the area's published injection map.
    """
    owner = view.line_area[line_id]
    target = view.bus_area(bus)
    if owner is not None and owner == target:
        raise ValueError(f"bus {bus} lies in the same area as line {line_id}; use the area's own shift factors")
    eq = view.equivalents[target]
    s = view.ptdf(ref_bus)
    return float(s.row(line_id, eq.boundary) @ eq.column(bus))


def slack_free_internal_ptdf(
    network: GridNetwork, area: int, equivalents: Mapping[int, EquivalentBoundary] | None = None, ref_bus: int | None = None
) -> ShiftFactorMatrix:
    """Internal-line sensitivities with withdrawal spread over the area's own boundary.

    An injection at bus ``n`` is balanced at the boundary buses with the Ward
    weights of ``n``; the result does not depend on the reference bus.
    """
    eqs = network.equivalents() if equivalents is None else equivalents
    if area not in eqs:
        raise ValidationError(f"area {area} has no boundary buses")
    eq = eqs[area]
    view = network.area_view(area, eqs)
    ref = eq.boundary[0] if ref_bus is None else ref_bus
    # the area's own view suffices; a reference outside it needs the full grid
    s = view.ptdf(ref) if ref in view.bus_ids else ptdf(network, ref)
    line_ids = tuple(ln.id for ln in network.area_lines(area))
    buses = network.area_buses(area)
    if not line_ids:
        return ShiftFactorMatrix(np.zeros((0, len(buses))), (), buses, None)
    s_area = s.block(line_ids, buses)
    s_bnd = s.block(line_ids, eq.boundary)
    mat = s_area - s_bnd @ eq.full_map(buses)
    return ShiftFactorMatrix(mat, line_ids, buses, None)


def dc_flow(network: GridNetwork, injections: Mapping[int, float] | np.ndarray) -> np.ndarray:
    """Line flows (MW) for balanced bus injections, ordered as ``network.lines``."""
    p = network.vector(injections) if isinstance(injections, Mapping) else np.asarray(injections, float)
    imbalance = float(p.sum())
    if abs(imbalance) > BALANCE_TOL:
        raise ValidationError(f"injections are unbalanced by {imbalance:.6g} MW")
    keep = np.arange(1, len(p))
    theta = np.zeros(len(p))
    if len(keep):
        theta[keep] = np.linalg.solve(network.laplacian[np.ix_(keep, keep)], p[keep])
    return network.flow_matrix @ theta
