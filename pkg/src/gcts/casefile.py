"""Line-oriented case files, scenario overrides and the shipped cases.

Format::

    # comments run to end of line
    [case]
    name = case1
    base_mva = 100
    reference_bus = 1
    allow_boundary_injections = false

    [buses]          # id area
    [lines]          # id from to x capacity|inf
    [generators]     # id bus cost pmin pmax [quad=Q] [fixed=C0]
    [loads]          # bus MW
    [bids]           # id buy sell price_gap max_mw   (bus or area-bus)

    [scenario NAME]  # directives, applied in order of kind:
    remove 2-4       #   line removals
    capacity all inf #   capacity overrides ("all" first, then specific lines)
    capacity 9-10 5
    reactance 1 0.2  #   reactance overrides
    dpi all 0.1      #   bid price-gap overrides

Line references are ids or ``from-to`` endpoint pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .case import Bus, Generator, GridCase, InterfaceBid, Line, Load, ScenarioSpec
from .errors import ValidationError

log = logging.getLogger(__name__)

SECTIONS = ("case", "buses", "lines", "generators", "loads", "bids")
HEADER_KEYS = {"name", "base_mva", "reference_bus", "allow_boundary_injections"}
BUILTIN = ("case1", "case2", "case3")


def _num(tok: str, line: int, what: str) -> float:
    t = tok.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(t)
    except ValueError:
        raise ValidationError(f"{what}: expected a number, got {tok!r}", line) from None


def _int(tok: str, line: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ValidationError(f"{what}: expected an integer, got {tok!r}", line) from None


def _bool(tok: str, line: int) -> bool:
    t = tok.strip().lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValidationError(f"expected true/false, got {tok!r}", line)


def _bid_bus(tok: str, areas: Mapping[int, int], line: int) -> int:
    """Accept ``bus`` or ``area-bus``; the area must match the bus record."""
    if "-" in tok:
        a, b = tok.split("-", 1)
        area, bus = _int(a, line, "bid area"), _int(b, line, "bid bus")
        if bus in areas and areas[bus] != area:
            raise ValidationError(f"bus {bus} belongs to area {areas[bus]}, not {area}", line)
        return bus
    return _int(tok, line, "bid bus")


def parse_case(text: str, source: str = "<string>") -> GridCase:
    """Parse case-file text into a validated :class:`GridCase`."""
    header: dict[str, str] = {}
    buses, lines, gens, loads, bids = [], [], [], [], []
    pending_bids: list[tuple[int, list[str]]] = []
    scenarios: list[ScenarioSpec] = []
    section = None
    scen: dict | None = None
    seen_sections: set[str] = set()

    def close_scenario():
        nonlocal scen
        if scen is not None:
            scenarios.append(
                ScenarioSpec(
                    scen["name"],
                    tuple(scen["capacity"]),
                    tuple(scen["dpi"]),
                    tuple(scen["remove"]),
                    tuple(scen["reactance"]),
                )
            )
            scen = None

    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ValidationError(f"malformed section header {body!r}", no)
            name = body[1:-1].strip()
            close_scenario()
            if name.startswith("scenario"):
                parts = name.split()
                if len(parts) != 2:
                    raise ValidationError("scenario header needs exactly one name", no)
                if any(s.name == parts[1] for s in scenarios):
                    raise ValidationError(f"duplicate scenario {parts[1]!r}", no)
                scen = {"name": parts[1], "capacity": [], "dpi": [], "remove": [], "reactance": []}
                section = "scenario"
                continue
            if name not in SECTIONS:
                raise ValidationError(f"unknown section [{name}]", no)
            if name in seen_sections:
                raise ValidationError(f"section [{name}] appears twice", no)
            seen_sections.add(name)
            section = name
            continue
        tok = body.split()
        if section is None:
            raise ValidationError("data before any section header", no)
        if section == "case":
            if "=" not in body:
                raise ValidationError("expected key = value", no)
            key, val = (t.strip() for t in body.split("=", 1))
            if key not in HEADER_KEYS:
                raise ValidationError(f"unknown header key {key!r}", no)
            header[key] = val
        elif section == "buses":
            if len(tok) != 2:
                raise ValidationError("bus record needs: id area", no)
            buses.append(Bus(_int(tok[0], no, "bus id"), _int(tok[1], no, "area")))
        elif section == "lines":
            if len(tok) != 5:
                raise ValidationError("line record needs: id from to x capacity", no)
            x = _num(tok[3], no, "reactance")
            if not (math.isfinite(x) and x > 0):
                raise ValidationError("reactance must be positive and finite", no)
            lines.append(
                Line(
                    _int(tok[0], no, "line id"),
                    _int(tok[1], no, "from bus"),
                    _int(tok[2], no, "to bus"),
                    x,
                    _num(tok[4], no, "capacity"),
                )
            )
        elif section == "generators":
            if len(tok) < 5:
                raise ValidationError("generator record needs: id bus cost pmin pmax", no)
            extra = {"quad": 0.0, "fixed": 0.0}
            for opt in tok[5:]:
                if "=" not in opt:
                    raise ValidationError(f"unexpected token {opt!r}", no)
                k, v = opt.split("=", 1)
                if k not in extra:
                    raise ValidationError(f"unknown generator option {k!r}", no)
                extra[k] = _num(v, no, k)
            gens.append(
                Generator(
                    tok[0],
                    _int(tok[1], no, "generator bus"),
                    _num(tok[2], no, "cost"),
                    _num(tok[3], no, "pmin"),
                    _num(tok[4], no, "pmax"),
                    extra["quad"],
                    extra["fixed"],
                )
            )
        elif section == "loads":
            if len(tok) != 2:
                raise ValidationError("load record needs: bus MW", no)
            loads.append(Load(_int(tok[0], no, "load bus"), _num(tok[1], no, "load")))
        elif section == "bids":
            if len(tok) != 5:
                raise ValidationError("bid record needs: id buy sell price_gap max_mw", no)
            pending_bids.append((no, tok))
        elif section == "scenario":
            _scenario_directive(scen, tok, no)
    close_scenario()

    areas = {b.id: b.area for b in buses}
    for no, tok in pending_bids:
        bids.append(
            InterfaceBid(
                tok[0],
                _bid_bus(tok[1], areas, no),
                _bid_bus(tok[2], areas, no),
                _num(tok[3], no, "price gap"),
                _num(tok[4], no, "max quantity"),
            )
        )

    ref = header.get("reference_bus")
    case = GridCase(
        name=header.get("name", Path(source).stem),
        buses=tuple(buses),
        lines=tuple(lines),
        generators=tuple(gens),
        loads=tuple(loads),
        bids=tuple(bids),
        base_mva=float(header.get("base_mva", 100.0)),
        reference_bus=None if ref in (None, "", "auto") else int(ref),
        allow_boundary_injections=_bool(header.get("allow_boundary_injections", "false"), 0),
        scenarios=tuple(scenarios),
    )
    case.validate()
    for sc in scenarios:
        apply_scenario(case, sc)  # every scenario must resolve against the base case
    return case


def _scenario_directive(scen: dict, tok: list[str], no: int) -> None:
    kind = tok[0]
    if kind == "remove":
        if len(tok) != 2:
            raise ValidationError("remove needs one line reference", no)
        scen["remove"].append(tok[1])
    elif kind in ("capacity", "dpi", "reactance"):
        if len(tok) != 3:
            raise ValidationError(f"{kind} needs a target and a value", no)
        target = "*" if tok[1] == "all" else tok[1]
        scen[kind].append((target, _num(tok[2], no, kind)))
    else:
        raise ValidationError(f"unknown scenario directive {kind!r}", no)


def load_case(path: str | Path, scenario: str | None = None) -> GridCase:
    """Read a case file (or a built-in case name) and optionally apply a scenario."""
    p = Path(path)
    if not p.exists() and str(path) in BUILTIN:
        return builtin_case(str(path), scenario)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read case file {path}: {exc}") from None
    case = parse_case(text, str(p))
    return apply_scenario(case, case.scenario(scenario)) if scenario else case


def builtin_case(name: str, scenario: str | None = None) -> GridCase:
    if name not in BUILTIN:
        raise ValidationError(f"unknown built-in case {name!r}")
    text = resources.files("gcts").joinpath("data", f"{name}.case").read_text()
    case = parse_case(text, f"{name}.case")
    return apply_scenario(case, case.scenario(scenario)) if scenario else case


def builtin_text(name: str) -> str:
    return resources.files("gcts").joinpath("data", f"{name}.case").read_text()


def apply_scenario(case: GridCase, spec: ScenarioSpec) -> GridCase:
    """Copy of ``case`` with the overrides of ``spec``; the base case is untouched."""
    if spec.empty:
        return replace(case, name=f"{case.name}:{spec.name}")
    lines = {ln.id: ln for ln in case.lines}
    for ref in spec.removals:
        lines.pop(case.line(ref).id)
    for ref, cap in sorted(spec.capacities, key=lambda kv: kv[0] != "*"):
        targets = list(lines) if ref == "*" else [case.line(ref).id]
        for lid in targets:
            if lid not in lines:
                raise ValidationError(f"scenario {spec.name}: line {ref} was removed")
            lines[lid] = replace(lines[lid], capacity=cap)
    for ref, x in spec.reactances:
        lid = case.line(ref).id
        if lid not in lines:
            raise ValidationError(f"scenario {spec.name}: line {ref} was removed")
        lines[lid] = replace(lines[lid], reactance=x)
    bids = {b.id: b for b in case.bids}
    for ref, dpi in sorted(spec.price_gaps, key=lambda kv: kv[0] != "*"):
        targets = list(bids) if ref == "*" else [case.bid(ref).id]
        for bid in targets:
            bids[bid] = replace(bids[bid], price_gap=dpi)
    out = replace(
        case,
        name=f"{case.name}:{spec.name}",
        lines=tuple(lines[ln.id] for ln in case.lines if ln.id in lines),
        bids=tuple(bids[b.id] for b in case.bids),
    )
    out.validate(check_boundary=False)
    return out


def _fmt(v: float) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def dump_case(case: GridCase) -> str:
    """Serialize ``case`` (with its scenarios) in the case-file format."""
    out = ["[case]", f"name = {case.name}", f"base_mva = {_fmt(case.base_mva)}"]
    if case.reference_bus is not None:
        out.append(f"reference_bus = {case.reference_bus}")
    out.append(f"allow_boundary_injections = {str(case.allow_boundary_injections).lower()}")
    out += ["", "[buses]"] + [f"{b.id} {b.area}" for b in case.buses]
    out += ["", "[lines]"] + [
        f"{l.id} {l.from_bus} {l.to_bus} {_fmt(l.reactance)} {_fmt(l.capacity)}" for l in case.lines
    ]
    out += ["", "[generators]"]
    for g in case.generators:
        rec = f"{g.id} {g.bus} {_fmt(g.cost)} {_fmt(g.pmin)} {_fmt(g.pmax)}"
        if g.quad:
            rec += f" quad={_fmt(g.quad)}"
        if g.fixed_cost:
            rec += f" fixed={_fmt(g.fixed_cost)}"
        out.append(rec)
    out += ["", "[loads]"] + [f"{l.bus} {_fmt(l.mw)}" for l in case.loads]
    out += ["", "[bids]"] + [
        f"{b.id} {b.buy_bus} {b.sell_bus} {_fmt(b.price_gap)} {_fmt(b.max_mw)}" for b in case.bids
    ]
    for sc in case.scenarios:
        out += ["", f"[scenario {sc.name}]"]
        out += [f"remove {r}" for r in sc.removals]
        out += [f"capacity {'all' if t == '*' else t} {_fmt(v)}" for t, v in sc.capacities]
        out += [f"reactance {t} {_fmt(v)}" for t, v in sc.reactances]
        out += [f"dpi {'all' if t == '*' else t} {_fmt(v)}" for t, v in sc.price_gaps]
    return "\n".join(out) + "\n"


def from_matpower(
    mpc: Mapping[str, np.ndarray],
    areas: Mapping[int, int] | None = None,
    name: str = "converted",
    bids: Iterable[InterfaceBid] = (),
) -> GridCase:
    """Build a case from the matrix layout used by common power-system toolboxes.

    Column mapping (1-based toolbox columns):
      bus:     BUS_I (1) -> id, PD (3) -> load MW, BUS_AREA (7) -> area unless ``areas`` given
      branch:  F_BUS (1), T_BUS (2), BR_X (4) -> reactance, RATE_A (6) -> capacity (0 means inf);
               out-of-service branches (BR_STATUS, 11) are skipped
      gen:     GEN_BUS (1), PMAX (9), PMIN (10); out-of-service units (GEN_STATUS, 8) skipped
      gencost: polynomial model 2 only; last three coefficients -> quad, cost, fixed
    Values are taken in MW; reactances stay in per unit on ``baseMVA``.
    """
    bus = np.atleast_2d(np.asarray(mpc["bus"], float))
    branch = np.atleast_2d(np.asarray(mpc["branch"], float))
    gen = np.atleast_2d(np.asarray(mpc.get("gen", np.zeros((0, 10))), float))
    gencost = np.atleast_2d(np.asarray(mpc.get("gencost", np.zeros((0, 7))), float))
    area_map = dict(areas) if areas else {int(r[0]): int(r[6]) for r in bus}
    buses = tuple(Bus(int(r[0]), area_map[int(r[0])]) for r in bus)
    loads = tuple(Load(int(r[0]), float(r[2])) for r in bus if r[2])
    lines = []
    for k, r in enumerate(branch):
        if branch.shape[1] > 10 and r[10] == 0:
            continue
        cap = float(r[5]) if branch.shape[1] > 5 and r[5] > 0 else math.inf
        lines.append(Line(k + 1, int(r[0]), int(r[1]), float(r[3]), cap))
    gens = []
    for k, r in enumerate(gen):
        if gen.shape[1] > 7 and r[7] <= 0:
            continue
        quad = cost = fixed = 0.0
        if k < len(gencost):
            gc = gencost[k]
            if int(gc[0]) != 2:
                raise ValidationError("only polynomial generator costs can be converted")
            coeffs = list(gc[4 : 4 + int(gc[3])])
            coeffs = [0.0] * (3 - len(coeffs)) + coeffs[-3:]
            quad, cost, fixed = coeffs
        gens.append(Generator(f"G{k + 1}", int(r[0]), cost, float(r[9]), float(r[8]), quad, fixed))
    return GridCase(
        name=name,
        buses=buses,
        lines=tuple(lines),
        generators=tuple(gens),
        loads=loads,
        bids=tuple(bids),
        base_mva=float(mpc.get("baseMVA", 100.0)),
    )
