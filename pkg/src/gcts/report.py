"""Tables built from a pipeline bundle and their human and machine renderings.

The human rendering aligns columns and prints numbers with two decimals; the
machine rendering is comma-separated ``table,row,column,value`` records with
full-precision numbers.  Both are produced from the same table objects.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ValidationError
from .pipeline import ReportBundle
from .settlement import LineGroup, Payer


@dataclass(frozen=True)
class Table:
    name: str
    title: str
    columns: tuple[str, ...]
    rows: tuple[tuple[str, tuple], ...]  # (row label, cells)
    scientific: bool = False  # human rendering of residual-sized numbers


def _num(v: float) -> float:
    return 0.0 if v == 0 else float(v)


def _fmt_human(v, scientific: bool = False) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            return str(v)
        if scientific:
            return f"{_num(v):.2e}"
        text = f"{v:.2f}"
        return "0.00" if text == "-0.00" else text
    return str(v)


def _fmt_machine(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(_num(v))
    return str(v)


# ----------------------------------------------------------------- tables


def summary_table(bundle: ReportBundle) -> Table:
    rows = [("case", (bundle.case.name,))]
    sol = bundle.solution
    if sol is not None:
        rows += [
            ("reference bus", (sol.ref_bus,)),
            ("market cost", (sol.market_cost,)),
            ("clearing objective", (sol.objective,)),
            ("total congestion rent", (sol.total_rent,)),
            ("multipliers unique", (sol.duals_unique,)),
        ]
    if bundle.jed is not None:
        rows.append(("joint dispatch cost", (bundle.jed.market_cost,)))
    if bundle.licq is not None:
        rows.append(("prices certified", (bundle.certified,)))
    return Table("summary", "Summary", ("value",), tuple(rows))


def error_table(bundle: ReportBundle) -> Table:
    rows = [(section, (type(err).__name__, str(err))) for section, err in sorted(bundle.errors.items())]
    return Table("errors", "Problems", ("kind", "message"), tuple(rows))


def dispatch_table(bundle: ReportBundle) -> Table:
    sol = bundle.solution
    area = sol.context.network.area_of
    rows = []
    for g in sol.case.generators:
        rows.append((g.id, (g.bus, area[g.bus], sol.dispatch[g.id], g.pmax, g.marginal_cost(sol.dispatch[g.id]))))
    return Table("dispatch", "Generator dispatch", ("bus", "area", "MW", "Pmax", "marginal cost"), tuple(rows))


def bid_table(bundle: ReportBundle) -> Table:
    sol = bundle.solution
    rows = []
    for b in sol.case.bids:
        rows.append((b.id, (b.buy_bus, b.sell_bus, b.price_gap, b.max_mw, sol.bids[b.id])))
    return Table("bids", "Interface bids", ("buy bus", "sell bus", "price gap", "max MW", "cleared MW"), tuple(rows))


def flow_table(bundle: ReportBundle) -> Table:
    sol = bundle.solution
    rows = []
    for ln in sol.context.network.lines:
        cap = ln.capacity if ln.bounded else None
        mu = sol.mu.get(ln.id, 0.0)
        rows.append((str(ln.id), (ln.from_bus, ln.to_bus, sol.flows[ln.id], cap, mu, sol.rent(ln.id))))
    return Table(
        "flows", "Line flows", ("from", "to", "flow MW", "capacity MW", "shadow price", "rent"), tuple(rows)
    )


def price_table(bundle: ReportBundle) -> Table:
    sol = bundle.solution
    net = sol.context.network
    rows = []
    for b, p in sol.lmp.items():
        rec = bundle.prices.lmp[b] if bundle.prices is not None else None
        dist = bundle.distributed_prices.lmp[b] if bundle.distributed_prices is not None else None
        rows.append((str(b), (net.area_of[b], net.is_boundary(b), p, rec, dist)))
    return Table(
        "prices", "Locational marginal prices", ("area", "boundary", "central", "recovered", "distributed"), tuple(rows)
    )


def settlement_table(bundle: ReportBundle) -> Table:
    """One column per area and per bid group, in the layout of a settlement sheet."""
    s = bundle.settlement
    areas = sorted(s.areas)
    groups = list(s.bid_groups)
    cols = tuple(f"area {a}" for a in areas) + tuple(f"bids {g}" for g in groups)
    gamma_area = [s.ledger.gamma.get(Payer.area(a), 0.0) for a in areas]
    gamma_bid = [s.group_share(g) for g in groups]
    none = [None] * len(groups)
    rows = [
        ("Collect from internal generators", tuple([s.areas[a].from_generators for a in areas] + none)),
        ("Collect from loads", tuple([s.areas[a].from_loads for a in areas] + none)),
        (
            "Collect from interface bids",
            tuple([s.areas[a].from_bids for a in areas] + [s.bid_groups[g].revenue for g in groups]),
        ),
        ("Merchandise surplus", tuple([s.areas[a].merchandise_surplus for a in areas] + none)),
        ("Cost of clearing interface bids", tuple([None] * len(areas) + [s.bid_groups[g].clearing_cost for g in groups])),
        ("Profit of interface bids", tuple([None] * len(areas) + [s.bid_groups[g].profit for g in groups])),
        ("Congestion rent afforded", tuple(gamma_area + gamma_bid)),
    ]
    return Table("settlement", "Settlement", cols, tuple(rows))


def rent_table(bundle: ReportBundle) -> Table:
    """Rent components: line groups by payer, with group totals and payer shares."""
    ledger = bundle.settlement.ledger
    payers = list(ledger.gamma)
    groups: list[LineGroup] = list(ledger.beta)
    cols = tuple(p.label for p in payers) + ("total",)
    rows = [(g.label, tuple(ledger.psi(g, p) for p in payers) + (ledger.beta[g],)) for g in groups]
    rows.append(("share", tuple(ledger.gamma[p] for p in payers) + (sum(ledger.gamma.values()),)))
    return Table("rents", "Congestion rent components", cols, tuple(rows))


def check_table(bundle: ReportBundle) -> Table:
    rows = [(name, (value, tol, "pass" if value <= tol else "FAIL")) for name, value, tol in bundle.checks()]
    if bundle.settlement is not None and bundle.settlement.theorem4:
        checks = bundle.settlement.theorem4
        vacuous = sum(1 for c in checks if math.isinf(c.backward) and math.isinf(c.forward))
        rows.append(("sensitivity checks (unbounded on both sides)", (len(checks), vacuous, None)))
    if bundle.dual_violations:
        rows.append(("dual sign violations", (len(bundle.dual_violations), None, "; ".join(bundle.dual_violations))))
    return Table("checks", "Verification", ("value", "tolerance", "result"), tuple(rows), scientific=True)


def licq_table(bundle: ReportBundle) -> Table:
    rep = bundle.licq
    rows = [
        ("independent", (rep.ok,)),
        ("rank", (rep.rank,)),
        ("unknowns", (rep.n_unknowns,)),
        ("rows", (rep.n_rows,)),
        ("redundant rows", (" ".join(rep.redundant_rows),)),
        ("undetermined unknowns", (" ".join(rep.free_unknowns),)),
    ]
    return Table("licq", "Marginal-unit rows", ("value",), tuple(rows))


def consensus_table(bundle: ReportBundle) -> Table:
    trace = bundle.distributed.trace
    rows = [
        ("agents", (" ".join(str(a) for a in trace.agents),)),
        ("rounds", (trace.rounds,)),
        ("final residual", (f"{trace.residual[-1]:.3e}" if len(trace.residual) else "0",)),
        ("residual nonincreasing", (trace.monotone,)),
        ("kernel", (trace.backend,)),
    ]
    return Table("consensus", "Distributed recovery", ("value",), tuple(rows))


def sweep_table(bundle: ReportBundle) -> Table:
    rows = [
        (f"{k}", (p.price_gap, p.gcts_cost, p.jed_cost, p.gap, p.relative_gap)) for k, p in enumerate(bundle.sweep)
    ]
    cols = ("price gap", "clearing objective", "joint objective", "gap", "relative gap")
    return Table("sweep", "Price-gap sweep (complete bid coverage)", cols, tuple(rows))


SECTIONS = {
    "clear": ("summary", "errors", "dispatch", "bids", "flows", "prices"),
    "recover": ("summary", "errors", "licq", "prices", "consensus"),
    "settle": ("summary", "errors", "settlement", "rents"),
    "verify": ("summary", "errors", "checks"),
    "sweep": ("summary", "errors", "sweep"),
    "report": ("summary", "errors", "dispatch", "bids", "flows", "prices", "licq", "consensus", "settlement", "rents", "checks", "sweep"),
}

_BUILDERS = {
    "summary": (summary_table, lambda b: True),
    "errors": (error_table, lambda b: len(b.errors) > 0),
    "dispatch": (dispatch_table, lambda b: b.solution is not None),
    "bids": (bid_table, lambda b: b.solution is not None and len(b.case.bids) > 0),
    "flows": (flow_table, lambda b: b.solution is not None),
    "prices": (price_table, lambda b: b.solution is not None),
    "licq": (licq_table, lambda b: b.licq is not None),
    "consensus": (consensus_table, lambda b: b.distributed is not None),
    "settlement": (settlement_table, lambda b: b.settlement is not None),
    "rents": (rent_table, lambda b: b.settlement is not None),
    "checks": (check_table, lambda b: b.solution is not None),
    "sweep": (sweep_table, lambda b: len(b.sweep) > 0),
}


def build_tables(bundle: ReportBundle, sections: Iterable[str] = SECTIONS["report"]) -> list[Table]:
    out = []
    for name in sections:
        build, available = _BUILDERS[name]
        if available(bundle):
            out.append(build(bundle))
    return out


# ----------------------------------------------------------------- rendering


def render_human(tables: Sequence[Table]) -> str:
    blocks = []
    for t in tables:
        header = [""] + list(t.columns)
        body = [[label] + [_fmt_human(v, t.scientific) for v in cells] for label, cells in t.rows]
        widths = [max(len(r[k]) for r in [header] + body) for k in range(len(header))]
        lines = [t.title, "=" * len(t.title)]
        # text columns read better left-aligned, numbers right-aligned
        textual = [
            all(isinstance(cells[k], str) or cells[k] is None for _, cells in t.rows) for k in range(len(t.columns))
        ]
        for k, r in enumerate([header] + body):
            first = r[0].ljust(widths[0])
            rest = [c.ljust(w) if left else c.rjust(w) for c, w, left in zip(r[1:], widths[1:], textual)]
            lines.append("  ".join([first] + rest).rstrip())
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def render_machine(tables: Sequence[Table]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["table", "row", "column", "value"])
    for t in tables:
        for label, cells in t.rows:
            for col, v in zip(t.columns, cells):
                if v is None:
                    continue
                writer.writerow([t.name, label, col, _fmt_machine(v)])
    return buf.getvalue()


def parse_machine(text: str) -> dict[tuple[str, str, str], str]:
    """Read a machine report back into ``{(table, row, column): value}``."""
    reader = csv.reader(io.StringIO(text))
    next(reader, None)
    return {(t, r, c): v for t, r, c, v in reader}


def emit_report(bundle: ReportBundle, fmt: str = "table", path: str | Path | None = None, sections=None) -> str:
    """Render ``bundle`` and optionally write it to ``path``; returns the text."""
    tables = build_tables(bundle, sections or SECTIONS["report"])
    if fmt == "table":
        text = render_human(tables)
    elif fmt == "machine":
        text = render_machine(tables)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot write report to {path}: {exc.strerror or exc}") from None
    return text


__all__ = ["Table", "SECTIONS", "build_tables", "render_human", "render_machine", "parse_machine", "emit_report"]
