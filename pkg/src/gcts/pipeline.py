"""Clear, recover, settle and verify one case in a single call."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .case import GridCase
from .errors import DegeneracyError, GctsError, InfeasibleError, ValidationError
from .market import MarketSolution, SweepPoint, clear_gcts, convergence_sweep, solve_jed
from .recovery import (
    LicqReport,
    RecoveredMultipliers,
    RecoveredPrices,
    assemble_stationarity,
    check_licq,
    dual_feasibility,
    recover_prices,
    solve_direct,
    solve_distributed,
)
from .settlement import SettlementReport, settle

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2
EXIT_DEGENERATE = 3
EXIT_INTERNAL = 4


@dataclass(frozen=True)
class PipelineOptions:
    ref_bus: int | None = None
    tol: float = 1e-6
    sensitivity_tol: float = 1e-4
    distributed: bool = False
    topology: str = "complete"
    max_rounds: int = 10_000
    check_sensitivities: bool = True
    sweep: bool = False
    jed: bool = True


@dataclass
class ReportBundle:
    """Everything one pipeline run produced; failed sections leave an entry in ``errors``."""

    case: GridCase
    options: PipelineOptions
    solution: MarketSolution | None = None
    jed: MarketSolution | None = None
    licq: LicqReport | None = None
    recovered: RecoveredMultipliers | None = None
    prices: RecoveredPrices | None = None
    distributed: RecoveredMultipliers | None = None
    distributed_prices: RecoveredPrices | None = None
    dual_violations: tuple[str, ...] = ()
    settlement: SettlementReport | None = None
    sweep: tuple[SweepPoint, ...] = ()
    errors: dict[str, GctsError] = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.recovered is not None and self.recovered.certified

    @property
    def price_mismatch(self) -> float:
        """Largest gap between recovered and centrally computed prices."""
        if self.prices is None or self.solution is None:
            return math.nan
        return max((abs(self.prices.lmp[b] - p) for b, p in self.solution.lmp.items()), default=0.0)

    @property
    def distributed_mismatch(self) -> float:
        if self.distributed_prices is None or self.prices is None:
            return math.nan
        return max((abs(self.distributed_prices.lmp[b] - p) for b, p in self.prices.lmp.items()), default=0.0)

    def checks(self) -> list[tuple[str, float, float]]:
        """(name, value, tolerance) for every verification the run performed."""
        opt = self.options
        out = []
        if self.prices is not None and self.certified:
            out.append(("recovered LMP vs central", self.price_mismatch, opt.tol))
        if self.distributed_prices is not None:
            out.append(("distributed vs direct LMP", self.distributed_mismatch, opt.tol))
        s = self.settlement
        if s is not None:
            out.append(("rent by line group (theorem 2)", s.max_theorem2, opt.tol))
            out.append(("rent by payer (theorem 3)", s.max_theorem3, opt.tol))
            if s.theorem4:
                out.append(("cost sensitivity (theorem 4)", s.max_theorem4, opt.sensitivity_tol))
            out.append(("revenue adequacy", s.adequacy, opt.tol))
        return out

    @property
    def verified(self) -> bool:
        return all(v <= t for _, v, t in self.checks())

    @property
    def exit_code(self) -> int:
        kinds = list(self.errors.values())
        if any(isinstance(e, ValidationError) for e in kinds):
            return EXIT_VALIDATION
        if any(isinstance(e, InfeasibleError) for e in kinds):
            return EXIT_INFEASIBLE
        if any(not isinstance(e, DegeneracyError) for e in kinds):
            return EXIT_INTERNAL
        if any(isinstance(e, DegeneracyError) for e in kinds):
            return EXIT_DEGENERATE
        return EXIT_OK


def run_pipeline(case: GridCase, options: PipelineOptions | None = None) -> ReportBundle:
    """Clear the interchange market, recover prices, settle and verify.

    A failure in one section is recorded in ``bundle.errors`` and the sections
    that do not depend on it still run.
    """
    opt = options or PipelineOptions()
    bundle = ReportBundle(case, opt)
    try:
        case.validate()
        bundle.solution = clear_gcts(case, opt.ref_bus)
    except GctsError as exc:
        bundle.errors["clear"] = exc
    if opt.jed:
        try:
            bundle.jed = solve_jed(case, opt.ref_bus)
        except GctsError as exc:
            bundle.errors["jed"] = exc
    if opt.sweep:
        try:
            bundle.sweep = tuple(convergence_sweep(case, ref_bus=opt.ref_bus))
        except GctsError as exc:
            bundle.errors["sweep"] = exc
    sol = bundle.solution
    if sol is None:
        return bundle

    try:
        system = assemble_stationarity(sol)
        bundle.licq = check_licq(system)
        if bundle.licq.ok:
            bundle.recovered = solve_direct(system)
        else:
            bundle.errors["recover"] = DegeneracyError(
                "multipliers are not unique; prices are a selection and are not certified: "
                + bundle.licq.describe(),
                bundle.licq,
            )
            bundle.recovered = solve_direct(system, allow_degenerate=True)
        bundle.prices = recover_prices(bundle.recovered)
        bundle.dual_violations = tuple(dual_feasibility(bundle.recovered, opt.tol))
        if opt.distributed and bundle.licq.ok:
            bundle.distributed = solve_distributed(
                system, max_rounds=opt.max_rounds, tol=opt.tol, topology=opt.topology, reference=bundle.recovered
            )
            bundle.distributed_prices = recover_prices(bundle.distributed)
    except GctsError as exc:
        bundle.errors.setdefault("recover", exc)

    try:
        multipliers = bundle.recovered if bundle.certified else None
        bundle.settlement = settle(sol, multipliers, check_sensitivities=opt.check_sensitivities)
    except GctsError as exc:
        bundle.errors["settle"] = exc
    return bundle


__all__ = [
    "PipelineOptions",
    "ReportBundle",
    "run_pipeline",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_INFEASIBLE",
    "EXIT_DEGENERATE",
    "EXIT_INTERNAL",
]
