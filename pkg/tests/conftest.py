from __future__ import annotations

import functools
import math

import pytest

from gcts.case import Bus, Generator, GridCase, InterfaceBid, Line, Load


def make_case(
    areas: dict[int, int],
    lines: list[tuple],
    gens: list[tuple] = (),
    loads: dict[int, float] | None = None,
    bids: list[tuple] = (),
    name: str = "test",
    **kw,
) -> GridCase:
    """Compact case constructor.

    lines: (from, to, x[, capacity]); gens: (id, bus, cost, pmin, pmax[, quad]);
    bids: (id, buy, sell, dpi, smax).
    """
    return GridCase(
        name=name,
        buses=tuple(Bus(b, a) for b, a in sorted(areas.items())),
        lines=tuple(
            Line(k + 1, ln[0], ln[1], ln[2], ln[3] if len(ln) > 3 else math.inf)
            for k, ln in enumerate(lines)
        ),
        generators=tuple(Generator(*g) for g in gens),
        loads=tuple(Load(b, mw) for b, mw in sorted((loads or {}).items())),
        bids=tuple(InterfaceBid(*b) for b in bids),
        **kw,
    )


@pytest.fixture
def case1_radial():
    from gcts.casefile import builtin_case

    return builtin_case("case1", "x24_inf")


@pytest.fixture
def case1_meshed():
    from gcts.casefile import builtin_case

    return builtin_case("case1", "x24_1")


CASE_SYSTEMS = (
    ("case1", "x24_inf"),
    ("case1", "x24_1"),
    ("case2", "S0"),
    ("case2", "S1"),
    ("case2", "S2"),
    ("case2", "S3"),
    ("case2", "S4"),
    ("case2", "S5"),
    ("case3", None),
)


@functools.lru_cache(maxsize=None)
def instance_suite(quadratic: bool, count: int = 50) -> tuple:
    """First ``count`` non-degenerate random instances plus the degenerate draws skipped on the way.

    Returns (accepted, degenerate) where both hold ReportBundle objects.
    """
    from gcts.instances import InstanceOptions, instance_stream
    from gcts.pipeline import PipelineOptions, run_pipeline

    accepted, degenerate = [], []
    for draw in instance_stream(InstanceOptions(quadratic=quadratic)):
        if draw.case is None:
            continue
        bundle = run_pipeline(draw.case, PipelineOptions(jed=False))
        (accepted if bundle.certified else degenerate).append(bundle)
        if len(accepted) == count:
            break
    return tuple(accepted), tuple(degenerate)


ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
