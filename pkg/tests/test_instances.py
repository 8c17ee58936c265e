from __future__ import annotations

import itertools

from gcts.instances import InstanceOptions, instance_stream, random_case
from gcts.market import clear_gcts


def test_random_case_is_deterministic():
    assert random_case(3) == random_case(3)


def test_random_case_structure():
    for draw in itertools.islice(instance_stream(InstanceOptions(quadratic=True)), 10):
        if draw.case is None:
            assert draw.reason
            continue
        case = draw.case
        boundary = set(case.boundary_buses())
        area = case.bus_area()
        assert 2 <= len(case.areas) <= 3
        for a in case.areas:
            assert 4 <= sum(1 for b in case.buses if b.area == a) <= 20
        assert not any(g.bus in boundary for g in case.generators)
        assert not any(l.bus in boundary for l in case.loads)
        assert all(g.quad > 0 for g in case.generators)
        pairs = {(b.buy_bus, b.sell_bus) for b in case.bids}
        assert pairs == {(p, q) for p in boundary for q in boundary if area[p] != area[q]}
        assert case.reference_bus in boundary
        sol = clear_gcts(case)
        assert any(ln.bounded for ln in case.lines)
        for ln in case.lines:
            assert abs(sol.flows[ln.id]) <= ln.capacity + 1e-6
