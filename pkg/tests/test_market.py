from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CASE_SYSTEMS, make_case
from gcts.case import Load
from gcts.casefile import builtin_case
from gcts.errors import GctsError, InfeasibleError, ValidationError
from gcts.instances import InstanceOptions, random_case
from gcts.market import (
    clear_gcts,
    convergence_sweep,
    default_schedule,
    solve_jed,
    solve_local_ed,
    with_complete_bid_coverage,
)

STEP = 1e-3


def _cost_with_extra_load(case, bus, delta):
    demand = case.demand()
    demand[bus] = demand.get(bus, 0.0) + delta
    loads = tuple(Load(b, mw) for b, mw in sorted(demand.items()))
    changed = case.with_changes(loads=loads, allow_boundary_injections=True)
    try:
        return clear_gcts(changed, canonical=False).objective
    except InfeasibleError:
        return math.inf


def _lmp_interval(case, bus, step=STEP):
    """One-sided cost derivatives with respect to load at ``bus``.

    A side whose perturbation has no feasible dispatch leaves the interval
    open on that side.
    """
    base = clear_gcts(case, canonical=False).objective
    up = (_cost_with_extra_load(case, bus, step) - base) / step
    down = (base - _cost_with_extra_load(case, bus, -step)) / step
    return min(up, down), max(up, down)


def _assert_lmps_match_differences(case, tol=1e-6):
    sol = clear_gcts(case)
    for bus, price in sol.lmp.items():
        low, high = _lmp_interval(case, bus)
        assert low - tol <= price <= high + tol, (bus, price, low, high)


def test_case1_radial_clearing(case1_radial):
    sol = clear_gcts(case1_radial)
    assert sol.lmp == pytest.approx({1: 1.0, 2: 1.0, 3: 2.0, 4: 2.0}, abs=1e-9)
    assert sol.dispatch == pytest.approx({"G1": 40.0, "G2": 50.0}, abs=1e-9)
    assert sol.bids["s13"] == pytest.approx(10.0, abs=1e-9)
    assert sol.mu[2] == pytest.approx(1.0, abs=1e-9)
    assert sol.total_rent == pytest.approx(10.0, abs=1e-9)
    assert sol.duals_unique


def test_case1_meshed_clearing(case1_meshed):
    sol = clear_gcts(case1_meshed)
    assert sol.dispatch == pytest.approx({"G1": 70.0, "G2": 20.0}, abs=1e-9)
    assert sol.bids["s24"] == pytest.approx(40.0, abs=1e-9)
    assert sol.flows[2] == pytest.approx(10.0, abs=1e-9)
    assert sol.flows[4] == pytest.approx(30.0, abs=1e-9)
    assert sol.total_rent == pytest.approx(40.0, abs=1e-9)


def test_lmp_matches_load_differences_case1(case1_radial, case1_meshed):
    _assert_lmps_match_differences(case1_radial)
    _assert_lmps_match_differences(case1_meshed)


@pytest.mark.parametrize("name, scenario", [("case2", "S2"), ("case2", "S4"), ("case3", None)])
def test_lmp_matches_load_differences_builtin(name, scenario):
    _assert_lmps_match_differences(builtin_case(name, scenario), tol=1e-5)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 400), quadratic=st.booleans())
def test_lmp_matches_load_differences_random(seed, quadratic):
    try:
        case = random_case(seed, InstanceOptions(quadratic=quadratic, max_buses=8))
    except GctsError:  # infeasible or trivial draw
        return
    _assert_lmps_match_differences(case, tol=1e-5)


@pytest.mark.parametrize("name, scenario", CASE_SYSTEMS)
def test_joint_dispatch_is_a_lower_bound(name, scenario):
    case = builtin_case(name, scenario)
    assert solve_jed(case).objective <= clear_gcts(case).objective + 1e-6


@pytest.mark.parametrize("name, scenario", CASE_SYSTEMS)
def test_local_dispatch_reproduces_generation_cost(name, scenario):
    case = builtin_case(name, scenario)
    sol = clear_gcts(case)
    schedule = dict(zip(sol.context.boundary, sol.boundary_positions()))
    local = sum(solve_local_ed(case, area, schedule).cost for area in case.areas)
    generation = sum(g.total_cost(sol.dispatch[g.id]) for g in case.generators)
    assert local == pytest.approx(generation, rel=1e-7, abs=1e-6)


def test_local_dispatch_infeasible_schedule(case1_radial):
    huge = {1: 1e4, 3: -1e4}
    with pytest.raises(InfeasibleError):
        solve_local_ed(case1_radial, 1, huge)
    out = solve_local_ed(case1_radial, 1, huge, raise_infeasible=False)
    assert math.isinf(out.cost) and out.status == "infeasible"


@pytest.mark.parametrize("name, scenario", CASE_SYSTEMS)
def test_prices_do_not_depend_on_reference(name, scenario):
    case = builtin_case(name, scenario)
    base = clear_gcts(case)
    for ref in case.boundary_buses()[:3]:
        other = clear_gcts(case, ref)
        assert other.objective == pytest.approx(base.objective, rel=1e-9)
        for bus, price in base.lmp.items():
            assert other.lmp[bus] == pytest.approx(price, abs=1e-8)
        for bid, mw in base.bids.items():
            assert other.bids[bid] == pytest.approx(mw, abs=1e-6)


def test_reference_must_be_boundary(case1_radial):
    with pytest.raises(ValidationError):
        clear_gcts(case1_radial, ref_bus=2)


def test_infeasible_demand_reported():
    case = make_case(
        {1: 1, 2: 1, 3: 2, 4: 2},
        [(1, 2, 1.0), (2, 3, 1.0, 5.0), (3, 4, 1.0)],
        gens=[("G1", 1, 10.0, 0.0, 100.0)],
        loads={4: 20.0},
        bids=[("b", 2, 3, 0.0, 100.0)],
    )
    with pytest.raises(InfeasibleError):
        clear_gcts(case)


def test_complete_coverage_pairs(case1_meshed):
    covered = with_complete_bid_coverage(case1_meshed, 0.25)
    pairs = {(b.buy_bus, b.sell_bus) for b in covered.bids}
    boundary = case1_meshed.boundary_buses()
    area = case1_meshed.bus_area()
    assert pairs == {(p, q) for p in boundary for q in boundary if area[p] != area[q]}
    assert all(b.price_gap == 0.25 for b in covered.bids)


@pytest.mark.parametrize("name, scenario", CASE_SYSTEMS)
def test_sweep_converges_to_joint_dispatch(name, scenario):
    points = convergence_sweep(builtin_case(name, scenario))
    assert [p.price_gap for p in points] == default_schedule()
    gaps = np.array([p.gap for p in points])
    assert np.all(gaps >= -1e-6)
    assert np.all(np.diff(gaps) <= 1e-7 * max(1.0, abs(points[0].jed_cost)))
    assert points[-1].relative_gap <= 1e-6
