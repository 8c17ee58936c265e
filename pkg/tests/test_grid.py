from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_case
from gcts.errors import NetworkStructureError, ReductionError, ValidationError
from gcts.grid import (
    build_network,
    dc_flow,
    inter_area_ptdf,
    ptdf,
    slack_free_internal_ptdf,
    ward_reduce,
)


def test_two_bus_laplacian():
    net = build_network(make_case({1: 1, 2: 1}, [(1, 2, 1.0)]))
    np.testing.assert_allclose(net.laplacian, [[1, -1], [-1, 1]])


def test_triangle_rows_sum_to_zero():
    net = build_network(make_case({1: 1, 2: 1, 3: 1}, [(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)]))
    np.testing.assert_allclose(net.laplacian.sum(axis=1), 0.0, atol=1e-15)
    np.testing.assert_allclose(net.laplacian, net.laplacian.T)


def test_disconnected_graph_names_components():
    with pytest.raises(NetworkStructureError) as err:
        build_network(make_case({1: 1, 2: 1, 3: 1, 4: 1}, [(1, 2, 1.0), (3, 4, 1.0)]))
    assert sorted(map(sorted, err.value.components)) == [[1, 2], [3, 4]]


def test_nonpositive_reactance_rejected():
    with pytest.raises(ValidationError):
        build_network(make_case({1: 1, 2: 1}, [(1, 2, -1.0)]))


def test_case1_radial_boundary_sets(case1_radial):
    net = build_network(case1_radial)
    assert net.boundary_buses() == (1, 3)
    assert net.internal_buses(1) == (2,) and net.internal_buses(2) == (4,)
    assert all({ln.from_bus, ln.to_bus} != {2, 4} for ln in net.lines)


def test_three_bus_chain_reduction():
    # 1 - 2 - 3 with ends in area 1 boundary (tied to area 2 buses 4, 5)
    case = make_case(
        {1: 1, 2: 1, 3: 1, 4: 2, 5: 2},
        [(1, 2, 1.0), (2, 3, 1.0), (1, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0)],
    )
    eq = ward_reduce(build_network(case), 1)
    assert eq.boundary == (1, 3) and eq.internal == (2,)
    np.testing.assert_allclose(eq.susceptance, [[0.5, -0.5], [-0.5, 0.5]])
    np.testing.assert_allclose(eq.injection_map[:, 0], [0.5, 0.5])


def test_area_without_internal_buses():
    case = make_case({1: 1, 2: 1, 3: 2}, [(1, 2, 0.5), (1, 3, 1.0), (2, 3, 1.0)])
    eq = ward_reduce(build_network(case), 1)
    assert eq.injection_map.shape == (2, 0)
    np.testing.assert_allclose(eq.susceptance, [[2, -2], [-2, 2]])


def test_ungrounded_interior_detected():
    # a connected grid always grounds internal buses, so only an area without
    # any boundary bus can leave an island
    net = build_network(make_case({1: 1, 2: 1, 3: 1}, [(1, 2, 1.0), (2, 3, 1.0)]))
    with pytest.raises(ReductionError, match="not connected"):
        ward_reduce(net, 1)


def test_two_bus_ptdf():
    s = ptdf(build_network(make_case({1: 1, 2: 1}, [(1, 2, 1.0)])), 1)
    assert s.entry(1, 2) == pytest.approx(-1.0)
    assert s.entry(1, 1) == 0.0


def test_triangle_ptdf_matches_direct_solve():
    net = build_network(make_case({1: 1, 2: 1, 3: 1}, [(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)]))
    s = ptdf(net, 1)
    assert s.entry(1, 2) == pytest.approx(-2.0 / 3.0, abs=1e-12)
    flows = dc_flow(net, {2: 1.0, 1: -1.0})
    assert flows[0] == pytest.approx(-2.0 / 3.0, abs=1e-12)


def test_ptdf_unknown_reference():
    net = build_network(make_case({1: 1, 2: 1}, [(1, 2, 1.0)]))
    with pytest.raises(ValidationError):
        ptdf(net, 9)


def test_case1_radial_tie_sensitivity_to_bid(case1_radial):
    net = build_network(case1_radial)
    s = ptdf(net, 1)
    tie = case1_radial.line("1-3").id
    # bid s13 injects at 3 and withdraws at 1: flow 1->3 rises one for one
    assert s.entry(tie, 1) - s.entry(tie, 3) == pytest.approx(1.0)


def test_dc_flow_zero_and_unbalanced():
    net = build_network(make_case({1: 1, 2: 1, 3: 1}, [(1, 2, 1.0), (2, 3, 1.0)]))
    np.testing.assert_allclose(dc_flow(net, {}), 0.0)
    with pytest.raises(ValidationError, match="unbalanced"):
        dc_flow(net, {1: 1.0})


def test_radial_single_tie_inter_area_entry():
    case = make_case(
        {1: 1, 2: 1, 3: 1, 4: 2, 5: 2},
        [(1, 2, 0.2), (2, 3, 0.3), (1, 3, 0.4), (3, 4, 0.1), (4, 5, 0.2)],
    )
    net = build_network(case)
    view = net.area_view(1)
    # every MW from area 2 enters through bus 3
    for ln in net.area_lines(1):
        assert inter_area_ptdf(view, ln.id, 5, 4) == pytest.approx(view.ptdf(4).entry(ln.id, 3))
    with pytest.raises(ValueError):
        inter_area_ptdf(view, net.area_lines(1)[0].id, 2, 4)


# ---------------------------------------------------------------- properties


@st.composite
def two_area_grids(draw, n_min=4, n_max=12):
    n1 = draw(st.integers(n_min, n_max))
    n2 = draw(st.integers(2, 6))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    areas = {b: 1 for b in range(1, n1 + 1)} | {b: 2 for b in range(n1 + 1, n1 + n2 + 1)}
    lines = []
    for offset, n in ((0, n1), (n1, n2)):
        for k in range(2, n + 1):
            lines.append((offset + int(rng.integers(1, k)), offset + k, float(rng.uniform(0.05, 0.5))))
        for _ in range(int(rng.integers(0, n))):
            a, b = rng.choice(np.arange(offset + 1, offset + n + 1), 2, replace=False)
            lines.append((int(a), int(b), float(rng.uniform(0.05, 0.5))))
    n_ties = int(rng.integers(1, 4))
    for _ in range(n_ties):
        a = int(rng.integers(1, n1 + 1))
        b = int(rng.integers(n1 + 1, n1 + n2 + 1))
        lines.append((a, b, float(rng.uniform(0.05, 0.5))))
    return make_case(areas, lines), rng


@settings(max_examples=40, deadline=None)
@given(two_area_grids())
def test_laplacian_properties(data):
    case, _ = data
    net = build_network(case)
    lap = net.laplacian
    np.testing.assert_allclose(lap, lap.T)
    np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=1e-9)
    assert np.linalg.matrix_rank(lap) == len(net.bus_ids) - 1


@settings(max_examples=40, deadline=None)
@given(two_area_grids())
def test_ward_fidelity(data):
    case, rng = data
    net = build_network(case)
    eq = ward_reduce(net, 1)
    np.testing.assert_allclose(eq.injection_map.sum(axis=0), 1.0, atol=1e-10)
    np.testing.assert_allclose(eq.susceptance.sum(axis=1), 0.0, atol=1e-9)
    view = net.area_view(2)
    outside = [k for k, ln in enumerate(net.lines) if net.line_area(ln) != 1]
    view_rows = {ln.id: k for k, ln in enumerate(view.lines)}
    for _ in range(100):
        p = rng.normal(size=len(net.bus_ids))
        p -= p.mean()
        full = dc_flow(net, p)
        # reduced network: area 2 in full plus the equivalent of area 1
        inj = dict(zip(net.bus_ids, p))
        red = {b: v for b, v in inj.items() if net.area_of[b] == 2}
        area1 = {b: v for b, v in inj.items() if net.area_of[b] == 1}
        for b, v in zip(eq.boundary, eq.equivalent_injection(area1)):
            red[b] = red.get(b, 0.0) + v
        vec = np.array([red.get(b, 0.0) for b in view.bus_ids])
        s = view.ptdf(view.bus_ids[0])
        reduced = s.matrix @ vec
        for k in outside:
            got = reduced[view_rows[net.lines[k].id]]
            assert got == pytest.approx(full[k], rel=1e-8, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(two_area_grids())
def test_ptdf_reproduces_dc_flow(data):
    case, rng = data
    net = build_network(case)
    ref = net.bus_ids[int(rng.integers(len(net.bus_ids)))]
    s = ptdf(net, ref)
    assert np.allclose(s.matrix[:, net.index[ref]], 0.0)
    for _ in range(10):
        p = rng.normal(size=len(net.bus_ids))
        p -= p.mean()
        np.testing.assert_allclose(s.matrix @ p, dc_flow(net, p), rtol=1e-9, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(two_area_grids())
def test_inter_area_entries_match_full_ptdf(data):
    case, _ = data
    net = build_network(case)
    ref = net.boundary_buses()[0]
    full = ptdf(net, ref)
    view = net.area_view(1)
    for ln in net.area_lines(1) + net.tie_lines():
        for n in net.internal_buses(2):
            assert inter_area_ptdf(view, ln.id, n, ref) == pytest.approx(full.entry(ln.id, n), abs=1e-9)
        for n in net.area_buses(1):
            assert view.sensitivity(ln.id, n, ref) == pytest.approx(full.entry(ln.id, n), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(two_area_grids())
def test_slack_free_ptdf_is_reference_invariant(data):
    case, _ = data
    net = build_network(case)
    eqs = net.equivalents()
    refs = net.boundary_buses()[:3] + (net.bus_ids[0], net.bus_ids[-1])
    mats = [slack_free_internal_ptdf(net, 1, eqs, ref_bus=r).matrix for r in refs]
    for m in mats[1:]:
        np.testing.assert_allclose(m, mats[0], atol=1e-10)
    # boundary columns vanish: an injection there is withdrawn on the spot
    sf = slack_free_internal_ptdf(net, 1, eqs)
    for b in net.boundary_buses(1):
        np.testing.assert_allclose(sf.matrix[:, sf.bus_ids.index(b)], 0.0, atol=1e-12)
