import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vrpqubo import (
    SubtourExplosionError,
    build_layout,
    estimate_size,
    read_layout_sidecar,
    slack_width,
    write_layout_sidecar,
)
from vrpqubo.layout import slack_coefficients

import oracles


@pytest.mark.parametrize("bound, width", [(0, 0), (1, 1), (2, 2), (3, 3), (4, 3), (7, 4), (8, 4)])
def test_slack_width_values(bound, width):
    assert slack_width(bound) == width


@given(st.integers(1, 4096))
def test_slack_width_covers_bound_and_is_monotone(bound):
    w = slack_width(bound)
    assert (1 << w) - 1 >= bound
    assert slack_width(bound + 1) >= w


@pytest.mark.parametrize("tight", [False, True])
def test_slack_coefficients_express_every_residual(tight):
    for bound in range(0, 65):
        coeffs = slack_coefficients(bound, tight=tight)
        assert sum(coeffs) >= bound
        if tight:
            assert sum(coeffs) == bound
        reachable = {0}
        for c in coeffs:
            reachable |= {r + c for r in reachable}
        assert set(range(bound + 1)) <= reachable


def make_instance(n_c, n_k, n_d=1, q=4, v=8, seed=0):
    rng = random.Random(seed)
    from vrpqubo.instance import Customer, Depot, Instance, Vehicle

    depots = tuple(Depot(id=f"D{d+1}", capacity=v) for d in range(n_d))
    vehicles = tuple(
        Vehicle(id=f"V{k+1}", home_depot=f"D{(k % n_d) + 1}", capacity=q) for k in range(n_k)
    )
    customers = tuple(Customer(id=f"C{c+1}", demand=1) for c in range(n_c))
    return Instance(depots, vehicles, customers, oracles._distance_matrices(rng, n_c, n_d))


def test_route_bit_counts():
    assert estimate_size(make_instance(2, 1)).route_bits == 6
    assert estimate_size(make_instance(3, 2)).route_bits == 24


def test_thirteen_bit_instance(reference_instance):
    report = estimate_size(reference_instance)
    assert (report.route_bits, report.subtour_slack_bits) == (6, 1)
    assert report.vehicle_slack_bits == 3 and report.depot_slack_bits == 3
    assert report.total == 13
    assert build_layout(reference_instance).total_bits == 13


def test_worked_size_breakdown():
    inst = make_instance(3, 2, n_d=2, q=4, v=8)
    report = estimate_size(inst)
    assert report.route_bits == 24
    assert report.subtour_slack_bits == 5
    assert report.vehicle_slack_bits == 6
    assert report.depot_slack_bits == 8
    assert report.total == 43


def test_single_customer_size():
    inst = make_instance(1, 1, q=1, v=1)
    report = estimate_size(inst)
    assert report.route_bits == 2
    assert report.subtour_slack_bits == 0
    assert report.total == 4


@pytest.mark.parametrize("tight", [False, True])
def test_estimate_matches_layout_allocation(tight):
    rng = random.Random(42)
    for _ in range(150):
        inst = oracles.random_sized_instance(rng)
        assert (
            estimate_size(inst, tight_slack=tight).total
            == build_layout(inst, tight_slack=tight).total_bits
        )


def test_layout_indices_form_a_bijection():
    inst = make_instance(3, 2, n_d=2)
    layout = build_layout(inst)
    seen = list(layout.x_index.values())
    seen += list(layout.mu_index.values())
    seen += list(layout.eta_index.values())
    for reg in layout.slack_registers:
        seen += list(reg.bits)
    assert sorted(seen) == list(range(layout.total_bits))
    # no self-loop arcs
    assert all(i != j for (i, j, _k) in layout.x_index)


def test_subtour_registers_for_three_customers():
    layout = build_layout(make_instance(3, 1))
    assert len(layout.subtour_registers) == 4
    assert sum(r.width for r in layout.subtour_registers.values()) == 5
    bounds = sorted(r.bound for r in layout.subtour_registers.values())
    assert bounds == [1, 1, 1, 2]


def test_subtour_cap_enforced():
    inst = make_instance(13, 1)
    with pytest.raises(SubtourExplosionError):
        build_layout(inst)
    assert build_layout(inst, subtour_cap=13).total_bits == estimate_size(inst).total


def test_zero_capacity_vehicle_gets_empty_register():
    inst = make_instance(2, 1, q=0, v=0)
    layout = build_layout(inst)
    assert layout.vehicle_registers["V1"].width == 0
    assert layout.depot_registers["D1"].width == 0


def test_sidecar_round_trip(reference_instance):
    layout = build_layout(reference_instance)
    text = write_layout_sidecar(layout)
    again = read_layout_sidecar(text)
    assert again.x_index == layout.x_index
    assert again.mu_index == layout.mu_index
    assert again.eta_index == layout.eta_index
    assert again.total_bits == layout.total_bits
    assert again.slack_registers == layout.slack_registers
    assert again.subtour_registers == layout.subtour_registers
    assert again.start_symbol == "mu"
