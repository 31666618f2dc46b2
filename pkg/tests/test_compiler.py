import random
from fractions import Fraction
from itertools import product

import pytest

from vrpqubo import (
    CompileConfig,
    PenaltyConfig,
    QuboModel,
    assemble,
    build_layout,
    decode,
    encode,
    energy,
    ising_to_qubo,
    qubo_to_ising,
    route_distance,
)
from vrpqubo.compiler import (
    compile_assignment_constraints,
    compile_depot_capacity,
    compile_flow_constraint,
    compile_objective,
    compile_subtour_constraints,
    compile_terminal_constraints,
    compile_vehicle_capacity,
    default_penalty_weight,
    expand_squared_affine,
)
from vrpqubo.instance import Customer, Depot, DistanceModel, Instance, Vehicle

import oracles


def test_expand_squared_affine_pair():
    out = expand_squared_affine([(1, 1), (2, 1)], -1)
    assert out.linear == {1: -1, 2: -1}
    assert out.quadratic == {(1, 2): 2}
    assert out.offset == 1


def test_expand_squared_affine_scaled_single():
    out = expand_squared_affine([(1, 2)], 0)
    assert out.linear == {1: 4}
    assert out.quadratic == {}
    assert out.offset == 0


def test_expand_squared_affine_constant_only():
    out = expand_squared_affine([], 3)
    assert out.linear == {} and out.quadratic == {}
    assert out.offset == 9


def test_expand_squared_affine_merges_duplicates():
    out = expand_squared_affine([(1, 1), (1, 1)], -2)
    assert out.linear == {1: -4}  # (2x - 2)^2 = 4x - 8x + 4
    assert out.offset == 4


def zero_distance_instance(n_c=2, n_k=1, n_d=1, q=4, v=8):
    depots = tuple(Depot(id=f"D{d+1}", capacity=v) for d in range(n_d))
    vehicles = tuple(
        Vehicle(id=f"V{k+1}", home_depot=f"D{(k % n_d) + 1}", capacity=q)
        for k in range(n_k)
    )
    customers = tuple(Customer(id=f"C{c+1}", demand=1) for c in range(n_c))
    zero = Fraction(0)
    cc = tuple(tuple(zero for _ in range(n_c)) for _ in range(n_c))
    dc = tuple(tuple(zero for _ in range(n_c)) for _ in range(n_d))
    cd = tuple(tuple(zero for _ in range(n_d)) for _ in range(n_c))
    return Instance(depots, vehicles, customers, DistanceModel(cc, dc, cd))


def test_objective_coefficients(reference_instance):
    layout = build_layout(reference_instance)
    obj = compile_objective(reference_instance, layout)
    assert obj.quadratic == {}
    assert obj.linear[layout.mu_index[("C1", "V1")]] == 1
    assert obj.linear[layout.x_index[("C1", "C2", "V1")]] == 2
    assert obj.linear[layout.eta_index[("C2", "V1")]] == 3
    assert obj.linear[layout.x_index[("C2", "C1", "V1")]] == 4
    assert obj.linear[layout.mu_index[("C2", "V1")]] == 5
    assert obj.linear[layout.eta_index[("C1", "V1")]] == 7


def test_objective_all_zero_distances_is_empty():
    inst = zero_distance_instance()
    obj = compile_objective(inst, build_layout(inst))
    assert obj.linear == {} and obj.quadratic == {} and obj.offset == 0


def test_objective_uses_each_vehicles_own_depot():
    depots = (Depot("D1", 8), Depot("D2", 8))
    vehicles = (Vehicle("V1", "D1", 4), Vehicle("V2", "D2", 4))
    customers = (Customer("C1", 1), Customer("C2", 1))
    dm = DistanceModel(
        customer_customer=((Fraction(0), Fraction(1)), (Fraction(1), Fraction(0))),
        depot_customer=((Fraction(2), Fraction(3)), (Fraction(4), Fraction(5))),
        customer_depot=((Fraction(6), Fraction(7)), (Fraction(8), Fraction(9))),
    )
    inst = Instance(depots, vehicles, customers, dm)
    layout = build_layout(inst)
    obj = compile_objective(inst, layout)
    assert obj.linear[layout.mu_index[("C1", "V1")]] == 2
    assert obj.linear[layout.mu_index[("C1", "V2")]] == 4
    assert obj.linear[layout.eta_index[("C2", "V1")]] == 8
    assert obj.linear[layout.eta_index[("C2", "V2")]] == 9


def bits_with(layout, pairs):
    bits = [0] * layout.total_bits
    for bit in pairs:
        bits[bit] = 1
    return bits


def test_assignment_penalty_levels():
    inst = zero_distance_instance()
    layout = build_layout(inst)
    terms = compile_assignment_constraints(inst, layout, 10)
    allzero = bits_with(layout, [])
    # one serve-once and one visit-once violation per customer
    assert terms.evaluate(allzero) == 2 * 2 * 10
    good = bits_with(
        layout,
        [
            layout.x_index[("C1", "C2", "V1")],
            layout.eta_index[("C2", "V1")],
            layout.mu_index[("C1", "V1")],
        ],
    )
    assert terms.evaluate(good) == 0
    double = bits_with(
        layout,
        [
            layout.x_index[("C1", "C2", "V1")],
            layout.eta_index[("C1", "V1")],
            layout.eta_index[("C2", "V1")],
            layout.mu_index[("C1", "V1")],
        ],
    )
    # C1 now has two exits (arc plus end bit): one squared unit over target
    assert terms.evaluate(double) == 10


def test_terminal_penalty_levels():
    inst = zero_distance_instance(n_c=3)
    layout = build_layout(inst)
    terms = compile_terminal_constraints(inst, layout, 7)
    assert terms.evaluate(bits_with(layout, [])) == 2 * 7
    one = bits_with(
        layout, [layout.mu_index[("C1", "V1")], layout.eta_index[("C1", "V1")]]
    )
    assert terms.evaluate(one) == 0
    three = bits_with(
        layout,
        [layout.mu_index[(f"C{n}", "V1")] for n in (1, 2, 3)]
        + [layout.eta_index[("C1", "V1")]],
    )
    assert terms.evaluate(three) == 4 * 7


def test_flow_forms_disagree_exactly_at_route_endpoints():
    inst = zero_distance_instance()
    layout = build_layout(inst)
    chain = bits_with(
        layout,
        [
            layout.mu_index[("C1", "V1")],
            layout.x_index[("C1", "C2", "V1")],
            layout.eta_index[("C2", "V1")],
        ],
    )
    corrected = compile_flow_constraint(inst, layout, 5, form="corrected")
    paper = compile_flow_constraint(inst, layout, 5, form="paper")
    assert corrected.evaluate(chain) == 0
    # arc-only balance charges both endpoints of the two-stop route
    assert paper.evaluate(chain) == 2 * 5
    balanced_pair = bits_with(
        layout,
        [layout.x_index[("C1", "C2", "V1")], layout.x_index[("C2", "C1", "V1")]],
    )
    assert paper.evaluate(balanced_pair) == 0


def test_subtour_penalty_levels(reference_instance):
    layout = build_layout(reference_instance)
    terms = compile_subtour_constraints(reference_instance, layout, 3)
    reg = layout.subtour_registers[frozenset({"C1", "C2"})]
    two_cycle = bits_with(
        layout,
        [layout.x_index[("C1", "C2", "V1")], layout.x_index[("C2", "C1", "V1")]],
    )
    assert terms.evaluate(two_cycle) == 3  # 2 arcs against a bound of 1
    single = bits_with(layout, [layout.x_index[("C1", "C2", "V1")]])
    assert terms.evaluate(single) == 0
    slack_only = bits_with(layout, [reg.first_bit])
    assert terms.evaluate(slack_only) == 0  # 0 arcs + slack 1 - 1


def test_vehicle_capacity_penalty_levels():
    inst = zero_distance_instance(n_c=2, q=4)
    layout = build_layout(inst)
    reg = layout.vehicle_registers["V1"]
    terms = compile_vehicle_capacity(inst, layout, 2)
    # empty route with the register spelling out the full capacity
    idle = bits_with(layout, [bit for bit, c in zip(reg.bits, reg.coefficients) if c in (4,)])
    assert terms.evaluate(idle) == 0
    overload = bits_with(
        layout,
        [
            layout.x_index[("C1", "C2", "V1")],
            layout.eta_index[("C2", "V1")],
            layout.eta_index[("C1", "V1")],
        ],
    )
    # demands 1+1 on the arc origin and both end bits: load 3, slack 0 -> (3-4)^2
    assert terms.evaluate(overload) == 2
    exact = bits_with(
        layout,
        [
            layout.x_index[("C1", "C2", "V1")],
            layout.eta_index[("C2", "V1")],
            list(reg.bits)[1],  # coefficient 2
        ],
    )
    assert terms.evaluate(exact) == 0


def test_depot_capacity_counts_only_homed_vehicles():
    inst = zero_distance_instance(n_c=2, n_k=2, n_d=2, q=4, v=4)
    layout = build_layout(inst)
    terms = compile_depot_capacity(inst, layout, 1)
    reg1 = layout.depot_registers["D1"]
    reg2 = layout.depot_registers["D2"]
    full_slack = [
        *(bit for bit, c in zip(reg1.bits, reg1.coefficients) if c == 4),
        *(bit for bit, c in zip(reg2.bits, reg2.coefficients) if c == 4),
    ]
    assert terms.evaluate(bits_with(layout, full_slack)) == 0
    # V2 is homed at D2; its load must not count against D1
    v2_load = bits_with(layout, full_slack + [layout.eta_index[("C1", "V2")]])
    assert terms.evaluate(v2_load) == 1  # only D2 overshoots by one unit


def test_assemble_dimension_and_determinism(reference_instance):
    model1, layout1 = assemble(reference_instance)
    model2, _ = assemble(reference_instance)
    assert model1.dimension == 13
    assert model1.linear == model2.linear
    assert model1.quadratic == model2.quadratic
    assert model1.offset == model2.offset
    assert energy(model1, [0] * 13) == model1.offset
    assert all(p < q for (p, q) in model1.quadratic)


def test_assemble_zero_penalty_is_pure_objective(reference_instance):
    model, layout = assemble(reference_instance, CompileConfig(penalty=PenaltyConfig(0)))
    obj = compile_objective(reference_instance, layout)
    assert model.linear == obj.linear
    assert model.quadratic == {}
    assert model.offset == 0


def test_energy_examples():
    model = QuboModel(dimension=2, linear={0: 1, 1: 1}, quadratic={(0, 1): -2}, offset=0)
    assert energy(model, [1, 1]) == 0
    assert energy(model, [0, 0]) == 0
    model2 = QuboModel(dimension=2, linear={0: 1, 1: 1}, quadratic={(0, 1): -2}, offset=5)
    assert energy(model2, [0, 0]) == 5
    with pytest.raises(ValueError, match="length"):
        energy(model, [0, 0, 0])


def test_feasible_encoding_recovers_route_distance(reference_instance):
    model, layout = assemble(reference_instance)
    for plan in oracles.feasible_plans(reference_instance):
        bits = encode(plan, layout, reference_instance)
        assert Fraction(energy(model, bits), model.distance_scale) == route_distance(
            plan, reference_instance
        )


def test_penalty_monotonicity(reference_instance):
    weak, layout = assemble(reference_instance, CompileConfig(penalty=PenaltyConfig(3)))
    strong, _ = assemble(reference_instance, CompileConfig(penalty=PenaltyConfig(4)))
    rng = random.Random(1)
    checked = 0
    while checked < 25:
        bits = [rng.randint(0, 1) for _ in range(weak.dimension)]
        constraint_only, _ = assemble(
            reference_instance,
            CompileConfig(penalty=PenaltyConfig(1), include_objective=False),
        )
        if energy(constraint_only, bits) == 0:
            continue
        assert energy(strong, bits) > energy(weak, bits)
        checked += 1


def test_dual_path_energy_identity(reference_instance):
    model, layout = assemble(reference_instance)
    direct = oracles.DirectHamiltonian(
        reference_instance, layout, model.penalty.weight
    )
    rng = random.Random(7)
    for _ in range(200):
        bits = [rng.randint(0, 1) for _ in range(model.dimension)]
        assert energy(model, bits) == direct.energy(bits)


def test_default_penalty_exceeds_any_route_cost(reference_instance):
    weight = default_penalty_weight(reference_instance)
    assert weight == 1 + (2 + 4 + 1 + 5 + 7 + 3)


# -- spin form -----------------------------------------------------------------


def test_bias_only_spin_model_to_qubo():
    from vrpqubo.compiler import IsingModel

    ising = IsingModel(dimension=1, h={0: Fraction(3)}, J={}, offset=Fraction(0))
    qubo = ising_to_qubo(ising)
    assert qubo.linear == {0: 6}
    assert qubo.offset == -3


def test_linear_qubo_to_spin_model():
    qubo = QuboModel(dimension=1, linear={0: 2}, quadratic={}, offset=-1)
    ising = qubo_to_ising(qubo)
    assert ising.h == {0: Fraction(1)}
    assert ising.offset == 0


def _qubo_energy(model, bits):
    return energy(model, bits)


def _ising_energy(ising, spins):
    total = ising.offset
    for p, h in ising.h.items():
        total += h * spins[p]
    for (p, q), j in ising.J.items():
        total += j * spins[p] * spins[q]
    return total


def test_spin_round_trip_preserves_all_energies():
    rng = random.Random(11)
    for _ in range(5):
        n = 5
        linear = {p: rng.randint(-9, 9) for p in range(n) if rng.random() < 0.8}
        quadratic = {
            (p, q): rng.randint(-9, 9)
            for p in range(n)
            for q in range(p + 1, n)
            if rng.random() < 0.6
        }
        model = QuboModel(
            dimension=n,
            linear={p: c for p, c in linear.items() if c},
            quadratic={k: c for k, c in quadratic.items() if c},
            offset=rng.randint(-5, 5),
        )
        ising = qubo_to_ising(model)
        back = ising_to_qubo(ising)
        assert back.linear == model.linear
        assert back.quadratic == model.quadratic
        assert back.offset == model.offset
        for bits in product((0, 1), repeat=n):
            spins = [2 * b - 1 for b in bits]
            assert _ising_energy(ising, spins) == _qubo_energy(model, list(bits))
