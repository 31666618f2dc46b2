"""Independent cross-checks used by the tests.

Everything here recomputes results straight from the problem statement:
plans come from brute-force enumeration over the route space, and model
energies come from evaluating each squared penalty expression directly,
with no shared code path through the compiler's quadratic expansion.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from itertools import permutations, product

from vrpqubo.decoder import RoutePlan
from vrpqubo.instance import (
    Customer,
    Depot,
    DistanceModel,
    Instance,
    Vehicle,
)
from vrpqubo.layout import VariableLayout, estimate_size

# -- route-space brute force ---------------------------------------------------


def enumerate_plans(inst: Instance):
    """Every assignment of customers to vehicles (all vehicles used) and order."""
    cids = [c.id for c in inst.customers]
    vids = [v.id for v in inst.vehicles]
    for choice in product(range(len(vids)), repeat=len(cids)):
        if set(choice) != set(range(len(vids))):
            continue
        groups = [[c for c, g in zip(cids, choice) if g == v] for v in range(len(vids))]
        for ordering in product(*(permutations(g) for g in groups)):
            yield RoutePlan(routes={k: tuple(seq) for k, seq in zip(vids, ordering)})


def plan_distance(plan: RoutePlan, inst: Instance) -> Fraction:
    cidx = {c.id: n for n, c in enumerate(inst.customers)}
    didx = {d.id: n for n, d in enumerate(inst.depots)}
    dm = inst.distances
    total = Fraction(0)
    for k, seq in plan.routes.items():
        home = didx[inst.vehicle(k).home_depot]
        total += dm.depot_customer[home][cidx[seq[0]]]
        for a, b in zip(seq, seq[1:]):
            total += dm.customer_customer[cidx[a]][cidx[b]]
        total += dm.customer_depot[cidx[seq[-1]]][home]
    return total


def plan_feasible(plan: RoutePlan, inst: Instance) -> bool:
    loads = {k: sum(inst.customer(c).demand for c in seq) for k, seq in plan.routes.items()}
    for v in inst.vehicles:
        if loads.get(v.id, 0) > v.capacity:
            return False
    for d in inst.depots:
        if sum(loads.get(v.id, 0) for v in inst.vehicles if v.home_depot == d.id) > d.capacity:
            return False
    return True


def feasible_plans(inst: Instance) -> list[RoutePlan]:
    return [p for p in enumerate_plans(inst) if plan_feasible(p, inst)]


def optimal_plans(inst: Instance) -> tuple[Fraction, list[RoutePlan]]:
    """Exact optimum over the feasible route space, with all argmin plans."""
    best: Fraction | None = None
    winners: list[RoutePlan] = []
    for plan in feasible_plans(inst):
        d = plan_distance(plan, inst)
        if best is None or d < best:
            best, winners = d, [plan]
        elif d == best:
            winners.append(plan)
    assert best is not None, "instance has no feasible plan"
    return best, winners


# -- direct penalty evaluation ---------------------------------------------------


def oracle_scale(inst: Instance) -> int:
    dens = [1]
    for r, row in enumerate(inst.distances.customer_customer):
        dens += [x.denominator for c, x in enumerate(row) if c != r]
    for row in inst.distances.depot_customer:
        dens += [x.denominator for x in row]
    for row in inst.distances.customer_depot:
        dens += [x.denominator for x in row]
    return math.lcm(*dens)


class DirectHamiltonian:
    """Objective plus each squared constraint, kept unexpanded.

    ``energy`` sums the linear objective and weight * (affine)**2 for every
    constraint, evaluated term by term on the bitstring.
    """

    def __init__(
        self,
        inst: Instance,
        layout: VariableLayout,
        weight: int,
        flow_form: str = "corrected",
        include_objective: bool = True,
    ):
        scale = oracle_scale(inst)
        cids = [c.id for c in inst.customers]
        vids = [v.id for v in inst.vehicles]
        x, mu, eta = layout.x_index, layout.mu_index, layout.eta_index
        demand = {c.id: c.demand for c in inst.customers}

        self.weight = weight
        self.objective: list[tuple[int, int]] = []
        if include_objective:
            for (i, j, k), bit in x.items():
                self.objective.append((bit, int(inst.d_cc(i, j) * scale)))
            for (i, k), bit in mu.items():
                self.objective.append((bit, int(inst.d_dc(inst.home_of(k), i) * scale)))
            for (i, k), bit in eta.items():
                self.objective.append((bit, int(inst.d_cd(i, inst.home_of(k)) * scale)))

        self.penalties: list[tuple[list[tuple[int, int]], int]] = []

        def constraint(terms, const):
            self.penalties.append((terms, const))

        for i in cids:
            constraint(
                [(x[(i, j, k)], 1) for k in vids for j in cids if j != i]
                + [(eta[(i, k)], 1) for k in vids],
                -1,
            )
            constraint(
                [(x[(j, i, k)], 1) for k in vids for j in cids if j != i]
                + [(mu[(i, k)], 1) for k in vids],
                -1,
            )
        for k in vids:
            constraint([(mu[(i, k)], 1) for i in cids], -1)
            constraint([(eta[(i, k)], 1) for i in cids], -1)
        for k in vids:
            for i in cids:
                terms = [(x[(j, i, k)], 1) for j in cids if j != i]
                terms += [(x[(i, p, k)], -1) for p in cids if p != i]
                if flow_form == "corrected":
                    terms += [(mu[(i, k)], 1), (eta[(i, k)], -1)]
                constraint(terms, 0)
        for members, reg in layout.subtour_registers.items():
            terms = [
                (x[(i, j, k)], 1)
                for k in vids
                for i in cids
                for j in cids
                if i != j and i in members and j in members
            ]
            terms += list(zip(reg.bits, reg.coefficients))
            constraint(terms, -(len(members) - 1))
        for k in vids:
            reg = layout.vehicle_registers[k]
            terms = [(x[(i, j, k)], demand[i]) for i in cids for j in cids if j != i]
            terms += [(eta[(i, k)], demand[i]) for i in cids]
            terms += list(zip(reg.bits, reg.coefficients))
            constraint(terms, -reg.bound)
        for d in inst.depots:
            reg = layout.depot_registers[d.id]
            terms = []
            for v in inst.vehicles:
                if v.home_depot != d.id:
                    continue
                terms += [(x[(i, j, v.id)], demand[i]) for i in cids for j in cids if j != i]
                terms += [(eta[(i, v.id)], demand[i]) for i in cids]
            terms += list(zip(reg.bits, reg.coefficients))
            constraint(terms, -reg.bound)

    def energy(self, bits) -> int:
        total = sum(c for bit, c in self.objective if bits[bit])
        for terms, const in self.penalties:
            affine = const + sum(c for bit, c in terms if bits[bit])
            total += self.weight * affine * affine
        return total


# -- instance generators -----------------------------------------------------------


def _distance_matrices(rng: random.Random, n_c: int, n_d: int) -> DistanceModel:
    cc = tuple(
        tuple(Fraction(0 if r == c else rng.randint(1, 9)) for c in range(n_c))
        for r in range(n_c)
    )
    dc = tuple(tuple(Fraction(rng.randint(1, 9)) for _ in range(n_c)) for _ in range(n_d))
    cd = tuple(tuple(Fraction(rng.randint(1, 9)) for _ in range(n_d)) for _ in range(n_c))
    return DistanceModel(cc, dc, cd)


def random_feasible_instance(
    rng: random.Random,
    n_customers: int,
    n_vehicles: int,
    n_depots: int,
    *,
    positions: bool = False,
    max_demand: int = 3,
    capacity_headroom: int = 1,
) -> Instance:
    """A solvable instance: capacities come from a witness customer split."""
    demands = [rng.randint(1, max_demand) for _ in range(n_customers)]
    order = list(range(n_customers))
    rng.shuffle(order)
    cuts = sorted(rng.sample(range(1, n_customers), n_vehicles - 1)) if n_vehicles > 1 else []
    groups = [order[a:b] for a, b in zip([0, *cuts], [*cuts, n_customers])]
    homes = [rng.randrange(n_depots) for _ in range(n_vehicles)]
    capacities = [
        sum(demands[c] for c in group) + rng.randint(0, capacity_headroom)
        for group in groups
    ]
    depot_caps = [
        sum(q for q, h in zip(capacities, homes) if h == d) for d in range(n_depots)
    ]
    pos = None
    if positions:
        spots = set()
        while len(spots) < n_customers + n_depots:
            spots.add((rng.randint(0, 9), rng.randint(0, 9)))
        pos = [(Fraction(x), Fraction(y)) for x, y in sorted(spots)]
        rng.shuffle(pos)
    depots = tuple(
        Depot(id=f"D{d + 1}", capacity=depot_caps[d], position=pos[d] if pos else None)
        for d in range(n_depots)
    )
    vehicles = tuple(
        Vehicle(id=f"V{k + 1}", home_depot=f"D{homes[k] + 1}", capacity=capacities[k])
        for k in range(n_vehicles)
    )
    customers = tuple(
        Customer(
            id=f"C{c + 1}",
            demand=demands[c],
            position=pos[n_depots + c] if pos else None,
        )
        for c in range(n_customers)
    )
    if positions:
        from vrpqubo.instance import derive_euclidean_distances

        distances = derive_euclidean_distances(depots, customers)
    else:
        distances = _distance_matrices(rng, n_customers, n_depots)
    return Instance(depots, vehicles, customers, distances)


def desk_family(count: int = 50, seed: int = 20240810) -> list[Instance]:
    """Small feasible instances whose models fit the exhaustive solver."""
    rng = random.Random(seed)
    shapes = [(2, 1, 1), (2, 1, 2), (2, 2, 1), (2, 2, 2), (3, 1, 1), (3, 1, 2)]
    out: list[Instance] = []
    while len(out) < count:
        n_c, n_k, n_d = shapes[len(out) % len(shapes)]
        inst = random_feasible_instance(
            rng, n_c, n_k, n_d, positions=(len(out) % 5 == 4)
        )
        if estimate_size(inst).total <= 26:
            out.append(inst)
    return out


def random_sized_instance(rng: random.Random) -> Instance:
    """Arbitrary shapes for size-accounting checks; feasibility not needed."""
    n_c = rng.randint(1, 6)
    n_k = rng.randint(1, 4)
    n_d = rng.randint(1, 3)
    depots = tuple(Depot(id=f"D{d + 1}", capacity=rng.randint(0, 40)) for d in range(n_d))
    vehicles = tuple(
        Vehicle(id=f"V{k + 1}", home_depot=f"D{rng.randint(1, n_d)}", capacity=rng.randint(0, 40))
        for k in range(n_k)
    )
    customers = tuple(
        Customer(id=f"C{c + 1}", demand=rng.randint(1, 9)) for c in range(n_c)
    )
    return Instance(depots, vehicles, customers, _distance_matrices(rng, n_c, n_d))
