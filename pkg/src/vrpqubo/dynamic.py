"""Rerouting: rebuild the model for pending customers mid-execution.

After a plan is partly executed and new requests arrive, the remaining
work is recompiled as a fresh model over the pending locations only.
Vehicles start from wherever they currently are (their last served
customer, or their depot if they have not left), carry only their
remaining capacity, and still return to their home depot; depots likewise
keep only their remaining capacity.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .compiler import (
    CompileConfig,
    PenaltyConfig,
    QuboModel,
    QuboTerms,
    compile_assignment_constraints,
    compile_depot_capacity,
    compile_flow_constraint,
    compile_subtour_constraints,
    compile_terminal_constraints,
    compile_vehicle_capacity,
    default_penalty_weight,
    distance_scale,
    _scaled,
)
from .decoder import RoutePlan, ValidationReport, validate_routes
from .instance import (
    Customer,
    Depot,
    DistanceModel,
    Instance,
    Vehicle,
    derive_euclidean_distances,
)
from .layout import VariableLayout, build_layout

__all__ = [
    "ExecutionState",
    "InfeasibleFleetError",
    "ReroutingError",
    "ReroutingModel",
    "apply_progress",
    "compile_rerouting",
    "remaining_depot_capacity",
    "remaining_vehicle_capacity",
    "rerouted_plan_distance",
    "validate_rerouted",
]


class ReroutingError(ValueError):
    """Invalid progress bookkeeping or request data."""


class InfeasibleFleetError(ReroutingError):
    """No assignment of pending customers to the remaining fleet can work."""


@dataclass(frozen=True)
class ExecutionState:
    """Snapshot of a partially executed plan over the extended customer set.

    ``base`` already includes any new requests as customers.  ``served``
    pairs each finished customer with the vehicle that served it;
    ``pending`` lists everything still to serve (old and new) in a fixed
    order.  ``current_location`` is ("depot", id) for a vehicle that has
    not left, else ("customer", id) of its last served stop.
    """

    base: Instance
    served: tuple[tuple[str, str], ...]
    pending: tuple[str, ...]
    current_location: dict[str, tuple[str, str]]
    new_request_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        served_ids = {c for c, _ in self.served}
        if served_ids & set(self.pending):
            raise ReroutingError("served and pending overlap")
        everyone = {c.id for c in self.base.customers}
        if served_ids | set(self.pending) != everyone:
            raise ReroutingError("served plus pending must cover every customer")

    def served_by(self, vehicle_id: str) -> tuple[str, ...]:
        return tuple(c for c, k in self.served if k == vehicle_id)


def remaining_vehicle_capacity(state: ExecutionState, vehicle_id: str) -> int:
    """Capacity left after the demand already served by this vehicle."""
    vehicle = state.base.vehicle(vehicle_id)
    used = sum(state.base.customer(c).demand for c in state.served_by(vehicle_id))
    return vehicle.capacity - used


def remaining_depot_capacity(state: ExecutionState, depot_id: str) -> int:
    """Depot capacity left after demand served by the vehicles homed there."""
    used = 0
    for c, k in state.served:
        if state.base.home_of(k) == depot_id:
            used += state.base.customer(c).demand
    return state.base.depot(depot_id).capacity - used


def _extend_instance(
    inst: Instance,
    requests: Sequence[Customer],
    request_distances: Mapping[str, Mapping[str, Mapping[str, object]]] | None,
) -> Instance:
    """Append request customers, growing the distance matrices to match."""
    if not requests:
        return inst
    existing = {c.id for c in inst.customers} | {d.id for d in inst.depots}
    fresh = set()
    for r in requests:
        if r.id in existing or r.id in fresh:
            raise ReroutingError(f"request id {r.id!r} is not fresh")
        fresh.add(r.id)

    customers = (*inst.customers, *requests)
    all_positioned = all(n.position is not None for n in (*inst.depots, *customers))
    if all_positioned:
        distances = derive_euclidean_distances(inst.depots, customers)
        # Positions fix every distance, including the original block, so the
        # original block must itself have come from positions.
        old = derive_euclidean_distances(inst.depots, inst.customers)
        if old != inst.distances:
            raise ReroutingError(
                "instance distances are explicit; requests must carry explicit distances too"
            )
        return Instance(inst.depots, inst.vehicles, customers, distances)

    if request_distances is None:
        raise ReroutingError(
            "requests without positions need explicit distance blocks"
        )

    def frac(value, where: str) -> Fraction:
        try:
            f = Fraction(str(value)) if isinstance(value, float) else Fraction(value)
        except (ValueError, TypeError, ZeroDivisionError):
            raise ReroutingError(f"{where} is not a valid distance: {value!r}") from None
        if f < 0:
            raise ReroutingError(f"{where} must be >= 0")
        return f

    def lookup(rid: str, block: str, other: str) -> Fraction:
        spec = request_distances.get(rid)
        if spec is None or block not in spec or other not in spec[block]:
            raise ReroutingError(f"request {rid!r} is missing distances[{block}][{other}]")
        return frac(spec[block][other], f"requests[{rid}].distances[{block}][{other}]")

    cids = [c.id for c in customers]
    new_ids = {r.id for r in requests}

    def cc(i: str, j: str) -> Fraction:
        if i == j:
            return Fraction(0)
        if i in new_ids:
            return lookup(i, "to_customers", j)
        if j in new_ids:
            return lookup(j, "from_customers", i)
        return inst.d_cc(i, j)

    cc_rows = tuple(tuple(cc(i, j) for j in cids) for i in cids)
    dc_rows = tuple(
        tuple(
            lookup(i, "from_depots", d.id) if i in new_ids else inst.d_dc(d.id, i)
            for i in cids
        )
        for d in inst.depots
    )
    cd_rows = tuple(
        tuple(
            lookup(i, "to_depots", d.id) if i in new_ids else inst.d_cd(i, d.id)
            for d in inst.depots
        )
        for i in cids
    )
    distances = DistanceModel(
        customer_customer=cc_rows, depot_customer=dc_rows, customer_depot=cd_rows
    )
    return Instance(inst.depots, inst.vehicles, customers, distances)


def apply_progress(
    inst: Instance,
    plan: RoutePlan,
    steps: Mapping[str, int],
    requests: Sequence[Customer] = (),
    *,
    request_distances: Mapping[str, Mapping[str, Mapping[str, object]]] | None = None,
) -> ExecutionState:
    """Advance each vehicle ``steps[k]`` stops along its route and fold in requests.

    The plan must validate against the instance.  Served customers are
    tagged to their vehicle; everything else, plus the new requests, is
    pending.  A vehicle that has served nothing is still at its depot.
    """
    report = validate_routes(plan, inst)
    if not report.ok:
        failed = ", ".join(c.constraint for c in report.failures())
        raise ReroutingError(f"plan fails validation ({failed}); cannot take progress from it")
    for k in steps:
        inst.vehicle(k)
    extended = _extend_instance(inst, requests, request_distances)

    served: list[tuple[str, str]] = []
    current: dict[str, tuple[str, str]] = {}
    for v in inst.vehicles:
        route = plan.routes.get(v.id, ())
        done = steps.get(v.id, 0)
        if done < 0 or done > len(route):
            raise ReroutingError(
                f"steps[{v.id}] = {done} is outside the route of length {len(route)}"
            )
        served.extend((c, v.id) for c in route[:done])
        current[v.id] = (
            ("customer", route[done - 1]) if done else ("depot", v.home_depot)
        )
    served_ids = {c for c, _ in served}
    pending = tuple(c.id for c in extended.customers if c.id not in served_ids)
    return ExecutionState(
        base=extended,
        served=tuple(served),
        pending=pending,
        current_location=current,
        new_request_ids=tuple(r.id for r in requests),
    )


@dataclass(frozen=True)
class ReroutingModel:
    """Compiled rerouting model over the pending customers.

    The layout's start variables are the first-stop-from-current-position
    bits (symbol ``beta`` in sidecars).  ``reduced_instance`` carries the
    pending customers, the participating vehicles at their remaining
    capacities, and the depots at their remaining capacities; its
    depot-to-customer rows are the plain depot legs, so per-vehicle start
    legs must come from ``rerouted_plan_distance``, not from it.
    """

    model: QuboModel
    layout: VariableLayout
    state: ExecutionState
    participating: tuple[str, ...]
    excluded: tuple[str, ...]
    reduced_instance: Instance


def _reduced_instance(state: ExecutionState, participating: Sequence[str]) -> Instance:
    base = state.base
    customers = tuple(base.customer(c) for c in state.pending)
    vehicles = tuple(
        Vehicle(id=k, home_depot=base.home_of(k), capacity=remaining_vehicle_capacity(state, k))
        for k in (v.id for v in base.vehicles)
        if k in participating
    )
    depots = tuple(
        Depot(id=d.id, capacity=remaining_depot_capacity(state, d.id), position=d.position)
        for d in base.depots
    )
    cidx = {c.id: n for n, c in enumerate(base.customers)}
    didx = {d.id: n for n, d in enumerate(base.depots)}
    rows = [cidx[c] for c in state.pending]
    dcols = [didx[d.id] for d in base.depots]
    cc = tuple(
        tuple(base.distances.customer_customer[r][c] for c in rows) for r in rows
    )
    dc = tuple(
        tuple(base.distances.depot_customer[d][c] for c in rows) for d in dcols
    )
    cd = tuple(
        tuple(base.distances.customer_depot[r][d] for d in dcols) for r in rows
    )
    return Instance(depots, vehicles, customers, DistanceModel(cc, dc, cd))


def _start_distance(state: ExecutionState, vehicle_id: str, customer_id: str) -> Fraction:
    kind, where = state.current_location[vehicle_id]
    if kind == "customer":
        return state.base.d_cc(where, customer_id)
    return state.base.d_dc(where, customer_id)


def compile_rerouting(
    state: ExecutionState,
    config: CompileConfig | None = None,
    *,
    exclude_exhausted: bool = True,
) -> ReroutingModel:
    """Compile the model for the pending work.

    The objective's first legs run from each vehicle's current position and
    its last legs return to the home depot; capacity bounds (and so the
    slack register widths) shrink to the remaining capacities.  Vehicles
    that cannot serve even the smallest pending demand are dropped when
    ``exclude_exhausted`` is set, because every compiled vehicle is forced
    to serve at least one stop; with exclusion off such a vehicle raises
    InfeasibleFleetError instead.
    """
    config = config or CompileConfig()
    if not state.pending:
        raise ReroutingError("nothing is pending; no model to compile")
    min_demand = min(state.base.customer(c).demand for c in state.pending)

    participating: list[str] = []
    excluded: list[str] = []
    for v in state.base.vehicles:
        remaining = remaining_vehicle_capacity(state, v.id)
        if remaining >= min_demand:
            participating.append(v.id)
        elif exclude_exhausted:
            excluded.append(v.id)
        else:
            raise InfeasibleFleetError(
                f"vehicle {v.id} has remaining capacity {remaining}, below the "
                f"smallest pending demand {min_demand}"
            )
    if not participating:
        raise InfeasibleFleetError("no vehicle can serve any pending customer")
    if len(participating) > len(state.pending):
        raise InfeasibleFleetError(
            f"{len(participating)} vehicles but only {len(state.pending)} pending "
            "customers; every vehicle must serve at least one"
        )

    reduced = _reduced_instance(state, participating)
    layout = build_layout(
        reduced,
        subtour_cap=config.subtour_cap,
        tight_slack=config.tight_slack,
        start_symbol="beta",
    )
    scale = distance_scale(state.base)
    weight = (
        config.penalty.weight
        if config.penalty is not None
        else default_penalty_weight(state.base, scale)
    )
    terms = QuboTerms()
    if config.include_objective:
        for (i, j, k), bit in layout.x_index.items():
            terms.add_linear(bit, _scaled(state.base.d_cc(i, j), scale))
        for (i, k), bit in layout.mu_index.items():
            terms.add_linear(bit, _scaled(_start_distance(state, k, i), scale))
        for (i, k), bit in layout.eta_index.items():
            terms.add_linear(bit, _scaled(state.base.d_cd(i, state.base.home_of(k)), scale))
    terms.add(compile_assignment_constraints(reduced, layout, weight))
    terms.add(compile_terminal_constraints(reduced, layout, weight))
    terms.add(compile_flow_constraint(reduced, layout, weight, form=config.flow_form))
    terms.add(compile_subtour_constraints(reduced, layout, weight))
    terms.add(compile_vehicle_capacity(reduced, layout, weight))
    terms.add(compile_depot_capacity(reduced, layout, weight))
    model = QuboModel(
        dimension=layout.total_bits,
        linear=dict(terms.linear),
        quadratic=dict(terms.quadratic),
        offset=terms.offset,
        distance_scale=scale,
        penalty=PenaltyConfig(weight),
        flow_form=config.flow_form,
    )
    return ReroutingModel(
        model=model,
        layout=layout,
        state=state,
        participating=tuple(participating),
        excluded=tuple(excluded),
        reduced_instance=reduced,
    )


def rerouted_plan_distance(state: ExecutionState, plan: RoutePlan) -> Fraction:
    """Distance of a rerouted plan: current position legs, arcs, home legs."""
    total = Fraction(0)
    for k, seq in plan.routes.items():
        if not seq:
            raise ValueError(f"vehicle {k} has an empty route; distance undefined")
        total += _start_distance(state, k, seq[0])
        for a, b in zip(seq, seq[1:]):
            total += state.base.d_cc(a, b)
        total += state.base.d_cd(seq[-1], state.base.home_of(k))
    return total


def validate_rerouted(rerouting: ReroutingModel, plan: RoutePlan) -> ValidationReport:
    """Validate a rerouted plan against pending coverage and remaining capacities."""
    return validate_routes(plan, rerouting.reduced_instance)
