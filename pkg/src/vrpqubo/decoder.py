"""Bitstrings to routes and back, plus route validation with no QUBO involved.

The validator re-checks every constraint directly on the decoded routes
(coverage, trip endpoints, continuity, loops, vehicle and depot loads), so
it forms an independent second opinion on anything a solver returns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .instance import Instance
from .layout import SlackRegister, VariableLayout

__all__ = [
    "ConstraintCheck",
    "DecodeError",
    "RoutePlan",
    "ValidationReport",
    "decode",
    "encode",
    "plan_from_json",
    "plan_to_json",
    "render_plan_svg",
    "route_distance",
    "validate_routes",
]

# Decode failure kinds.
NO_START = "no-start"
MULTIPLE_STARTS = "multiple-starts"
BROKEN_CHAIN = "broken-chain"
CYCLE_DETECTED = "cycle"
DANGLING_ARCS = "dangling-arcs"


class DecodeError(ValueError):
    """A bitstring does not encode one clean chain per vehicle."""

    def __init__(self, kind: str, vehicle: str | None, detail: str):
        self.kind = kind
        self.vehicle = vehicle
        super().__init__(f"{kind}" + (f" (vehicle {vehicle})" if vehicle else "") + f": {detail}")


@dataclass(frozen=True)
class RoutePlan:
    """Ordered customer sequences per vehicle."""

    routes: dict[str, tuple[str, ...]]

    @classmethod
    def from_lists(cls, routes: Mapping[str, Sequence[str]]) -> "RoutePlan":
        return cls(routes={k: tuple(v) for k, v in routes.items()})

    def loads(self, inst: Instance) -> dict[str, int]:
        return {
            k: sum(inst.customer(c).demand for c in seq) for k, seq in self.routes.items()
        }

    def vehicle_distance(self, vehicle_id: str, inst: Instance) -> Fraction:
        seq = self.routes.get(vehicle_id, ())
        if not seq:
            raise ValueError(f"vehicle {vehicle_id} has an empty route; distance undefined")
        home = inst.home_of(vehicle_id)
        total = inst.d_dc(home, seq[0])
        for a, b in zip(seq, seq[1:]):
            total += inst.d_cc(a, b)
        total += inst.d_cd(seq[-1], home)
        return total


@dataclass(frozen=True)
class ConstraintCheck:
    constraint: str
    passed: bool
    witnesses: tuple = ()
    note: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[ConstraintCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> tuple[ConstraintCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)


def decode(bits: Sequence[int], layout: VariableLayout, inst: Instance) -> RoutePlan:
    """Follow each vehicle's chain from its start bit to its end bit.

    Slack bits are ignored.  Raises DecodeError when a vehicle has no start
    bit or several, when a chain runs out of successors before an end bit,
    when it revisits a location, or when set arc bits are left over (which
    covers both unreachable arcs and branching, i.e. two successors set at
    one location).
    """
    if len(bits) != layout.total_bits:
        raise ValueError(
            f"bitstring length {len(bits)} does not match layout size {layout.total_bits}"
        )
    vehicles = [v.id for v in inst.vehicles if any((c.id, v.id) in layout.mu_index for c in inst.customers)]
    customers = [c.id for c in inst.customers if (c.id, vehicles[0]) in layout.mu_index] if vehicles else []

    routes: dict[str, tuple[str, ...]] = {}
    used_arcs: set[tuple[str, str, str]] = set()
    for k in vehicles:
        starts = [i for i in customers if bits[layout.mu_index[(i, k)]]]
        if not starts:
            raise DecodeError(NO_START, k, "no start bit is set")
        if len(starts) > 1:
            raise DecodeError(MULTIPLE_STARTS, k, f"start bits set for {starts}")
        successors: dict[str, list[str]] = {}
        for i in customers:
            for j in customers:
                if i != j and bits[layout.x_index[(i, j, k)]]:
                    successors.setdefault(i, []).append(j)
        chain = [starts[0]]
        seen = {starts[0]}
        while True:
            here = chain[-1]
            if bits[layout.eta_index[(here, k)]]:
                break
            nxt = successors.get(here, [])
            if not nxt:
                raise DecodeError(BROKEN_CHAIN, k, f"no successor of {here} and no end bit")
            if len(nxt) > 1:
                raise DecodeError(DANGLING_ARCS, k, f"{here} has successors {nxt}")
            step = nxt[0]
            if step in seen:
                raise DecodeError(CYCLE_DETECTED, k, f"{step} would be visited twice")
            chain.append(step)
            seen.add(step)
        routes[k] = tuple(chain)
        used_arcs.update((a, b, k) for a, b in zip(chain, chain[1:]))

    stray = [key for key, bit in layout.x_index.items() if bits[bit] and key not in used_arcs]
    if stray:
        raise DecodeError(DANGLING_ARCS, None, f"arc bits not on any chain: {stray}")
    return RoutePlan(routes=routes)


def validate_routes(plan: RoutePlan, inst: Instance) -> ValidationReport:
    """Check the eight routing constraints directly on the routes."""
    for k in plan.routes:
        inst.vehicle(k)  # raises KeyError on unknown vehicles
    counts: dict[str, int] = {c.id: 0 for c in inst.customers}
    for seq in plan.routes.values():
        for c in seq:
            if c not in counts:
                raise KeyError(f"route references unknown customer {c!r}")
            counts[c] += 1

    checks: list[ConstraintCheck] = []
    once = [(c, n) for c, n in counts.items() if n != 1]
    checks.append(
        ConstraintCheck("C1", not once, tuple(once), "each customer served exactly once")
    )
    multi = [(c, n) for c, n in counts.items() if n > 1]
    checks.append(
        ConstraintCheck("C2", not multi, tuple(multi), "each customer entered at most once")
    )
    no_start = [(k,) for k in (v.id for v in inst.vehicles) if not plan.routes.get(k)]
    checks.append(
        ConstraintCheck("C3", not no_start, tuple(no_start), "each vehicle starts one trip")
    )
    checks.append(
        ConstraintCheck("C4", not no_start, tuple(no_start), "each vehicle ends one trip")
    )
    checks.append(
        ConstraintCheck("C5", True, (), "continuity is inherent to the list form")
    )
    checks.append(
        ConstraintCheck("C6", True, (), "a decoded chain cannot close a loop")
    )
    loads = plan.loads(inst)
    over = [
        (v.id, loads.get(v.id, 0), v.capacity)
        for v in inst.vehicles
        if loads.get(v.id, 0) > v.capacity
    ]
    checks.append(
        ConstraintCheck("C7", not over, tuple(over), "route load within vehicle capacity")
    )
    depot_over = []
    for d in inst.depots:
        load = sum(loads.get(v.id, 0) for v in inst.vehicles_at(d.id))
        if load > d.capacity:
            depot_over.append((d.id, load, d.capacity))
    checks.append(
        ConstraintCheck(
            "C8", not depot_over, tuple(depot_over), "depot load within depot capacity"
        )
    )
    return ValidationReport(checks=tuple(checks))


def route_distance(plan: RoutePlan, inst: Instance) -> Fraction:
    """Total distance over all vehicles: home leg + arcs + return leg each."""
    total = Fraction(0)
    for k in plan.routes:
        total += plan.vehicle_distance(k, inst)
    return total


def _encode_register(reg: SlackRegister, residual: int) -> dict[int, int]:
    remaining = residual
    bits: dict[int, int] = {}
    for bit, coeff in sorted(
        zip(reg.bits, reg.coefficients), key=lambda t: -t[1]
    ):
        if coeff and remaining >= coeff:
            bits[bit] = 1
            remaining -= coeff
    # The register widths are sized to express any residual in [0, bound].
    assert remaining == 0, f"residual {residual} not representable in {reg.owner}"
    return bits


def encode(plan: RoutePlan, layout: VariableLayout, inst: Instance) -> list[int]:
    """Write a feasible plan as a bitstring whose penalty terms all vanish.

    Chain bits follow the routes; every slack register is set to the exact
    gap between its constraint bound and the achieved left-hand side.  The
    resulting energy equals the plan's (scaled) route distance.
    """
    report = validate_routes(plan, inst)
    if not report.ok:
        failed = ", ".join(c.constraint for c in report.failures())
        raise ValueError(f"plan fails validation ({failed}); cannot encode")
    bits = [0] * layout.total_bits
    for k, seq in plan.routes.items():
        bits[layout.mu_index[(seq[0], k)]] = 1
        for a, b in zip(seq, seq[1:]):
            bits[layout.x_index[(a, b, k)]] = 1
        bits[layout.eta_index[(seq[-1], k)]] = 1

    arcs = [
        (a, b) for seq in plan.routes.values() for a, b in zip(seq, seq[1:])
    ]
    for members, reg in layout.subtour_registers.items():
        inside = sum(1 for a, b in arcs if a in members and b in members)
        for bit, value in _encode_register(reg, reg.bound - inside).items():
            bits[bit] = value
    loads = plan.loads(inst)
    for k, reg in layout.vehicle_registers.items():
        for bit, value in _encode_register(reg, reg.bound - loads.get(k, 0)).items():
            bits[bit] = value
    for d, reg in layout.depot_registers.items():
        load = sum(loads.get(v.id, 0) for v in inst.vehicles_at(d))
        for bit, value in _encode_register(reg, reg.bound - load).items():
            bits[bit] = value
    return bits


# -- plan serialization --------------------------------------------------------


def plan_to_json(plan: RoutePlan, *, meta: Mapping[str, Any] | None = None) -> str:
    doc: dict[str, Any] = {}
    if meta:
        doc["_meta"] = dict(meta)
    doc["routes"] = {k: list(seq) for k, seq in plan.routes.items()}
    return json.dumps(doc, indent=2) + "\n"


def plan_from_json(text: str) -> RoutePlan:
    doc = json.loads(text)
    if not isinstance(doc, dict) or not isinstance(doc.get("routes"), dict):
        raise ValueError("plan document must be an object with a 'routes' map")
    routes = {}
    for k, seq in doc["routes"].items():
        if not isinstance(seq, list) or not all(isinstance(c, str) for c in seq):
            raise ValueError(f"routes[{k!r}] must be an array of customer ids")
        routes[str(k)] = tuple(seq)
    return RoutePlan(routes=routes)


# -- schematic drawing ---------------------------------------------------------

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
)


def render_plan_svg(
    inst: Instance, plan: RoutePlan | None = None, *, comments: Iterable[str] = ()
) -> str:
    """Draw depots, customers, and per-vehicle route polylines as SVG.

    Needs positions on every node; raises ValueError otherwise.
    """
    nodes = [*inst.depots, *inst.customers]
    if any(n.position is None for n in nodes):
        raise ValueError("instance has no positions; nothing to draw")
    xs = [float(n.position[0]) for n in nodes]
    ys = [float(n.position[1]) for n in nodes]
    span = max(max(xs) - min(xs), max(ys) - min(ys)) or 1.0
    margin, size = 40.0, 480.0

    def sx(x: float) -> float:
        return margin + (x - min(xs)) / span * size

    def sy(y: float) -> float:
        # flip so larger y is drawn higher
        return margin + size - (y - min(ys)) / span * size

    def point(nid: str, is_depot: bool) -> tuple[float, float]:
        node = inst.depot(nid) if is_depot else inst.customer(nid)
        return sx(float(node.position[0])), sy(float(node.position[1]))

    w = h = 2 * margin + size
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" viewBox="0 0 {w:.0f} {h:.0f}">']
    out.extend(f"<!-- {c} -->" for c in comments)
    out.append(f'<rect width="{w:.0f}" height="{h:.0f}" fill="white"/>')
    if plan is not None:
        for n, (k, seq) in enumerate(sorted(plan.routes.items())):
            color = _PALETTE[n % len(_PALETTE)]
            home = inst.home_of(k)
            pts = [point(home, True)] + [point(c, False) for c in seq] + [point(home, True)]
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
            out.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" '
                f'stroke-width="2" opacity="0.8"><title>{k}</title></polyline>'
            )
    for d in inst.depots:
        x, y = point(d.id, True)
        out.append(
            f'<rect x="{x - 6:.1f}" y="{y - 6:.1f}" width="12" height="12" '
            f'fill="#333"><title>{d.id}</title></rect>'
        )
        out.append(f'<text x="{x + 8:.1f}" y="{y - 8:.1f}" font-size="11">{d.id}</text>')
    for c in inst.customers:
        x, y = point(c.id, False)
        out.append(
            f'<circle cx="{x:.1f}" cy="{y:.1f}" r="5" fill="#fff" stroke="#333" '
            f'stroke-width="1.5"><title>{c.id} demand {c.demand}</title></circle>'
        )
        out.append(f'<text x="{x + 7:.1f}" y="{y + 4:.1f}" font-size="11">{c.id}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
