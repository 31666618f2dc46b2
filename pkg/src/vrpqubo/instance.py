"""Problem instances for multi-depot capacitated vehicle routing.

An :class:`Instance` bundles depots, a vehicle fleet (each vehicle
permanently homed at one depot), customers with integer demands, and a
fully asymmetric distance model.  Distances are exact rationals; when
node coordinates are given instead, Euclidean distances are derived on a
fixed grid.  Instances are immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

__all__ = [
    "Customer",
    "Depot",
    "Diagnostic",
    "DistanceModel",
    "Instance",
    "InstanceError",
    "ReferentialError",
    "SchemaError",
    "Vehicle",
    "derive_euclidean_distances",
    "parse_instance",
    "render_instance",
    "validate_instance",
]

Position = tuple[Fraction, Fraction]

# Grid used when deriving distances from coordinates: each derived distance
# is the smallest multiple of 1/POSITION_SCALE that is >= the true Euclidean
# distance.  Rounding up (never to nearest) is what keeps the triangle
# inequality exact on the grid.
POSITION_SCALE = 10**6

# Identifiers appear as single tokens in text sidecars, so keep them boring.
_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+$")


class InstanceError(ValueError):
    """Base class for malformed problem data."""


class SchemaError(InstanceError):
    """An instance document violates the schema; the message names the field."""


class ReferentialError(InstanceError):
    """A record references an id that does not exist."""


@dataclass(frozen=True)
class Depot:
    """A depot with an aggregate material capacity and optional coordinates."""

    id: str
    capacity: int
    position: Position | None = None


@dataclass(frozen=True)
class Vehicle:
    """A vehicle with a fixed home depot and an integer carrying capacity."""

    id: str
    home_depot: str
    capacity: int


@dataclass(frozen=True)
class Customer:
    """A customer location with a positive integer demand."""

    id: str
    demand: int
    position: Position | None = None


@dataclass(frozen=True)
class DistanceModel:
    """Asymmetric rational distances between customers and depots.

    ``customer_customer[i][j]`` is the leg from customer i to customer j,
    ``depot_customer[d][i]`` the leg from depot d out to customer i, and
    ``customer_depot[i][d]`` the return leg.  Indices follow the ordering
    of the owning instance's customer and depot lists.
    """

    customer_customer: tuple[tuple[Fraction, ...], ...]
    depot_customer: tuple[tuple[Fraction, ...], ...]
    customer_depot: tuple[tuple[Fraction, ...], ...]


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str


@dataclass(frozen=True)
class Instance:
    """An immutable routing problem: depots, fleet, customers, distances."""

    depots: tuple[Depot, ...]
    vehicles: tuple[Vehicle, ...]
    customers: tuple[Customer, ...]
    distances: DistanceModel

    def __post_init__(self) -> None:
        if not self.depots or not self.vehicles or not self.customers:
            raise SchemaError("instance needs at least one depot, vehicle, and customer")
        _check_unique("depots", [d.id for d in self.depots])
        _check_unique("vehicles", [v.id for v in self.vehicles])
        _check_unique("customers", [c.id for c in self.customers])
        for d in self.depots:
            if d.capacity < 0:
                raise SchemaError(f"depots[{d.id}].capacity must be >= 0")
        for v in self.vehicles:
            if v.capacity < 0:
                raise SchemaError(f"vehicles[{v.id}].capacity must be >= 0")
        depot_ids = {d.id for d in self.depots}
        for v in self.vehicles:
            if v.home_depot not in depot_ids:
                raise ReferentialError(
                    f"vehicles[{v.id}].depot references unknown depot {v.home_depot!r}"
                )
        for c in self.customers:
            if c.demand < 1:
                raise SchemaError(f"customers[{c.id}].demand must be >= 1")
        _check_matrix(
            "distances.customer_customer",
            self.distances.customer_customer,
            len(self.customers),
            len(self.customers),
        )
        _check_matrix(
            "distances.depot_customer",
            self.distances.depot_customer,
            len(self.depots),
            len(self.customers),
        )
        _check_matrix(
            "distances.customer_depot",
            self.distances.customer_depot,
            len(self.customers),
            len(self.depots),
        )
        object.__setattr__(self, "_c_index", {c.id: n for n, c in enumerate(self.customers)})
        object.__setattr__(self, "_d_index", {d.id: n for n, d in enumerate(self.depots)})
        object.__setattr__(self, "_v_index", {v.id: n for n, v in enumerate(self.vehicles)})

    # -- lookups -----------------------------------------------------------

    def customer(self, cid: str) -> Customer:
        return self.customers[self._c_index[cid]]  # type: ignore[attr-defined]

    def depot(self, did: str) -> Depot:
        return self.depots[self._d_index[did]]  # type: ignore[attr-defined]

    def vehicle(self, vid: str) -> Vehicle:
        return self.vehicles[self._v_index[vid]]  # type: ignore[attr-defined]

    def home_of(self, vid: str) -> str:
        return self.vehicle(vid).home_depot

    def vehicles_at(self, did: str) -> tuple[Vehicle, ...]:
        return tuple(v for v in self.vehicles if v.home_depot == did)

    def total_demand(self) -> int:
        return sum(c.demand for c in self.customers)

    # -- distances by id ---------------------------------------------------

    def d_cc(self, i: str, j: str) -> Fraction:
        ci = self._c_index  # type: ignore[attr-defined]
        return self.distances.customer_customer[ci[i]][ci[j]]

    def d_dc(self, d: str, i: str) -> Fraction:
        return self.distances.depot_customer[self._d_index[d]][self._c_index[i]]  # type: ignore[attr-defined]

    def d_cd(self, i: str, d: str) -> Fraction:
        return self.distances.customer_depot[self._c_index[i]][self._d_index[d]]  # type: ignore[attr-defined]


def _check_unique(kind: str, ids: Sequence[str]) -> None:
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            raise SchemaError(f"{kind}: duplicate id {i!r}")
        seen.add(i)


def _check_matrix(
    name: str, matrix: tuple[tuple[Fraction, ...], ...], rows: int, cols: int
) -> None:
    if len(matrix) != rows:
        raise SchemaError(f"{name} must have {rows} rows, found {len(matrix)}")
    for r, row in enumerate(matrix):
        if len(row) != cols:
            raise SchemaError(f"{name}[{r}] must have {cols} entries, found {len(row)}")
        for c, value in enumerate(row):
            if value < 0:
                raise SchemaError(f"{name}[{r}][{c}] must be >= 0, found {value}")


# -- Euclidean derivation ----------------------------------------------------


def _ceil_sqrt_scaled(squared: Fraction) -> Fraction:
    """Smallest multiple of 1/POSITION_SCALE that is >= sqrt(squared), exactly."""
    num = squared.numerator * POSITION_SCALE * POSITION_SCALE
    den = squared.denominator
    n = math.isqrt(num // den)
    while n * n * den < num:
        n += 1
    while n > 0 and (n - 1) * (n - 1) * den >= num:
        n -= 1
    return Fraction(n, POSITION_SCALE)


def _euclidean(a: Position, b: Position) -> Fraction:
    if a == b:
        return Fraction(0)
    squared = (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2
    return _ceil_sqrt_scaled(squared)


def derive_euclidean_distances(
    depots: Sequence[Depot], customers: Sequence[Customer]
) -> DistanceModel:
    """Build the full distance model from node coordinates.

    Every node must carry a position.  The result is symmetric and satisfies
    the triangle inequality exactly (distances are rounded up onto a common
    grid, so the rounded values can never undercut a two-leg detour).
    """
    for node in (*depots, *customers):
        if node.position is None:
            raise SchemaError(f"node {node.id!r} has no position; cannot derive distances")
    cc = tuple(
        tuple(_euclidean(a.position, b.position) for b in customers) for a in customers
    )
    dc = tuple(
        tuple(_euclidean(d.position, c.position) for c in customers) for d in depots
    )
    cd = tuple(
        tuple(_euclidean(c.position, d.position) for d in depots) for c in customers
    )
    return DistanceModel(customer_customer=cc, depot_customer=dc, customer_depot=cd)


# -- document parsing --------------------------------------------------------


def _as_id(value: Any, where: str) -> str:
    if not isinstance(value, str) or not _ID_PATTERN.match(value):
        raise SchemaError(
            f"{where} must be a non-empty string of [A-Za-z0-9_.-], found {value!r}"
        )
    return value


def _as_int(value: Any, where: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where} must be an integer, found {value!r}")
    if value < minimum:
        raise SchemaError(f"{where} must be >= {minimum}, found {value}")
    return value


def _as_fraction(value: Any, where: str) -> Fraction:
    if isinstance(value, bool):
        raise SchemaError(f"{where} must be a number, found {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise SchemaError(f"{where} must be finite, found {value!r}")
        # str() keeps the decimal the author wrote (0.1 -> 1/10), not the
        # binary float expansion.
        return Fraction(str(value))
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise SchemaError(f"{where} is not a valid rational: {value!r}") from None
    raise SchemaError(f"{where} must be a number or 'p/q' string, found {value!r}")


def _as_position(value: Any, where: str) -> Position:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SchemaError(f"{where} must be a [x, y] pair")
    return (_as_fraction(value[0], f"{where}[0]"), _as_fraction(value[1], f"{where}[1]"))


def _as_record(value: Any, where: str, allowed: set[str], required: set[str]) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(f"{where} must be an object")
    for key in value:
        if key not in allowed:
            raise SchemaError(f"{where}.{key} is not a recognized field")
    for key in required:
        if key not in value:
            raise SchemaError(f"{where}.{key} is required")
    return value


def _parse_matrix(value: Any, where: str) -> tuple[tuple[Fraction, ...], ...]:
    if not isinstance(value, list):
        raise SchemaError(f"{where} must be an array of arrays")
    rows = []
    for r, row in enumerate(value):
        if not isinstance(row, list):
            raise SchemaError(f"{where}[{r}] must be an array")
        parsed = tuple(_as_fraction(x, f"{where}[{r}][{c}]") for c, x in enumerate(row))
        for c, entry in enumerate(parsed):
            if entry < 0:
                raise SchemaError(f"{where}[{r}][{c}] must be >= 0, found {entry}")
        rows.append(parsed)
    return tuple(rows)


def parse_instance(text: str) -> Instance:
    """Parse a JSON instance document.

    The document carries ``depots``, ``vehicles``, and ``customers`` arrays
    plus either positions on every node or a full ``distances`` block with
    ``customer_customer``, ``depot_customer``, and ``customer_depot``
    matrices (exactly one of the two).  Rational entries may be written as
    integers, decimals, or ``"p/q"`` strings.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    for key in doc:
        if key not in {"depots", "vehicles", "customers", "distances", "_meta"}:
            raise SchemaError(f"unrecognized top-level field {key!r}")
    for key in ("depots", "vehicles", "customers"):
        if key not in doc or not isinstance(doc[key], list) or not doc[key]:
            raise SchemaError(f"{key} must be a non-empty array")

    depots = []
    for n, rec in enumerate(doc["depots"]):
        rec = _as_record(rec, f"depots[{n}]", {"id", "capacity", "position"}, {"id", "capacity"})
        depots.append(
            Depot(
                id=_as_id(rec["id"], f"depots[{n}].id"),
                capacity=_as_int(rec["capacity"], f"depots[{n}].capacity", 0),
                position=_as_position(rec["position"], f"depots[{n}].position")
                if "position" in rec
                else None,
            )
        )
    vehicles = []
    for n, rec in enumerate(doc["vehicles"]):
        rec = _as_record(rec, f"vehicles[{n}]", {"id", "depot", "capacity"}, {"id", "depot", "capacity"})
        vehicles.append(
            Vehicle(
                id=_as_id(rec["id"], f"vehicles[{n}].id"),
                home_depot=_as_id(rec["depot"], f"vehicles[{n}].depot"),
                capacity=_as_int(rec["capacity"], f"vehicles[{n}].capacity", 0),
            )
        )
    customers = []
    for n, rec in enumerate(doc["customers"]):
        rec = _as_record(rec, f"customers[{n}]", {"id", "demand", "position"}, {"id", "demand"})
        customers.append(
            Customer(
                id=_as_id(rec["id"], f"customers[{n}].id"),
                demand=_as_int(rec["demand"], f"customers[{n}].demand", 1),
                position=_as_position(rec["position"], f"customers[{n}].position")
                if "position" in rec
                else None,
            )
        )

    all_positioned = all(d.position is not None for d in depots) and all(
        c.position is not None for c in customers
    )
    any_positioned = any(d.position is not None for d in depots) or any(
        c.position is not None for c in customers
    )
    if "distances" in doc:
        if any_positioned:
            raise SchemaError(
                "give either positions on all nodes or a distances block, not both"
            )
        block = _as_record(
            doc["distances"],
            "distances",
            {"customer_customer", "depot_customer", "customer_depot"},
            {"customer_customer", "depot_customer", "customer_depot"},
        )
        distances = DistanceModel(
            customer_customer=_parse_matrix(block["customer_customer"], "distances.customer_customer"),
            depot_customer=_parse_matrix(block["depot_customer"], "distances.depot_customer"),
            customer_depot=_parse_matrix(block["customer_depot"], "distances.customer_depot"),
        )
    elif all_positioned:
        distances = derive_euclidean_distances(depots, customers)
    else:
        raise SchemaError(
            "positions are missing on some nodes and no distances block is present"
        )

    return Instance(
        depots=tuple(depots),
        vehicles=tuple(vehicles),
        customers=tuple(customers),
        distances=distances,
    )


def _fraction_out(value: Fraction) -> Any:
    if value.denominator == 1:
        return int(value)
    return f"{value.numerator}/{value.denominator}"


def _matrix_out(matrix: tuple[tuple[Fraction, ...], ...]) -> list[list[Any]]:
    return [[_fraction_out(x) for x in row] for row in matrix]


def render_instance(inst: Instance, *, meta: Mapping[str, Any] | None = None) -> str:
    """Serialize an instance back to its JSON document form.

    If every node has a position and the stored distances equal the derived
    Euclidean distances, positions alone are emitted; otherwise the explicit
    distances block is emitted (and positions, which then cannot appear in
    the document, are dropped).  ``parse_instance`` of the result reproduces
    the instance exactly.
    """
    all_positioned = all(d.position is not None for d in inst.depots) and all(
        c.position is not None for c in inst.customers
    )
    use_positions = (
        all_positioned
        and derive_euclidean_distances(inst.depots, inst.customers) == inst.distances
    )
    doc: dict[str, Any] = {}
    if meta:
        doc["_meta"] = dict(meta)
    doc["depots"] = [
        {
            "id": d.id,
            "capacity": d.capacity,
            **(
                {"position": [_fraction_out(d.position[0]), _fraction_out(d.position[1])]}
                if use_positions
                else {}
            ),
        }
        for d in inst.depots
    ]
    doc["vehicles"] = [
        {"id": v.id, "depot": v.home_depot, "capacity": v.capacity} for v in inst.vehicles
    ]
    doc["customers"] = [
        {
            "id": c.id,
            "demand": c.demand,
            **(
                {"position": [_fraction_out(c.position[0]), _fraction_out(c.position[1])]}
                if use_positions
                else {}
            ),
        }
        for c in inst.customers
    ]
    if not use_positions:
        doc["distances"] = {
            "customer_customer": _matrix_out(inst.distances.customer_customer),
            "depot_customer": _matrix_out(inst.distances.depot_customer),
            "customer_depot": _matrix_out(inst.distances.customer_depot),
        }
    return json.dumps(doc, indent=2) + "\n"


def validate_instance(inst: Instance) -> list[Diagnostic]:
    """Run feasibility sanity checks; returns diagnostics, never raises.

    Errors flag structurally hopeless instances: a fleet larger than the
    customer set (every vehicle must serve a first and last customer), or
    total demand beyond what the fleet or the depots can absorb.  A warning
    flags any depot whose capacity is not below the combined capacity of its
    own vehicles, which makes the depot constraint non-binding.
    """
    diags: list[Diagnostic] = []
    n_vehicles, n_customers = len(inst.vehicles), len(inst.customers)
    if n_vehicles > n_customers:
        diags.append(
            Diagnostic(
                "error",
                "more-vehicles-than-customers",
                f"{n_vehicles} vehicles but only {n_customers} customers: "
                "every vehicle must serve at least one customer",
            )
        )
    total = inst.total_demand()
    fleet = sum(v.capacity for v in inst.vehicles)
    if total > fleet:
        diags.append(
            Diagnostic(
                "error",
                "demand-exceeds-fleet",
                f"total demand {total} exceeds fleet capacity {fleet}",
            )
        )
    depot_total = sum(d.capacity for d in inst.depots)
    if total > depot_total:
        diags.append(
            Diagnostic(
                "error",
                "demand-exceeds-depots",
                f"total demand {total} exceeds total depot capacity {depot_total}",
            )
        )
    for d in inst.depots:
        own = sum(v.capacity for v in inst.vehicles_at(d.id))
        if d.capacity >= own:
            diags.append(
                Diagnostic(
                    "warning",
                    "depot-capacity-not-binding",
                    f"depot {d.id} capacity {d.capacity} is not below its own "
                    f"fleet capacity {own}; the depot constraint cannot bind",
                )
            )
    return diags
