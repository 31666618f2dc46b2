"""Expand the routing objective and constraint penalties into one QUBO.

Every constraint is folded in as penalty * (affine expression)^2 using
x^2 = x, so the whole model is a quadratic polynomial over the layout
bits.  All distances are scaled to a common integer denominator first;
every coefficient in a compiled model is an exact integer and energies
compare exactly, with no floating tolerance anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .instance import Instance
from .layout import (
    DEFAULT_SUBTOUR_CAP,
    SlackRegister,
    VariableLayout,
    build_layout,
)

__all__ = [
    "CompileConfig",
    "IsingModel",
    "PenaltyConfig",
    "QuboModel",
    "QuboTerms",
    "assemble",
    "compile_assignment_constraints",
    "compile_depot_capacity",
    "compile_flow_constraint",
    "compile_objective",
    "compile_subtour_constraints",
    "compile_terminal_constraints",
    "compile_vehicle_capacity",
    "default_penalty_weight",
    "distance_scale",
    "energy",
    "expand_squared_affine",
    "ising_to_qubo",
    "qubo_to_ising",
]

FLOW_FORMS = ("corrected", "paper")


@dataclass(frozen=True)
class PenaltyConfig:
    """Uniform penalty weight applied to every constraint term.

    weight 0 compiles the bare objective (diagnostic mode; the minimum is
    then the all-zero bitstring, which never validates).
    """

    weight: int

    def __post_init__(self) -> None:
        if self.weight < 0:
            raise ValueError(f"penalty weight must be >= 0, found {self.weight}")


@dataclass(frozen=True)
class CompileConfig:
    penalty: PenaltyConfig | None = None  # None -> default_penalty_weight(inst)
    flow_form: str = "corrected"
    tight_slack: bool = False
    subtour_cap: int = DEFAULT_SUBTOUR_CAP
    include_objective: bool = True

    def __post_init__(self) -> None:
        if self.flow_form not in FLOW_FORMS:
            raise ValueError(f"flow_form must be one of {FLOW_FORMS}, found {self.flow_form!r}")


@dataclass
class QuboTerms:
    """A bag of quadratic terms: linear + pairwise + constant offset."""

    linear: dict[int, int] = field(default_factory=dict)
    quadratic: dict[tuple[int, int], int] = field(default_factory=dict)
    offset: int = 0

    def add_linear(self, p: int, coeff: int) -> None:
        if coeff:
            self.linear[p] = self.linear.get(p, 0) + coeff
            if not self.linear[p]:
                del self.linear[p]

    def add_quadratic(self, p: int, q: int, coeff: int) -> None:
        if p == q:
            self.add_linear(p, coeff)  # x^2 = x
            return
        if p > q:
            p, q = q, p
        if coeff:
            key = (p, q)
            self.quadratic[key] = self.quadratic.get(key, 0) + coeff
            if not self.quadratic[key]:
                del self.quadratic[key]

    def add(self, other: "QuboTerms") -> None:
        for p, c in other.linear.items():
            self.add_linear(p, c)
        for (p, q), c in other.quadratic.items():
            self.add_quadratic(p, q, c)
        self.offset += other.offset

    def evaluate(self, bits: Sequence[int]) -> int:
        total = self.offset
        for p, c in self.linear.items():
            if bits[p]:
                total += c
        for (p, q), c in self.quadratic.items():
            if bits[p] and bits[q]:
                total += c
        return total


def expand_squared_affine(
    terms: Iterable[tuple[int, int]], constant: int, weight: int = 1
) -> QuboTerms:
    """Expand weight * (sum coeff_p x_p + constant)^2 with x^2 = x.

    Bit p picks up weight*(a_p^2 + 2 a_p c) on the diagonal, the pair (p, q)
    picks up weight*2 a_p a_q, and the offset picks up weight*c^2.
    Duplicate bit entries in ``terms`` are combined first.
    """
    out = QuboTerms()
    if not weight:
        return out
    combined: dict[int, int] = {}
    for p, a in terms:
        if a:
            combined[p] = combined.get(p, 0) + a
    items = list(combined.items())
    for n, (p, a) in enumerate(items):
        out.add_linear(p, weight * (a * a + 2 * a * constant))
        for q, b in items[n + 1 :]:
            out.add_quadratic(p, q, weight * 2 * a * b)
    out.offset += weight * constant * constant
    return out


# -- exact distance scaling --------------------------------------------------


def distance_scale(inst: Instance) -> int:
    """Common denominator that turns every used distance into an integer."""
    dens = [1]
    cc = inst.distances.customer_customer
    for r, row in enumerate(cc):
        dens.extend(x.denominator for c, x in enumerate(row) if r != c)
    for row in inst.distances.depot_customer:
        dens.extend(x.denominator for x in row)
    for row in inst.distances.customer_depot:
        dens.extend(x.denominator for x in row)
    return math.lcm(*dens)


def _scaled(value: Fraction, scale: int) -> int:
    out = value * scale
    if out.denominator != 1:
        raise AssertionError(f"distance {value} does not scale to an integer by {scale}")
    return int(out)


def default_penalty_weight(inst: Instance, scale: int | None = None) -> int:
    """1 + the sum of all scaled distance entries.

    Any single unit of constraint violation then costs more than the whole
    objective can ever save, so no violated state can undercut a feasible
    one.
    """
    scale = distance_scale(inst) if scale is None else scale
    total = 0
    cc = inst.distances.customer_customer
    for r, row in enumerate(cc):
        total += sum(x for c, x in enumerate(row) if r != c)
    for row in inst.distances.depot_customer:
        total += sum(row)
    for row in inst.distances.customer_depot:
        total += sum(row)
    return 1 + _scaled(Fraction(total), scale)


# -- term builders, one per Hamiltonian piece --------------------------------


def compile_objective(
    inst: Instance, layout: VariableLayout, *, scale: int | None = None
) -> QuboTerms:
    """Total travel distance: arcs, plus the home-depot legs on start/end bits."""
    scale = distance_scale(inst) if scale is None else scale
    out = QuboTerms()
    for (i, j, k), bit in layout.x_index.items():
        out.add_linear(bit, _scaled(inst.d_cc(i, j), scale))
    for (i, k), bit in layout.mu_index.items():
        out.add_linear(bit, _scaled(inst.d_dc(inst.home_of(k), i), scale))
    for (i, k), bit in layout.eta_index.items():
        out.add_linear(bit, _scaled(inst.d_cd(i, inst.home_of(k)), scale))
    return out


def compile_assignment_constraints(
    inst: Instance, layout: VariableLayout, penalty: int
) -> QuboTerms:
    """Serve-once constraints: unit out-flow and unit in-flow per customer."""
    out = QuboTerms()
    cids = [c.id for c in inst.customers]
    vids = [v.id for v in inst.vehicles]
    for i in cids:
        successors = [
            (layout.x_index[(i, j, k)], 1) for k in vids for j in cids if j != i
        ] + [(layout.eta_index[(i, k)], 1) for k in vids]
        out.add(expand_squared_affine(successors, -1, penalty))
        predecessors = [
            (layout.x_index[(j, i, k)], 1) for k in vids for j in cids if j != i
        ] + [(layout.mu_index[(i, k)], 1) for k in vids]
        out.add(expand_squared_affine(predecessors, -1, penalty))
    return out


def compile_terminal_constraints(
    inst: Instance, layout: VariableLayout, penalty: int
) -> QuboTerms:
    """Each vehicle leaves for exactly one first customer and returns from one last."""
    out = QuboTerms()
    cids = [c.id for c in inst.customers]
    for v in inst.vehicles:
        starts = [(layout.mu_index[(i, v.id)], 1) for i in cids]
        out.add(expand_squared_affine(starts, -1, penalty))
        ends = [(layout.eta_index[(i, v.id)], 1) for i in cids]
        out.add(expand_squared_affine(ends, -1, penalty))
    return out


def compile_flow_constraint(
    inst: Instance, layout: VariableLayout, penalty: int, *, form: str = "corrected"
) -> QuboTerms:
    """Per-vehicle continuity at every customer.

    ``corrected`` counts the start bit as inflow and the end bit as outflow,
    so a route's endpoints balance.  ``paper`` balances arc flow only, which
    charges every route endpoint that has an arc on just one side; it is
    kept for comparison runs.
    """
    if form not in FLOW_FORMS:
        raise ValueError(f"form must be one of {FLOW_FORMS}, found {form!r}")
    out = QuboTerms()
    cids = [c.id for c in inst.customers]
    for v in inst.vehicles:
        for i in cids:
            terms = [(layout.x_index[(j, i, v.id)], 1) for j in cids if j != i]
            terms += [(layout.x_index[(i, p, v.id)], -1) for p in cids if p != i]
            if form == "corrected":
                terms.append((layout.mu_index[(i, v.id)], 1))
                terms.append((layout.eta_index[(i, v.id)], -1))
            out.add(expand_squared_affine(terms, 0, penalty))
    return out


def compile_subtour_constraints(
    inst: Instance, layout: VariableLayout, penalty: int
) -> QuboTerms:
    """At most |S|-1 arcs inside any customer subset S, via slack registers."""
    out = QuboTerms()
    vids = [v.id for v in inst.vehicles]
    for members, reg in layout.subtour_registers.items():
        ids = [c.id for c in inst.customers if c.id in members]
        terms = [
            (layout.x_index[(i, j, k)], 1)
            for k in vids
            for i in ids
            for j in ids
            if i != j
        ]
        terms += [(bit, coeff) for bit, coeff in zip(reg.bits, reg.coefficients)]
        out.add(expand_squared_affine(terms, -(len(ids) - 1), penalty))
    return out


def _load_terms(
    inst: Instance, layout: VariableLayout, vehicle_id: str
) -> list[tuple[int, int]]:
    # Demand of the origin on every arc plus demand of the last customer:
    # summed along a route this is exactly the route's total load.
    cids = [c.id for c in inst.customers]
    terms = [
        (layout.x_index[(i, j, vehicle_id)], inst.customer(i).demand)
        for i in cids
        for j in cids
        if j != i
    ]
    terms += [
        (layout.eta_index[(i, vehicle_id)], inst.customer(i).demand) for i in cids
    ]
    return terms


def compile_vehicle_capacity(
    inst: Instance, layout: VariableLayout, penalty: int
) -> QuboTerms:
    """Route load stays within each vehicle's capacity."""
    out = QuboTerms()
    for v in inst.vehicles:
        reg = layout.vehicle_registers[v.id]
        terms = _load_terms(inst, layout, v.id)
        terms += [(bit, coeff) for bit, coeff in zip(reg.bits, reg.coefficients)]
        out.add(expand_squared_affine(terms, -v.capacity, penalty))
    return out


def compile_depot_capacity(
    inst: Instance, layout: VariableLayout, penalty: int
) -> QuboTerms:
    """Combined load of a depot's own vehicles stays within the depot capacity."""
    out = QuboTerms()
    for d in inst.depots:
        reg = layout.depot_registers[d.id]
        terms: list[tuple[int, int]] = []
        for v in inst.vehicles_at(d.id):
            terms += _load_terms(inst, layout, v.id)
        terms += [(bit, coeff) for bit, coeff in zip(reg.bits, reg.coefficients)]
        out.add(expand_squared_affine(terms, -d.capacity, penalty))
    return out


# -- the assembled model -----------------------------------------------------


@dataclass(frozen=True)
class QuboModel:
    """Upper-triangular sparse QUBO: linear map, pair map, constant offset.

    Compiled models have pure integer coefficients in scaled distance units;
    divide energies by ``distance_scale`` to recover true distances.
    """

    dimension: int
    linear: dict[int, int]
    quadratic: dict[tuple[int, int], int]
    offset: int | Fraction
    distance_scale: int = 1
    penalty: PenaltyConfig | None = None
    flow_form: str | None = None

    def num_terms(self) -> int:
        return len(self.linear) + len(self.quadratic)

    def max_abs_coefficient(self) -> int:
        values = [abs(c) for c in self.linear.values()]
        values += [abs(c) for c in self.quadratic.values()]
        return max(values, default=0)


def assemble(
    inst: Instance, config: CompileConfig | None = None
) -> tuple[QuboModel, VariableLayout]:
    """Compile the full model: objective plus all eight constraint penalties."""
    config = config or CompileConfig()
    layout = build_layout(
        inst, subtour_cap=config.subtour_cap, tight_slack=config.tight_slack
    )
    scale = distance_scale(inst)
    weight = (
        config.penalty.weight
        if config.penalty is not None
        else default_penalty_weight(inst, scale)
    )
    terms = QuboTerms()
    if config.include_objective:
        terms.add(compile_objective(inst, layout, scale=scale))
    terms.add(compile_assignment_constraints(inst, layout, weight))
    terms.add(compile_terminal_constraints(inst, layout, weight))
    terms.add(compile_flow_constraint(inst, layout, weight, form=config.flow_form))
    terms.add(compile_subtour_constraints(inst, layout, weight))
    terms.add(compile_vehicle_capacity(inst, layout, weight))
    terms.add(compile_depot_capacity(inst, layout, weight))
    model = QuboModel(
        dimension=layout.total_bits,
        linear=dict(terms.linear),
        quadratic=dict(terms.quadratic),
        offset=terms.offset,
        distance_scale=scale,
        penalty=PenaltyConfig(weight),
        flow_form=config.flow_form,
    )
    return model, layout


def energy(model: QuboModel, bits: Sequence[int]):
    """Evaluate the model on a bitstring, exactly."""
    if len(bits) != model.dimension:
        raise ValueError(
            f"bitstring length {len(bits)} does not match model dimension {model.dimension}"
        )
    total = model.offset
    for p, c in model.linear.items():
        if bits[p]:
            total += c
    for (p, q), c in model.quadratic.items():
        if bits[p] and bits[q]:
            total += c
    return total


# -- spin-variable form ------------------------------------------------------


@dataclass(frozen=True)
class IsingModel:
    """Equivalent +-1 spin model: biases h, couplings J, constant offset."""

    dimension: int
    h: dict[int, Fraction]
    J: dict[tuple[int, int], Fraction]
    offset: Fraction
    distance_scale: int = 1


def _norm(value: Fraction):
    return int(value) if value.denominator == 1 else value


def qubo_to_ising(model: QuboModel) -> IsingModel:
    """Change of variables x = (1 + s)/2; energies match state for state."""
    h: dict[int, Fraction] = {p: Fraction(0) for p in range(model.dimension)}
    J: dict[tuple[int, int], Fraction] = {}
    offset = Fraction(model.offset)
    for p, c in model.linear.items():
        h[p] += Fraction(c, 2)
        offset += Fraction(c, 2)
    for (p, q), c in model.quadratic.items():
        J[(p, q)] = Fraction(c, 4)
        h[p] += Fraction(c, 4)
        h[q] += Fraction(c, 4)
        offset += Fraction(c, 4)
    return IsingModel(
        dimension=model.dimension,
        h={p: v for p, v in h.items() if v},
        J={k: v for k, v in J.items() if v},
        offset=offset,
        distance_scale=model.distance_scale,
    )


def ising_to_qubo(ising: IsingModel) -> QuboModel:
    """Inverse change of variables s = 2x - 1; exact round trip."""
    linear: dict[int, Fraction] = {p: Fraction(0) for p in range(ising.dimension)}
    quadratic: dict[tuple[int, int], Fraction] = {}
    offset = ising.offset
    for p, bias in ising.h.items():
        linear[p] += 2 * bias
        offset -= bias
    for (p, q), coupling in ising.J.items():
        key = (p, q) if p < q else (q, p)
        quadratic[key] = quadratic.get(key, Fraction(0)) + 4 * coupling
        linear[p] -= 2 * coupling
        linear[q] -= 2 * coupling
        offset += coupling
    return QuboModel(
        dimension=ising.dimension,
        linear={p: _norm(v) for p, v in linear.items() if v},
        quadratic={k: _norm(v) for k, v in quadratic.items() if v},
        offset=_norm(offset) if isinstance(offset, Fraction) else offset,
        distance_scale=ising.distance_scale,
    )
