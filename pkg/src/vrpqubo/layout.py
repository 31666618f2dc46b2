"""Bit layout: every decision variable and slack bit gets a unique index.

The bit order is fixed so bitstrings are portable across runs: first the
successor arcs x (by vehicle, then origin, then destination), then the
route-start block, then the route-end block, then one slack register per
inequality constraint (loop-elimination subsets, vehicles, depots, in that
order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator

from .instance import Instance

__all__ = [
    "SizeReport",
    "SlackRegister",
    "SubtourExplosionError",
    "VariableLayout",
    "build_layout",
    "estimate_size",
    "read_layout_sidecar",
    "slack_coefficients",
    "slack_width",
    "write_layout_sidecar",
]

DEFAULT_SUBTOUR_CAP = 12


class SubtourExplosionError(ValueError):
    """Too many customers to expand one constraint per customer subset."""


def slack_width(bound: int) -> int:
    """Number of slack bits for an inequality with right-hand side ``bound``.

    ceil(1 + log2(bound)) for bound >= 1; a zero bound needs no register at
    all (the empty register pins the constraint residual to zero exactly).
    """
    if bound < 0:
        raise ValueError(f"bound must be >= 0, found {bound}")
    if bound == 0:
        return 0
    return 1 + (bound - 1).bit_length()


def slack_coefficients(bound: int, *, tight: bool = False) -> tuple[int, ...]:
    """Per-bit coefficients of a slack register.

    Default encoding is plain powers of two within slack_width(bound) bits,
    which can overshoot the bound.  Tight mode shrinks the register to
    ceil(log2(bound+1)) bits and replaces the top coefficient with
    ``bound - (2**(w-1) - 1)`` so the register maxes out at exactly the
    bound.
    """
    if bound < 0:
        raise ValueError(f"bound must be >= 0, found {bound}")
    if bound == 0:
        return ()
    if not tight:
        return tuple(1 << l for l in range(slack_width(bound)))
    width = bound.bit_length()
    if width == 1:
        return (bound,)
    top = bound - ((1 << (width - 1)) - 1)
    return tuple(1 << l for l in range(width - 1)) + (top,)


@dataclass(frozen=True)
class SlackRegister:
    """Slack bits turning one inequality into an exact equality."""

    owner: str
    bound: int
    width: int
    coefficients: tuple[int, ...]
    first_bit: int

    @property
    def bits(self) -> range:
        return range(self.first_bit, self.first_bit + self.width)


@dataclass(frozen=True)
class VariableLayout:
    """Bijection between named decision variables and bit indices.

    ``mu_index`` holds the route-start variables; rerouting layouts store
    the start-from-current-position variables under the same field with
    ``start_symbol == "beta"``.
    """

    x_index: dict[tuple[str, str, str], int]
    mu_index: dict[tuple[str, str], int]
    eta_index: dict[tuple[str, str], int]
    slack_registers: tuple[SlackRegister, ...]
    subtour_registers: dict[frozenset[str], SlackRegister]
    vehicle_registers: dict[str, SlackRegister]
    depot_registers: dict[str, SlackRegister]
    total_bits: int
    start_symbol: str = "mu"

    def iter_symbols(self) -> Iterator[tuple[int, str]]:
        """Yield (bit index, symbol description) in index order."""
        rows: list[tuple[int, str]] = []
        for (i, j, k), bit in self.x_index.items():
            rows.append((bit, f"x {i} {j} {k}"))
        for (i, k), bit in self.mu_index.items():
            rows.append((bit, f"{self.start_symbol} {i} {k}"))
        for (i, k), bit in self.eta_index.items():
            rows.append((bit, f"eta {i} {k}"))
        for reg in self.slack_registers:
            for l, bit in enumerate(reg.bits):
                rows.append((bit, f"slack {reg.owner} {l}"))
        rows.sort()
        return iter(rows)


def _subtour_owner(ids: Iterable[str]) -> str:
    return "subtour:" + "+".join(ids)


def build_layout(
    inst: Instance,
    *,
    subtour_cap: int = DEFAULT_SUBTOUR_CAP,
    tight_slack: bool = False,
    start_symbol: str = "mu",
) -> VariableLayout:
    """Assign a bit index to every route variable and slack bit."""
    n_customers = len(inst.customers)
    if n_customers > subtour_cap:
        raise SubtourExplosionError(
            f"{n_customers} customers need {2**n_customers - n_customers - 1} "
            f"loop-elimination constraints; cap is {subtour_cap} customers "
            "(raise it explicitly if you accept the blowup)"
        )
    cids = [c.id for c in inst.customers]
    vids = [v.id for v in inst.vehicles]

    x_index: dict[tuple[str, str, str], int] = {}
    bit = 0
    for k in vids:
        for i in cids:
            for j in cids:
                if i == j:
                    continue
                x_index[(i, j, k)] = bit
                bit += 1
    mu_index: dict[tuple[str, str], int] = {}
    for k in vids:
        for i in cids:
            mu_index[(i, k)] = bit
            bit += 1
    eta_index: dict[tuple[str, str], int] = {}
    for k in vids:
        for i in cids:
            eta_index[(i, k)] = bit
            bit += 1

    registers: list[SlackRegister] = []
    subtour_registers: dict[frozenset[str], SlackRegister] = {}
    vehicle_registers: dict[str, SlackRegister] = {}
    depot_registers: dict[str, SlackRegister] = {}

    def add_register(owner: str, bound: int) -> SlackRegister:
        nonlocal bit
        coeffs = slack_coefficients(bound, tight=tight_slack)
        reg = SlackRegister(
            owner=owner,
            bound=bound,
            width=len(coeffs),
            coefficients=coeffs,
            first_bit=bit,
        )
        bit += reg.width
        registers.append(reg)
        return reg

    for size in range(2, n_customers + 1):
        for combo in combinations(cids, size):
            reg = add_register(_subtour_owner(combo), size - 1)
            subtour_registers[frozenset(combo)] = reg
    for v in inst.vehicles:
        vehicle_registers[v.id] = add_register(f"vehicle:{v.id}", v.capacity)
    for d in inst.depots:
        depot_registers[d.id] = add_register(f"depot:{d.id}", d.capacity)

    return VariableLayout(
        x_index=x_index,
        mu_index=mu_index,
        eta_index=eta_index,
        slack_registers=tuple(registers),
        subtour_registers=subtour_registers,
        vehicle_registers=vehicle_registers,
        depot_registers=depot_registers,
        total_bits=bit,
        start_symbol=start_symbol,
    )


@dataclass(frozen=True)
class SizeReport:
    """Per-block bit counts; ``total`` is the full decision-variable count."""

    route_bits: int
    subtour_slack_bits: int
    vehicle_slack_bits: int
    depot_slack_bits: int

    @property
    def total(self) -> int:
        return (
            self.route_bits
            + self.subtour_slack_bits
            + self.vehicle_slack_bits
            + self.depot_slack_bits
        )


def estimate_size(inst: Instance, *, tight_slack: bool = False) -> SizeReport:
    """Count decision variables without allocating a layout.

    route bits   |T||K|(|T|+1)  =  |T|(|T|-1)|K| arcs + |T||K| starts + |T||K| ends
    subtour bits sum over subset sizes s of C(|T|, s) * width(s - 1)
    vehicle bits sum of width(Q_k)
    depot bits   sum of width(V_d)
    """
    n_t, n_k = len(inst.customers), len(inst.vehicles)

    def width(bound: int) -> int:
        return bound.bit_length() if tight_slack else slack_width(bound)

    route = n_t * (n_t - 1) * n_k + 2 * n_t * n_k
    subtour = sum(math.comb(n_t, size) * width(size - 1) for size in range(2, n_t + 1))
    vehicle = sum(width(v.capacity) for v in inst.vehicles)
    depot = sum(width(d.capacity) for d in inst.depots)
    return SizeReport(
        route_bits=route,
        subtour_slack_bits=subtour,
        vehicle_slack_bits=vehicle,
        depot_slack_bits=depot,
    )


# -- sidecar text format -----------------------------------------------------


def write_layout_sidecar(layout: VariableLayout, *, comments: Iterable[str] = ()) -> str:
    """Render the layout as a text sidecar mapping bit indices to symbols.

    Plain lines are ``<index> x <i> <j> <k>``, ``<index> mu <i> <k>`` (or
    ``beta`` for rerouting layouts), ``<index> eta <i> <k>``, and
    ``<index> slack <owner> <l>``.  Comment lines carry the register bounds
    and coefficients needed to rebuild the layout.
    """
    lines = ["# vrpqubo layout sidecar"]
    lines.extend(f"# {c}" for c in comments)
    lines.append(f"# start-symbol {layout.start_symbol}")
    for reg in layout.slack_registers:
        coeffs = ",".join(str(c) for c in reg.coefficients)
        lines.append(
            f"# slack-register {reg.owner} bound={reg.bound} "
            f"first={reg.first_bit} coefficients={coeffs if coeffs else '-'}"
        )
    for bit, symbol in layout.iter_symbols():
        lines.append(f"{bit} {symbol}")
    return "\n".join(lines) + "\n"


def read_layout_sidecar(text: str) -> VariableLayout:
    """Rebuild a VariableLayout from its sidecar text."""
    start_symbol = "mu"
    reg_meta: dict[str, tuple[int, int, tuple[int, ...]]] = {}
    reg_order: list[str] = []
    x_index: dict[tuple[str, str, str], int] = {}
    mu_index: dict[tuple[str, str], int] = {}
    eta_index: dict[tuple[str, str], int] = {}
    total = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["start-symbol"] and len(parts) == 2:
                start_symbol = parts[1]
            elif parts[:1] == ["slack-register"] and len(parts) == 5:
                owner = parts[1]
                bound = int(parts[2].removeprefix("bound="))
                first = int(parts[3].removeprefix("first="))
                coeff_text = parts[4].removeprefix("coefficients=")
                coeffs = (
                    tuple(int(c) for c in coeff_text.split(","))
                    if coeff_text != "-"
                    else ()
                )
                reg_meta[owner] = (bound, first, coeffs)
                reg_order.append(owner)
            continue
        parts = line.split()
        bit = int(parts[0])
        kind = parts[1]
        if kind == "x":
            x_index[(parts[2], parts[3], parts[4])] = bit
        elif kind in ("mu", "beta"):
            mu_index[(parts[2], parts[3])] = bit
        elif kind == "eta":
            eta_index[(parts[2], parts[3])] = bit
        elif kind == "slack":
            pass  # register geometry comes from the comment lines
        else:
            raise ValueError(f"unrecognized sidecar line: {raw!r}")
        total = max(total, bit + 1)

    registers = []
    subtour_registers: dict[frozenset[str], SlackRegister] = {}
    vehicle_registers: dict[str, SlackRegister] = {}
    depot_registers: dict[str, SlackRegister] = {}
    for owner in reg_order:
        bound, first, coeffs = reg_meta[owner]
        reg = SlackRegister(
            owner=owner, bound=bound, width=len(coeffs), coefficients=coeffs, first_bit=first
        )
        registers.append(reg)
        total = max(total, first + reg.width)
        tag, _, key = owner.partition(":")
        if tag == "subtour":
            subtour_registers[frozenset(key.split("+"))] = reg
        elif tag == "vehicle":
            vehicle_registers[key] = reg
        elif tag == "depot":
            depot_registers[key] = reg
    return VariableLayout(
        x_index=x_index,
        mu_index=mu_index,
        eta_index=eta_index,
        slack_registers=tuple(registers),
        subtour_registers=subtour_registers,
        vehicle_registers=vehicle_registers,
        depot_registers=depot_registers,
        total_bits=total,
        start_symbol=start_symbol,
    )
