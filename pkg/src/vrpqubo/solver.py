"""Classical minimizers for compiled models, plus the model text format.

Two solvers: an exhaustive scan that is the ground-truth oracle for small
models, and multi-restart simulated annealing as the stand-in for an
annealing device.  Both work on integer-coefficient models and report
exact integer energies; the annealer's randomness comes from numpy's
counter-based Philox generator with one spawned stream per restart, so a
fixed seed replays bit for bit and the merged result does not depend on
restart order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from numba import njit

from .compiler import QuboModel, energy
from .layout import VariableLayout

__all__ = [
    "AnnealSchedule",
    "DimensionError",
    "SampleRecord",
    "SampleSet",
    "all_energies",
    "export_qubo",
    "import_qubo",
    "solve_exhaustive",
    "solve_simulated_annealing",
]

DEFAULT_EXHAUSTIVE_CAP = 26
DEFAULT_SWEEPS = 120_000
_CHUNK_BITS = 20
# All chunk arithmetic runs in int64; models whose worst-case |energy|
# reaches this bound must be rescaled before solving.
_INT64_SAFE = 1 << 62


class DimensionError(ValueError):
    """Model is too large for the requested solver."""


@dataclass(frozen=True)
class SampleRecord:
    bits: tuple[int, ...]
    energy: int
    count: int = 1


@dataclass(frozen=True)
class SampleSet:
    """Solver output: records sorted by energy, then by bitstring.

    ``best`` is the first record; ties always resolve to the
    lexicographically smallest bitstring, so results are reproducible.
    """

    records: tuple[SampleRecord, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def best(self) -> SampleRecord:
        return self.records[0]


def _integer_arrays(model: QuboModel) -> tuple[np.ndarray, list[tuple[int, int, int]], int]:
    """Dense linear vector, sorted pair list, and integer offset."""
    bound = abs(model.offset)
    linear = np.zeros(model.dimension, dtype=np.int64)
    for p, c in model.linear.items():
        if not isinstance(c, int):
            raise TypeError("solvers need integer coefficients; transform the model first")
        linear[p] = c
        bound += abs(c)
    pairs = []
    for (p, q), c in sorted(model.quadratic.items()):
        if not isinstance(c, int):
            raise TypeError("solvers need integer coefficients; transform the model first")
        pairs.append((p, q, c))
        bound += abs(c)
    if not isinstance(model.offset, int):
        raise TypeError("solvers need an integer offset; transform the model first")
    if bound >= _INT64_SAFE:
        raise ValueError(
            f"coefficient magnitudes (worst case energy {bound}) exceed the int64 "
            "fast path; rescale the distances"
        )
    return linear, pairs, model.offset


def _energy_table(dim: int, linear: np.ndarray, pairs, base: int) -> np.ndarray:
    """Energies of all 2^dim states; state s has bit p equal to (s >> p) & 1.

    Built by doubling: the table over k+1 bits is the table over k bits
    concatenated with itself plus the energy delta of switching bit k on,
    which is itself assembled with strided adds per interacting pair.
    """
    by_high: list[list[tuple[int, int]]] = [[] for _ in range(dim)]
    for p, q, c in pairs:
        by_high[q].append((p, c))
    table = np.empty(1 << dim, dtype=np.int64)
    table[0] = base
    for k in range(dim):
        size = 1 << k
        delta = np.full(size, linear[k], dtype=np.int64)
        for p, c in by_high[k]:
            delta.reshape(-1, 1 << (p + 1))[:, (1 << p) :] += c
        np.add(table[:size], delta, out=table[size : 2 * size])
    return table


def all_energies(model: QuboModel, *, max_dimension: int = 24) -> np.ndarray:
    """Energy of every bitstring as one int64 array (small models only)."""
    if model.dimension > max_dimension:
        raise DimensionError(
            f"{model.dimension} bits is past the {max_dimension}-bit table limit"
        )
    linear, pairs, offset = _integer_arrays(model)
    return _energy_table(model.dimension, linear, pairs, offset)


def _lex_keys(states: np.ndarray, dim: int) -> np.ndarray:
    # Bitstrings written bit 0 first compare like integers with bit 0 as the
    # most significant digit, i.e. the bit-reversed state index.
    keys = np.zeros_like(states)
    for p in range(dim):
        keys |= ((states >> p) & 1) << (dim - 1 - p)
    return keys


def _state_bits(state: int, dim: int) -> tuple[int, ...]:
    return tuple((state >> p) & 1 for p in range(dim))


def solve_exhaustive(
    model: QuboModel, *, top: int = 10, max_dimension: int = DEFAULT_EXHAUSTIVE_CAP
) -> SampleSet:
    """Scan every bitstring; the best record is the exact global minimum."""
    if top < 1:
        raise ValueError("top must be >= 1")
    n = model.dimension
    if n > max_dimension:
        raise DimensionError(
            f"{n} bits means 2^{n} states; exhaustive cap is {max_dimension} bits"
        )
    if n == 0:
        rec = SampleRecord(bits=(), energy=model.offset)
        return SampleSet(records=(rec,), metadata={"solver": "exhaustive", "states": 1})
    linear, pairs, offset = _integer_arrays(model)

    low = min(n, _CHUNK_BITS)
    low_pairs = [(p, q, c) for p, q, c in pairs if q < low]
    cross = [[] for _ in range(n - low)]
    high_pairs = []
    for p, q, c in pairs:
        if q >= low:
            if p < low:
                cross[q - low].append((p, c))
            else:
                high_pairs.append((p - low, q - low, c))

    best_energy: int | None = None
    best_state = 0
    best_lex = None
    pool: dict[int, int] = {}  # state -> int64 energy
    for high in range(1 << (n - low)):
        base = offset
        eff = linear[:low].copy()
        for hb in range(n - low):
            if (high >> hb) & 1:
                base += int(linear[low + hb])
                for p, c in cross[hb]:
                    eff[p] += c
        for p, q, c in high_pairs:
            if (high >> p) & 1 and (high >> q) & 1:
                base += c
        table = _energy_table(low, eff, low_pairs, base)

        chunk_min = int(table.min())
        if best_energy is None or chunk_min <= best_energy:
            ties = np.flatnonzero(table == chunk_min)
            states = (high << low) | ties
            keys = _lex_keys(states, n)
            lex_state = int(states[np.argmin(keys)])
            lex_key = int(keys.min())
            if best_energy is None or chunk_min < best_energy or lex_key < best_lex:
                best_energy, best_state, best_lex = chunk_min, lex_state, lex_key
        take = min(top, table.size)
        if take:
            idx = np.argpartition(table, take - 1)[:take]
            for i in idx:
                pool[(high << low) | int(i)] = int(table[i])

    pool[best_state] = best_energy  # make sure the tie-broken optimum is present
    ranked = sorted(
        pool.items(), key=lambda kv: (kv[1], _state_bits(kv[0], n))
    )[:top]
    records = tuple(
        SampleRecord(bits=_state_bits(s, n), energy=energy(model, _state_bits(s, n)))
        for s, _ in ranked
    )
    return SampleSet(
        records=records,
        metadata={"solver": "exhaustive", "states": 1 << n},
    )


# -- simulated annealing -----------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling schedule plus restart and seeding choices.

    ``initial_temperature`` defaults to the model's largest absolute
    coefficient, which keeps early acceptance close to one; the default
    final temperature is well below the smallest integer energy gap.  The
    default sweep count is sized for desk-scale routing models, whose
    feasible route encodings sit in separate basins behind penalty-height
    barriers: chains need many medium-temperature sweeps to hop basins
    before the freeze.
    """

    initial_temperature: float | None = None
    final_temperature: float = 0.1
    sweeps: int = DEFAULT_SWEEPS
    restarts: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.final_temperature <= 0:
            raise ValueError("final temperature must be > 0")
        if self.initial_temperature is not None and (
            self.initial_temperature < self.final_temperature
        ):
            raise ValueError("initial temperature must be >= final temperature")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def temperatures(self, model_max_coefficient: int) -> np.ndarray:
        t0 = (
            float(self.initial_temperature)
            if self.initial_temperature is not None
            else float(max(model_max_coefficient, 1))
        )
        t0 = max(t0, self.final_temperature)
        if self.sweeps == 1:
            return np.array([t0])
        ratio = (self.final_temperature / t0) ** (1.0 / (self.sweeps - 1))
        return t0 * ratio ** np.arange(self.sweeps)


def _dense_coupling(model: QuboModel) -> np.ndarray:
    w = np.zeros((model.dimension, model.dimension), dtype=np.int64)
    for (p, q), c in model.quadratic.items():
        w[p, q] = c
        w[q, p] = c
    return w


@njit(cache=True)
def _anneal_chain(coupling, linear, offset, z, temps, accept_u, order_keys):
    """One Metropolis chain; returns (best energy, best state) ever visited."""
    n = z.shape[0]
    sweeps = temps.shape[0]
    field = linear.copy()
    for p in range(n):
        for q in range(n):
            field[p] += coupling[p, q] * z[q]
    cur = offset
    for p in range(n):
        if z[p]:
            cur += linear[p]
            for q in range(p + 1, n):
                if z[q]:
                    cur += coupling[p, q]
    best = cur
    best_z = z.copy()
    for s in range(sweeps):
        temp = temps[s]
        order = np.argsort(order_keys[s])
        for t in range(n):
            p = order[t]
            delta = 1 - 2 * z[p]
            d_e = delta * field[p]
            if d_e <= 0 or accept_u[s, t] < np.exp(-d_e / temp):
                z[p] += delta
                cur += d_e
                for q in range(n):
                    field[q] += coupling[p, q] * delta
                if cur < best:
                    best = cur
                    best_z[:] = z
    return best, best_z


def solve_simulated_annealing(model: QuboModel, schedule: AnnealSchedule | None = None) -> SampleSet:
    """Metropolis single-flip annealing over independent restart chains.

    Every sweep proposes each bit once in a fresh random order and accepts
    with probability min(1, exp(-dE/T)) under geometric cooling.  Each
    restart owns one Philox stream, SeedSequence(seed, spawn_key=(chain,)),
    consumed in a fixed pattern (initial state, then acceptance draws, then
    the sort keys whose argsort gives the per-sweep flip orders), so a
    fixed seed replays bit for bit and merging is order-independent.  The
    returned set holds each chain's best state visited after any flip, not
    just its final state.
    """
    schedule = schedule or AnnealSchedule()
    n = model.dimension
    linear, _, offset = _integer_arrays(model)
    if n == 0:
        rec = SampleRecord(bits=(), energy=model.offset, count=schedule.restarts)
        return SampleSet(records=(rec,), metadata=_sa_metadata(schedule))
    coupling = _dense_coupling(model)
    temps = schedule.temperatures(model.max_abs_coefficient())
    sweeps = schedule.sweeps

    merged: dict[tuple[int, ...], int] = {}
    for c in range(schedule.restarts):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=schedule.seed, spawn_key=(c,)))
        )
        z = rng.integers(0, 2, size=n).astype(np.int64)
        accept_u = rng.random((sweeps, n))
        order_keys = rng.random((sweeps, n))
        _, best_z = _anneal_chain(coupling, linear, offset, z, temps, accept_u, order_keys)
        bits = tuple(int(b) for b in best_z)
        merged[bits] = merged.get(bits, 0) + 1

    records = tuple(
        SampleRecord(bits=bits, energy=energy(model, bits), count=count)
        for bits, count in merged.items()
    )
    records = tuple(sorted(records, key=lambda r: (r.energy, r.bits)))
    return SampleSet(records=records, metadata=_sa_metadata(schedule))


def _sa_metadata(schedule: AnnealSchedule) -> dict:
    return {
        "solver": "simulated-annealing",
        "rng": "numpy Philox (counter-based), one stream per restart: "
        "SeedSequence(seed, spawn_key=(chain,)); draws are initial state, "
        "acceptance uniforms, then flip-order sort keys",
        "seed": schedule.seed,
        "initial_temperature": schedule.initial_temperature,
        "final_temperature": schedule.final_temperature,
        "sweeps": schedule.sweeps,
        "restarts": schedule.restarts,
    }


# -- coordinate text format ----------------------------------------------------


def export_qubo(
    model: QuboModel, layout: VariableLayout | None = None, *, comments: Sequence[str] = ()
) -> str:
    """Render a model in the coordinate text format.

    Comment lines start with '#'.  The header is
    ``qubo <dimension> <offset-numerator> <offset-denominator> <distance-scale>``,
    followed by one ``p p c`` line per linear term and one ``p q c`` line
    (p < q) per quadratic term, integer coefficients, ascending index order.
    """
    for c in model.linear.values():
        if not isinstance(c, int):
            raise TypeError("coordinate format carries integer coefficients only")
    for c in model.quadratic.values():
        if not isinstance(c, int):
            raise TypeError("coordinate format carries integer coefficients only")
    offset = Fraction(model.offset)
    lines = ["# vrpqubo qubo model"]
    lines.extend(f"# {c}" for c in comments)
    if layout is not None:
        lines.append(
            f"# layout: {len(layout.x_index)} arc bits, {len(layout.mu_index)} start bits, "
            f"{len(layout.eta_index)} end bits, "
            f"{sum(r.width for r in layout.slack_registers)} slack bits"
        )
    lines.append(
        f"qubo {model.dimension} {offset.numerator} {offset.denominator} {model.distance_scale}"
    )
    entries = [(p, p, c) for p, c in model.linear.items()]
    entries += [(p, q, c) for (p, q), c in model.quadratic.items()]
    for p, q, c in sorted(entries):
        lines.append(f"{p} {q} {c}")
    return "\n".join(lines) + "\n"


def import_qubo(text: str) -> QuboModel:
    """Parse the coordinate text format back into a model (exact round trip)."""
    header = None
    linear: dict[int, int] = {}
    quadratic: dict[tuple[int, int], int] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            parts = line.split()
            if len(parts) != 5 or parts[0] != "qubo":
                raise ValueError(f"bad header line: {raw!r}")
            header = (int(parts[1]), int(parts[2]), int(parts[3]), int(parts[4]))
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"bad coefficient line: {raw!r}")
        p, q, c = int(parts[0]), int(parts[1]), int(parts[2])
        if p == q:
            linear[p] = linear.get(p, 0) + c
        else:
            key = (p, q) if p < q else (q, p)
            quadratic[key] = quadratic.get(key, 0) + c
    if header is None:
        raise ValueError("missing 'qubo' header line")
    dim, num, den, scale = header
    offset = Fraction(num, den)
    return QuboModel(
        dimension=dim,
        linear=linear,
        quadratic=quadratic,
        offset=int(offset) if offset.denominator == 1 else offset,
        distance_scale=scale,
    )
