"""Command-line front end: ingest, size, compile, solve, decode, reroute.

Exit codes:
  0  success
  1  malformed input document (schema or reference errors)
  2  bad command line (argparse)
  3  file system problem
  4  instance fails validation
  5  infeasible outcome (no valid plan, or the fleet cannot cover the work)
  6  problem too large for the requested method

Identical configuration and seed produce byte-identical artifacts; every
artifact carries the tool version, a hash of the resolved configuration,
and the seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .compiler import CompileConfig, PenaltyConfig, QuboModel, assemble, energy, qubo_to_ising
from .decoder import (
    DecodeError,
    RoutePlan,
    ValidationReport,
    decode,
    plan_from_json,
    plan_to_json,
    render_plan_svg,
    route_distance,
    validate_routes,
)
from .dynamic import (
    InfeasibleFleetError,
    ReroutingError,
    apply_progress,
    compile_rerouting,
    rerouted_plan_distance,
    validate_rerouted,
)
from .instance import Customer, Instance, InstanceError, parse_instance, validate_instance
from .layout import (
    DEFAULT_SUBTOUR_CAP,
    SubtourExplosionError,
    VariableLayout,
    build_layout,
    estimate_size,
    read_layout_sidecar,
    write_layout_sidecar,
)
from .solver import (
    DEFAULT_EXHAUSTIVE_CAP,
    AnnealSchedule,
    DimensionError,
    SampleSet,
    export_qubo,
    solve_exhaustive,
    solve_simulated_annealing,
)

EXIT_OK = 0
EXIT_SCHEMA = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INVALID_INSTANCE = 4
EXIT_INFEASIBLE = 5
EXIT_TOO_LARGE = 6

MAX_PENALTY_RETRIES = 5

SEED_ENV = "VRPQUBO_SEED"
THREADS_ENV = "VRPQUBO_THREADS"


class _CliFailure(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        self.message = message
        super().__init__(message)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _CliFailure(EXIT_IO, f"cannot read {path}: {exc}") from None


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise _CliFailure(EXIT_IO, f"cannot write {path}: {exc}") from None


def _load_instance(path: str, *, enforce_valid: bool = True) -> Instance:
    inst = parse_instance(_read_text(path))
    diagnostics = validate_instance(inst)
    for diag in diagnostics:
        if diag.severity == "warning":
            print(f"warning: {diag.message}", file=sys.stderr)
    errors = [d for d in diagnostics if d.severity == "error"]
    if errors and enforce_valid:
        text = "; ".join(d.message for d in errors)
        raise _CliFailure(EXIT_INVALID_INSTANCE, f"instance is invalid: {text}")
    return inst


def _config_hash(payload: dict[str, Any]) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _meta(args: argparse.Namespace, seed: int | None) -> dict[str, Any]:
    resolved = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and v is not None
    }
    return {
        "tool": f"vrpqubo {__version__}",
        "config": _config_hash(resolved),
        "seed": seed,
    }


def _meta_comments(meta: dict[str, Any]) -> list[str]:
    return [f"{k} {v}" for k, v in meta.items()]


def _compile_config(args: argparse.Namespace) -> CompileConfig:
    penalty = None
    if getattr(args, "penalty", None) is not None:
        penalty = PenaltyConfig(args.penalty)
    return CompileConfig(
        penalty=penalty,
        flow_form=getattr(args, "flow_form", "corrected"),
        tight_slack=bool(getattr(args, "tight_slack", False)),
        subtour_cap=getattr(args, "subtour_cap", DEFAULT_SUBTOUR_CAP),
    )


def _resolve_seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if os.environ.get(SEED_ENV):
        try:
            return int(os.environ[SEED_ENV])
        except ValueError:
            raise _CliFailure(EXIT_USAGE, f"{SEED_ENV} must be an integer")
    return 0

def _resolve_threads(args: argparse.Namespace) -> int:
    value = getattr(args, "threads", None)
    if value is None and os.environ.get(THREADS_ENV):
        try:
            value = int(os.environ[THREADS_ENV])
        except ValueError:
            raise _CliFailure(EXIT_USAGE, f"{THREADS_ENV} must be an integer")
    value = 1 if value is None else value
    if value < 1:
        raise _CliFailure(EXIT_USAGE, "--threads must be >= 1")
    # Restart chains are an associative min-merge, so the result never
    # depends on this value; the sampler runs them vectorized regardless.
    return value


def _frac_text(value: Fraction) -> str:
    return str(int(value)) if value.denominator == 1 else f"{value} ({float(value):.6g})"


# -- subcommands ---------------------------------------------------------------


def _cmd_validate(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance, enforce_valid=False)
    diagnostics = validate_instance(inst)
    if args.plan:
        plan = plan_from_json(_read_text(args.plan))
        report = validate_routes(plan, inst)
        _print_report(report)
        if not report.ok:
            raise _CliFailure(EXIT_INFEASIBLE, "plan fails validation")
        print(f"distance: {_frac_text(route_distance(plan, inst))}")
        return EXIT_OK
    for diag in diagnostics:
        print(f"{diag.severity}: {diag.message}")
    if any(d.severity == "error" for d in diagnostics):
        raise _CliFailure(EXIT_INVALID_INSTANCE, "instance is invalid")
    print(
        f"ok: {len(inst.customers)} customers, {len(inst.vehicles)} vehicles, "
        f"{len(inst.depots)} depots"
    )
    return EXIT_OK


def _cmd_estimate(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance, enforce_valid=False)
    report = estimate_size(inst, tight_slack=args.tight_slack)
    if args.json:
        print(
            json.dumps(
                {
                    "route_bits": report.route_bits,
                    "subtour_slack_bits": report.subtour_slack_bits,
                    "vehicle_slack_bits": report.vehicle_slack_bits,
                    "depot_slack_bits": report.depot_slack_bits,
                    "total": report.total,
                },
                indent=2,
            )
        )
        return EXIT_OK
    print(f"route bits     {report.route_bits:8d}")
    print(f"subtour slack  {report.subtour_slack_bits:8d}")
    print(f"vehicle slack  {report.vehicle_slack_bits:8d}")
    print(f"depot slack    {report.depot_slack_bits:8d}")
    print(f"total          {report.total:8d}")
    return EXIT_OK


def _model_paths(args: argparse.Namespace) -> tuple[str, str]:
    out = args.output or str(Path(args.instance).with_suffix(".qubo"))
    sidecar = args.layout_out or out + ".layout"
    return out, sidecar


def _cmd_compile(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance)
    model, layout = assemble(inst, _compile_config(args))
    meta = _meta(args, None)
    out, sidecar = _model_paths(args)
    _write_text(out, export_qubo(model, layout, comments=_meta_comments(meta)))
    _write_text(sidecar, write_layout_sidecar(layout, comments=_meta_comments(meta)))
    print(
        f"wrote {out} ({model.dimension} bits, {model.num_terms()} terms, "
        f"penalty {model.penalty.weight}, scale {model.distance_scale}) and {sidecar}"
    )
    return EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance)
    model, layout = assemble(inst, _compile_config(args))
    meta = _meta(args, None)
    if args.format == "qubo":
        text = export_qubo(model, layout, comments=_meta_comments(meta))
    else:
        ising = qubo_to_ising(model)
        lines = ["# vrpqubo ising model"]
        lines.extend(f"# {c}" for c in _meta_comments(meta))
        lines.append(
            f"ising {ising.dimension} {ising.offset.numerator} "
            f"{ising.offset.denominator} {ising.distance_scale}"
        )
        for p in sorted(ising.h):
            v = ising.h[p]
            lines.append(f"{p} {p} {v.numerator} {v.denominator}")
        for (p, q) in sorted(ising.J):
            v = ising.J[(p, q)]
            lines.append(f"{p} {q} {v.numerator} {v.denominator}")
        text = "\n".join(lines) + "\n"
    if args.output:
        _write_text(args.output, text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _schedule_from(args: argparse.Namespace, seed: int) -> AnnealSchedule:
    if args.schedule:
        parts = args.schedule.split(",")
        if len(parts) != 4:
            raise _CliFailure(
                EXIT_USAGE, "--schedule wants initial,final,sweeps,restarts"
            )
        try:
            return AnnealSchedule(
                initial_temperature=float(parts[0]),
                final_temperature=float(parts[1]),
                sweeps=int(parts[2]),
                restarts=int(parts[3]),
                seed=seed,
            )
        except ValueError as exc:
            raise _CliFailure(EXIT_USAGE, f"bad --schedule: {exc}") from None
    return AnnealSchedule(seed=seed)


def _solve_model(model: QuboModel, args: argparse.Namespace, seed: int) -> SampleSet:
    if args.solver == "exhaustive":
        return solve_exhaustive(model, top=args.top)
    return solve_simulated_annealing(model, _schedule_from(args, seed))


def _print_report(report: ValidationReport) -> None:
    cells = []
    for check in report.checks:
        if check.passed:
            cells.append(f"{check.constraint} ok")
        else:
            cells.append(f"{check.constraint} FAIL {list(check.witnesses)}")
    print("validation: " + " | ".join(cells))


def _print_plan(plan: RoutePlan) -> None:
    print("plan:")
    for k in sorted(plan.routes):
        print(f"  {k}: " + " -> ".join(plan.routes[k]))


def _cmd_solve(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance)
    seed = _resolve_seed(args)
    _resolve_threads(args)
    config = _compile_config(args)
    meta = _meta(args, seed)

    attempt = 0
    while True:
        model, layout = assemble(inst, config)
        print(
            f"model: {model.dimension} bits, {model.num_terms()} terms, "
            f"penalty {model.penalty.weight}, scale {model.distance_scale}, "
            f"flow {model.flow_form}"
        )
        samples = _solve_model(model, args, seed)
        best = samples.best
        print(f"best energy: {best.energy}")
        try:
            plan = decode(best.bits, layout, inst)
            report = validate_routes(plan, inst)
            failure = None if report.ok else "plan fails validation"
        except DecodeError as exc:
            plan, report, failure = None, None, f"best sample does not decode: {exc}"

        if failure is None:
            distance = route_distance(plan, inst)
            print(f"distance: {_frac_text(distance)}")
            _print_plan(plan)
            _print_report(report)
            _print_top(samples, layout, inst, args.top)
            if args.output:
                _write_text(
                    args.output,
                    plan_to_json(plan, meta={**meta, "energy": best.energy}),
                )
                print(f"wrote {args.output}")
            return EXIT_OK

        print(f"infeasible: {failure}")
        if report is not None:
            _print_report(report)
        if not args.retry_penalty or attempt >= MAX_PENALTY_RETRIES:
            raise _CliFailure(
                EXIT_INFEASIBLE,
                "no feasible plan found"
                + ("" if not args.retry_penalty else f" after {attempt + 1} attempts"),
            )
        attempt += 1
        current = config.penalty.weight if config.penalty else model.penalty.weight
        config = CompileConfig(
            penalty=PenaltyConfig(max(1, 2 * current)),
            flow_form=config.flow_form,
            tight_slack=config.tight_slack,
            subtour_cap=config.subtour_cap,
        )
        print(f"retrying with penalty {config.penalty.weight}")


def _print_top(samples: SampleSet, layout: VariableLayout, inst: Instance, top: int) -> None:
    if top <= 1:
        return
    print(f"top {min(top, len(samples.records))} samples:")
    for record in samples.records[:top]:
        try:
            decoded = decode(record.bits, layout, inst)
            desc = "; ".join(
                f"{k}:" + ">".join(decoded.routes[k]) for k in sorted(decoded.routes)
            )
        except DecodeError as exc:
            desc = f"undecodable ({exc.kind})"
        print(f"  energy {record.energy}  count {record.count}  {desc}")


def _parse_bits(text: str, expected: int) -> list[int]:
    cleaned = "".join(text.split())
    if not set(cleaned) <= {"0", "1"}:
        raise _CliFailure(EXIT_USAGE, "bitstring must contain only 0 and 1")
    if len(cleaned) != expected:
        raise _CliFailure(
            EXIT_USAGE, f"bitstring length {len(cleaned)} does not match layout {expected}"
        )
    return [int(c) for c in cleaned]


def _cmd_decode(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance, enforce_valid=False)
    if args.layout:
        layout = read_layout_sidecar(_read_text(args.layout))
    else:
        layout = build_layout(
            inst, subtour_cap=args.subtour_cap, tight_slack=args.tight_slack
        )
    text = _read_text(args.bits_file) if args.bits_file else args.bits
    if text is None:
        raise _CliFailure(EXIT_USAGE, "give --bits or --bits-file")
    bits = _parse_bits(text, layout.total_bits)
    try:
        plan = decode(bits, layout, inst)
    except DecodeError as exc:
        raise _CliFailure(EXIT_INFEASIBLE, f"bitstring does not decode: {exc}")
    _print_plan(plan)
    report = validate_routes(plan, inst)
    _print_report(report)
    if not report.ok:
        raise _CliFailure(EXIT_INFEASIBLE, "decoded plan fails validation")
    print(f"distance: {_frac_text(route_distance(plan, inst))}")
    if args.output:
        _write_text(args.output, plan_to_json(plan, meta=_meta(args, None)))
        print(f"wrote {args.output}")
    return EXIT_OK


def _parse_requests(text: str) -> tuple[list[Customer], dict | None]:
    doc = json.loads(text)
    if isinstance(doc, dict):
        doc = doc.get("requests", [])
    if not isinstance(doc, list):
        raise _CliFailure(EXIT_SCHEMA, "requests document must be an array")
    requests: list[Customer] = []
    distances: dict[str, Any] = {}
    for n, rec in enumerate(doc):
        if not isinstance(rec, dict) or "id" not in rec or "demand" not in rec:
            raise _CliFailure(EXIT_SCHEMA, f"requests[{n}] needs id and demand")
        position = None
        if rec.get("position") is not None:
            position = (
                Fraction(str(rec["position"][0])),
                Fraction(str(rec["position"][1])),
            )
        requests.append(
            Customer(id=str(rec["id"]), demand=int(rec["demand"]), position=position)
        )
        if "distances" in rec:
            distances[str(rec["id"])] = rec["distances"]
    return requests, (distances or None)


def _cmd_reroute(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance)
    plan = plan_from_json(_read_text(args.plan))
    progress_doc = json.loads(_read_text(args.progress))
    if isinstance(progress_doc, dict) and "steps" in progress_doc:
        progress_doc = progress_doc["steps"]
    if not isinstance(progress_doc, dict):
        raise _CliFailure(EXIT_SCHEMA, "progress document must map vehicle ids to counts")
    steps = {str(k): int(v) for k, v in progress_doc.items()}
    requests, request_distances = (
        _parse_requests(_read_text(args.requests)) if args.requests else ([], None)
    )
    seed = _resolve_seed(args)
    _resolve_threads(args)

    state = apply_progress(
        inst, plan, steps, requests, request_distances=request_distances
    )
    rerouting = compile_rerouting(state, _compile_config(args))
    meta = _meta(args, seed)
    print(
        f"pending: {len(state.pending)} customers; participating vehicles: "
        f"{', '.join(rerouting.participating)}"
        + (f"; excluded: {', '.join(rerouting.excluded)}" if rerouting.excluded else "")
    )
    out = args.output or str(Path(args.instance).with_suffix(".reroute.qubo"))
    sidecar = args.layout_out or out + ".layout"
    comments = _meta_comments(meta) + [
        "participating " + ",".join(rerouting.participating),
        "excluded " + (",".join(rerouting.excluded) or "-"),
    ]
    _write_text(out, export_qubo(rerouting.model, rerouting.layout, comments=comments))
    _write_text(sidecar, write_layout_sidecar(rerouting.layout, comments=comments))
    print(f"wrote {out} and {sidecar}")

    if not args.solve:
        return EXIT_OK
    samples = _solve_model(rerouting.model, args, seed)
    best = samples.best
    print(f"best energy: {best.energy}")
    try:
        new_plan = decode(best.bits, rerouting.layout, rerouting.reduced_instance)
    except DecodeError as exc:
        raise _CliFailure(EXIT_INFEASIBLE, f"best sample does not decode: {exc}")
    report = validate_rerouted(rerouting, new_plan)
    _print_plan(new_plan)
    _print_report(report)
    if not report.ok:
        raise _CliFailure(EXIT_INFEASIBLE, "rerouted plan fails validation")
    print(f"distance: {_frac_text(rerouted_plan_distance(state, new_plan))}")
    if args.plan_out:
        _write_text(
            args.plan_out, plan_to_json(new_plan, meta={**meta, "energy": best.energy})
        )
        print(f"wrote {args.plan_out}")
    return EXIT_OK


def _cmd_render(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance, enforce_valid=False)
    plan = plan_from_json(_read_text(args.plan)) if args.plan else None
    try:
        svg = render_plan_svg(inst, plan, comments=_meta_comments(_meta(args, None)))
    except ValueError as exc:
        raise _CliFailure(EXIT_SCHEMA, str(exc))
    _write_text(args.output, svg)
    print(f"wrote {args.output}")
    return EXIT_OK


# -- parser wiring ---------------------------------------------------------------


def _add_compile_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--penalty", "-B", type=int, default=None,
                   help="uniform constraint penalty weight (default: 1 + sum of distances)")
    p.add_argument("--flow-form", choices=["corrected", "paper"], default="corrected",
                   help="continuity penalty form (default corrected; 'paper' charges route endpoints)")
    p.add_argument("--tight-slack", action="store_true",
                   help="slack registers that max out exactly at the bound")
    p.add_argument("--subtour-cap", type=int, default=DEFAULT_SUBTOUR_CAP,
                   help=f"max customers before refusing subset expansion (default {DEFAULT_SUBTOUR_CAP})")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", choices=["annealing", "exhaustive"], default="annealing")
    p.add_argument("--exhaustive", dest="solver", action="store_const", const="exhaustive",
                   help="shorthand for --solver exhaustive")
    p.add_argument("--schedule", default=None, metavar="T0,TF,SWEEPS,RESTARTS",
                   help="annealing schedule (default: max|coeff|,0.1,2000,20)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (env {SEED_ENV}; default 0)")
    p.add_argument("--top", type=int, default=1, help="samples to keep and report")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker hint (env {THREADS_ENV}); results never depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrpqubo",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"vrpqubo {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="check an instance file or a plan against it")
    p.add_argument("instance")
    p.add_argument("--plan", default=None)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("estimate", help="report the decision-variable budget")
    p.add_argument("instance")
    p.add_argument("--tight-slack", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("compile", help="write the model and its layout sidecar")
    p.add_argument("instance")
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--layout-out", default=None)
    _add_compile_flags(p)
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("export", help="emit the model text (qubo or ising form)")
    p.add_argument("instance")
    p.add_argument("--format", choices=["qubo", "ising"], default="qubo")
    p.add_argument("--output", "-o", default=None)
    _add_compile_flags(p)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("solve", help="compile, minimize, decode, and validate")
    p.add_argument("instance")
    p.add_argument("--output", "-o", default=None, help="write the plan as JSON")
    p.add_argument("--retry-penalty", action="store_true",
                   help=f"double the penalty and retry until the plan validates (max {MAX_PENALTY_RETRIES} retries)")
    _add_compile_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("decode", help="turn a bitstring into routes and validate them")
    p.add_argument("instance")
    p.add_argument("--bits", default=None)
    p.add_argument("--bits-file", default=None)
    p.add_argument("--layout", default=None, help="layout sidecar (default: recompute)")
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--tight-slack", action="store_true")
    p.add_argument("--subtour-cap", type=int, default=DEFAULT_SUBTOUR_CAP)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("reroute", help="compile (and optionally solve) the pending work")
    p.add_argument("instance")
    p.add_argument("--plan", required=True)
    p.add_argument("--progress", required=True, help="JSON map: vehicle id -> stops served")
    p.add_argument("--requests", default=None)
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--layout-out", default=None)
    p.add_argument("--solve", action="store_true")
    p.add_argument("--plan-out", default=None)
    _add_compile_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_reroute)

    p = sub.add_parser("render", help="draw the instance (and a plan) as SVG")
    p.add_argument("instance")
    p.add_argument("--plan", default=None)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=_cmd_render)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliFailure as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.code
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, (SubtourExplosionError, DimensionError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_TOO_LARGE
        if isinstance(exc, InfeasibleFleetError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        if isinstance(exc, ReroutingError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_SCHEMA
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
