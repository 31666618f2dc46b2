"""Compile multi-depot capacitated vehicle routing into QUBO form and solve it."""

from .compiler import (
    CompileConfig,
    IsingModel,
    PenaltyConfig,
    QuboModel,
    QuboTerms,
    assemble,
    default_penalty_weight,
    distance_scale,
    energy,
    expand_squared_affine,
    ising_to_qubo,
    qubo_to_ising,
)
from .decoder import (
    DecodeError,
    RoutePlan,
    ValidationReport,
    decode,
    encode,
    plan_from_json,
    plan_to_json,
    render_plan_svg,
    route_distance,
    validate_routes,
)
from .dynamic import (
    ExecutionState,
    InfeasibleFleetError,
    ReroutingError,
    ReroutingModel,
    apply_progress,
    compile_rerouting,
    remaining_depot_capacity,
    remaining_vehicle_capacity,
    rerouted_plan_distance,
    validate_rerouted,
)
from .instance import (
    Customer,
    Depot,
    DistanceModel,
    Instance,
    InstanceError,
    ReferentialError,
    SchemaError,
    Vehicle,
    parse_instance,
    render_instance,
    validate_instance,
)
from .layout import (
    SlackRegister,
    SubtourExplosionError,
    VariableLayout,
    build_layout,
    estimate_size,
    read_layout_sidecar,
    slack_width,
    write_layout_sidecar,
)
from .solver import (
    AnnealSchedule,
    DimensionError,
    SampleRecord,
    SampleSet,
    all_energies,
    export_qubo,
    import_qubo,
    solve_exhaustive,
    solve_simulated_annealing,
)

__version__ = "0.1.0"
