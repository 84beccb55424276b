"""Dependent-percolation cellular automata on the triangular lattice.

Core pieces: deterministic-after-sampling spin dynamics (majority-style
rules on triangular and hexagonal lattices), exact interface extraction on
the dual lattice, local stability certificates with energy bookkeeping, a
compactified plane metric with curve and curve-family distances, and batch
experiments driven by counter-based seeding so every result is a pure
function of its parameters.
"""

from .errors import (
    FormatError,
    InternalConsistencyError,
    InvariantViolationError,
    MarginExhaustedError,
    PerculabError,
    ResourceLimitError,
    UsageError,
    WindowAccessError,
)
from .lattice import (
    DIRECTIONS,
    Cell,
    DualEdge,
    HSite,
    Window,
    are_neighbors,
    common_a_site,
    embed,
    hex_distance,
    neighbors_h,
    neighbors_t,
    star_triangle,
    star_triangle_inverse,
)
from .dynamics import (
    RULE_NAMES,
    PairingScheme,
    RuleKind,
    RunRecord,
    SpinConfig,
    cell_uniforms,
    energy_delta,
    energy_delta_parts,
    flips_between,
    local_energy,
    rule_from_name,
    run,
    sample_initial,
    step_domany,
    step_q,
    step_sync_h,
    step_t,
)
from .topology import (
    BoundaryCurve,
    Cluster,
    ParentMap,
    StabilityCertificate,
    TimeSlice,
    boundaries,
    classify_b_loop,
    clusters,
    curve_diameter,
    enclosed_region_mask,
    extract_m_path,
    interior_cells,
    interior_mask,
    is_m_path,
    label_grid,
    m_loop_from_closed_walk,
    parent_map,
    stability_certificates,
    stable_edges,
    unsatisfied_edge_masks,
)
from .geometry import (
    DEFAULT_STEP,
    EMPTY_FAMILY_DISTANCE,
    INFINITY,
    MAX_POINT_DISTANCE,
    CompactPoint,
    Curve,
    clip_curve_to_ball,
    clip_family_to_ball,
    curve_distance,
    densify,
    discrete_frechet,
    family_distance,
    hausdorff_family_distance,
    point_distance,
    point_distance_to_infinity,
    scale_distance_bounds,
    sphere_embed,
)
from .experiments import (
    ExperimentSpec,
    ancestor_check,
    annulus_circuit,
    boundary_family,
    cluster_size_stats,
    energy_monotonicity_check,
    fixation_stats,
    percolation_probe,
    scaling_coupling_diagnostic,
    scaling_experiment,
    square_crossing,
    stable_edge_decay,
    star_triangle_equivalence_check,
    sync_independence_diagnostic,
    synchronous_decomposition_check,
    verify_trajectory,
    window_for_observation,
)
from .fileio import (
    CurveRecord,
    read_curves,
    read_manifest,
    read_snapshot,
    write_curves,
    write_manifest,
    write_results,
    write_snapshot,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
