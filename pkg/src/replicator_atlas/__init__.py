"""Replicator dynamics on congestion and network coordination games."""

from .basins import (
    ApoaEstimate,
    BasinRaster,
    GwBounds,
    StarOracleAnswer,
    apoa_monte_carlo,
    basin_raster,
    gw_apoa_bounds,
    gw_polytope_classify,
    stag_hunt_basin_measures,
    stag_hunt_classify,
    stag_hunt_manifold,
    star_fixed_point_solve,
    star_oracle,
)
from .dynamics import (
    IntegratorOptions,
    LimitReport,
    Trajectory,
    detect_limit,
    integrate,
    integrate_batch,
    replicator_field,
    sample_uniform_profile,
)
from .equilibria import (
    NashCertificate,
    StabilityReport,
    classify_stability,
    enumerate_weakly_stable_supports,
    is_nash,
    is_weakly_stable,
    randomized_independent_set_check,
    uncountable_family,
)
from .errors import (
    AssumptionError,
    CapacityError,
    ConfigurationError,
    ConstructionError,
    DimensionError,
    DomainError,
    NumericalFailure,
    PreconditionError,
    ReplicatorAtlasError,
    SpecParseError,
)
from .games import (
    CongestionGame,
    CoordinationEdge,
    MixedProfile,
    NetworkCoordinationGame,
    balls_bins,
    gw_game,
    makespan,
    optimum,
    social_objective,
    star_stag_hunt,
)
from .invariants import (
    InvariantSpec,
    gw_invariant,
    gw_log_invariant,
    kl_bipartite_invariant,
    local_lyapunov_Z,
    potential,
    relative_entropy,
    stag_hunt_log_invariant,
    star_log_odds_invariant,
)

__version__ = "0.1.0"
