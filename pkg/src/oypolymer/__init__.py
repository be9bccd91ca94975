"""Simulation lab for the semi-discrete Brownian directed polymer and its
zero-temperature last-passage counterpart.

Core surfaces:

- ``environment``: reproducible discretized fields of two-sided Brownian
  motions (counter-based per-level streams, exact increment algebra).
- ``partition`` / ``lpp``: log-domain and max-plus dynamic programming for
  point-to-point and point-to-line quantities on a shared strict-simplex
  discretization.
- ``stationary``: the driven boundary model (ratio, log-field, and
  transformed-increment arrays) and its exact and distributional identities.
- ``busemann`` / ``paths``: receding-endpoint ratio limits, comparison
  sandwiches, and exact-grid quenched path sampling.
- ``free_energy``: restricted-endpoint free-energy experiments.
- ``cli`` / ``runner``: the ``oy`` experiment runner.
"""

from .environment import (
    ArrayField,
    BrownianField,
    Environment,
    TimeGrid,
    ZeroField,
    derive_seed,
    zero_environment,
)
from .errors import (
    ConfigError,
    GridAlignmentError,
    MemoryBudgetError,
    TruncationError,
)
from .numerics import (
    DistributionSpec,
    KSResult,
    NEG_INF,
    digamma,
    free_energy_p,
    inverse_trigamma,
    ks_statistic,
    log_sum_exp,
    trigamma,
)
from .partition import (
    BoundaryWeight,
    PartitionSlices,
    Restriction,
    backward_slices,
    evolve_sde,
    forward_slices,
    point_to_line_log_zbar,
    point_to_point_log_z,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayField",
    "BoundaryWeight",
    "BrownianField",
    "ConfigError",
    "DistributionSpec",
    "Environment",
    "GridAlignmentError",
    "KSResult",
    "MemoryBudgetError",
    "NEG_INF",
    "PartitionSlices",
    "Restriction",
    "TimeGrid",
    "TruncationError",
    "ZeroField",
    "backward_slices",
    "derive_seed",
    "digamma",
    "evolve_sde",
    "forward_slices",
    "free_energy_p",
    "inverse_trigamma",
    "ks_statistic",
    "log_sum_exp",
    "point_to_line_log_zbar",
    "point_to_point_log_z",
    "trigamma",
    "zero_environment",
    "__version__",
]
