"""Entropy-at-scale, metric mean dimension, and measure entropies of flows.

Built-in exactly-analyzable systems (suspensions of truncated shifts, torus
rotations) expose flow evaluation and metrics; on top of them the package
computes Bowen-ball counts, entropy-at-scale slopes and metric mean
dimension, Caratheodory-Pesin critical exponents on subsets, and the
Katok / Brin-Katok / Shapira / Renyi measure entropies, with cross-checked
inequalities wired into a `flowdim verify` CLI task.
"""

__version__ = "0.1.0"

from .bowen import (
    BowenSpec,
    CloudSpec,
    CountResult,
    PointCloud,
    bowen_distance,
    full_enumeration_cloud,
    lattice_cloud,
    max_separated,
    min_diameter_cover,
    min_spanning,
    random_cloud,
)
from .cpstruct import (
    CPInstance,
    WeightedCPInstance,
    bowen_mdim_subset,
    build_cp_instance,
    cp_critical,
    cp_outer,
    frostman_check,
    weighted_outer,
)
from .errors import CapacityError, FeasibilityError, FlowdimError, SchemaError
from .localent import LocalEntropyResult, local_entropy_at, sup_local_entropy
from .mdim import (
    MdimEstimate,
    ScaleProfile,
    compare_time_sampling,
    entropy_at_scale,
    finite_union_check,
    mdim_profile,
)
from .measures import (
    MeasureModel,
    PartitionSpec,
    ball_mass,
    ball_mass_mc,
    brin_katok_local,
    dynamical_partition_entropy,
    grid_partition,
    katok_count,
    katok_entropy_profile,
    partition_entropy,
    renyi_id_profile,
    shapira_count,
)
from .systems import (
    FlowPoint,
    FlowSystem,
    LipschitzEstimate,
    SystemDescriptor,
    estimate_lipschitz,
    make_system,
)

__all__ = [
    "__version__",
    "BowenSpec", "CloudSpec", "CountResult", "PointCloud", "bowen_distance",
    "full_enumeration_cloud", "lattice_cloud", "max_separated",
    "min_diameter_cover", "min_spanning", "random_cloud",
    "CPInstance", "WeightedCPInstance", "bowen_mdim_subset", "build_cp_instance",
    "cp_critical", "cp_outer", "frostman_check", "weighted_outer",
    "CapacityError", "FeasibilityError", "FlowdimError", "SchemaError",
    "LocalEntropyResult", "local_entropy_at", "sup_local_entropy",
    "MdimEstimate", "ScaleProfile", "compare_time_sampling", "entropy_at_scale",
    "finite_union_check", "mdim_profile",
    "MeasureModel", "PartitionSpec", "ball_mass", "ball_mass_mc",
    "brin_katok_local", "dynamical_partition_entropy", "grid_partition",
    "katok_count", "katok_entropy_profile", "partition_entropy",
    "renyi_id_profile", "shapira_count",
    "FlowPoint", "FlowSystem", "LipschitzEstimate", "SystemDescriptor",
    "estimate_lipschitz", "make_system",
]
