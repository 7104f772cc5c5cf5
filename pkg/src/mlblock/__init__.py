"""Blockmodeling of multilevel networks.

Networks live on several disjoint unit sets (levels) joined by two-mode
ties.  This package finds partitions of every level at once by
minimizing a weighted sum-of-squares criterion over pre-specified block
models, and ships the supporting machinery: network reshaping across
levels, partition comparison statistics, and config-driven analysis
runs with deterministic, self-verifying result documents.
"""

from __future__ import annotations

from .blocks import (
    DNC,
    NULL,
    BlockType,
    CriterionBreakdown,
    EquivalenceSpec,
    PrespecifiedModel,
    RelationTerm,
    WeightVector,
    block_fit,
    block_inconsistency,
    cohesive_prespec,
    collapse_to_single_block,
    complete,
    compute_weights,
    equal_weights,
    fit_blocks_from_labels,
    model_from_json,
    model_to_json,
    one_cluster_criterion,
    one_to_one_prespec,
    relation_criterion,
    scale_weight,
    total_criterion,
    twice_density,
    uniform_prespec,
)
from .compare import (
    ImageMatrix,
    adjusted_rand,
    cramers_v,
    forced_fit,
    image_matrix,
    max_error,
    rand_index,
    tie_overlap,
)
from .errors import (
    CapacityError,
    DegenerateError,
    DegenerateWeightError,
    FeasibilityError,
    MembershipError,
    MlblockError,
    SpecError,
    TieError,
    ValidationError,
)
from .network import (
    Level,
    MultilevelNetwork,
    Relation,
    build_network,
    density,
    generate_planted,
    load_network,
    network_summary,
    read_matrix,
    reciprocity,
    tie_count,
    write_matrix,
    write_network,
)
from .partition import MultiPartition, is_feasible, partition_from_labels
from .reshape import (
    ReshapeOptions,
    build_extended,
    build_multirelational,
    expand_partition,
    reshape_down,
)
from .runs import (
    AnalysisConfig,
    attribute_profile,
    config_from_mapping,
    document_json,
    emit_ordered_matrix,
    load_analysis_config,
    resolve_model,
    run_analysis,
    run_conversion,
    run_multilevel,
    run_separate,
    write_document,
    write_run_outputs,
)
from .search import (
    SearchConfig,
    SearchResult,
    StepRecord,
    exhaustive_search,
    local_search,
    partitions_into_clusters,
    refine,
    restart_search,
    stirling_partition_count,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "MlblockError",
    "ValidationError",
    "SpecError",
    "FeasibilityError",
    "CapacityError",
    "DegenerateWeightError",
    "MembershipError",
    "TieError",
    "DegenerateError",
    # network
    "Level",
    "Relation",
    "MultilevelNetwork",
    "build_network",
    "density",
    "tie_count",
    "reciprocity",
    "network_summary",
    "generate_planted",
    "load_network",
    "write_network",
    "read_matrix",
    "write_matrix",
    # partitions
    "MultiPartition",
    "partition_from_labels",
    "is_feasible",
    # blocks and criteria
    "BlockType",
    "NULL",
    "DNC",
    "complete",
    "block_inconsistency",
    "block_fit",
    "PrespecifiedModel",
    "cohesive_prespec",
    "one_to_one_prespec",
    "uniform_prespec",
    "collapse_to_single_block",
    "model_to_json",
    "model_from_json",
    "twice_density",
    "WeightVector",
    "equal_weights",
    "EquivalenceSpec",
    "RelationTerm",
    "CriterionBreakdown",
    "fit_blocks_from_labels",
    "relation_criterion",
    "total_criterion",
    "one_cluster_criterion",
    "compute_weights",
    "scale_weight",
    # search
    "SearchConfig",
    "SearchResult",
    "StepRecord",
    "local_search",
    "refine",
    "restart_search",
    "exhaustive_search",
    "stirling_partition_count",
    "partitions_into_clusters",
    # reshape
    "ReshapeOptions",
    "reshape_down",
    "expand_partition",
    "build_extended",
    "build_multirelational",
    # compare
    "rand_index",
    "adjusted_rand",
    "tie_overlap",
    "cramers_v",
    "ImageMatrix",
    "image_matrix",
    "forced_fit",
    "max_error",
    # runs
    "AnalysisConfig",
    "config_from_mapping",
    "load_analysis_config",
    "resolve_model",
    "run_separate",
    "run_conversion",
    "run_multilevel",
    "run_analysis",
    "document_json",
    "write_document",
    "write_run_outputs",
    "emit_ordered_matrix",
    "attribute_profile",
]
