"""reqsync: rationalize siloed use-case models and merge them with traceability."""

from .crossdep import (
    CellState,
    CellStatus,
    CrossKind,
    Triad,
    classify,
    flip,
    is_synchronized,
    pending,
    permitted_kinds,
    query,
)
from .engine import (
    ImpactReport,
    Project,
    Resolution,
    add_model,
    apply_resolution,
    classify_cell,
    global_pending,
    project_rationalized,
    propagate_edit,
    recipe_contradiction_priority,
    recipe_implication_as_modes,
    recipe_implication_as_usage,
)
from .errors import ReqSyncError
from .model import (
    AddDep,
    AddEntity,
    AddExtensionPoint,
    DepKind,
    Edit,
    Entity,
    EntityId,
    EntityKind,
    InModelDep,
    Model,
    RemoveDep,
    RemoveEntity,
    RenameEntity,
    adjacency_matrix,
    apply_edit,
    entity_digest,
)
from .synthesis import (
    EquivalenceClasses,
    MergeBlocked,
    MergedModel,
    check_mergeability,
    equivalence_classes,
    merge,
)

__version__ = "0.1.0"
