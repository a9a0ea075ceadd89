"""Project-level rationalization workflow.

A project is an ordered list of models plus one triad per unordered
model pair. All operations are pure: they take a project snapshot and
return a revised one with the revision counter bumped, which is what
the optimistic-concurrency checks key on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from . import crossdep
from .crossdep import (
    CellState,
    CrossKind,
    IMPLICATION_KINDS,
    Triad,
    UnknownCellError,
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
    Model,
    apply_edit,
    entity_digest,
    model_digests,
)

TriadKey = tuple[str, str]


class EngineError(ReqSyncError):
    pass


class UnknownModelError(EngineError):
    pass


class DuplicateModelError(EngineError):
    pass


class UnknownTriadError(EngineError):
    pass


class ConcurrencyError(EngineError):
    pass


class RecipeError(EngineError):
    pass


@dataclass(frozen=True)
class Project:
    models: tuple[Model, ...] = ()
    triads: tuple[Triad, ...] = ()
    revision: int = 0

    def __post_init__(self) -> None:
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise DuplicateModelError("model names must be unique within a project")
        index = {name: i for i, name in enumerate(names)}
        expected = {
            (names[i], names[j]) for i in range(len(names)) for j in range(i + 1, len(names))
        }
        actual = {t.key for t in self.triads}
        if actual != expected:
            raise EngineError(
                "project must hold exactly one triad per unordered model pair"
            )
        ordered = sorted(self.triads, key=lambda t: (index[t.left], index[t.right]))
        object.__setattr__(self, "triads", tuple(ordered))

    def model_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.models)

    def model_index(self, name: str) -> int:
        for i, m in enumerate(self.models):
            if m.name == name:
                return i
        raise UnknownModelError(f"no model named {name!r} in project")

    def model(self, name: str) -> Model:
        return self.models[self.model_index(name)]

    def triad(self, a: str, b: str) -> Triad:
        for triad in self.triads:
            if {a, b} == {triad.left, triad.right}:
                return triad
        raise UnknownTriadError(f"no triad for model pair {a!r}, {b!r}")


@dataclass(frozen=True)
class ImpactReport:
    """What one or more edits did to the cross-model grids."""

    edits: tuple[tuple[str, Edit], ...] = ()
    new_cells: tuple[tuple[TriadKey, EntityId, EntityId], ...] = ()
    stale_cells: tuple[tuple[TriadKey, EntityId, EntityId, CrossKind], ...] = ()
    affected_triads: frozenset[TriadKey] = frozenset()

    @property
    def is_empty(self) -> bool:
        return not (self.new_cells or self.stale_cells or self.affected_triads)


@dataclass(frozen=True)
class Resolution:
    """A previewable plan: model edits plus the cell reviews they settle.

    Computed against one project revision and only applicable at that
    exact revision; reclassification targets are stored in the triad's
    own orientation.
    """

    recipe: str
    revision: int
    triad: TriadKey
    cells: tuple[tuple[EntityId, EntityId], ...]
    edits: tuple[tuple[str, Edit], ...]
    reclassifications: tuple[tuple[TriadKey, EntityId, EntityId, CrossKind], ...]


def empty_project() -> Project:
    return Project()


def add_model(project: Project, model: Model) -> Project:
    """Append a model; a fresh, fully pending triad appears per existing model."""
    if model.name in project.model_names():
        raise DuplicateModelError(f"project already contains a model named {model.name!r}")
    new_triads = tuple(Triad.from_models(existing, model) for existing in project.models)
    return Project(
        models=project.models + (model,),
        triads=project.triads + new_triads,
        revision=project.revision + 1,
    )


def propagate_edit(project: Project, model_name: str, edit: Edit) -> tuple[Project, ImpactReport]:
    """Apply a model edit and ripple it through every touching triad.

    Added entities open a fully unclassified row/column per triad;
    entities whose digest changed invalidate every confirmed cell they
    participate in; removed entities take their cells with them. The
    input project is untouched, also on error.
    """
    old = project.model(model_name)
    new = apply_edit(old, edit)
    before = model_digests(old)
    after = model_digests(new)
    added = [id for id in after if id not in before]
    removed = [id for id in before if id not in after]
    changed = {id for id in after if id in before and after[id] != before[id]}

    new_cells: list[tuple[TriadKey, EntityId, EntityId]] = []
    stale_cells: list[tuple[TriadKey, EntityId, EntityId, CrossKind]] = []
    affected: set[TriadKey] = set()
    triads: list[Triad] = []
    for triad in project.triads:
        if model_name not in triad.key:
            triads.append(triad)
            continue
        revised = triad
        for id in removed:
            revised = crossdep.remove_entity(revised, id)
        for id in added:
            revised, created = crossdep.add_entity(revised, id, after[id])
            new_cells.extend((triad.key, row, col) for row, col in created)
        revised, invalidated = crossdep.mark_stale(revised, changed, after)
        stale_cells.extend((triad.key, row, col, kind) for row, col, kind in invalidated)
        if revised != triad:
            affected.add(triad.key)
        triads.append(revised)

    models = tuple(new if m.name == model_name else m for m in project.models)
    revised_project = Project(models, tuple(triads), project.revision + 1)
    report = ImpactReport(
        edits=((model_name, edit),),
        new_cells=tuple(new_cells),
        stale_cells=tuple(stale_cells),
        affected_triads=frozenset(affected),
    )
    return revised_project, report


def classify_cell(
    project: Project,
    row: EntityId,
    col: EntityId,
    kind: CrossKind,
    *,
    comment: str | None = None,
) -> Project:
    """Review one cell; the endpoints' current digests become the baseline."""
    return _set_cell(project, row, col, kind, comment=comment, force=False)


def _set_cell(
    project: Project,
    row: EntityId,
    col: EntityId,
    kind: CrossKind,
    *,
    comment: str | None,
    force: bool,
) -> Project:
    triad = project.triad(row.model, col.model)
    if triad.left == row.model:
        r, c, k = row, col, kind
    else:
        r, c, k = col, row, crossdep.flip(kind)
    digests = {
        r: entity_digest(project.model(r.model), r),
        c: entity_digest(project.model(c.model), c),
    }
    if force:
        current = triad.state(r, c)
        if comment is None and current.kind == k:
            comment = current.comment
        revised = crossdep.reclassify(triad, r, c, k, comment=comment, digests=digests)
    else:
        revised = crossdep.classify(triad, r, c, k, comment=comment, digests=digests)
    return _with_triad(project, revised)


def _with_triad(project: Project, triad: Triad) -> Project:
    triads = tuple(triad if t.key == triad.key else t for t in project.triads)
    return Project(project.models, triads, project.revision + 1)


_KIND_RANK = {kind: index for index, kind in enumerate(CrossKind)}

PendingEntry = tuple[TriadKey, EntityId, EntityId, CellState]


def global_pending(project: Project) -> list[PendingEntry]:
    """Project-wide review queue.

    Stale cells come first: invalidated equivalences before other
    invalidated kinds, since those threaten the merge structure
    directly; unclassified cells follow in triad order, row-major.
    """
    stale: list[tuple[tuple, PendingEntry]] = []
    fresh: list[PendingEntry] = []
    for t_index, triad in enumerate(project.triads):
        for row, col, state in crossdep.pending(triad):
            entry = (triad.key, row, col, state)
            if state.is_stale:
                assert state.kind is not None
                rank = (_KIND_RANK[state.kind], t_index, row.sort_key, col.sort_key)
                stale.append((rank, entry))
            else:
                fresh.append(entry)
    stale.sort(key=lambda item: item[0])
    return [entry for _, entry in stale] + fresh


def stale_cells(project: Project) -> list[PendingEntry]:
    return [entry for entry in global_pending(project) if entry[3].is_stale]


def project_rationalized(project: Project) -> bool:
    return all(crossdep.is_synchronized(triad) for triad in project.triads)


# --- resolution recipes -----------------------------------------------------


DEFAULT_MODE_TEMPLATES = ("Operate {name} in Normal Mode", "Operate {name} in Test Mode")
DEFAULT_PRIORITY_LABEL = "priority condition"


def recipe_implication_as_usage(
    project: Project,
    triad_key: TriadKey,
    cells: Sequence[tuple[EntityId, EntityId]],
) -> Resolution:
    """Resolve implications by copying the implied use case next to its users.

    All cells must be confirmed implications sharing one implied use
    case Y. The plan copies Y into the implying side's model, wires a
    usage dependency from every implying use case to the copy, records
    the copy as equivalent to Y and settles the input cells as
    unrelated.
    """
    triad = project.triad(*triad_key)
    pairs = _normalize_cells(triad, cells)
    oriented = [_implication_endpoints(triad, row, col) for row, col in pairs]
    implied = {target for _, target in oriented}
    if len(implied) != 1:
        raise RecipeError("all cells must share the same implied use case")
    target = implied.pop()
    implying = [source for source, _ in oriented]
    _require_use_cases(implying + [target])

    host = project.model(implying[0].model)
    donor = project.model(target.model)
    copy_id = EntityId(host.name, "U", host.next_ordinal("U"))
    copy_name = _fresh_name(host, donor.entity(target).name)
    edits: list[tuple[str, Edit]] = [
        (host.name, AddEntity(copy_id, EntityKind.USE_CASE, copy_name))
    ]
    edits.extend((host.name, AddDep(DepKind.USE, x, copy_id)) for x in implying)

    reclass = _settle_target_triad(
        triad,
        inputs=pairs,
        new_ids=[copy_id],
        equivalences={_orient(triad, copy_id, target)},
        touched=set(implying),
    )
    return Resolution(
        "usage", project.revision, triad.key, tuple(pairs), tuple(edits), tuple(reclass)
    )


def recipe_implication_as_modes(
    project: Project,
    triad_key: TriadKey,
    cells: Sequence[tuple[EntityId, EntityId]],
    mode_names: tuple[str, str] = DEFAULT_MODE_TEMPLATES,
) -> Resolution:
    """Resolve a tester-style implication by splitting functions into modes.

    All cells must be confirmed implications sharing one implying use
    case Y (the tester). Every implied use case gains a normal-mode and
    a test-mode inclusion in its own model; the test-mode twin is
    repeated in Y's model and included by Y, and each twin pair is
    recorded as equivalent.
    """
    triad = project.triad(*triad_key)
    pairs = _normalize_cells(triad, cells)
    oriented = [_implication_endpoints(triad, row, col) for row, col in pairs]
    implying = {source for source, _ in oriented}
    if len(implying) != 1:
        raise RecipeError("all cells must share the same implying use case")
    tester = implying.pop()
    implied = [target for _, target in oriented]
    _require_use_cases(implied + [tester])
    normal_template, test_template = mode_names

    host = project.model(implied[0].model)
    tester_model = project.model(tester.model)
    next_host = host.next_ordinal("U")
    next_tester = tester_model.next_ordinal("U")
    host_names = {e.name for e in host.entities}
    tester_names = {e.name for e in tester_model.entities}

    edits: list[tuple[str, Edit]] = []
    new_host_ids: list[EntityId] = []
    new_tester_ids: list[EntityId] = []
    equivalences: set[tuple[EntityId, EntityId]] = set()
    test_mode_ids: list[tuple[EntityId, str]] = []
    for x in implied:
        x_name = host.entity(x).name
        normal_id = EntityId(host.name, "U", next_host)
        test_id = EntityId(host.name, "U", next_host + 1)
        next_host += 2
        normal_name = _fresh_label(_format_mode(normal_template, x_name), host_names)
        test_name = _fresh_label(_format_mode(test_template, x_name), host_names)
        edits.append((host.name, AddEntity(normal_id, EntityKind.USE_CASE, normal_name)))
        edits.append((host.name, AddDep(DepKind.INCLUDE, x, normal_id)))
        edits.append((host.name, AddEntity(test_id, EntityKind.USE_CASE, test_name)))
        edits.append((host.name, AddDep(DepKind.INCLUDE, x, test_id)))
        new_host_ids.extend((normal_id, test_id))
        test_mode_ids.append((test_id, test_name))
    for test_id, test_name in test_mode_ids:
        twin_id = EntityId(tester_model.name, "U", next_tester)
        next_tester += 1
        twin_name = _fresh_label(test_name, tester_names)
        edits.append((tester_model.name, AddEntity(twin_id, EntityKind.USE_CASE, twin_name)))
        edits.append((tester_model.name, AddDep(DepKind.INCLUDE, tester, twin_id)))
        new_tester_ids.append(twin_id)
        equivalences.add(_orient(triad, test_id, twin_id))

    reclass = _settle_target_triad(
        triad,
        inputs=pairs,
        new_ids=new_host_ids + new_tester_ids,
        equivalences=equivalences,
        touched=set(implied) | {tester},
    )
    return Resolution(
        "modes", project.revision, triad.key, tuple(pairs), tuple(edits), tuple(reclass)
    )


def recipe_contradiction_priority(
    project: Project,
    triad_key: TriadKey,
    cell: tuple[EntityId, EntityId],
    prioritized: str,
    extension_label: str = DEFAULT_PRIORITY_LABEL,
) -> Resolution:
    """Resolve a contradiction by letting the prioritized need interrupt the other.

    The prioritized use case is copied into the losing side's model,
    the losing use case gains an extension point, and the copy extends
    it there; the copy is recorded as equivalent to its original.
    ``prioritized`` is ``"row"`` or ``"col"`` relative to the cell as
    passed.
    """
    if prioritized not in ("row", "col"):
        raise RecipeError("prioritized side must be 'row' or 'col'")
    winner = cell[0] if prioritized == "row" else cell[1]
    loser = cell[1] if prioritized == "row" else cell[0]
    triad = project.triad(*triad_key)
    pairs = _normalize_cells(triad, [cell])
    row, col = pairs[0]
    state = triad.state(row, col)
    if not state.is_classified or state.kind != CrossKind.CONTRADICTS:
        raise RecipeError(f"cell ({row}, {col}) is not a confirmed contradiction")
    _require_use_cases([winner, loser])

    host = project.model(loser.model)
    donor = project.model(winner.model)
    copy_id = EntityId(host.name, "U", host.next_ordinal("U"))
    copy_name = _fresh_name(host, donor.entity(winner).name)
    label = _fresh_label(extension_label, set(host.entity(loser).extension_points))
    edits: list[tuple[str, Edit]] = [
        (host.name, AddEntity(copy_id, EntityKind.USE_CASE, copy_name)),
        (host.name, AddExtensionPoint(loser, label)),
        (host.name, AddDep(DepKind.EXTEND, copy_id, loser)),
    ]
    reclass = _settle_target_triad(
        triad,
        inputs=pairs,
        new_ids=[copy_id],
        equivalences={_orient(triad, copy_id, winner)},
        touched={loser},
    )
    return Resolution(
        "priority", project.revision, triad.key, tuple(pairs), tuple(edits), tuple(reclass)
    )


def apply_resolution(project: Project, resolution: Resolution) -> tuple[Project, ImpactReport]:
    """Execute a resolution: edits first, then the settled cell reviews.

    The combined impact of all edits is returned so that fallout in
    other triads (fresh rows, invalidated confirmations) is surfaced
    rather than silently absorbed.
    """
    if resolution.revision != project.revision:
        raise ConcurrencyError(
            f"resolution was computed at revision {resolution.revision},"
            f" but the project is at revision {project.revision}"
        )
    current = project
    edits_done: list[tuple[str, Edit]] = []
    new_cells: list[tuple[TriadKey, EntityId, EntityId]] = []
    invalidated: list[tuple[TriadKey, EntityId, EntityId, CrossKind]] = []
    affected: set[TriadKey] = set()
    for model_name, edit in resolution.edits:
        current, report = propagate_edit(current, model_name, edit)
        edits_done.extend(report.edits)
        new_cells.extend(report.new_cells)
        invalidated.extend(report.stale_cells)
        affected.update(report.affected_triads)
    for key, row, col, kind in resolution.reclassifications:
        triad = current.triad(*key)
        if triad.left != row.model:
            row, col, kind = col, row, crossdep.flip(kind)
        current = _set_cell(current, row, col, kind, comment=None, force=True)
    report = ImpactReport(
        edits=tuple(edits_done),
        new_cells=tuple(new_cells),
        stale_cells=tuple(invalidated),
        affected_triads=frozenset(affected),
    )
    return current, report


# --- recipe internals -------------------------------------------------------


def _normalize_cells(
    triad: Triad, cells: Sequence[tuple[EntityId, EntityId]]
) -> list[tuple[EntityId, EntityId]]:
    if not cells:
        raise RecipeError("at least one cell is required")
    pairs: list[tuple[EntityId, EntityId]] = []
    for a, b in cells:
        row, col = _orient(triad, a, b)
        triad.state(row, col)  # domain check
        if (row, col) in pairs:
            raise RecipeError(f"cell ({row}, {col}) given twice")
        pairs.append((row, col))
    return pairs


def _orient(triad: Triad, a: EntityId, b: EntityId) -> tuple[EntityId, EntityId]:
    if a.model == triad.left and b.model == triad.right:
        return a, b
    if a.model == triad.right and b.model == triad.left:
        return b, a
    raise UnknownCellError(f"({a}, {b}) does not address triad {triad.left}~{triad.right}")


def _implication_endpoints(
    triad: Triad, row: EntityId, col: EntityId
) -> tuple[EntityId, EntityId]:
    """Return (implying, implied) for a confirmed implication cell."""
    state = triad.state(row, col)
    if not state.is_classified or state.kind not in IMPLICATION_KINDS:
        raise RecipeError(f"cell ({row}, {col}) is not a confirmed implication")
    if state.kind == CrossKind.IMPLIES:
        return row, col
    return col, row


def _require_use_cases(ids: Iterable[EntityId]) -> None:
    for id in ids:
        if id.kind != EntityKind.USE_CASE:
            raise RecipeError(f"{id} is not a use case; this recipe only rewires functional needs")


def _fresh_name(model: Model, name: str) -> str:
    return _fresh_label(name, {e.name for e in model.entities})


def _fresh_label(label: str, taken: set[str]) -> str:
    if label not in taken:
        taken.add(label)
        return label
    suffix = 2
    while f"{label} ({suffix})" in taken:
        suffix += 1
    fresh = f"{label} ({suffix})"
    taken.add(fresh)
    return fresh


def _format_mode(template: str, name: str) -> str:
    try:
        return template.format(name=name)
    except (KeyError, IndexError) as exc:
        raise RecipeError(f"invalid mode name template {template!r}: {exc}") from None


def _settle_target_triad(
    triad: Triad,
    *,
    inputs: list[tuple[EntityId, EntityId]],
    new_ids: list[EntityId],
    equivalences: set[tuple[EntityId, EntityId]],
    touched: set[EntityId],
) -> list[tuple[TriadKey, EntityId, EntityId, CrossKind]]:
    """Plan the reviews that leave the target triad synchronized.

    Covers the input cells (settled as unrelated), the cells the plan's
    own edits will create (equivalent for the planned copy/twin pairs,
    unrelated otherwise) and re-confirmation of confirmed cells the
    edits will invalidate. Fallout in other triads is deliberately not
    settled here; it must surface in the review queue.
    """
    new_left = [id for id in new_ids if id.model == triad.left]
    new_right = [id for id in new_ids if id.model == triad.right]
    input_set = set(inputs)
    plan: list[tuple[TriadKey, EntityId, EntityId, CrossKind]] = []

    def kind_for(row: EntityId, col: EntityId) -> CrossKind:
        if (row, col) in equivalences:
            return CrossKind.EQUIVALENT
        return CrossKind.UNRELATED

    future_right = list(triad.right_ids) + new_right
    for row in new_left:
        for col in future_right:
            plan.append((triad.key, row, col, kind_for(row, col)))
    for col in new_right:
        for row in triad.left_ids:
            plan.append((triad.key, row, col, kind_for(row, col)))

    for row, col, state in triad.cells:
        if (row, col) in input_set or not state.is_classified:
            continue
        if row in touched or col in touched:
            assert state.kind is not None
            plan.append((triad.key, row, col, state.kind))

    plan.extend((triad.key, row, col, CrossKind.UNRELATED) for row, col in inputs)
    return plan
