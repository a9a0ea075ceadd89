"""Merging rationalized projects into one model.

Confirmed equivalences across all triads induce a partition of every
entity in the project; each class collapses into one merged entity that
keeps every member id as an alias and inherits every dependency of its
members, with per-model provenance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from . import crossdep
from .crossdep import CrossKind, Triad
from .engine import Project, TriadKey
from .errors import ReqSyncError
from .model import DepKind, Entity, EntityId, EntityKind, InModelDep, Model


class SynthesisError(ReqSyncError):
    pass


class MergeBlocked(SynthesisError):
    def __init__(self, violations: "tuple[MergeViolation, ...]"):
        self.violations = violations
        summary = "; ".join(v.describe() for v in violations)
        super().__init__(f"merge blocked: {summary}")


@dataclass(frozen=True)
class MergeViolation:
    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class NotSynchronized(MergeViolation):
    """A triad still holds pending, stale or non-equivalence reviews."""

    triad: TriadKey
    unreviewed: int
    stale: int
    conflicts: tuple[tuple[EntityId, EntityId, CrossKind], ...]

    def describe(self) -> str:
        parts = []
        for row, col, kind in self.conflicts:
            parts.append(f"cell ({row}, {col}) is {kind.token}")
        if self.stale:
            parts.append(f"{self.stale} stale cell(s)")
        if self.unreviewed:
            parts.append(f"{self.unreviewed} unreviewed cell(s)")
        detail = "; ".join(parts) or "not synchronized"
        return f"triad {self.triad[0]}~{self.triad[1]} is not synchronized: {detail}"


@dataclass(frozen=True)
class ClosureContradiction(MergeViolation):
    """Equivalence closure implies a pair that reviewers marked unrelated."""

    a: EntityId
    b: EntityId

    def describe(self) -> str:
        return (
            f"({self.a}, {self.b}) is reviewed as unrelated but equivalence"
            " closure implies the two are the same entity"
        )


@dataclass(frozen=True)
class KindMismatch(MergeViolation):
    members: tuple[EntityId, ...]

    def describe(self) -> str:
        listed = ", ".join(str(m) for m in self.members)
        return f"equivalence class mixes entity kinds: {listed}"


@dataclass(frozen=True)
class MultipleSystems(MergeViolation):
    systems: tuple[tuple[EntityId, ...], ...]

    def describe(self) -> str:
        listed = "; ".join("{" + ", ".join(str(m) for m in cls) + "}" for cls in self.systems)
        return f"merge would retain {len(self.systems)} distinct system entities: {listed}"


@dataclass(frozen=True)
class SelfDependency(MergeViolation):
    """A dependency's endpoints collapse into the same merged entity."""

    kind: DepKind
    members: tuple[EntityId, ...]

    def describe(self) -> str:
        listed = ", ".join(str(m) for m in self.members)
        return f"a {dep_verb(self.kind)} dependency would become a self-loop within class {{{listed}}}"


def dep_verb(kind: DepKind) -> str:
    return kind.verb


@dataclass(frozen=True)
class EquivalenceClasses:
    """Partition of every entity id, induced by confirmed equivalences."""

    classes: tuple[tuple[EntityId, ...], ...]

    def class_of(self, id: EntityId) -> tuple[EntityId, ...]:
        return self._index[id]

    @property
    def _index(self) -> Mapping[EntityId, tuple[EntityId, ...]]:
        index = self.__dict__.get("_index_cache")
        if index is None:
            index = {member: cls for cls in self.classes for member in cls}
            self.__dict__["_index_cache"] = index
        return index


class _UnionFind:
    def __init__(self, items: Iterable[EntityId]):
        self._parent: dict[EntityId, EntityId] = {item: item for item in items}

    def find(self, item: EntityId) -> EntityId:
        root = item
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[item] != root:  # path compression
            self._parent[item], item = root, self._parent[item]
        return root

    def union(self, a: EntityId, b: EntityId) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self._parent[rb] = ra

    def classes(self) -> list[list[EntityId]]:
        grouped: dict[EntityId, list[EntityId]] = {}
        for item in self._parent:
            grouped.setdefault(self.find(item), []).append(item)
        return list(grouped.values())


def _confirmed_equivalences(triad: Triad) -> Iterable[tuple[EntityId, EntityId]]:
    for row, col, state in triad.cells:
        if state.is_classified and state.kind == CrossKind.EQUIVALENT:
            yield row, col


def equivalence_classes(project: Project) -> EquivalenceClasses:
    """Symmetric-transitive closure of every confirmed equivalence cell.

    Works on partially reviewed projects too, so previews are cheap;
    entities without any equivalence form singleton classes.
    """
    all_ids = [id for model in project.models for id in model.entity_ids]
    uf = _UnionFind(all_ids)
    for triad in project.triads:
        for row, col in _confirmed_equivalences(triad):
            uf.union(row, col)
    order = {id: index for index, id in enumerate(all_ids)}
    classes = [tuple(sorted(cls, key=lambda i: order[i])) for cls in uf.classes()]
    classes.sort(key=lambda cls: order[cls[0]])
    return EquivalenceClasses(tuple(classes))


def check_mergeability(project: Project) -> list[MergeViolation]:
    """Everything that stands between this project and a clean merge."""
    violations: list[MergeViolation] = []
    for triad in project.triads:
        if crossdep.is_synchronized(triad):
            continue
        conflicts = tuple(
            (row, col, state.kind)
            for row, col, state in triad.cells
            if state.is_classified
            and state.kind is not None
            and state.kind not in crossdep.SYNCHRONIZED_KINDS
        )
        stale = sum(1 for _, _, state in triad.cells if state.is_stale)
        reviewed = len(triad.cells)
        unreviewed = triad.domain_size - reviewed
        violations.append(NotSynchronized(triad.key, unreviewed, stale, conflicts))

    classes = equivalence_classes(project)
    for cls in classes.classes:
        if len({id.kind for id in cls}) > 1:
            violations.append(KindMismatch(cls))
    for triad in project.triads:
        for row, col, state in triad.cells:
            if (
                state.is_classified
                and state.kind == CrossKind.UNRELATED
                and classes.class_of(row) == classes.class_of(col)
            ):
                violations.append(ClosureContradiction(row, col))
    system_classes = tuple(
        cls for cls in classes.classes if cls[0].kind == EntityKind.SYSTEM
    )
    if len(system_classes) > 1:
        violations.append(MultipleSystems(system_classes))
    self_loops: set[tuple[DepKind, tuple[EntityId, ...]]] = set()
    for model in project.models:
        for dep in model.deps:
            if dep.kind in (DepKind.INCLUDE, DepKind.EXTEND, DepKind.USE) and classes.class_of(
                dep.source
            ) == classes.class_of(dep.target):
                self_loops.add((dep.kind, classes.class_of(dep.source)))
    violations.extend(SelfDependency(kind, members) for kind, members in sorted(
        self_loops, key=lambda item: (item[0].value, tuple(str(m) for m in item[1]))
    ))
    return violations


@dataclass(frozen=True)
class MergedEntity:
    id: EntityId
    kind: EntityKind
    name: str
    aliases: tuple[EntityId, ...]
    name_aliases: tuple[str, ...]
    extension_points: tuple[str, ...]


@dataclass(frozen=True)
class MergedDep:
    kind: DepKind
    source: EntityId
    target: EntityId
    provenance: tuple[str, ...]


@dataclass(frozen=True)
class MergedModel:
    name: str
    title: str
    entities: tuple[MergedEntity, ...]
    deps: tuple[MergedDep, ...]

    def entity(self, id: EntityId) -> MergedEntity:
        for entity in self.entities:
            if entity.id == id:
                return entity
        raise SynthesisError(f"no merged entity {id}")

    def entity_by_alias(self, alias: EntityId) -> MergedEntity:
        for entity in self.entities:
            if alias in entity.aliases:
                return entity
        raise SynthesisError(f"no merged entity carries alias {alias}")

    def as_model(self) -> Model:
        """Plain model view; aliases and provenance are dropped."""
        entities = tuple(
            Entity(e.id, e.kind, e.name, e.extension_points) for e in self.entities
        )
        deps = tuple(InModelDep(d.kind, d.source, d.target) for d in self.deps)
        return Model(self.name, self.title, entities, deps)


_TAG_RANK = {"S": 0, "A": 1, "U": 2}


def merge(project: Project, *, name: str = "MERGED", title: str | None = None) -> MergedModel:
    """Collapse every equivalence class into one merged entity.

    The canonical display name comes from the member of the
    lowest-index model; all member ids are kept as aliases and other
    distinct names as name aliases. Dependencies are the union of every
    model's dependencies mapped through the classes, deduplicated, with
    the contributing model names recorded as provenance. Output is
    deterministic for a given project.
    """
    violations = check_mergeability(project)
    if violations:
        raise MergeBlocked(tuple(violations))

    classes = equivalence_classes(project)
    model_rank = {model.name: index for index, model in enumerate(project.models)}

    def member_rank(id: EntityId) -> tuple[int, tuple[int, int]]:
        return (model_rank[id.model], id.sort_key)

    ordered = sorted(
        classes.classes,
        key=lambda cls: (_TAG_RANK[cls[0].tag], min(member_rank(m) for m in cls)),
    )
    counters = {"A": 0, "U": 0}
    merged_entities: list[MergedEntity] = []
    merged_id_of: dict[EntityId, EntityId] = {}
    for cls in ordered:
        tag = cls[0].tag
        if tag == "S":
            merged_id = EntityId(name, "S")
        else:
            counters[tag] += 1
            merged_id = EntityId(name, tag, counters[tag])
        members = sorted(cls, key=member_rank)
        canonical = project.model(members[0].model).entity(members[0])
        names: list[str] = []
        extension_points: list[str] = []
        for member in members:
            entity = project.model(member.model).entity(member)
            if entity.name not in names:
                names.append(entity.name)
            for label in entity.extension_points:
                if label not in extension_points:
                    extension_points.append(label)
        merged_entities.append(
            MergedEntity(
                id=merged_id,
                kind=canonical.kind,
                name=canonical.name,
                aliases=tuple(members),
                name_aliases=tuple(n for n in names if n != canonical.name),
                extension_points=tuple(extension_points),
            )
        )
        for member in members:
            merged_id_of[member] = merged_id

    dep_map: dict[tuple[DepKind, EntityId, EntityId], set[str]] = {}
    for model in project.models:
        for dep in model.deps:
            key = (dep.kind, merged_id_of[dep.source], merged_id_of[dep.target])
            dep_map.setdefault(key, set()).add(model.name)
    dep_rank = {kind: index for index, kind in enumerate(DepKind)}
    merged_deps = tuple(
        MergedDep(kind, source, target, tuple(sorted(provenance, key=lambda n: model_rank[n])))
        for (kind, source, target), provenance in sorted(
            dep_map.items(),
            key=lambda item: (dep_rank[item[0][0]], item[0][1].sort_key, item[0][2].sort_key),
        )
    )
    merged_title = title if title is not None else "Merged model"
    return MergedModel(name, merged_title, tuple(merged_entities), merged_deps)
