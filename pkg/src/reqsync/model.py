"""Single-stakeholder use-case models.

A model is a named set of typed entities (one optional system boundary,
actors, use cases) plus the dependencies between them. Everything here
has pure value semantics: edits take a model and return a new one, so
values can be shared freely across threads.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Union

from .errors import ReqSyncError


class ModelError(ReqSyncError):
    """Base class for model construction and edit failures."""


class MetamodelError(ModelError):
    """A well-formedness rule was violated; the message names the rule."""


class UnknownEntityError(ModelError):
    pass


class DuplicateEntityError(ModelError):
    pass


class DuplicateDepError(ModelError):
    pass


class EntityKind(Enum):
    SYSTEM = "system"
    ACTOR = "actor"
    USE_CASE = "usecase"

    @property
    def tag(self) -> str:
        return _KIND_TO_TAG[self]

    @classmethod
    def from_tag(cls, tag: str) -> "EntityKind":
        try:
            return _TAG_TO_KIND[tag]
        except KeyError:
            raise MetamodelError(f"unknown entity tag {tag!r}; expected S, A or U") from None


_KIND_TO_TAG = {EntityKind.SYSTEM: "S", EntityKind.ACTOR: "A", EntityKind.USE_CASE: "U"}
_TAG_TO_KIND = {tag: kind for kind, tag in _KIND_TO_TAG.items()}
_TAG_ORDER = {"S": 0, "A": 1, "U": 2}

_MODEL_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*\Z")
_LOCAL_ID_RE = re.compile(r"(S|[AU][1-9][0-9]*)\Z")


def check_display_text(value: str, what: str) -> str:
    """Reject display strings that cannot survive the text format."""
    if any(ord(ch) < 0x20 or ord(ch) == 0x7F for ch in value):
        raise MetamodelError(f"{what} must not contain control characters")
    return value


@dataclass(frozen=True)
class EntityId:
    """Structured entity identifier: model name, kind tag, ordinal.

    The system entity is always exactly ``<model>.S``; actors and use
    cases render as ``<model>.A<n>`` / ``<model>.U<n>``.
    """

    model: str
    tag: str
    ordinal: int | None = None

    def __post_init__(self) -> None:
        if not _MODEL_NAME_RE.match(self.model):
            raise MetamodelError(f"invalid model name {self.model!r}")
        if self.tag not in _TAG_ORDER:
            raise MetamodelError(f"invalid entity tag {self.tag!r}")
        if self.tag == "S":
            if self.ordinal is not None:
                raise MetamodelError("system id carries no ordinal; it is exactly 'S'")
        elif not isinstance(self.ordinal, int) or self.ordinal < 1:
            raise MetamodelError(f"entity ordinal must be a positive integer, got {self.ordinal!r}")

    @property
    def local(self) -> str:
        """Id without the model prefix, e.g. ``U1`` or ``S``."""
        return self.tag if self.tag == "S" else f"{self.tag}{self.ordinal}"

    @property
    def kind(self) -> EntityKind:
        return _TAG_TO_KIND[self.tag]

    @property
    def sort_key(self) -> tuple[int, int]:
        return (_TAG_ORDER[self.tag], self.ordinal or 0)

    def __str__(self) -> str:
        return f"{self.model}.{self.local}"

    @classmethod
    def parse_local(cls, text: str, model: str) -> "EntityId":
        if not _LOCAL_ID_RE.match(text):
            raise MetamodelError(f"invalid entity id {text!r}; expected S, A<n> or U<n>")
        if text == "S":
            return cls(model, "S")
        return cls(model, text[0], int(text[1:]))

    @classmethod
    def parse(cls, text: str) -> "EntityId":
        model, sep, local = text.partition(".")
        if not sep:
            raise MetamodelError(f"expected qualified id '<model>.<id>', got {text!r}")
        return cls.parse_local(local, model)


@dataclass(frozen=True)
class Entity:
    id: EntityId
    kind: EntityKind
    name: str
    extension_points: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind != self.id.kind:
            raise MetamodelError(
                f"entity kind {self.kind.value} does not agree with id tag {self.id.tag!r}"
            )
        if not self.name:
            raise MetamodelError(f"entity {self.id} must have a non-empty name")
        check_display_text(self.name, f"name of {self.id}")
        if self.extension_points and self.kind != EntityKind.USE_CASE:
            raise MetamodelError(f"only use cases may carry extension points ({self.id})")
        if len(set(self.extension_points)) != len(self.extension_points):
            raise MetamodelError(f"duplicate extension point label on {self.id}")
        for label in self.extension_points:
            if not label:
                raise MetamodelError(f"extension point label on {self.id} must be non-empty")
            check_display_text(label, f"extension point label on {self.id}")


class DepKind(Enum):
    ASSOCIATION = "associate"
    ALLOCATION = "allocate"
    INCLUDE = "include"
    EXTEND = "extend"
    USE = "use"

    @property
    def verb(self) -> str:
        return self.value


_DEP_ORDER = {kind: index for index, kind in enumerate(DepKind)}


@dataclass(frozen=True)
class InModelDep:
    """A dependency between two entities of the same model.

    Endpoint kinds are checked from the id tags, so an ill-typed
    dependency cannot even be constructed. Associations are stored
    actor-to-use-case regardless of construction order (they are
    semantically undirected).
    """

    kind: DepKind
    source: EntityId
    target: EntityId

    def __post_init__(self) -> None:
        if self.source.model != self.target.model:
            raise MetamodelError("in-model dependency endpoints must share one model")
        tags = (self.source.tag, self.target.tag)
        if self.kind == DepKind.ASSOCIATION:
            if sorted(tags) != ["A", "U"]:
                raise MetamodelError(
                    "Association requires one Actor endpoint and one UseCase endpoint"
                )
            if tags[0] == "U":  # normalize to actor -> use case
                source, target = self.target, self.source
                object.__setattr__(self, "source", source)
                object.__setattr__(self, "target", target)
        elif self.kind == DepKind.ALLOCATION:
            if tags != ("U", "S"):
                raise MetamodelError("Allocation runs from a UseCase to the System")
        else:
            if tags != ("U", "U"):
                raise MetamodelError(f"{self.kind.name.capitalize()} requires two UseCase endpoints")
            if self.source == self.target:
                raise MetamodelError(f"{self.kind.name.capitalize()} endpoints must differ")

    @property
    def sort_key(self) -> tuple[int, tuple[int, int], tuple[int, int]]:
        return (_DEP_ORDER[self.kind], self.source.sort_key, self.target.sort_key)


@dataclass(frozen=True)
class Model:
    """A stakeholder model: entities plus in-model dependencies.

    Construction canonicalizes ordering, so structurally equal models
    compare equal regardless of how they were assembled.
    """

    name: str
    title: str
    entities: tuple[Entity, ...] = ()
    deps: tuple[InModelDep, ...] = ()

    def __post_init__(self) -> None:
        if not _MODEL_NAME_RE.match(self.name):
            raise MetamodelError(f"invalid model name {self.name!r}")
        check_display_text(self.title, f"title of model {self.name}")
        object.__setattr__(
            self, "entities", tuple(sorted(self.entities, key=lambda e: e.id.sort_key))
        )
        object.__setattr__(self, "deps", tuple(sorted(self.deps, key=lambda d: d.sort_key)))

        # At most one system entity holds structurally: its id is always
        # exactly S, so a second one is a duplicate id.
        ids: set[EntityId] = set()
        for entity in self.entities:
            if entity.id.model != self.name:
                raise MetamodelError(f"entity {entity.id} does not belong to model {self.name}")
            if entity.id in ids:
                raise DuplicateEntityError(f"duplicate entity id {entity.id}")
            ids.add(entity.id)

        seen: set[InModelDep] = set()
        for dep in self.deps:
            for endpoint in (dep.source, dep.target):
                if endpoint not in ids:
                    raise UnknownEntityError(f"dependency endpoint {endpoint} is not declared")
            if dep in seen:
                raise DuplicateDepError(
                    f"duplicate dependency {dep.kind.verb} {dep.source.local} {dep.target.local}"
                )
            seen.add(dep)

    @cached_property
    def _by_id(self) -> Mapping[EntityId, Entity]:
        return {entity.id: entity for entity in self.entities}

    @property
    def entity_ids(self) -> tuple[EntityId, ...]:
        return tuple(entity.id for entity in self.entities)

    def entity(self, id: EntityId) -> Entity:
        try:
            return self._by_id[id]
        except KeyError:
            raise UnknownEntityError(f"no entity {id} in model {self.name}") from None

    def has_entity(self, id: EntityId) -> bool:
        return id in self._by_id

    def next_ordinal(self, tag: str) -> int:
        taken = [e.id.ordinal or 0 for e in self.entities if e.id.tag == tag]
        return max(taken, default=0) + 1

    def deps_of(self, id: EntityId) -> tuple[InModelDep, ...]:
        return tuple(d for d in self.deps if id in (d.source, d.target))


# --- edits ----------------------------------------------------------------


@dataclass(frozen=True)
class AddEntity:
    id: EntityId
    kind: EntityKind
    name: str
    extension_points: tuple[str, ...] = ()


@dataclass(frozen=True)
class RemoveEntity:
    id: EntityId


@dataclass(frozen=True)
class RenameEntity:
    id: EntityId
    name: str


@dataclass(frozen=True)
class AddExtensionPoint:
    id: EntityId
    label: str


@dataclass(frozen=True)
class AddDep:
    kind: DepKind
    source: EntityId
    target: EntityId


@dataclass(frozen=True)
class RemoveDep:
    kind: DepKind
    source: EntityId
    target: EntityId


Edit = Union[AddEntity, RemoveEntity, RenameEntity, AddExtensionPoint, AddDep, RemoveDep]


def apply_edit(model: Model, edit: Edit) -> Model:
    """Apply one edit and return the revised model.

    Rejects anything that would leave the model ill-formed; the input
    model is never modified.
    """
    if isinstance(edit, AddEntity):
        if model.has_entity(edit.id):
            raise DuplicateEntityError(f"entity {edit.id} already exists")
        entity = Entity(edit.id, edit.kind, edit.name, edit.extension_points)
        return replace(model, entities=model.entities + (entity,))

    if isinstance(edit, RemoveEntity):
        model.entity(edit.id)  # existence check
        if model.deps_of(edit.id):
            raise MetamodelError(
                f"cannot remove {edit.id}: dependencies still reference it (remove them first)"
            )
        remaining = tuple(e for e in model.entities if e.id != edit.id)
        return replace(model, entities=remaining)

    if isinstance(edit, RenameEntity):
        entity = model.entity(edit.id)
        revised = replace(entity, name=edit.name)
        return _swap_entity(model, revised)

    if isinstance(edit, AddExtensionPoint):
        entity = model.entity(edit.id)
        revised = replace(entity, extension_points=entity.extension_points + (edit.label,))
        return _swap_entity(model, revised)

    if isinstance(edit, AddDep):
        dep = InModelDep(edit.kind, edit.source, edit.target)
        return replace(model, deps=model.deps + (dep,))

    if isinstance(edit, RemoveDep):
        dep = InModelDep(edit.kind, edit.source, edit.target)
        if dep not in model.deps:
            raise UnknownEntityError(
                f"no dependency {dep.kind.verb} {dep.source.local} {dep.target.local} in {model.name}"
            )
        return replace(model, deps=tuple(d for d in model.deps if d != dep))

    raise TypeError(f"unknown edit variant {type(edit).__name__}")


def _swap_entity(model: Model, revised: Entity) -> Model:
    entities = tuple(revised if e.id == revised.id else e for e in model.entities)
    return replace(model, entities=entities)


# --- adjacency matrix -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    """Square dependency grid of one model; rows are sources."""

    ids: tuple[EntityId, ...]
    _cells: Mapping[tuple[EntityId, EntityId], frozenset[DepKind]]

    @property
    def dimension(self) -> int:
        return len(self.ids)

    def kinds(self, source: EntityId, target: EntityId) -> frozenset[DepKind]:
        return self._cells.get((source, target), frozenset())

    def dep_pairs(self) -> frozenset[tuple[DepKind, EntityId, EntityId]]:
        """Flattened (kind, source, target) triples; inverse of construction."""
        return frozenset(
            (kind, source, target)
            for (source, target), kinds in self._cells.items()
            for kind in kinds
        )


def adjacency_matrix(model: Model) -> AdjacencyMatrix:
    """Dependency kinds per ordered entity pair, in canonical entity order."""
    cells: dict[tuple[EntityId, EntityId], set[DepKind]] = {}
    for dep in model.deps:
        cells.setdefault((dep.source, dep.target), set()).add(dep.kind)
    frozen = {key: frozenset(kinds) for key, kinds in cells.items()}
    return AdjacencyMatrix(model.entity_ids, frozen)


# --- digests --------------------------------------------------------------

DIGEST_LENGTH = 16


def entity_digest(model: Model, id: EntityId) -> str:
    """Deterministic fingerprint of one entity's observable state.

    Covers kind, name, extension points and the multiset of incident
    dependencies; changes exactly when one of those changes. Endpoints
    are recorded by local id so the digest survives model renames.
    """
    entity = model.entity(id)
    incident = []
    for dep in model.deps_of(id):
        if dep.source == id:
            incident.append(f"out:{dep.kind.verb}:{dep.target.local}")
        else:
            incident.append(f"in:{dep.kind.verb}:{dep.source.local}")
    incident.sort()
    material = "\x1f".join(
        [entity.kind.value, entity.name, "\x1e".join(entity.extension_points), ";".join(incident)]
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()[:DIGEST_LENGTH]


def model_digests(model: Model) -> dict[EntityId, str]:
    return {entity.id: entity_digest(model, entity.id) for entity in model.entities}
