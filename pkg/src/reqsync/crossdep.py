"""Cross-model dependency matrices.

For every unordered pair of models there is one triad: a grid over
(left entities x right entities) whose cells carry the reviewed logical
relation between the two entities. Cells not stored are implicitly
unclassified. The stored orientation is always left-to-right; reading a
cell the other way around flips directional kinds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import ReqSyncError
from .model import EntityId, EntityKind, Model, check_display_text, model_digests


class CrossDepError(ReqSyncError):
    pass


class UnknownCellError(CrossDepError):
    pass


class CellAlreadyClassifiedError(CrossDepError):
    pass


class KindNotPermittedError(CrossDepError):
    pass


class CrossKind(Enum):
    """Logical relation between one row entity and one column entity."""

    EQUIVALENT = "E"
    SUBSET_OF = "H>"
    SUPERSET_OF = "H<"
    OVERLAPPING = "O"
    IMPLIES = "I>"
    IMPLIED_BY = "I<"
    CONTRADICTS = "C"
    UNRELATED = "NR"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, token: str) -> "CrossKind":
        try:
            return cls(token)
        except ValueError:
            raise KindNotPermittedError(f"unknown dependency kind token {token!r}") from None

    @property
    def directional(self) -> bool:
        return self in _FLIP and _FLIP[self] is not self


_FLIP = {
    CrossKind.EQUIVALENT: CrossKind.EQUIVALENT,
    CrossKind.SUBSET_OF: CrossKind.SUPERSET_OF,
    CrossKind.SUPERSET_OF: CrossKind.SUBSET_OF,
    CrossKind.OVERLAPPING: CrossKind.OVERLAPPING,
    CrossKind.IMPLIES: CrossKind.IMPLIED_BY,
    CrossKind.IMPLIED_BY: CrossKind.IMPLIES,
    CrossKind.CONTRADICTS: CrossKind.CONTRADICTS,
    CrossKind.UNRELATED: CrossKind.UNRELATED,
}

IMPLICATION_KINDS = frozenset({CrossKind.IMPLIES, CrossKind.IMPLIED_BY})
SYNCHRONIZED_KINDS = frozenset({CrossKind.EQUIVALENT, CrossKind.UNRELATED})


def flip(kind: CrossKind) -> CrossKind:
    """Mirror a kind across the diagonal; an involution."""
    return _FLIP[kind]


def permitted_kinds(row: EntityId, col: EntityId) -> frozenset[CrossKind]:
    """Kinds a reviewer may record for this entity pair.

    Requirement-logic relations (H/O/I/C) only make sense between
    functional needs, i.e. two use cases. Equivalence needs matching
    entity kinds; 'reviewed, unrelated' is always an option.
    """
    if row.kind == col.kind == EntityKind.USE_CASE:
        return frozenset(CrossKind)
    if row.kind == col.kind:
        return frozenset({CrossKind.EQUIVALENT, CrossKind.UNRELATED})
    return frozenset({CrossKind.UNRELATED})


class CellStatus(Enum):
    UNCLASSIFIED = "unclassified"
    CLASSIFIED = "classified"
    STALE = "stale"


@dataclass(frozen=True)
class CellState:
    """Workflow state of one entity pair.

    ``kind`` is the confirmed kind when classified, or the previously
    confirmed kind when stale; it is absent only when unclassified.
    """

    status: CellStatus
    kind: CrossKind | None = None
    comment: str | None = None

    def __post_init__(self) -> None:
        if (self.kind is None) != (self.status == CellStatus.UNCLASSIFIED):
            raise CrossDepError("cell kind is recorded exactly for classified and stale cells")
        if self.comment is not None:
            check_display_text(self.comment, "cell comment")

    @classmethod
    def unclassified(cls) -> "CellState":
        return cls(CellStatus.UNCLASSIFIED)

    @classmethod
    def classified(cls, kind: CrossKind, comment: str | None = None) -> "CellState":
        return cls(CellStatus.CLASSIFIED, kind, comment)

    @classmethod
    def stale(cls, previous: CrossKind, comment: str | None = None) -> "CellState":
        return cls(CellStatus.STALE, previous, comment)

    @property
    def is_classified(self) -> bool:
        return self.status == CellStatus.CLASSIFIED

    @property
    def is_stale(self) -> bool:
        return self.status == CellStatus.STALE

    @property
    def is_unclassified(self) -> bool:
        return self.status == CellStatus.UNCLASSIFIED

    def flipped(self) -> "CellState":
        if self.kind is None:
            return self
        return replace(self, kind=flip(self.kind))


_UNCLASSIFIED = CellState.unclassified()

Cell = tuple[EntityId, EntityId, CellState]


@dataclass(frozen=True)
class Triad:
    """One model pair plus its dependency grid and confirmation digests.

    ``left_ids``/``right_ids`` snapshot the entity sets the grid is
    defined over; ``digests`` record each entity's fingerprint at the
    last confirmation so that later edits can be detected.
    """

    left: str
    right: str
    left_ids: tuple[EntityId, ...]
    right_ids: tuple[EntityId, ...]
    cells: tuple[Cell, ...] = ()
    digests: tuple[tuple[EntityId, str], ...] = ()

    def __post_init__(self) -> None:
        if self.left == self.right:
            raise CrossDepError("a triad relates two distinct models")
        for id in self.left_ids:
            if id.model != self.left:
                raise CrossDepError(f"{id} is not an entity of left model {self.left}")
        for id in self.right_ids:
            if id.model != self.right:
                raise CrossDepError(f"{id} is not an entity of right model {self.right}")
        object.__setattr__(
            self, "left_ids", tuple(sorted(set(self.left_ids), key=lambda i: i.sort_key))
        )
        object.__setattr__(
            self, "right_ids", tuple(sorted(set(self.right_ids), key=lambda i: i.sort_key))
        )
        left_set, right_set = set(self.left_ids), set(self.right_ids)
        seen: set[tuple[EntityId, EntityId]] = set()
        for row, col, state in self.cells:
            if row not in left_set or col not in right_set:
                raise UnknownCellError(f"cell ({row}, {col}) is outside the triad's domain")
            if (row, col) in seen:
                raise CrossDepError(f"duplicate cell ({row}, {col})")
            if state.is_unclassified:
                raise CrossDepError("unclassified cells are implicit and never stored")
            seen.add((row, col))
        object.__setattr__(
            self,
            "cells",
            tuple(sorted(self.cells, key=lambda c: (c[0].sort_key, c[1].sort_key))),
        )
        for id, _ in self.digests:
            if id not in left_set and id not in right_set:
                raise CrossDepError(f"digest recorded for unknown entity {id}")
        object.__setattr__(
            self, "digests", tuple(sorted(self.digests, key=lambda d: (d[0].model, d[0].sort_key)))
        )

    @classmethod
    def from_models(cls, left: Model, right: Model) -> "Triad":
        """Fresh, fully unclassified triad with current digests recorded."""
        digests = tuple(model_digests(left).items()) + tuple(model_digests(right).items())
        return cls(left.name, right.name, left.entity_ids, right.entity_ids, (), digests)

    @property
    def key(self) -> tuple[str, str]:
        return (self.left, self.right)

    @property
    def domain_size(self) -> int:
        return len(self.left_ids) * len(self.right_ids)

    @cached_property
    def _index(self) -> Mapping[tuple[EntityId, EntityId], CellState]:
        return {(row, col): state for row, col, state in self.cells}

    @cached_property
    def _digest_index(self) -> Mapping[EntityId, str]:
        return dict(self.digests)

    def state(self, row: EntityId, col: EntityId) -> CellState:
        if row not in self._left_set or col not in self._right_set:
            raise UnknownCellError(f"cell ({row}, {col}) is outside the triad's domain")
        return self._index.get((row, col), _UNCLASSIFIED)

    def digest_of(self, id: EntityId) -> str | None:
        return self._digest_index.get(id)

    @cached_property
    def _left_set(self) -> frozenset[EntityId]:
        return frozenset(self.left_ids)

    @cached_property
    def _right_set(self) -> frozenset[EntityId]:
        return frozenset(self.right_ids)

    def _with_cell(self, row: EntityId, col: EntityId, state: CellState) -> "Triad":
        kept = tuple(c for c in self.cells if (c[0], c[1]) != (row, col))
        if not state.is_unclassified:
            kept += ((row, col, state),)
        return replace(self, cells=kept)

    def _with_digests(self, updates: Mapping[EntityId, str]) -> "Triad":
        if not updates:
            return self
        merged = {**self._digest_index, **updates}
        return replace(self, digests=tuple(merged.items()))


def classify(
    triad: Triad,
    row: EntityId,
    col: EntityId,
    kind: CrossKind,
    *,
    comment: str | None = None,
    digests: Mapping[EntityId, str] | None = None,
) -> Triad:
    """Record the reviewed kind for an unclassified or stale cell.

    A cell that is already confirmed must be invalidated before it can
    be reviewed again, so silent re-review is impossible. ``digests``
    carries the endpoints' current entity digests; when given they are
    recorded as the confirmation baseline.
    """
    current = triad.state(row, col)
    if current.is_classified:
        raise CellAlreadyClassifiedError(
            f"cell ({row}, {col}) is already classified as {current.kind.token};"
            " it must be invalidated before re-review"
        )
    return _set_cell(triad, row, col, kind, comment, digests)


def reclassify(
    triad: Triad,
    row: EntityId,
    col: EntityId,
    kind: CrossKind,
    *,
    comment: str | None = None,
    digests: Mapping[EntityId, str] | None = None,
) -> Triad:
    """Overwrite a cell's kind regardless of its current state.

    This is the resolution path: applying an agreed resolution rewrites
    the cells it covers without the invalidate-first ceremony.
    """
    triad.state(row, col)  # domain check
    return _set_cell(triad, row, col, kind, comment, digests)


def _set_cell(
    triad: Triad,
    row: EntityId,
    col: EntityId,
    kind: CrossKind,
    comment: str | None,
    digests: Mapping[EntityId, str] | None,
) -> Triad:
    allowed = permitted_kinds(row, col)
    if kind not in allowed:
        raise KindNotPermittedError(
            f"kind {kind.token} is not permitted between {row.kind.value} {row}"
            f" and {col.kind.value} {col}"
        )
    revised = triad._with_cell(row, col, CellState.classified(kind, comment))
    if digests:
        revised = revised._with_digests({id: digests[id] for id in (row, col) if id in digests})
    return revised


def query(triad: Triad, a: EntityId, b: EntityId) -> CellState:
    """Cell state for an entity pair given in either order.

    When ``a`` belongs to the right model the stored state is returned
    with its kind flipped, so both reading orders agree semantically.
    """
    if a.model == triad.left and b.model == triad.right:
        return triad.state(a, b)
    if a.model == triad.right and b.model == triad.left:
        return triad.state(b, a).flipped()
    raise UnknownCellError(
        f"({a}, {b}) does not address triad {triad.left}~{triad.right}"
    )


def is_synchronized(triad: Triad) -> bool:
    """True when every cell is confirmed equivalent or confirmed unrelated."""
    classified = 0
    for _, _, state in triad.cells:
        if not state.is_classified or state.kind not in SYNCHRONIZED_KINDS:
            return False
        classified += 1
    return classified == triad.domain_size


def pending(triad: Triad) -> list[Cell]:
    """Cells still needing review: stale first, then unclassified, row-major."""
    stale: list[Cell] = []
    fresh: list[Cell] = []
    for row in triad.left_ids:
        for col in triad.right_ids:
            state = triad.state(row, col)
            if state.is_stale:
                stale.append((row, col, state))
            elif state.is_unclassified:
                fresh.append((row, col, state))
    return stale + fresh


def flip_triad(triad: Triad) -> Triad:
    """The same triad with sides swapped; directional kinds mirror."""
    cells = tuple((col, row, state.flipped()) for row, col, state in triad.cells)
    return Triad(triad.right, triad.left, triad.right_ids, triad.left_ids, cells, triad.digests)


# --- engine-facing surgery -------------------------------------------------


def add_entity(triad: Triad, id: EntityId, digest: str) -> tuple[Triad, list[tuple[EntityId, EntityId]]]:
    """Grow the grid by one entity; returns the new (unclassified) cells."""
    if id.model == triad.left:
        revised = replace(triad, left_ids=triad.left_ids + (id,))
        created = [(id, col) for col in revised.right_ids]
    elif id.model == triad.right:
        revised = replace(triad, right_ids=triad.right_ids + (id,))
        created = [(row, id) for row in revised.left_ids]
    else:
        raise UnknownCellError(f"{id} belongs to neither side of {triad.left}~{triad.right}")
    return revised._with_digests({id: digest}), created


def remove_entity(triad: Triad, id: EntityId) -> Triad:
    """Shrink the grid; the entity's cells and digest are deleted."""
    if id.model == triad.left:
        left_ids = tuple(i for i in triad.left_ids if i != id)
        right_ids = triad.right_ids
    elif id.model == triad.right:
        left_ids = triad.left_ids
        right_ids = tuple(i for i in triad.right_ids if i != id)
    else:
        raise UnknownCellError(f"{id} belongs to neither side of {triad.left}~{triad.right}")
    cells = tuple(c for c in triad.cells if id not in (c[0], c[1]))
    digests = tuple(d for d in triad.digests if d[0] != id)
    return replace(triad, left_ids=left_ids, right_ids=right_ids, cells=cells, digests=digests)


def mark_stale(
    triad: Triad, changed: Iterable[EntityId], current_digests: Mapping[EntityId, str]
) -> tuple[Triad, list[tuple[EntityId, EntityId, CrossKind]]]:
    """Invalidate every classified cell touching a changed entity.

    Recorded digests for the changed entities are refreshed to the
    current values, so the invalidation fires exactly once per change.
    """
    changed_set = set(changed)
    if not changed_set:
        return triad, []
    invalidated: list[tuple[EntityId, EntityId, CrossKind]] = []
    cells: list[Cell] = []
    for row, col, state in triad.cells:
        if state.is_classified and (row in changed_set or col in changed_set):
            assert state.kind is not None
            invalidated.append((row, col, state.kind))
            cells.append((row, col, CellState.stale(state.kind, state.comment)))
        else:
            cells.append((row, col, state))
    revised = replace(triad, cells=tuple(cells))
    updates = {id: current_digests[id] for id in changed_set if id in current_digests}
    return revised._with_digests(updates), invalidated
