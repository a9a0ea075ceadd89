"""Shared fixtures, independent oracles, and acceptance reporting."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _ACCEPTANCE_RESULTS[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS.items():
        label = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{label}  {name}")

from reqsync import fixtures
from reqsync.crossdep import CrossKind
from reqsync.engine import Project
from reqsync.model import EntityId, entity_digest


def local(model: str, id: str) -> EntityId:
    return EntityId.parse_local(id, model)


@pytest.fixture(scope="session")
def initial_project() -> Project:
    return fixtures.initial_project()


@pytest.fixture(scope="session")
def rationalized_project() -> Project:
    return fixtures.rationalized_project()


@pytest.fixture(scope="session")
def conflict_project() -> Project:
    return fixtures.conflict_project()


@pytest.fixture()
def demo_dir(tmp_path: Path) -> Path:
    """Writable copy of the small synchronized two-model fixture."""
    return fixtures.copy_fixture("sync_demo", tmp_path).parent


@pytest.fixture()
def conflict_dir(tmp_path: Path) -> Path:
    return fixtures.copy_fixture("robotic_arm/conflict", tmp_path).parent


@pytest.fixture()
def rationalized_dir(tmp_path: Path) -> Path:
    return fixtures.copy_fixture("robotic_arm/rationalized", tmp_path).parent


# --- independent oracles ------------------------------------------------------


def closure_oracle(project: Project) -> list[frozenset[EntityId]]:
    """Equivalence classes by naive repeated merging of overlapping sets."""
    sets: list[set[EntityId]] = [
        {id} for model in project.models for id in model.entity_ids
    ]
    pairs = [
        (row, col)
        for triad in project.triads
        for row, col, state in triad.cells
        if state.is_classified and state.kind == CrossKind.EQUIVALENT
    ]
    changed = True
    while changed:
        changed = False
        for a, b in pairs:
            sa = next(s for s in sets if a in s)
            sb = next(s for s in sets if b in s)
            if sa is not sb:
                sa.update(sb)
                sets.remove(sb)
                changed = True
    return [frozenset(s) for s in sets]


def stale_oracle(before: Project, after: Project) -> set[tuple]:
    """Cells that must have gone stale: classified before, endpoint digest changed."""
    expected = set()
    digests_before = {
        id: entity_digest(model, id) for model in before.models for id in model.entity_ids
    }
    digests_after = {
        id: entity_digest(model, id) for model in after.models for id in model.entity_ids
    }
    for triad in before.triads:
        for row, col, state in triad.cells:
            if not state.is_classified:
                continue
            if row not in digests_after or col not in digests_after:
                continue  # endpoint removed, cell deleted
            if digests_before[row] != digests_after[row] or digests_before[col] != digests_after[col]:
                expected.add((triad.key, row, col, state.kind))
    return expected


def random_mergeable_project(rng: random.Random):
    """Random fully reviewed project: only equivalences and unrelated cells.

    Classes are built with at most one member per model, so every
    within-class cross-model pair can be (and is) reviewed equivalent;
    everything else is reviewed unrelated. All system entities land in
    a single class, keeping the project mergeable by construction.
    """
    from reqsync.engine import add_model, classify_cell
    from reqsync.model import Entity, EntityKind, Model

    n_models = rng.randint(2, 5)
    models = []
    for index in range(n_models):
        name = f"M{index + 1}"
        entities = []
        if rng.random() < 0.8:
            entities.append(Entity(EntityId(name, "S"), EntityKind.SYSTEM, "System"))
        for ordinal in range(1, rng.randint(0, 2) + 1):
            entities.append(
                Entity(EntityId(name, "A", ordinal), EntityKind.ACTOR, f"Actor {ordinal}")
            )
        for ordinal in range(1, rng.randint(1, 5) + 1):
            entities.append(
                Entity(EntityId(name, "U", ordinal), EntityKind.USE_CASE, f"Need {ordinal}")
            )
        models.append(Model(name, f"Model {index + 1}", tuple(entities[:8])))

    project = Project()
    for model in models:
        project = add_model(project, model)

    # Random same-kind classes, at most one member per model.
    classes: list[list[EntityId]] = []
    systems = [m.entity_ids[0] for m in models if m.entity_ids and m.entity_ids[0].tag == "S"]
    if systems:
        classes.append(systems)
    pools: dict[str, list[EntityId]] = {"A": [], "U": []}
    for model in models:
        for id in model.entity_ids:
            if id.tag in pools:
                pools[id.tag].append(id)
    for tag, pool in pools.items():
        rng.shuffle(pool)
        while pool:
            size = rng.randint(1, min(3, len(pool)))
            cls: list[EntityId] = []
            for id in list(pool):
                if len(cls) == size:
                    break
                if all(member.model != id.model for member in cls):
                    cls.append(id)
                    pool.remove(id)
            if not cls:
                cls.append(pool.pop())
            classes.append(cls)

    membership = {id: index for index, cls in enumerate(classes) for id in cls}
    for i, left in enumerate(models):
        for right in models[i + 1 :]:
            for row in left.entity_ids:
                for col in right.entity_ids:
                    same = membership[row] == membership[col]
                    kind = CrossKind.EQUIVALENT if same else CrossKind.UNRELATED
                    project = classify_cell(project, row, col, kind)
    expected_classes = [frozenset(cls) for cls in classes]
    return project, expected_classes
