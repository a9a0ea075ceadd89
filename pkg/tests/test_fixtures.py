"""Shipped fixture trees must match what the engine workflow produces."""

from __future__ import annotations

from reqsync import fixtures
from reqsync.storage import load_project


def _assert_same_state(loaded, built):
    assert loaded.models == built.models
    assert loaded.triads == built.triads


def test_rationalized_tree_matches_builder():
    loaded, _ = load_project(
        fixtures.fixture_path("robotic_arm", "rationalized", "robotic-arm.rsp")
    )
    _assert_same_state(loaded, fixtures.rationalized_project())


def test_conflict_tree_matches_builder():
    loaded, _ = load_project(
        fixtures.fixture_path("robotic_arm", "conflict", "robotic-arm.rsp")
    )
    _assert_same_state(loaded, fixtures.conflict_project())


def test_sync_demo_tree_matches_builder():
    loaded, _ = load_project(fixtures.fixture_path("sync_demo", "demo.rsp"))
    _assert_same_state(loaded, fixtures.sync_demo_project())


def test_demo_triad_shape():
    project = fixtures.sync_demo_project()
    triad = project.triads[0]
    assert triad.domain_size == 12
    kinds = [state.kind.token for _, _, state in triad.cells]
    assert kinds.count("E") == 3
    assert kinds.count("NR") == 9
