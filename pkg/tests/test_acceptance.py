"""Acceptance suite over the robotic-arm fixtures.

Every check is exact (counts and identities, no tolerances); one
PASS/FAIL line per criterion is printed in the terminal summary.
"""

from __future__ import annotations

import random

from hypothesis import given, settings

from reqsync import fixtures
from reqsync.cli import main as cli_main
from reqsync.crossdep import (
    CrossKind,
    Triad,
    classify,
    flip,
    is_synchronized,
    permitted_kinds,
    query,
)
from reqsync.engine import (
    apply_resolution,
    classify_cell,
    global_pending,
    recipe_contradiction_priority,
    recipe_implication_as_modes,
    recipe_implication_as_usage,
)
from reqsync.model import DepKind, Entity, EntityId, EntityKind, Model
from reqsync.synthesis import NotSynchronized, check_mergeability, merge
from reqsync.textio import parse_model, print_model

from conftest import closure_oracle, local, random_mergeable_project, stale_oracle
from test_synthesis import merged_shape, permute_project
from test_textio import models as model_strategy

IMPLICATION = {CrossKind.IMPLIES, CrossKind.IMPLIED_BY}


def _review_first_pair(project):
    project = classify_cell(
        project, local("UCD1", "S"), local("UCD2", "S"), CrossKind.EQUIVALENT
    )
    project = classify_cell(
        project, local("UCD1", "U1"), local("UCD2", "U1"), CrossKind.IMPLIED_BY
    )
    project = classify_cell(
        project, local("UCD1", "U2"), local("UCD2", "U1"), CrossKind.IMPLIED_BY
    )
    return fixtures.review_remaining_unrelated(project, ("UCD1", "UCD2"))


def test_initial_pair_review_identifies_three_dependencies(initial_project):
    project = _review_first_pair(initial_project)
    triad = project.triad("UCD1", "UCD2")
    non_unrelated = [c for c in triad.cells if c[2].kind != CrossKind.UNRELATED]
    assert len(non_unrelated) == 3
    kinds = [c[2].kind for c in non_unrelated]
    assert kinds.count(CrossKind.EQUIVALENT) == 1
    assert sum(1 for k in kinds if k in IMPLICATION) == 2
    assert not is_synchronized(triad)


def test_modes_recipe_synchronizes_first_pair_with_three_equivalences(initial_project):
    project = _review_first_pair(initial_project)
    resolution = recipe_implication_as_modes(
        project,
        ("UCD1", "UCD2"),
        [
            (local("UCD1", "U1"), local("UCD2", "U1")),
            (local("UCD1", "U2"), local("UCD2", "U1")),
        ],
    )
    project, _ = apply_resolution(project, resolution)
    triad = project.triad("UCD1", "UCD2")
    kinds = [state.kind for _, _, state in triad.cells]
    assert kinds.count(CrossKind.EQUIVALENT) == 3
    assert kinds.count(CrossKind.UNRELATED) == len(kinds) - 3
    assert len(triad.cells) == triad.domain_size  # nothing left unreviewed
    assert is_synchronized(triad)


def test_usage_recipe_equivalences_for_remaining_pairs(rationalized_project):
    d13 = rationalized_project.triad("UCD1", "UCD3")
    e13 = {
        (row, col)
        for row, col, state in d13.cells
        if state.kind == CrossKind.EQUIVALENT
    }
    assert e13 == {
        (local("UCD1", "S"), local("UCD3", "S")),
        (local("UCD1", "U7"), local("UCD3", "U1")),
    }
    d23 = rationalized_project.triad("UCD2", "UCD3")
    e23 = {
        (row, col)
        for row, col, state in d23.cells
        if state.kind == CrossKind.EQUIVALENT
    }
    assert len(e23) == 2
    assert (local("UCD2", "U4"), local("UCD3", "U4")) in e23


def test_merge_inherits_usage_and_inclusion_dependencies(rationalized_project):
    merged = merge(rationalized_project)
    move_arm = merged.entity_by_alias(local("UCD1", "U7"))
    assert move_arm.name == "Move Arm"
    assert set(move_arm.aliases) == {local("UCD1", "U7"), local("UCD3", "U1")}
    incoming_use = [
        d for d in merged.deps if d.kind == DepKind.USE and d.target == move_arm.id
    ]
    outgoing_include = [
        d for d in merged.deps if d.kind == DepKind.INCLUDE and d.source == move_arm.id
    ]
    assert len(incoming_use) == 2
    assert len(outgoing_include) == 3
    system = merged.entity_by_alias(local("UCD1", "S"))
    assert len(system.aliases) == 3


def test_contradiction_blocks_merge_and_cli_exits_nonzero(conflict_project, conflict_dir, capsys, tmp_path):
    violations = check_mergeability(conflict_project)
    named = [
        v for v in violations if isinstance(v, NotSynchronized) and v.triad == ("UCD1", "UCD4")
    ]
    assert named
    assert (
        local("UCD1", "U7"),
        local("UCD4", "U3"),
        CrossKind.CONTRADICTS,
    ) in named[0].conflicts

    code = cli_main(
        ["merge", str(conflict_dir / "robotic-arm.rsp"), "-o", str(tmp_path / "m.ucm")]
    )
    err = capsys.readouterr().err
    assert code == 1
    assert "UCD1~UCD4" in err and "(UCD1.U7, UCD4.U3) is C" in err


def test_priority_resolution_flags_dependent_equivalence(conflict_project):
    resolution = recipe_contradiction_priority(
        conflict_project,
        ("UCD1", "UCD4"),
        (local("UCD1", "U7"), local("UCD4", "U3")),
        "col",
    )
    specs = {(m, type(e).__name__) for m, e in resolution.edits}
    assert specs == {
        ("UCD1", "AddEntity"),
        ("UCD1", "AddExtensionPoint"),
        ("UCD1", "AddDep"),
    }
    _, report = apply_resolution(conflict_project, resolution)
    assert (
        ("UCD1", "UCD3"),
        local("UCD1", "U7"),
        local("UCD3", "U1"),
        CrossKind.EQUIVALENT,
    ) in report.stale_cells


# --- property suite -------------------------------------------------------------


def test_flip_involution_for_all_kinds():
    for kind in CrossKind:
        assert flip(flip(kind)) == kind
    assert flip(CrossKind.IMPLIES) == CrossKind.IMPLIED_BY
    assert flip(CrossKind.SUBSET_OF) == CrossKind.SUPERSET_OF
    for kind in (CrossKind.EQUIVALENT, CrossKind.OVERLAPPING, CrossKind.CONTRADICTS, CrossKind.UNRELATED):
        assert flip(kind) == kind


def _random_triad(rng: random.Random) -> Triad:
    def build(name: str) -> Model:
        entities = []
        if rng.random() < 0.7:
            entities.append(Entity(EntityId(name, "S"), EntityKind.SYSTEM, "Sys"))
        for ordinal in range(1, rng.randint(0, 2) + 1):
            entities.append(Entity(EntityId(name, "A", ordinal), EntityKind.ACTOR, "Actor"))
        for ordinal in range(1, rng.randint(1, 3) + 1):
            entities.append(Entity(EntityId(name, "U", ordinal), EntityKind.USE_CASE, "Need"))
        return Model(name, name, tuple(entities))

    triad = Triad.from_models(build("L"), build("R"))
    for row in triad.left_ids:
        for col in triad.right_ids:
            if rng.random() < 0.5:
                kinds = sorted(permitted_kinds(row, col), key=lambda k: k.token)
                triad = classify(triad, row, col, rng.choice(kinds))
    return triad


def test_query_symmetry_on_random_triads():
    rng = random.Random(424242)
    for _ in range(1000):
        triad = _random_triad(rng)
        for row in triad.left_ids:
            for col in triad.right_ids:
                forward = query(triad, row, col)
                backward = query(triad, col, row)
                if forward.kind is None:
                    assert backward.kind is None
                else:
                    assert backward.kind == flip(forward.kind)


def test_merged_entity_count_matches_closure_oracle():
    for seed in range(20):
        project, _ = random_mergeable_project(random.Random(31337 + seed))
        merged = merge(project)
        oracle = closure_oracle(project)
        total = sum(len(m.entities) for m in project.models)
        assert len(merged.entities) == total - sum(len(c) - 1 for c in oracle)
        assert {frozenset(e.aliases) for e in merged.entities} == set(oracle)


def test_merge_invariant_under_model_order(rationalized_project):
    base = merged_shape(merge(rationalized_project))
    for order in ([2, 0, 1], [1, 2, 0], [2, 1, 0]):
        permuted = permute_project(rationalized_project, order)
        assert merged_shape(merge(permuted)) == base
    for seed in range(5):
        rng = random.Random(777 + seed)
        project, _ = random_mergeable_project(rng)
        order = list(range(len(project.models)))
        rng.shuffle(order)
        assert merged_shape(merge(permute_project(project, order))) == merged_shape(
            merge(project)
        )


@settings(max_examples=100, deadline=None)
@given(model_strategy())
def test_parser_round_trip_on_generated_instances(model):
    assert parse_model(print_model(model)) == model


def test_staleness_rule_equals_digest_comparison(rationalized_project):
    from reqsync.engine import propagate_edit
    from reqsync.model import AddDep, AddEntity, AddExtensionPoint, RenameEntity

    cases = [
        ("UCD1", AddDep(DepKind.EXTEND, local("UCD1", "U3"), local("UCD1", "U7"))),
        ("UCD2", AddExtensionPoint(local("UCD2", "U1"), "regression only")),
        ("UCD3", RenameEntity(local("UCD3", "U2"), "Follow Optimized Path")),
        ("UCD2", AddEntity(local("UCD2", "U5"), EntityKind.USE_CASE, "Archive Logs")),
    ]
    project = rationalized_project
    for model_name, edit in cases:
        before = project
        project, report = propagate_edit(project, model_name, edit)
        assert set(report.stale_cells) == stale_oracle(before, project)


def test_fresh_project_pending_arithmetic(initial_project, rationalized_project):
    entries = global_pending(initial_project)
    by_triad: dict = {}
    for key, _, _, _ in entries:
        by_triad[key] = by_triad.get(key, 0) + 1
    assert by_triad == {
        ("UCD1", "UCD2"): 4 * 3,
        ("UCD1", "UCD3"): 4 * 4,
        ("UCD2", "UCD3"): 3 * 4,
    }
    assert len(entries) == 40
    assert global_pending(rationalized_project) == []
