"""Robotic-arm case study fixtures and workflow helpers.

The initial models are shipped as data files; the rationalized and
conflict states are produced by running the actual review workflow
through the engine, and the generated file trees under ``fixtures/``
are kept in sync with the builders (``python -m reqsync.fixtures``
regenerates them).
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

from . import storage, textio
from .crossdep import CrossKind
from .engine import (
    Project,
    TriadKey,
    add_model,
    apply_resolution,
    classify_cell,
    global_pending,
    project_rationalized,
    recipe_implication_as_modes,
    recipe_implication_as_usage,
)
from .model import EntityId, Model

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def fixture_path(*parts: str) -> Path:
    return FIXTURES_DIR.joinpath(*parts)


def copy_fixture(name: str, dest: Path) -> Path:
    """Copy a fixture tree into ``dest`` and return its manifest path."""
    source = fixture_path(*name.split("/"))
    shutil.copytree(source, dest, dirs_exist_ok=True)
    manifests = sorted(dest.glob("*.rsp"))
    if not manifests:
        raise FileNotFoundError(f"fixture {name!r} has no .rsp manifest")
    return manifests[0]


def _load_model(*parts: str) -> Model:
    path = fixture_path(*parts)
    return textio.parse_model(path.read_text(encoding="utf-8"), filename=str(path))


def _id(model: str, local: str) -> EntityId:
    return EntityId.parse_local(local, model)


def initial_project() -> Project:
    project, _ = storage.load_project(fixture_path("robotic_arm", "initial", "robotic-arm.rsp"))
    return project


def ucd4() -> Model:
    return _load_model("robotic_arm", "ucd4.ucm")


def reconfirm_stale(project: Project) -> Project:
    """Re-confirm every stale cell with its previously reviewed kind."""
    for key, row, col, state in global_pending(project):
        if state.is_stale:
            assert state.kind is not None
            project = classify_cell(project, row, col, state.kind, comment=state.comment)
    return project


def review_remaining_unrelated(project: Project, key: TriadKey | None = None) -> Project:
    """Mark every still-unreviewed cell (optionally of one triad) unrelated."""
    for cell_key, row, col, state in global_pending(project):
        if state.is_unclassified and (key is None or cell_key == key):
            project = classify_cell(project, row, col, CrossKind.UNRELATED)
    return project


def rationalized_project() -> Project:
    """Run the full three-stakeholder review to a rationalized project."""
    p = initial_project()

    # UCD1 x UCD2: same system; testing implies access to each function.
    p = classify_cell(p, _id("UCD1", "S"), _id("UCD2", "S"), CrossKind.EQUIVALENT)
    p = classify_cell(p, _id("UCD1", "U1"), _id("UCD2", "U1"), CrossKind.IMPLIED_BY)
    p = classify_cell(p, _id("UCD1", "U2"), _id("UCD2", "U1"), CrossKind.IMPLIED_BY)
    p = review_remaining_unrelated(p, ("UCD1", "UCD2"))
    modes = recipe_implication_as_modes(
        p, ("UCD1", "UCD2"), [(_id("UCD1", "U1"), _id("UCD2", "U1")),
                              (_id("UCD1", "U2"), _id("UCD2", "U1"))]
    )
    p, _ = apply_resolution(p, modes)

    # UCD1 x UCD3: picking and placing need the arm to move first.
    p = classify_cell(p, _id("UCD1", "S"), _id("UCD3", "S"), CrossKind.EQUIVALENT)
    p = classify_cell(p, _id("UCD1", "U1"), _id("UCD3", "U1"), CrossKind.IMPLIES)
    p = classify_cell(p, _id("UCD1", "U2"), _id("UCD3", "U1"), CrossKind.IMPLIES)
    p = review_remaining_unrelated(p, ("UCD1", "UCD3"))
    usage = recipe_implication_as_usage(
        p, ("UCD1", "UCD3"), [(_id("UCD1", "U1"), _id("UCD3", "U1")),
                              (_id("UCD1", "U2"), _id("UCD3", "U1"))]
    )
    p, _ = apply_resolution(p, usage)
    p = reconfirm_stale(p)  # the new usage deps invalidated UCD1.U1/U2 reviews
    p = review_remaining_unrelated(p, ("UCD1", "UCD2"))  # fresh Move Arm row

    # UCD2 x UCD3: testing implies access to arm movement.
    p = classify_cell(p, _id("UCD2", "S"), _id("UCD3", "S"), CrossKind.EQUIVALENT)
    p = classify_cell(p, _id("UCD2", "U1"), _id("UCD3", "U1"), CrossKind.IMPLIES)
    p = review_remaining_unrelated(p, ("UCD2", "UCD3"))
    modes = recipe_implication_as_modes(
        p, ("UCD2", "UCD3"), [(_id("UCD2", "U1"), _id("UCD3", "U1"))]
    )
    p, _ = apply_resolution(p, modes)
    p = reconfirm_stale(p)
    p = review_remaining_unrelated(p)

    assert project_rationalized(p)
    return p


def conflict_project() -> Project:
    """Rationalized project plus the safety stakeholder's model.

    The pair with UCD1 is fully reviewed and holds a confirmed
    contradiction: the arm cannot move and stop moving at once. The
    UCD2/UCD3 pairs with UCD4 are left pending.
    """
    p = add_model(rationalized_project(), ucd4())
    p = classify_cell(p, _id("UCD1", "S"), _id("UCD4", "S"), CrossKind.EQUIVALENT)
    p = classify_cell(p, _id("UCD1", "U1"), _id("UCD4", "U1"), CrossKind.EQUIVALENT)
    p = classify_cell(p, _id("UCD1", "U2"), _id("UCD4", "U2"), CrossKind.EQUIVALENT)
    p = classify_cell(p, _id("UCD1", "U7"), _id("UCD4", "U3"), CrossKind.CONTRADICTS,
                      comment="cannot move and stop moving at the same time")
    p = review_remaining_unrelated(p, ("UCD1", "UCD4"))
    return p


def sync_demo_project() -> Project:
    """Tiny two-model project whose single triad is fully synchronized.

    Twelve cells: the systems plus both owner functions reviewed as
    equivalent to the tested function, everything else unrelated. Used
    by the service and UI tests as a small, stable grid.
    """
    left = _load_model("robotic_arm", "initial", "ucd1.ucm")
    right = _load_model("robotic_arm", "initial", "ucd2.ucm")
    p = add_model(add_model(Project(), left), right)
    p = classify_cell(p, _id("UCD1", "S"), _id("UCD2", "S"), CrossKind.EQUIVALENT)
    p = classify_cell(p, _id("UCD1", "U1"), _id("UCD2", "U1"), CrossKind.EQUIVALENT)
    p = classify_cell(p, _id("UCD1", "U2"), _id("UCD2", "U1"), CrossKind.EQUIVALENT)
    p = review_remaining_unrelated(p)
    return p


# --- generated fixture trees --------------------------------------------------


def _layout_for(project: Project, directory: Path, rsp_name: str, title: str) -> storage.ProjectLayout:
    layout = storage.ProjectLayout(directory / rsp_name, title)
    for model in project.models:
        layout.model_paths[model.name] = directory / f"{model.name.lower()}.ucm"
    for triad in project.triads:
        left, right = triad.key
        layout.triad_paths[triad.key] = directory / f"d{left[-1]}{right[-1]}.xdep"
    return layout


def regenerate(base: Path | None = None) -> list[Path]:
    """Rewrite the generated fixture trees from the builders."""
    base = base or FIXTURES_DIR
    written = []
    for name, builder, title in (
        ("robotic_arm/rationalized", rationalized_project, "Robotic Arm stakeholder needs"),
        ("robotic_arm/conflict", conflict_project, "Robotic Arm stakeholder needs"),
        ("sync_demo", sync_demo_project, "Synchronization demo"),
    ):
        directory = base.joinpath(*name.split("/"))
        if directory.exists():
            shutil.rmtree(directory)
        directory.mkdir(parents=True)
        project = builder()
        rsp_name = "demo.rsp" if name == "sync_demo" else "robotic-arm.rsp"
        layout = _layout_for(project, directory, rsp_name, title)
        storage.save_project(project, layout)
        written.append(layout.rsp_path)
    return written


if __name__ == "__main__":
    for path in regenerate():
        print(f"wrote {path}", file=sys.stderr)
