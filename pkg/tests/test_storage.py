"""Project file IO: load/save round-trips, auto-created triads, locking."""

from __future__ import annotations

from pathlib import Path

import pytest

from reqsync import fixtures, storage
from reqsync.crossdep import CrossKind, flip_triad
from reqsync.engine import classify_cell
from reqsync.storage import ProjectLockedError, StorageError, load_project, save_project
from reqsync.textio import ParseError

from conftest import local


def test_initial_manifest_auto_creates_triads(tmp_path):
    rsp = fixtures.copy_fixture("robotic_arm/initial", tmp_path)
    project, layout = load_project(rsp)
    assert len(project.triads) == 3
    assert all(len(t.cells) == 0 for t in project.triads)
    assert set(layout.triad_paths) == {t.key for t in project.triads}


def test_save_load_round_trip(tmp_path, rationalized_project):
    layout = storage.ProjectLayout(tmp_path / "proj.rsp", "Round trip")
    save_project(rationalized_project, layout)
    reloaded, _ = load_project(tmp_path / "proj.rsp")
    assert reloaded.models == rationalized_project.models
    assert reloaded.triads == rationalized_project.triads


def test_mutation_then_save_then_reload(demo_dir):
    project, layout = load_project(demo_dir / "demo.rsp")
    from reqsync.engine import propagate_edit
    from reqsync.model import AddEntity, EntityKind

    project, _ = propagate_edit(
        project, "UCD2", AddEntity(local("UCD2", "U2"), EntityKind.USE_CASE, "Log Results")
    )
    project = classify_cell(project, local("UCD1", "S"), local("UCD2", "U2"), CrossKind.UNRELATED)
    save_project(project, layout)
    reloaded, _ = load_project(demo_dir / "demo.rsp")
    assert reloaded.models == project.models
    assert reloaded.triads == project.triads


def test_reversed_triad_file_is_reoriented(tmp_path, demo_dir):
    project, layout = load_project(demo_dir / "demo.rsp")
    flipped = flip_triad(project.triads[0])
    (demo_dir / "d12.xdep").write_text(
        __import__("reqsync").textio.print_triad(flipped), encoding="utf-8"
    )
    reloaded, _ = load_project(demo_dir / "demo.rsp")
    assert reloaded.triads == project.triads


def test_out_of_band_model_edit_forces_stale(demo_dir):
    text = (demo_dir / "ucd2.ucm").read_text(encoding="utf-8")
    (demo_dir / "ucd2.ucm").write_text(
        text.replace('usecase U1 "Test Function"', 'usecase U1 "Test Anything"'),
        encoding="utf-8",
    )
    project, _ = load_project(demo_dir / "demo.rsp")
    triad = project.triads[0]
    state = triad.state(local("UCD1", "U1"), local("UCD2", "U1"))
    assert state.is_stale and state.kind == CrossKind.EQUIVALENT
    untouched = triad.state(local("UCD1", "A1"), local("UCD2", "S"))
    assert untouched.is_classified


def test_triad_for_unlisted_model_is_an_error(tmp_path):
    rsp = fixtures.copy_fixture("sync_demo", tmp_path)
    manifest = (tmp_path / "demo.rsp").read_text(encoding="utf-8")
    manifest = manifest.replace("model ucd2.ucm\n", "")
    (tmp_path / "demo.rsp").write_text(manifest, encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_project(rsp)
    assert "unknown model" in str(info.value)


def test_unreadable_path_is_an_error(tmp_path):
    (tmp_path / "p.rsp").write_text('project "x"\nmodel missing.ucm\n', encoding="utf-8")
    with pytest.raises(StorageError):
        load_project(tmp_path / "p.rsp")


def test_lock_is_exclusive(tmp_path):
    rsp = tmp_path / "p.rsp"
    rsp.write_text('project "x"\n', encoding="utf-8")
    with storage.project_lock(rsp):
        with pytest.raises(ProjectLockedError):
            storage.acquire_lock(rsp)
    # released on exit
    with storage.project_lock(rsp):
        pass
    assert not storage.lock_path_for(rsp).exists()
