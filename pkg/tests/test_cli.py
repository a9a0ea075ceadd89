"""Command-line behavior: exit codes, persistence, previews, JSON output."""

from __future__ import annotations

import json

import pytest

from reqsync.cli import main
from reqsync.storage import load_project


def run(capsys, *argv) -> tuple[int, str, str]:
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestStatus:
    def test_rationalized_project_exits_zero(self, capsys, rationalized_dir):
        code, out, _ = run(capsys, "status", rationalized_dir / "robotic-arm.rsp")
        assert code == 0
        assert "rationalized: yes" in out

    def test_unrationalized_project_exits_one(self, capsys, conflict_dir):
        code, out, _ = run(capsys, "status", conflict_dir / "robotic-arm.rsp")
        assert code == 1
        assert "rationalized: no" in out

    def test_empty_project_reports_zero_triads(self, capsys, tmp_path):
        rsp = tmp_path / "empty.rsp"
        rsp.write_text('project "empty"\n', encoding="utf-8")
        code, out, _ = run(capsys, "status", rsp)
        assert code == 0
        assert "0 models, 0 triads" in out

    def test_json_format_has_stable_fields(self, capsys, conflict_dir):
        code, out, _ = run(capsys, "status", conflict_dir / "robotic-arm.rsp", "--format", "json")
        data = json.loads(out)
        assert set(data) == {"rationalized", "triads"}
        assert {"left", "right", "synchronized", "pending", "stale"} <= set(data["triads"][0])


class TestPairs:
    def test_lists_pending_cells(self, capsys, conflict_dir):
        code, out, _ = run(capsys, "pairs", conflict_dir / "robotic-arm.rsp")
        assert code == 0
        assert len(out.strip().splitlines()) == 72  # two fully pending triads

    def test_triad_filter(self, capsys, conflict_dir):
        code, out, _ = run(
            capsys, "pairs", conflict_dir / "robotic-arm.rsp", "--triad", "UCD2", "UCD4"
        )
        assert len(out.strip().splitlines()) == 36

    def test_json_cells(self, capsys, conflict_dir):
        _, out, _ = run(
            capsys, "pairs", conflict_dir / "robotic-arm.rsp", "--format", "json"
        )
        data = json.loads(out)
        assert {"triad", "row", "col", "state", "kind"} == set(data["cells"][0])


class TestClassify:
    def test_classify_persists(self, capsys, conflict_dir):
        rsp = conflict_dir / "robotic-arm.rsp"
        code, out, _ = run(
            capsys, "classify", rsp, "--triad", "UCD2", "UCD4",
            "--cell", "S", "S", "--kind", "E",
        )
        assert code == 0
        project, _ = load_project(rsp)
        from conftest import local
        from reqsync.crossdep import CrossKind

        state = project.triad("UCD2", "UCD4").state(local("UCD2", "S"), local("UCD4", "S"))
        assert state.kind == CrossKind.EQUIVALENT

    def test_rejected_classification_exits_one(self, capsys, conflict_dir):
        code, _, err = run(
            capsys, "classify", conflict_dir / "robotic-arm.rsp", "--triad", "UCD1", "UCD4",
            "--cell", "S", "S", "--kind", "E",
        )
        assert code == 1
        assert "already classified" in err

    def test_kind_not_permitted_exits_one(self, capsys, conflict_dir):
        code, _, err = run(
            capsys, "classify", conflict_dir / "robotic-arm.rsp", "--triad", "UCD2", "UCD4",
            "--cell", "S", "A1", "--kind", "E",
        )
        assert code == 1
        assert "not permitted" in err

    def test_malformed_args_exit_two(self, conflict_dir):
        with pytest.raises(SystemExit) as info:
            main(["classify", str(conflict_dir / "robotic-arm.rsp"), "--triad", "UCD2"])
        assert info.value.code == 2


class TestEdit:
    def test_edit_prints_impact_and_persists(self, capsys, rationalized_dir):
        rsp = rationalized_dir / "robotic-arm.rsp"
        code, out, _ = run(
            capsys, "edit", rsp, "--model", "UCD2",
            "--op", 'entity U5 usecase "Calibrate Sensors"',
        )
        assert code == 0
        assert "new cells: 15" in out  # 9 + 6 partner entities
        project, _ = load_project(rsp)
        assert project.model("UCD2").has_entity(
            __import__("reqsync").model.EntityId.parse("UCD2.U5")
        )

    def test_bad_edit_spec_exits_one(self, capsys, rationalized_dir):
        code, _, err = run(
            capsys, "edit", rationalized_dir / "robotic-arm.rsp", "--model", "UCD2",
            "--op", "dep fly U1 U2",
        )
        assert code == 1
        assert "unknown dependency kind" in err


class TestRecipe:
    def test_preview_never_writes(self, capsys, conflict_dir):
        rsp = conflict_dir / "robotic-arm.rsp"
        before = {p.name: p.read_bytes() for p in sorted(conflict_dir.iterdir())}
        code, out, _ = run(
            capsys, "recipe", rsp, "--name", "priority", "--triad", "UCD1", "UCD4",
            "--cell", "U7", "U3", "--prioritize", "col", "--preview",
        )
        assert code == 0
        assert "preview only" in out
        after = {p.name: p.read_bytes() for p in sorted(conflict_dir.iterdir())}
        assert before == after

    def test_apply_reports_cross_triad_fallout(self, capsys, conflict_dir):
        rsp = conflict_dir / "robotic-arm.rsp"
        code, out, _ = run(
            capsys, "recipe", rsp, "--name", "priority", "--triad", "UCD1", "UCD4",
            "--cell", "U7", "U3", "--prioritize", "col",
        )
        assert code == 0
        assert "stale UCD1~UCD3\tU7\tU1\t(was E)" in out
        project, _ = load_project(rsp)
        assert project.model("UCD1").has_entity(
            __import__("reqsync").model.EntityId.parse("UCD1.U8")
        )

    def test_priority_requires_prioritize_flag(self, capsys, conflict_dir):
        code, _, err = run(
            capsys, "recipe", conflict_dir / "robotic-arm.rsp", "--name", "priority",
            "--triad", "UCD1", "UCD4", "--cell", "U7", "U3",
        )
        assert code == 2
        assert "--prioritize" in err


class TestImpact:
    def test_lists_stale_cells_after_edit(self, capsys, rationalized_dir):
        rsp = rationalized_dir / "robotic-arm.rsp"
        run(capsys, "edit", rsp, "--model", "UCD3",
            "--op", 'rename U1 "Move Arm Safely"')
        code, out, _ = run(capsys, "impact", rsp, "--format", "json")
        assert code == 0
        cells = json.loads(out)["cells"]
        assert all(c["state"] == "stale" for c in cells)
        assert {"triad": ["UCD1", "UCD3"], "row": "U7", "col": "U1",
                "state": "stale", "kind": "E"} in cells


class TestMerge:
    def test_merge_writes_aliases(self, capsys, rationalized_dir, tmp_path):
        out_path = tmp_path / "merged.ucm"
        code, out, _ = run(
            capsys, "merge", rationalized_dir / "robotic-arm.rsp", "-o", out_path
        )
        assert code == 0
        text = out_path.read_text(encoding="utf-8")
        assert "aliases: UCD1.U7, UCD3.U1" in text
        assert "Move Arm" in out

    def test_blocked_merge_names_the_cell(self, capsys, conflict_dir, tmp_path):
        code, _, err = run(
            capsys, "merge", conflict_dir / "robotic-arm.rsp", "-o", tmp_path / "m.ucm"
        )
        assert code == 1
        assert "UCD1~UCD4" in err
        assert "(UCD1.U7, UCD4.U3) is C" in err


class TestRender:
    def test_model_diagram_to_stdout(self, capsys, rationalized_dir):
        code, out, _ = run(
            capsys, "render", rationalized_dir / "robotic-arm.rsp", "--model", "UCD1"
        )
        assert code == 0
        assert out.startswith("digraph")
        assert out.count("«use»") == 2

    def test_merged_diagram_contains_alias_labels(self, capsys, rationalized_dir, tmp_path):
        out_path = tmp_path / "merged.dot"
        code, _, _ = run(
            capsys, "render", rationalized_dir / "robotic-arm.rsp", "--merged", "-o", out_path
        )
        assert code == 0
        assert "UCD1.U7, UCD3.U1" in out_path.read_text(encoding="utf-8")

    def test_unallocated_usecase_warning(self, capsys, tmp_path):
        (tmp_path / "m.ucm").write_text(
            'model M "t"\nusecase U1 "floating"\n', encoding="utf-8"
        )
        (tmp_path / "p.rsp").write_text('project "t"\nmodel m.ucm\n', encoding="utf-8")
        code, _, err = run(capsys, "render", tmp_path / "p.rsp", "--model", "M")
        assert code == 0
        assert "not allocated" in err


def test_reload_reproduces_state_after_every_mutating_command(capsys, conflict_dir):
    rsp = conflict_dir / "robotic-arm.rsp"
    steps = [
        ["classify", str(rsp), "--triad", "UCD2", "UCD4", "--cell", "S", "S", "--kind", "E"],
        ["edit", str(rsp), "--model", "UCD2", "--op", 'rename U1 "Test It All"'],
        ["recipe", str(rsp), "--name", "priority", "--triad", "UCD1", "UCD4",
         "--cell", "U7", "U3", "--prioritize", "col"],
    ]
    for argv in steps:
        assert main(argv) == 0
        capsys.readouterr()
        first, _ = load_project(rsp)
        second, _ = load_project(rsp)
        assert first.models == second.models
        assert first.triads == second.triads
