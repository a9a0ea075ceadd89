"""Command-line front end.

Single-shot commands: load the project, act, save, exit. Exit codes:
0 success, 1 validation or workflow failure, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import crossdep, engine, storage, synthesis, textio
from .crossdep import CrossKind
from .engine import Project, TriadKey
from .errors import ReqSyncError
from .model import EntityId

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reqsync",
        description="Rationalize siloed use-case models and merge them with traceability.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("project", help="path to the .rsp project manifest")
        return p

    p = add("status", "per-pair synchronization summary; exit 0 iff fully rationalized")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = add("pairs", "list cells awaiting review")
    p.add_argument("--triad", nargs=2, metavar=("LEFT", "RIGHT"))
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = add("classify", "record the reviewed kind for one cell and save")
    p.add_argument("--triad", nargs=2, metavar=("LEFT", "RIGHT"), required=True)
    p.add_argument("--cell", nargs=2, metavar=("ROW", "COL"), required=True)
    p.add_argument("--kind", required=True, help="E, H>, H<, O, I>, I<, C or NR")
    p.add_argument("--comment")

    p = add("edit", "apply a model edit, report its impact and save")
    p.add_argument("--model", required=True)
    p.add_argument("--op", required=True, help='e.g. \'dep use U1 U7\' or \'entity U8 usecase "Stop"\'')

    p = add("recipe", "compute a resolution; apply it unless --preview")
    p.add_argument("--name", choices=["usage", "modes", "priority"], required=True)
    p.add_argument("--triad", nargs=2, metavar=("LEFT", "RIGHT"), required=True)
    p.add_argument("--cell", nargs=2, metavar=("ROW", "COL"), action="append", required=True)
    p.add_argument("--prioritize", choices=["row", "col"], help="winning side (priority recipe)")
    p.add_argument("--normal-template", default=engine.DEFAULT_MODE_TEMPLATES[0])
    p.add_argument("--test-template", default=engine.DEFAULT_MODE_TEMPLATES[1])
    p.add_argument("--extension-label", default=engine.DEFAULT_PRIORITY_LABEL)
    p.add_argument("--preview", action="store_true", help="print the plan without applying it")

    p = add("impact", "list all stale cells")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = add("merge", "write the merged model, or list what blocks the merge")
    p.add_argument("-o", "--output", required=True)

    p = add("render", "diagram export (Graphviz) for one model or the merged model")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model")
    group.add_argument("--merged", action="store_true")
    p.add_argument("-o", "--output", help="output file; stdout when omitted")

    p = add("serve", "start the HTTP service for the companion UI")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ReqSyncError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def _dispatch(args: argparse.Namespace) -> int:
    handlers = {
        "status": _cmd_status,
        "pairs": _cmd_pairs,
        "classify": _cmd_classify,
        "edit": _cmd_edit,
        "recipe": _cmd_recipe,
        "impact": _cmd_impact,
        "merge": _cmd_merge,
        "render": _cmd_render,
        "serve": _cmd_serve,
    }
    return handlers[args.command](args)


def _load(args: argparse.Namespace) -> tuple[Project, storage.ProjectLayout]:
    diagnostics: list[textio.ParseDiagnostic] = []
    project, layout = storage.load_project(args.project, diagnostics)
    for diagnostic in diagnostics:
        print(str(diagnostic), file=sys.stderr)
    return project, layout


def _triad_key(project: Project, pair: Sequence[str]) -> TriadKey:
    triad = project.triad(pair[0], pair[1])
    return triad.key


def _cell_ids(pair: Sequence[str], cell: Sequence[str]) -> tuple[EntityId, EntityId]:
    return (
        EntityId.parse_local(cell[0], pair[0]),
        EntityId.parse_local(cell[1], pair[1]),
    )


def _pending_json(entries: list[engine.PendingEntry]) -> dict:
    return {
        "cells": [
            {
                "triad": list(key),
                "row": row.local,
                "col": col.local,
                "state": state.status.value,
                "kind": state.kind.token if state.kind else None,
            }
            for key, row, col, state in entries
        ]
    }


def _print_pending(entries: list[engine.PendingEntry]) -> None:
    for key, row, col, state in entries:
        kind = state.kind.token if state.kind else "-"
        print(f"{key[0]}~{key[1]}\t{row.local}\t{col.local}\t{state.status.value}\t{kind}")


def _cmd_status(args: argparse.Namespace) -> int:
    project, _ = _load(args)
    rationalized = engine.project_rationalized(project)
    rows = []
    for triad in project.triads:
        cells = crossdep.pending(triad)
        stale = sum(1 for _, _, s in cells if s.is_stale)
        rows.append(
            {
                "left": triad.left,
                "right": triad.right,
                "synchronized": crossdep.is_synchronized(triad),
                "pending": len(cells) - stale,
                "stale": stale,
            }
        )
    if args.format == "json":
        print(json.dumps({"rationalized": rationalized, "triads": rows}, indent=2))
    else:
        print(f"project: {args.project} ({len(project.models)} models, {len(rows)} triads)")
        for row in rows:
            flag = "synchronized" if row["synchronized"] else "NOT synchronized"
            print(
                f"  {row['left']}~{row['right']}: {flag}"
                f" (pending {row['pending']}, stale {row['stale']})"
            )
        print("rationalized: " + ("yes" if rationalized else "no"))
    return EXIT_OK if rationalized else EXIT_FAILURE


def _cmd_pairs(args: argparse.Namespace) -> int:
    project, _ = _load(args)
    if args.triad:
        key = _triad_key(project, args.triad)
        entries = [e for e in engine.global_pending(project) if e[0] == key]
    else:
        entries = engine.global_pending(project)
    if args.format == "json":
        print(json.dumps(_pending_json(entries), indent=2))
    else:
        _print_pending(entries)
    return EXIT_OK


def _cmd_classify(args: argparse.Namespace) -> int:
    with storage.project_lock(args.project):
        project, layout = _load(args)
        row, col = _cell_ids(args.triad, args.cell)
        kind = CrossKind.from_token(args.kind)
        project = engine.classify_cell(project, row, col, kind, comment=args.comment)
        storage.save_project(project, layout)
    remaining = len(engine.global_pending(project))
    print(f"classified ({row}, {col}) as {kind.token}; {remaining} cell(s) still pending")
    return EXIT_OK


def _impact_lines(report: engine.ImpactReport) -> list[str]:
    lines = [f"new cells: {len(report.new_cells)}", f"stale cells: {len(report.stale_cells)}"]
    for key, row, col in report.new_cells:
        lines.append(f"  new   {key[0]}~{key[1]}\t{row.local}\t{col.local}")
    for key, row, col, kind in report.stale_cells:
        lines.append(f"  stale {key[0]}~{key[1]}\t{row.local}\t{col.local}\t(was {kind.token})")
    return lines


def _cmd_edit(args: argparse.Namespace) -> int:
    with storage.project_lock(args.project):
        project, layout = _load(args)
        edit = textio.parse_edit_spec(args.op, args.model)
        project, report = engine.propagate_edit(project, args.model, edit)
        storage.save_project(project, layout)
    print(f"applied to {args.model}: {textio.format_edit_spec(edit)}")
    for line in _impact_lines(report):
        print(line)
    return EXIT_OK


def _cmd_recipe(args: argparse.Namespace) -> int:
    with storage.project_lock(args.project):
        project, layout = _load(args)
        key = _triad_key(project, args.triad)
        cells = [_cell_ids(args.triad, cell) for cell in args.cell]
        if args.name == "usage":
            resolution = engine.recipe_implication_as_usage(project, key, cells)
        elif args.name == "modes":
            resolution = engine.recipe_implication_as_modes(
                project, key, cells, (args.normal_template, args.test_template)
            )
        else:
            if not args.prioritize:
                print("error: --prioritize is required for the priority recipe", file=sys.stderr)
                return EXIT_USAGE
            if len(cells) != 1:
                print("error: the priority recipe takes exactly one --cell", file=sys.stderr)
                return EXIT_USAGE
            resolution = engine.recipe_contradiction_priority(
                project, key, cells[0], args.prioritize, args.extension_label
            )
        print(f"recipe {resolution.recipe} on {key[0]}~{key[1]}:")
        for model_name, edit in resolution.edits:
            print(f"  edit {model_name}: {textio.format_edit_spec(edit)}")
        print(f"  settles {len(resolution.reclassifications)} cell review(s)")
        if args.preview:
            print("preview only; nothing applied")
            return EXIT_OK
        project, report = engine.apply_resolution(project, resolution)
        storage.save_project(project, layout)
    for line in _impact_lines(report):
        print(line)
    return EXIT_OK


def _cmd_impact(args: argparse.Namespace) -> int:
    project, _ = _load(args)
    entries = engine.stale_cells(project)
    if args.format == "json":
        print(json.dumps(_pending_json(entries), indent=2))
    else:
        _print_pending(entries)
    return EXIT_OK


def _cmd_merge(args: argparse.Namespace) -> int:
    project, _ = _load(args)
    violations = synthesis.check_mergeability(project)
    if violations:
        print("merge blocked:", file=sys.stderr)
        for violation in violations:
            print(f"  - {violation.describe()}", file=sys.stderr)
        return EXIT_FAILURE
    merged = synthesis.merge(project)
    output = Path(args.output)
    with open(output, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(textio.print_merged_model(merged))
    print(f"merged {len(project.models)} models into {output}")
    print(f"entities: {len(merged.entities)}, dependencies: {len(merged.deps)}")
    for entity in merged.entities:
        if len(entity.aliases) > 1:
            aliases = ", ".join(str(a) for a in entity.aliases)
            print(f"  {entity.id.local} {entity.name!r} merges {aliases}")
    return EXIT_OK


def _cmd_render(args: argparse.Namespace) -> int:
    project, _ = _load(args)
    if args.merged:
        violations = synthesis.check_mergeability(project)
        if violations:
            print("merge blocked:", file=sys.stderr)
            for violation in violations:
                print(f"  - {violation.describe()}", file=sys.stderr)
            return EXIT_FAILURE
        text = textio.merged_diagram_dot(synthesis.merge(project))
    else:
        model = project.model(args.model)
        for id in textio.unallocated_usecases(model):
            print(f"warning: use case {id} is not allocated to the system", file=sys.stderr)
        text = textio.model_diagram_dot(model)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.project)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
