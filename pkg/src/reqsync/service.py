"""HTTP facade over a single project for the companion UI.

Reads serve immutable snapshots; mutations are serialized through one
writer lock, persisted to disk before the response goes out, and
guarded by an optimistic ``expected_revision`` check (409 on drift).
Domain failures come back as structured 422 bodies, never 500.
"""

from __future__ import annotations

import re
import threading
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import crossdep, engine, storage, synthesis, textio
from .crossdep import CellState, CrossKind, Triad
from .engine import ImpactReport, Project, Resolution
from .errors import ReqSyncError
from .model import EntityId, Model
from .synthesis import MergedModel


class RevisionConflict(Exception):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"expected revision {expected}, project is at {actual}")


class NotFound(Exception):
    pass


class Session:
    """One writable project; mutations apply in arrival order.

    Holds the advisory file lock for its whole lifetime, so a second
    writable session (or a mutating CLI run) on the same project fails
    fast instead of racing.
    """

    def __init__(self, rsp_path: str | Path):
        self.rsp_path = Path(rsp_path)
        self._lock = threading.Lock()
        storage.acquire_lock(self.rsp_path)
        try:
            self.project, self.layout = storage.load_project(self.rsp_path)
        except BaseException:
            storage.release_lock(self.rsp_path)
            raise

    def close(self) -> None:
        storage.release_lock(self.rsp_path)

    def snapshot(self) -> Project:
        return self.project

    def mutate(
        self, expected_revision: int, fn: Callable[[Project], tuple[Project, Any]]
    ) -> Any:
        with self._lock:
            if expected_revision != self.project.revision:
                raise RevisionConflict(expected_revision, self.project.revision)
            project, payload = fn(self.project)
            storage.save_project(project, self.layout)
            self.project = project
            return payload


# --- serialization -----------------------------------------------------------


def _entity_json(model: Model, id: EntityId) -> dict:
    entity = model.entity(id)
    return {
        "id": str(id),
        "local": id.local,
        "kind": entity.kind.value,
        "name": entity.name,
        "extension_points": list(entity.extension_points),
    }


def _model_json(model: Model) -> dict:
    return {
        "name": model.name,
        "title": model.title,
        "entities": [_entity_json(model, id) for id in model.entity_ids],
        "deps": [
            {"kind": d.kind.verb, "source": d.source.local, "target": d.target.local}
            for d in model.deps
        ],
    }


def _cell_json(row: EntityId, col: EntityId, state: CellState) -> dict:
    return {
        "row": row.local,
        "col": col.local,
        "state": state.status.value,
        "kind": state.kind.token if state.kind else None,
        "comment": state.comment,
        "permitted": sorted(k.token for k in crossdep.permitted_kinds(row, col)),
    }


def _triad_json(project: Project, triad: Triad, left_first: bool) -> dict:
    if left_first:
        left, right = triad.left, triad.right
        rows, cols = triad.left_ids, triad.right_ids
    else:
        left, right = triad.right, triad.left
        rows, cols = triad.right_ids, triad.left_ids
    left_model = project.model(left)
    right_model = project.model(right)
    cells = []
    for row in rows:
        for col in cols:
            state = crossdep.query(triad, row, col)
            cells.append(_cell_json(row, col, state))
    return {
        "left": left,
        "right": right,
        "rows": [_entity_json(left_model, id) for id in rows],
        "cols": [_entity_json(right_model, id) for id in cols],
        "cells": cells,
        "synchronized": crossdep.is_synchronized(triad),
    }


def _pending_json(entries: list[engine.PendingEntry]) -> list[dict]:
    return [
        {
            "triad": list(key),
            "row": row.local,
            "col": col.local,
            "state": state.status.value,
            "kind": state.kind.token if state.kind else None,
        }
        for key, row, col, state in entries
    ]


def _impact_json(report: ImpactReport) -> dict:
    return {
        "edits": [
            {"model": model_name, "spec": textio.format_edit_spec(edit)}
            for model_name, edit in report.edits
        ],
        "new_cells": [
            {"triad": list(key), "row": row.local, "col": col.local}
            for key, row, col in report.new_cells
        ],
        "stale_cells": [
            {"triad": list(key), "row": row.local, "col": col.local, "kind": kind.token}
            for key, row, col, kind in report.stale_cells
        ],
        "affected_triads": sorted(list(key) for key in report.affected_triads),
    }


def _resolution_json(resolution: Resolution) -> dict:
    return {
        "recipe": resolution.recipe,
        "revision": resolution.revision,
        "triad": list(resolution.triad),
        "cells": [[row.local, col.local] for row, col in resolution.cells],
        "edits": [
            {"model": model_name, "spec": textio.format_edit_spec(edit)}
            for model_name, edit in resolution.edits
        ],
        "reclassifications": [
            {"triad": list(key), "row": row.local, "col": col.local, "kind": kind.token}
            for key, row, col, kind in resolution.reclassifications
        ],
    }


def _merged_json(merged: MergedModel) -> dict:
    return {
        "name": merged.name,
        "title": merged.title,
        "entities": [
            {
                "id": str(e.id),
                "local": e.id.local,
                "kind": e.kind.value,
                "name": e.name,
                "aliases": [str(a) for a in e.aliases],
                "name_aliases": list(e.name_aliases),
                "extension_points": list(e.extension_points),
            }
            for e in merged.entities
        ],
        "deps": [
            {
                "kind": d.kind.verb,
                "source": d.source.local,
                "target": d.target.local,
                "provenance": list(d.provenance),
            }
            for d in merged.deps
        ],
    }


def _violations_json(violations: list[synthesis.MergeViolation]) -> list[dict]:
    out = []
    for violation in violations:
        entry: dict[str, Any] = {
            "type": _snake_case(type(violation).__name__),
            "detail": violation.describe(),
        }
        if isinstance(violation, synthesis.NotSynchronized):
            entry["triad"] = list(violation.triad)
            entry["cells"] = [
                {"row": row.local, "col": col.local, "kind": kind.token}
                for row, col, kind in violation.conflicts
            ]
        out.append(entry)
    return out


def _snake_case(name: str) -> str:
    return re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", name).lower()


# --- request bodies ------------------------------------------------------------


class ClassifyBody(BaseModel):
    expected_revision: int
    row: str
    col: str
    kind: str
    comment: str | None = None


class EditBody(BaseModel):
    expected_revision: int
    spec: str


class RecipeBody(BaseModel):
    expected_revision: int
    preview: bool = False
    params: dict = {}


class MergeBody(BaseModel):
    expected_revision: int
    output: str | None = None


DEFAULT_FRONTEND_DIST = Path(__file__).resolve().parents[2] / "frontend" / "dist"


def create_app(project_path: str | Path, *, frontend_dir: Path | None = None) -> FastAPI:
    session = Session(project_path)
    app = FastAPI(title="reqsync", version="0.1.0", on_shutdown=[session.close])
    app.state.session = session

    @app.exception_handler(RevisionConflict)
    async def _conflict(_: Request, exc: RevisionConflict) -> JSONResponse:
        return JSONResponse(
            status_code=409,
            content={
                "error": {
                    "type": "revision_conflict",
                    "message": str(exc),
                    "expected": exc.expected,
                    "actual": exc.actual,
                }
            },
        )

    @app.exception_handler(NotFound)
    async def _not_found(_: Request, exc: NotFound) -> JSONResponse:
        return JSONResponse(
            status_code=404, content={"error": {"type": "not_found", "message": str(exc)}}
        )

    @app.exception_handler(ReqSyncError)
    async def _domain(_: Request, exc: ReqSyncError) -> JSONResponse:
        body: dict[str, Any] = {"type": _snake_case(type(exc).__name__), "message": str(exc)}
        if isinstance(exc, synthesis.MergeBlocked):
            body["violations"] = _violations_json(list(exc.violations))
        return JSONResponse(status_code=422, content={"error": body})

    def _model_or_404(project: Project, name: str) -> Model:
        try:
            return project.model(name)
        except engine.UnknownModelError as exc:
            raise NotFound(str(exc)) from None

    def _triad_or_404(project: Project, a: str, b: str) -> Triad:
        try:
            return project.triad(a, b)
        except engine.UnknownTriadError as exc:
            raise NotFound(str(exc)) from None

    @app.get("/api/project")
    def get_project() -> dict:
        project = session.snapshot()
        triads = []
        for triad in project.triads:
            cells = crossdep.pending(triad)
            stale = sum(1 for _, _, s in cells if s.is_stale)
            triads.append(
                {
                    "left": triad.left,
                    "right": triad.right,
                    "synchronized": crossdep.is_synchronized(triad),
                    "pending": len(cells) - stale,
                    "stale": stale,
                    "classified": len(triad.cells),
                    "size": triad.domain_size,
                }
            )
        return {
            "revision": project.revision,
            "title": session.layout.title,
            "rationalized": engine.project_rationalized(project),
            "models": [
                {
                    "name": m.name,
                    "title": m.title,
                    "entities": len(m.entities),
                    "deps": len(m.deps),
                }
                for m in project.models
            ],
            "triads": triads,
        }

    @app.get("/api/models/{name}")
    def get_model(name: str) -> dict:
        project = session.snapshot()
        model = _model_or_404(project, name)
        return {"revision": project.revision, **_model_json(model)}

    @app.get("/api/triads/{a}/{b}")
    def get_triad(a: str, b: str) -> dict:
        project = session.snapshot()
        triad = _triad_or_404(project, a, b)
        return {"revision": project.revision, **_triad_json(project, triad, triad.left == a)}

    @app.get("/api/pending")
    def get_pending() -> dict:
        project = session.snapshot()
        return {"revision": project.revision, "cells": _pending_json(engine.global_pending(project))}

    @app.get("/api/impact")
    def get_impact() -> dict:
        project = session.snapshot()
        return {"revision": project.revision, "cells": _pending_json(engine.stale_cells(project))}

    @app.get("/api/merge/preview")
    def merge_preview() -> dict:
        project = session.snapshot()
        violations = synthesis.check_mergeability(project)
        merged = synthesis.merge(project) if not violations else None
        return {
            "revision": project.revision,
            "mergeable": not violations,
            "violations": _violations_json(violations),
            "merged": _merged_json(merged) if merged else None,
        }

    @app.get("/api/export/{kind}")
    def export(
        kind: str,
        model: str | None = None,
        left: str | None = None,
        right: str | None = None,
        merged: bool = False,
    ) -> PlainTextResponse:
        project = session.snapshot()
        if kind == "csv":
            if model is not None:
                text = textio.model_matrix_csv(_model_or_404(project, model))
            elif left is not None and right is not None:
                text = textio.triad_matrix_csv(_triad_or_404(project, left, right))
            else:
                raise ReqSyncError("csv export needs ?model= or ?left=&right=")
            return PlainTextResponse(text, media_type="text/csv")
        if kind == "diagram":
            if merged:
                text = textio.merged_diagram_dot(synthesis.merge(project))
            elif model is not None:
                text = textio.model_diagram_dot(_model_or_404(project, model))
            else:
                raise ReqSyncError("diagram export needs ?model= or ?merged=true")
            return PlainTextResponse(text)
        raise NotFound(f"unknown export kind {kind!r}")

    @app.post("/api/triads/{a}/{b}/classify")
    def classify(a: str, b: str, body: ClassifyBody) -> dict:
        def apply(project: Project) -> tuple[Project, dict]:
            _triad_or_404(project, a, b)
            row = EntityId.parse_local(body.row, a)
            col = EntityId.parse_local(body.col, b)
            kind = CrossKind.from_token(body.kind)
            revised = engine.classify_cell(project, row, col, kind, comment=body.comment)
            triad = revised.triad(a, b)
            state = crossdep.query(triad, row, col)
            return revised, {
                "revision": revised.revision,
                "cell": _cell_json(row, col, state),
            }

        return session.mutate(body.expected_revision, apply)

    @app.post("/api/models/{name}/edits")
    def edit_model(name: str, body: EditBody) -> dict:
        def apply(project: Project) -> tuple[Project, dict]:
            _model_or_404(project, name)
            edit = textio.parse_edit_spec(body.spec, name)
            revised, report = engine.propagate_edit(project, name, edit)
            return revised, {"revision": revised.revision, "impact": _impact_json(report)}

        return session.mutate(body.expected_revision, apply)

    def _build_resolution(project: Project, name: str, params: dict) -> Resolution:
        try:
            pair = params["triad"]
            raw_cells = params["cells"]
        except KeyError as exc:
            raise engine.RecipeError(f"recipe params need {exc.args[0]!r}") from None
        key = project.triad(pair[0], pair[1]).key
        cells = [
            (EntityId.parse_local(row, pair[0]), EntityId.parse_local(col, pair[1]))
            for row, col in raw_cells
        ]
        if name == "usage":
            return engine.recipe_implication_as_usage(project, key, cells)
        if name == "modes":
            templates = (
                params.get("normal_template", engine.DEFAULT_MODE_TEMPLATES[0]),
                params.get("test_template", engine.DEFAULT_MODE_TEMPLATES[1]),
            )
            return engine.recipe_implication_as_modes(project, key, cells, templates)
        if name == "priority":
            if len(cells) != 1:
                raise engine.RecipeError("the priority recipe takes exactly one cell")
            return engine.recipe_contradiction_priority(
                project,
                key,
                cells[0],
                params.get("prioritize", ""),
                params.get("extension_label", engine.DEFAULT_PRIORITY_LABEL),
            )
        raise NotFound(f"unknown recipe {name!r}")

    @app.post("/api/recipes/{name}")
    def run_recipe(name: str, body: RecipeBody) -> dict:
        if body.preview:
            project = session.snapshot()
            resolution = _build_resolution(project, name, body.params)
            return {"revision": project.revision, "resolution": _resolution_json(resolution)}

        def apply(project: Project) -> tuple[Project, dict]:
            resolution = _build_resolution(project, name, body.params)
            revised, report = engine.apply_resolution(project, resolution)
            return revised, {"revision": revised.revision, "impact": _impact_json(report)}

        return session.mutate(body.expected_revision, apply)

    @app.post("/api/merge")
    def do_merge(body: MergeBody) -> dict:
        def apply(project: Project) -> tuple[Project, dict]:
            merged = synthesis.merge(project)  # raises MergeBlocked -> 422
            output = session.layout.root / (body.output or "merged.ucm")
            with open(output, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(textio.print_merged_model(merged))
            return project, {
                "revision": project.revision,
                "path": str(output),
                "merged": _merged_json(merged),
            }

        return session.mutate(body.expected_revision, apply)

    static_dir = frontend_dir if frontend_dir is not None else DEFAULT_FRONTEND_DIST
    if static_dir.is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
