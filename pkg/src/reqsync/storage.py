"""Loading and saving whole projects.

A project manifest lists model and triad files by path. Triads without
a file are created empty (fully unreviewed) and receive a default path
on the next save, so a manifest with only model lines is valid. All
file access in the package goes through this module.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from . import textio
from .crossdep import Triad, flip_triad
from .engine import Project, TriadKey
from .errors import ReqSyncError
from .model import Model
from .textio import ParseDiagnostic


class StorageError(ReqSyncError):
    pass


class ProjectLockedError(StorageError):
    pass


@dataclass
class ProjectLayout:
    """Where a project's files live; paths are absolute."""

    rsp_path: Path
    title: str
    model_paths: dict[str, Path] = field(default_factory=dict)
    triad_paths: dict[TriadKey, Path] = field(default_factory=dict)

    @property
    def root(self) -> Path:
        return self.rsp_path.parent


def default_model_path(root: Path, name: str) -> Path:
    return root / f"{name}.ucm"


def default_triad_path(root: Path, key: TriadKey) -> Path:
    return root / f"{key[0]}-{key[1]}.xdep"


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"unreadable path {path}: {exc}") from None


def load_project(
    rsp_path: str | Path, diagnostics: list[ParseDiagnostic] | None = None
) -> tuple[Project, ProjectLayout]:
    """Load a manifest plus everything it references.

    Model order in the manifest defines the model indices; triad files
    are re-oriented to that order if they declare the pair reversed.
    """
    rsp_path = Path(rsp_path).resolve()
    manifest = textio.parse_project_manifest(
        _read(rsp_path), filename=str(rsp_path), diagnostics=diagnostics
    )
    root = rsp_path.parent

    models: list[Model] = []
    model_paths: dict[str, Path] = {}
    for rel in manifest.model_paths:
        path = (root / rel).resolve()
        model = textio.parse_model(_read(path), filename=str(path), diagnostics=diagnostics)
        if model.name in model_paths:
            raise StorageError(f"manifest loads two models named {model.name!r}")
        models.append(model)
        model_paths[model.name] = path

    by_name = {m.name: m for m in models}
    order = {m.name: i for i, m in enumerate(models)}
    triads: dict[TriadKey, Triad] = {}
    triad_paths: dict[TriadKey, Path] = {}
    for rel in manifest.triad_paths:
        path = (root / rel).resolve()
        triad = textio.parse_triad(
            _read(path), by_name, filename=str(path), diagnostics=diagnostics
        )
        if order[triad.left] > order[triad.right]:
            triad = flip_triad(triad)
        if triad.key in triads:
            raise StorageError(f"duplicate triad file for pair {triad.key}")
        triads[triad.key] = triad
        triad_paths[triad.key] = path

    for i, left in enumerate(models):
        for right in models[i + 1 :]:
            key = (left.name, right.name)
            if key not in triads:
                triads[key] = Triad.from_models(left, right)
                triad_paths[key] = default_triad_path(root, key)

    project = Project(tuple(models), tuple(triads.values()), revision=0)
    layout = ProjectLayout(rsp_path, manifest.title, model_paths, triad_paths)
    return project, layout


def save_project(project: Project, layout: ProjectLayout) -> None:
    """Write every model, triad and the manifest; reload reproduces the state."""
    root = layout.root
    for model in project.models:
        layout.model_paths.setdefault(model.name, default_model_path(root, model.name))
    for triad in project.triads:
        layout.triad_paths.setdefault(triad.key, default_triad_path(root, triad.key))

    root.mkdir(parents=True, exist_ok=True)
    for model in project.models:
        _write(layout.model_paths[model.name], textio.print_model(model))
    for triad in project.triads:
        _write(layout.triad_paths[triad.key], textio.print_triad(triad))
    manifest = textio.ProjectManifest(
        layout.title,
        tuple(_rel(layout.model_paths[m.name], root) for m in project.models),
        tuple(_rel(layout.triad_paths[t.key], root) for t in project.triads),
    )
    _write(layout.rsp_path, textio.print_project_manifest(manifest))


def _rel(path: Path, root: Path) -> str:
    return os.path.relpath(path, root)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


# --- advisory lock -----------------------------------------------------------


def lock_path_for(rsp_path: str | Path) -> Path:
    return Path(f"{rsp_path}.lock")


def acquire_lock(rsp_path: str | Path) -> Path:
    path = lock_path_for(rsp_path)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ProjectLockedError(
            f"project is in use by another process (lock file {path})"
        ) from None
    with os.fdopen(fd, "w") as handle:
        handle.write(str(os.getpid()))
    return path


def release_lock(rsp_path: str | Path) -> None:
    try:
        lock_path_for(rsp_path).unlink()
    except FileNotFoundError:
        pass


@contextmanager
def project_lock(rsp_path: str | Path) -> Iterator[None]:
    acquire_lock(rsp_path)
    try:
        yield
    finally:
        release_lock(rsp_path)
