"""Textual formats: model files, triad files, project manifests, exports.

All formats are line-oriented UTF-8 with ``#`` comments; either line
ending is accepted on input and LF is emitted. Every parse failure
carries a source span. Printing is canonical, so parse(print(x)) == x.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .crossdep import (
    CellState,
    CrossKind,
    KindNotPermittedError,
    Triad,
    permitted_kinds,
)
from .errors import ReqSyncError
from .model import (
    AddDep,
    AddEntity,
    AddExtensionPoint,
    DepKind,
    Edit,
    Entity,
    EntityId,
    EntityKind,
    InModelDep,
    Model,
    ModelError,
    RemoveDep,
    RemoveEntity,
    RenameEntity,
    model_digests,
)
from .synthesis import MergedModel


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    col_start: int
    col_end: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col_start}"


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: str  # "error" or "warning"
    message: str
    span: SourceSpan

    def __str__(self) -> str:
        return f"{self.span}: {self.severity}: {self.message}"


class ParseError(ReqSyncError):
    def __init__(self, diagnostics: Sequence[ParseDiagnostic]):
        self.diagnostics = tuple(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class _Token:
    text: str
    span: SourceSpan
    quoted: bool = False


class _LineParser:
    """Shared tokenizer and diagnostic collector for all file formats."""

    def __init__(self, text: str, filename: str):
        self.filename = filename
        self.errors: list[ParseDiagnostic] = []
        self.warnings: list[ParseDiagnostic] = []
        self.lines = text.splitlines()

    def span(self, line: int, col_start: int = 1, col_end: int | None = None) -> SourceSpan:
        if col_end is None:
            col_end = max(col_start, len(self.lines[line - 1]) if line <= len(self.lines) else col_start)
        return SourceSpan(self.filename, line, col_start, col_end)

    def error(self, span: SourceSpan, message: str) -> None:
        self.errors.append(ParseDiagnostic("error", message, span))

    def warning(self, span: SourceSpan, message: str) -> None:
        self.warnings.append(ParseDiagnostic("warning", message, span))

    def finish(self, diagnostics: list[ParseDiagnostic] | None) -> None:
        if diagnostics is not None:
            diagnostics.extend(self.warnings)
        if self.errors:
            raise ParseError(self.errors)

    def statements(self) -> Iterable[list[_Token]]:
        for lineno, raw in enumerate(self.lines, start=1):
            tokens = self._tokenize(raw.rstrip("\r"), lineno)
            if tokens:
                yield tokens

    def _tokenize(self, line: str, lineno: int) -> list[_Token]:
        tokens: list[_Token] = []
        i = 0
        n = len(line)
        while i < n:
            ch = line[i]
            if ch in " \t":
                i += 1
                continue
            if ch == "#":
                break
            start = i
            if ch == '"':
                value, i, ok = self._scan_quoted(line, lineno, i)
                if not ok:
                    return tokens  # error already recorded
                tokens.append(_Token(value, self.span(lineno, start + 1, i), quoted=True))
            else:
                while i < n and line[i] not in ' \t"#':
                    i += 1
                tokens.append(_Token(line[start:i], self.span(lineno, start + 1, i)))
        return tokens

    def _scan_quoted(self, line: str, lineno: int, start: int) -> tuple[str, int, bool]:
        out: list[str] = []
        i = start + 1
        n = len(line)
        while i < n:
            ch = line[i]
            if ch == "\\":
                if i + 1 >= n or line[i + 1] not in '"\\':
                    self.error(self.span(lineno, i + 1, i + 2), "invalid escape in string")
                    return "", n, False
                out.append(line[i + 1])
                i += 2
                continue
            if ch == '"':
                return "".join(out), i + 1, True
            if ord(ch) < 0x20 or ord(ch) == 0x7F:
                self.error(self.span(lineno, i + 1, i + 1), "control character in string")
                return "", n, False
            out.append(ch)
            i += 1
        self.error(self.span(lineno, start + 1, n), "unterminated string")
        return "", n, False


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


_HEX_RE = re.compile(r"[0-9a-f]{4,64}\Z")
_KIND_TOKENS = {kind.token for kind in CrossKind}


# --- model files ------------------------------------------------------------

_ENTITY_KEYWORDS = {
    "system": EntityKind.SYSTEM,
    "actor": EntityKind.ACTOR,
    "usecase": EntityKind.USE_CASE,
}
_DEP_KEYWORDS = {kind.verb: kind for kind in DepKind}


def parse_model(
    text: str,
    *,
    filename: str = "<model>",
    diagnostics: list[ParseDiagnostic] | None = None,
) -> Model:
    """Parse one ``.ucm`` model file."""
    parser = _LineParser(text, filename)
    name: str | None = None
    title = ""
    entities: dict[EntityId, Entity] = {}
    deps: list[InModelDep] = []
    dep_set: set[InModelDep] = set()

    def local_id(token: _Token) -> EntityId | None:
        if token.quoted:
            parser.error(token.span, "expected an entity id, got a string")
            return None
        try:
            return EntityId.parse_local(token.text, name or "_")
        except ModelError as exc:
            parser.error(token.span, str(exc))
            return None

    def declared(token: _Token) -> EntityId | None:
        id = local_id(token)
        if id is None:
            return None
        if id not in entities:
            parser.error(token.span, f"unknown entity {token.text}")
            return None
        return id

    for tokens in parser.statements():
        keyword = tokens[0]
        if name is None:
            if keyword.text != "model":
                parser.error(keyword.span, "model file must start with: model <name> \"<title>\"")
                break
            if len(tokens) != 3 or tokens[1].quoted or not tokens[2].quoted:
                parser.error(keyword.span, "expected: model <name> \"<title>\"")
                break
            name, title = tokens[1].text, tokens[2].text
            if not re.match(r"[A-Za-z][A-Za-z0-9_-]*\Z", name):
                parser.error(tokens[1].span, f"invalid model name {name!r}")
                break
            continue

        if keyword.text in _ENTITY_KEYWORDS:
            kind = _ENTITY_KEYWORDS[keyword.text]
            if len(tokens) != 3 or tokens[1].quoted or not tokens[2].quoted:
                parser.error(keyword.span, f"expected: {keyword.text} <id> \"<name>\"")
                continue
            id = local_id(tokens[1])
            if id is None:
                continue
            if id in entities:
                parser.error(tokens[1].span, f"duplicate entity id {tokens[1].text}")
                continue
            try:
                entities[id] = Entity(id, kind, tokens[2].text)
            except ModelError as exc:
                parser.error(tokens[1].span, str(exc))
        elif keyword.text == "extpoint":
            if len(tokens) != 3 or tokens[1].quoted or not tokens[2].quoted:
                parser.error(keyword.span, "expected: extpoint <usecase-id> \"<label>\"")
                continue
            id = declared(tokens[1])
            if id is None:
                continue
            entity = entities[id]
            try:
                entities[id] = Entity(
                    id, entity.kind, entity.name, entity.extension_points + (tokens[2].text,)
                )
            except ModelError as exc:
                parser.error(tokens[2].span, str(exc))
        elif keyword.text in _DEP_KEYWORDS:
            kind = _DEP_KEYWORDS[keyword.text]
            if len(tokens) != 3 or tokens[1].quoted or tokens[2].quoted:
                parser.error(keyword.span, f"expected: {keyword.text} <id> <id>")
                continue
            source = declared(tokens[1])
            target = declared(tokens[2])
            if source is None or target is None:
                continue
            try:
                dep = InModelDep(kind, source, target)
            except ModelError as exc:
                parser.error(keyword.span, str(exc))
                continue
            if dep in dep_set:
                parser.error(keyword.span, f"duplicate dependency {keyword.text} {tokens[1].text} {tokens[2].text}")
                continue
            dep_set.add(dep)
            deps.append(dep)
        else:
            parser.error(keyword.span, f"unknown statement {keyword.text!r}")

    if name is None and not parser.errors:
        parser.error(parser.span(1, 1, 1), "empty model file")
    parser.finish(diagnostics)
    assert name is not None
    return Model(name, title, tuple(entities.values()), tuple(deps))


def print_model(model: Model) -> str:
    lines = [f"model {model.name} {_quote(model.title)}"]
    if model.entities:
        lines.append("")
    for entity in model.entities:
        lines.append(f"{entity.kind.value} {entity.id.local} {_quote(entity.name)}")
    for entity in model.entities:
        for label in entity.extension_points:
            lines.append(f"extpoint {entity.id.local} {_quote(label)}")
    if model.deps:
        lines.append("")
    for dep in model.deps:
        lines.append(f"{dep.kind.verb} {dep.source.local} {dep.target.local}")
    return "\n".join(lines) + "\n"


# --- triad files ------------------------------------------------------------


def parse_triad(
    text: str,
    models: Mapping[str, Model],
    *,
    filename: str = "<triad>",
    diagnostics: list[ParseDiagnostic] | None = None,
) -> Triad:
    """Parse one ``.xdep`` triad file against the current models.

    Recorded digests that differ from the referenced model's current
    entity digests force the affected classified cells to stale: the
    model moved on since the cells were confirmed.
    """
    parser = _LineParser(text, filename)
    left: Model | None = None
    right: Model | None = None
    recorded: dict[EntityId, str] = {}
    cells: dict[tuple[EntityId, EntityId], CellState] = {}

    for tokens in parser.statements():
        keyword = tokens[0]
        if left is None or right is None:
            if keyword.text != "triad" or len(tokens) != 3 or tokens[1].quoted or tokens[2].quoted:
                parser.error(keyword.span, "triad file must start with: triad <left-model> <right-model>")
                break
            left_name, right_name = tokens[1].text, tokens[2].text
            if left_name not in models:
                parser.error(tokens[1].span, f"unknown model {left_name!r}")
                break
            if right_name not in models:
                parser.error(tokens[2].span, f"unknown model {right_name!r}")
                break
            if left_name == right_name:
                parser.error(tokens[2].span, "a triad relates two distinct models")
                break
            left, right = models[left_name], models[right_name]
            continue

        if keyword.text == "digest":
            if len(tokens) != 3 or tokens[1].quoted or tokens[2].quoted:
                parser.error(keyword.span, "expected: digest <model>.<id> <hex>")
                continue
            try:
                id = EntityId.parse(tokens[1].text)
            except ModelError as exc:
                parser.error(tokens[1].span, str(exc))
                continue
            if id.model not in (left.name, right.name):
                parser.error(tokens[1].span, f"{id.model!r} is not part of this triad")
                continue
            owner = left if id.model == left.name else right
            if not owner.has_entity(id):
                parser.warning(tokens[1].span, f"digest for unknown entity {id} dropped")
                continue
            if not _HEX_RE.match(tokens[2].text):
                parser.error(tokens[2].span, "digest must be lowercase hex")
                continue
            recorded[id] = tokens[2].text
            continue

        stale = keyword.text.startswith("!")
        kind_token = keyword.text[1:] if stale else keyword.text
        if kind_token not in _KIND_TOKENS:
            parser.error(keyword.span, f"unknown cell kind {keyword.text!r}")
            continue
        if len(tokens) not in (3, 4) or tokens[1].quoted or tokens[2].quoted:
            parser.error(keyword.span, "expected: <KIND> <left-id> <right-id> [\"comment\"]")
            continue
        comment = None
        if len(tokens) == 4:
            if not tokens[3].quoted:
                parser.error(tokens[3].span, "cell comment must be a quoted string")
                continue
            comment = tokens[3].text
        try:
            row = EntityId.parse_local(tokens[1].text, left.name)
            col = EntityId.parse_local(tokens[2].text, right.name)
        except ModelError as exc:
            parser.error(keyword.span, str(exc))
            continue
        if not left.has_entity(row):
            parser.error(tokens[1].span, f"unknown entity {row}")
            continue
        if not right.has_entity(col):
            parser.error(tokens[2].span, f"unknown entity {col}")
            continue
        if (row, col) in cells:
            parser.error(keyword.span, f"duplicate cell ({row}, {col})")
            continue
        kind = CrossKind.from_token(kind_token)
        if kind not in permitted_kinds(row, col):
            parser.error(
                keyword.span,
                f"kind {kind.token} is not permitted between {row.kind.value} and {col.kind.value}",
            )
            continue
        cells[(row, col)] = CellState.stale(kind, comment) if stale else CellState.classified(kind, comment)

    if left is None or right is None:
        if not parser.errors:
            parser.error(parser.span(1, 1, 1), "empty triad file")
        parser.finish(diagnostics)
        raise AssertionError("unreachable")

    current = {**model_digests(left), **model_digests(right)}
    drifted = {id for id, digest in recorded.items() if current[id] != digest}
    final_cells: list[tuple[EntityId, EntityId, CellState]] = []
    for (row, col), state in cells.items():
        if state.is_classified and (row in drifted or col in drifted):
            assert state.kind is not None
            state = CellState.stale(state.kind, state.comment)
        final_cells.append((row, col, state))
    parser.finish(diagnostics)
    return Triad(
        left.name,
        right.name,
        left.entity_ids,
        right.entity_ids,
        tuple(final_cells),
        tuple(current.items()),
    )


def print_triad(triad: Triad) -> str:
    lines = [f"triad {triad.left} {triad.right}"]
    if triad.digests:
        lines.append("")
    for id, digest in triad.digests:
        lines.append(f"digest {id} {digest}")
    if triad.cells:
        lines.append("")
    for row, col, state in triad.cells:
        assert state.kind is not None
        prefix = "!" if state.is_stale else ""
        cell = f"{prefix}{state.kind.token} {row.local} {col.local}"
        if state.comment is not None:
            cell += f" {_quote(state.comment)}"
        lines.append(cell)
    return "\n".join(lines) + "\n"


# --- project manifests -------------------------------------------------------


@dataclass(frozen=True)
class ProjectManifest:
    title: str
    model_paths: tuple[str, ...]
    triad_paths: tuple[str, ...]


def parse_project_manifest(
    text: str,
    *,
    filename: str = "<project>",
    diagnostics: list[ParseDiagnostic] | None = None,
) -> ProjectManifest:
    parser = _LineParser(text, filename)
    title: str | None = None
    model_paths: list[str] = []
    triad_paths: list[str] = []
    for tokens in parser.statements():
        keyword = tokens[0]
        if title is None:
            if keyword.text != "project" or len(tokens) != 2 or not tokens[1].quoted:
                parser.error(keyword.span, "project file must start with: project \"<title>\"")
                break
            title = tokens[1].text
            continue
        if keyword.text in ("model", "triad") and len(tokens) >= 2:
            path = " ".join(t.text for t in tokens[1:])
            (model_paths if keyword.text == "model" else triad_paths).append(path)
        else:
            parser.error(keyword.span, f"expected 'model <path>' or 'triad <path>', got {keyword.text!r}")
    if title is None and not parser.errors:
        parser.error(parser.span(1, 1, 1), "empty project file")
    parser.finish(diagnostics)
    assert title is not None
    return ProjectManifest(title, tuple(model_paths), tuple(triad_paths))


def print_project_manifest(manifest: ProjectManifest) -> str:
    lines = [f"project {_quote(manifest.title)}"]
    if manifest.model_paths:
        lines.append("")
    lines.extend(f"model {path}" for path in manifest.model_paths)
    if manifest.triad_paths:
        lines.append("")
    lines.extend(f"triad {path}" for path in manifest.triad_paths)
    return "\n".join(lines) + "\n"


# --- edit specs ---------------------------------------------------------------


def parse_edit_spec(text: str, model_name: str, *, filename: str = "<edit>") -> Edit:
    """Parse a one-line edit description against a model's namespace."""
    parser = _LineParser(text, filename)
    statements = list(parser.statements())
    if parser.errors:
        raise ParseError(parser.errors)
    if len(statements) != 1:
        raise ParseError(
            [ParseDiagnostic("error", "expected exactly one edit statement", parser.span(1, 1, 1))]
        )
    tokens = statements[0]
    keyword = tokens[0]

    def fail(message: str) -> ParseError:
        return ParseError([ParseDiagnostic("error", message, keyword.span)])

    def id_at(index: int) -> EntityId:
        token = tokens[index]
        if token.quoted:
            raise fail("expected an entity id, got a string")
        try:
            return EntityId.parse_local(token.text, model_name)
        except ModelError as exc:
            raise ParseError([ParseDiagnostic("error", str(exc), token.span)]) from None

    if keyword.text == "entity":
        if len(tokens) < 4 or tokens[2].quoted or not tokens[3].quoted:
            raise fail("expected: entity <id> <system|actor|usecase> \"<name>\" [\"<extpoint>\"...]")
        if tokens[2].text not in _ENTITY_KEYWORDS:
            raise fail(f"unknown entity kind {tokens[2].text!r}")
        extpoints = []
        for token in tokens[4:]:
            if not token.quoted:
                raise fail("extension points must be quoted strings")
            extpoints.append(token.text)
        return AddEntity(id_at(1), _ENTITY_KEYWORDS[tokens[2].text], tokens[3].text, tuple(extpoints))
    if keyword.text == "drop":
        if len(tokens) != 2:
            raise fail("expected: drop <id>")
        return RemoveEntity(id_at(1))
    if keyword.text == "rename":
        if len(tokens) != 3 or not tokens[2].quoted:
            raise fail("expected: rename <id> \"<name>\"")
        return RenameEntity(id_at(1), tokens[2].text)
    if keyword.text == "extpoint":
        if len(tokens) != 3 or not tokens[2].quoted:
            raise fail("expected: extpoint <id> \"<label>\"")
        return AddExtensionPoint(id_at(1), tokens[2].text)
    if keyword.text in ("dep", "undep"):
        if len(tokens) != 4 or tokens[1].quoted:
            raise fail(f"expected: {keyword.text} <allocate|associate|include|extend|use> <id> <id>")
        if tokens[1].text not in _DEP_KEYWORDS:
            raise fail(f"unknown dependency kind {tokens[1].text!r}")
        kind = _DEP_KEYWORDS[tokens[1].text]
        if keyword.text == "dep":
            return AddDep(kind, id_at(2), id_at(3))
        return RemoveDep(kind, id_at(2), id_at(3))
    raise fail(f"unknown edit {keyword.text!r}")


def format_edit_spec(edit: Edit) -> str:
    if isinstance(edit, AddEntity):
        parts = [f"entity {edit.id.local} {edit.kind.value} {_quote(edit.name)}"]
        parts.extend(_quote(label) for label in edit.extension_points)
        return " ".join(parts)
    if isinstance(edit, RemoveEntity):
        return f"drop {edit.id.local}"
    if isinstance(edit, RenameEntity):
        return f"rename {edit.id.local} {_quote(edit.name)}"
    if isinstance(edit, AddExtensionPoint):
        return f"extpoint {edit.id.local} {_quote(edit.label)}"
    if isinstance(edit, AddDep):
        return f"dep {edit.kind.verb} {edit.source.local} {edit.target.local}"
    if isinstance(edit, RemoveDep):
        return f"undep {edit.kind.verb} {edit.source.local} {edit.target.local}"
    raise TypeError(f"unknown edit variant {type(edit).__name__}")


# --- matrix exports ------------------------------------------------------------


def model_matrix_csv(model: Model) -> str:
    """Adjacency grid as CSV; cells list dependency verbs joined by ';'."""
    from .model import adjacency_matrix

    matrix = adjacency_matrix(model)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    ids = matrix.ids
    writer.writerow([""] + [id.local for id in ids])
    for row in ids:
        cells = []
        for col in ids:
            kinds = matrix.kinds(row, col)
            cells.append(";".join(sorted(k.verb for k in kinds)))
        writer.writerow([row.local] + cells)
    return out.getvalue()


def triad_matrix_csv(triad: Triad) -> str:
    """Cross-model grid as CSV: kind tokens, '?' unreviewed, '!'-prefix stale."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([""] + [str(col) for col in triad.right_ids])
    for row in triad.left_ids:
        cells = []
        for col in triad.right_ids:
            state = triad.state(row, col)
            if state.is_unclassified:
                cells.append("?")
            elif state.is_stale:
                assert state.kind is not None
                cells.append("!" + state.kind.token)
            else:
                assert state.kind is not None
                cells.append(state.kind.token)
        writer.writerow([str(row)] + cells)
    return out.getvalue()


# --- diagram export -------------------------------------------------------------


def _dot_escape(value: str) -> str:
    escaped = value.replace("\\", "\\\\").replace('"', '\\"')
    return escaped.replace("\n", "\\n")  # label line break


_EDGE_STYLES = {
    DepKind.ASSOCIATION: "[dir=none]",
    DepKind.ALLOCATION: '[style=dotted, label="«allocate»"]',
    DepKind.INCLUDE: '[style=dashed, label="«include»"]',
    DepKind.EXTEND: '[style=dashed, label="«extend»"]',
    DepKind.USE: '[style=dashed, label="«use»"]',
}

_NODE_SHAPES = {
    EntityKind.SYSTEM: "shape=box, style=bold",
    EntityKind.ACTOR: "shape=plaintext",
    EntityKind.USE_CASE: "shape=ellipse",
}


def _diagram(
    name: str,
    nodes: Iterable[tuple[str, EntityKind, str]],
    edges: Iterable[tuple[str, str, DepKind]],
) -> str:
    lines = [f'digraph "{_dot_escape(name)}" {{', "  rankdir=LR;"]
    for node_id, kind, label in nodes:
        lines.append(f'  "{node_id}" [{_NODE_SHAPES[kind]}, label="{_dot_escape(label)}"];')
    for source, target, kind in edges:
        lines.append(f'  "{source}" -> "{target}" {_EDGE_STYLES[kind]};')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _entity_label(name: str, local: str, extension_points: Sequence[str]) -> str:
    label = f"{name}\n({local})"
    if extension_points:
        label += "\nextension points: " + ", ".join(extension_points)
    return label


def model_diagram_dot(model: Model) -> str:
    """One node per entity, one labeled edge per dependency."""
    nodes = [
        (e.id.local, e.kind, _entity_label(e.name, e.id.local, e.extension_points))
        for e in model.entities
    ]
    edges = [(d.source.local, d.target.local, d.kind) for d in model.deps]
    return _diagram(model.name, nodes, edges)


def merged_diagram_dot(merged: MergedModel) -> str:
    """Merged diagram; every node lists its full alias set."""
    nodes = []
    for entity in merged.entities:
        label = _entity_label(entity.name, entity.id.local, entity.extension_points)
        label += "\n" + ", ".join(str(alias) for alias in entity.aliases)
        nodes.append((entity.id.local, entity.kind, label))
    edges = [(d.source.local, d.target.local, d.kind) for d in merged.deps]
    return _diagram(merged.name, nodes, edges)


def print_merged_model(merged: MergedModel) -> str:
    """Merged model in the model-file grammar with traceability comments."""
    lines = [f"model {merged.name} {_quote(merged.title)}"]
    if merged.entities:
        lines.append("")
    for entity in merged.entities:
        aliases = ", ".join(str(alias) for alias in entity.aliases)
        line = f"{entity.kind.value} {entity.id.local} {_quote(entity.name)}  # aliases: {aliases}"
        if entity.name_aliases:
            line += "; also named: " + ", ".join(entity.name_aliases)
        lines.append(line)
    for entity in merged.entities:
        for label in entity.extension_points:
            lines.append(f"extpoint {entity.id.local} {_quote(label)}")
    if merged.deps:
        lines.append("")
    for dep in merged.deps:
        provenance = ", ".join(dep.provenance)
        lines.append(
            f"{dep.kind.verb} {dep.source.local} {dep.target.local}  # from: {provenance}"
        )
    return "\n".join(lines) + "\n"


def unallocated_usecases(model: Model) -> tuple[EntityId, ...]:
    """Use cases not allocated to the system; legal but worth flagging."""
    allocated = {d.source for d in model.deps if d.kind == DepKind.ALLOCATION}
    return tuple(
        e.id
        for e in model.entities
        if e.kind == EntityKind.USE_CASE and e.id not in allocated
    )
