"""Textual scene language (``.geo``): parser with source spans and canonical serializer.

Grammar (EBNF)::

    document  = { line } ;
    line      = [ statement ] [ "#" { any } ] newline ;
    statement = seed | point | segment | polygon | circle | relation | mark ;
    seed      = "seed" INT ;
    point     = "point" LABEL "(" NUMBER "," NUMBER ")" ;
    segment   = "segment" LABEL LABEL ;
    polygon   = "polygon" LABEL LABEL LABEL { LABEL } [ ATTRIBUTE ] ;
    circle    = "circle" LABEL NUMBER ;
    relation  = RELKIND group group ;
    group     = "(" LABEL { LABEL } ")" ;
    mark      = "mark" ( "length" LABEL LABEL | "angle" LABEL LABEL LABEL ) "=" NUMBER ;
    ATTRIBUTE = "square" | "rectangle" | "right-triangle"
              | "isosceles-triangle" | "equilateral-triangle" ;
    RELKIND   = "parallel" | "perpendicular" | "similar" | "congruent" | "intersects" ;
    LABEL     = "A" .. "Z" ;

Inside a relation group adjacent labels may be written together, so
``(A B)`` and ``(AB)`` are the same operand.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .geometry import (
    ATTRIBUTES,
    RELATION_KINDS,
    NumericMark,
    Point,
    Relation,
    Scene,
    Shape,
    canonical,
    format_number,
    mark_entity,
    relation_entity,
    validate_scene,
)


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    end_line: int
    end_column: int


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "syntax" or "semantic"
    message: str
    span: Span
    code: str = ""

    def __str__(self) -> str:
        return f"{self.span.line}:{self.span.column}: {self.kind} error: {self.message}"


class DslError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class DslDocument:
    source: str
    scene: Scene
    spans: dict[str, Span] = field(default_factory=dict)


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<word>[a-z][a-z-]*)
  | (?P<label>[A-Z]+)
  | (?P<punct>[(),=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int

    @property
    def end(self) -> int:
        return self.col + len(self.text)


def _tokenize_line(text: str, lineno: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            span = Span(lineno, pos + 1, lineno, pos + 2)
            raise DslError([Diagnostic("syntax", f"unexpected character {text[pos]!r}", span)])
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), lineno, pos + 1))
        pos = m.end()
    return toks


class _Line:
    def __init__(self, toks: list[_Tok], lineno: int, width: int):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.width = width

    def error(self, message: str, tok: _Tok | None = None):
        if tok is None:
            span = Span(self.lineno, self.width + 1, self.lineno, self.width + 1)
        else:
            span = Span(tok.line, tok.col, tok.line, tok.end)
        raise DslError([Diagnostic("syntax", message, span)])

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, kind: str, text: str | None = None, what: str | None = None) -> _Tok:
        tok = self.peek()
        want = what or (repr(text) if text else kind)
        if tok is None:
            self.error(f"expected {want}, found end of line")
        if tok.kind != kind or (text is not None and tok.text != text):
            self.error(f"expected {want}, found {tok.text!r}", tok)
        self.i += 1
        return tok

    def label(self) -> str:
        tok = self.take("label", what="point label")
        if len(tok.text) != 1:
            self.error(f"point labels are single letters, found {tok.text!r}", tok)
        return tok.text

    def number(self) -> float:
        return float(self.take("number", what="number").text)

    def done(self):
        tok = self.peek()
        if tok is not None:
            self.error(f"unexpected {tok.text!r}", tok)

    def group(self) -> str:
        self.take("punct", "(")
        labels = ""
        while (tok := self.peek()) is not None and tok.kind == "label":
            labels += tok.text
            self.i += 1
        if not labels:
            self.error("expected point labels", self.peek())
        self.take("punct", ")")
        return labels


def parse_document(source: str) -> DslDocument:
    """Parse and validate; raises :class:`DslError` carrying every diagnostic."""
    points: list[Point] = []
    shapes: list[Shape] = []
    relations: list[Relation] = []
    marks: list[NumericMark] = []
    spans: dict[str, Span] = {}
    seed = 0
    lines = source.split("\n")

    def note(entity: str, toks: list[_Tok]):
        spans.setdefault(entity, Span(toks[0].line, toks[0].col, toks[-1].line, toks[-1].end))

    for lineno, text in enumerate(lines, start=1):
        toks = _tokenize_line(text, lineno)
        if not toks:
            continue
        ln = _Line(toks, lineno, len(text))
        head = ln.take("word", what="statement keyword")
        kw = head.text
        if kw == "seed":
            tok = ln.take("number", what="integer seed")
            try:
                seed = int(tok.text)
            except ValueError:
                ln.error("seed must be an integer", tok)
            ln.done()
        elif kw == "point":
            label = ln.label()
            ln.take("punct", "(")
            x = ln.number()
            ln.take("punct", ",")
            y = ln.number()
            ln.take("punct", ")")
            ln.done()
            points.append(Point(label, x, y))
            note(f"point:{label}", toks)
        elif kw == "segment":
            verts = (ln.label(), ln.label())
            ln.done()
            shapes.append(Shape("segment", verts))
            note(f"segment:{''.join(verts)}", toks)
        elif kw == "polygon":
            verts = []
            while (tok := ln.peek()) is not None and tok.kind == "label":
                verts.append(ln.label())
            if len(verts) < 3:
                ln.error("polygon needs at least three points", ln.peek())
            attr = None
            if ln.peek() is not None:
                tok = ln.take("word", what="attribute")
                if tok.text not in ATTRIBUTES:
                    ln.error(f"unknown attribute {tok.text!r}", tok)
                attr = tok.text
            ln.done()
            shapes.append(Shape("polygon", tuple(verts), attr))
            note(f"polygon:{''.join(verts)}", toks)
        elif kw == "circle":
            centre = ln.label()
            radius = ln.number()
            ln.done()
            shapes.append(Shape("circle", (centre,), None, radius))
            note(f"circle:{centre}", toks)
        elif kw in RELATION_KINDS:
            a = ln.group()
            b = ln.group()
            ln.done()
            rel = Relation(kw, (a, b))
            relations.append(rel)
            note(relation_entity(rel), toks)
        elif kw == "mark":
            q = ln.take("word", what="'length' or 'angle'")
            if q.text not in ("length", "angle"):
                ln.error(f"expected 'length' or 'angle', found {q.text!r}", q)
            n = 2 if q.text == "length" else 3
            target = tuple(ln.label() for _ in range(n))
            ln.take("punct", "=")
            value = ln.number()
            ln.done()
            mark = NumericMark(target, q.text, value)
            marks.append(mark)
            note(mark_entity(mark), toks)
        else:
            ln.error(f"unknown statement {kw!r}", head)

    scene = Scene(tuple(points), tuple(shapes), tuple(relations), tuple(marks), seed)
    violations = validate_scene(scene)
    if violations:
        last = max(len(lines), 1)
        whole = Span(1, 1, last, len(lines[-1]) + 1 if lines else 1)
        raise DslError(
            [Diagnostic("semantic", v.message, spans.get(v.entity, whole), v.code) for v in violations]
        )
    return DslDocument(source, scene, spans)


def parse(source: str) -> Scene:
    return parse_document(source).scene


def parse_corpus(sources) -> list[tuple[Scene | None, list[Diagnostic]]]:
    """Parse many documents; bad ones yield ``(None, diagnostics)`` instead of raising."""
    out = []
    for src in sources:
        try:
            out.append((parse(src), []))
        except DslError as exc:
            out.append((None, exc.diagnostics))
    return out


def serialize(scene: Scene) -> str:
    """Canonical DSL text; invalid scenes are rejected."""
    problems = validate_scene(scene)
    if problems:
        raise ValueError(f"cannot serialize invalid scene: {problems[0].message}")
    s = canonical(scene)
    lines = [f"seed {s.seed}"]
    for p in s.points:
        lines.append(f"point {p.id} ({format_number(p.x)}, {format_number(p.y)})")
    for sh in s.shapes:
        if sh.kind == "circle":
            lines.append(f"circle {sh.vertices[0]} {format_number(sh.radius)}")
        else:
            line = f"{sh.kind} {' '.join(sh.vertices)}"
            if sh.attribute:
                line += f" {sh.attribute}"
            lines.append(line)
    for r in s.relations:
        a, b = (" ".join(op) for op in r.operands)
        lines.append(f"{r.kind} ({a}) ({b})")
    for m in s.marks:
        lines.append(f"mark {m.quantity} {' '.join(m.target)} = {format_number(m.value)}")
    return "\n".join(lines) + "\n"


def structurally_equal(a: Scene, b: Scene) -> bool:
    return canonical(a) == canonical(b)
