"""Data-structure definitions: classes with typed attributes and references.

The textual form is deliberately small::

    # comment
    class building.Room {
        att temperature: Float
        rel heatingSystem: building.HeatingSystem
        rel neighbours: building.Room *
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import MetaModelError

VALUE_TYPES = ("Bool", "Int", "Float", "String")

# Kind tags of rule and condition nodes share the class-name namespace of the store.
RESERVED_KINDS = frozenset(
    {"rule", "And", "Or", "Not", "Eq", "Neq", "Gt", "Gte", "Lt", "Lte", "Const", "Ref"}
)
# Back-relation from a data node to the rule nodes guarding it.
RULES_RELATION = "rules"


@dataclass(frozen=True)
class AttributeDef:
    name: str
    value_type: str


@dataclass(frozen=True)
class ReferenceDef:
    name: str
    target_class: str
    many: bool = False


@dataclass(frozen=True)
class ClassDef:
    qualified_name: str
    attributes: tuple[AttributeDef, ...] = ()
    references: tuple[ReferenceDef, ...] = ()

    def attribute(self, name: str) -> AttributeDef | None:
        for att in self.attributes:
            if att.name == name:
                return att
        return None

    def reference(self, name: str) -> ReferenceDef | None:
        for ref in self.references:
            if ref.name == name:
                return ref
        return None


@dataclass(frozen=True)
class MetaModel:
    classes: tuple[ClassDef, ...] = ()
    index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index.update((c.qualified_name, c) for c in self.classes)

    def __contains__(self, qualified_name: str) -> bool:
        return qualified_name in self.index


def lookup_class(mm: MetaModel, qualified_name: str) -> ClassDef | None:
    """Case-sensitive lookup; ``None`` when the class does not exist."""
    return mm.index.get(qualified_name)


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\f]+)|(?P<nl>\n)|(?P<comment>\#[^\n]*)"
    r"|(?P<qname>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)"
    r"|(?P<punct>[{}:*])"
)


def _tokenize(text: str):
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise MetaModelError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("qname", "punct"):
            yield m.group(), line, pos - line_start + 1
        pos = m.end()
    yield "", line, pos - line_start + 1


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok, line, col = self.next()
        if tok != value:
            raise MetaModelError(f"unexpected {tok or 'end of input'!r}", line, col, {value})
        return tok

    def ident(self, what: str, dotted: bool):
        tok, line, col = self.next()
        if not tok or not (tok[0].isalpha() or tok[0] == "_") or (not dotted and "." in tok):
            raise MetaModelError(f"expected {what}, got {tok or 'end of input'!r}", line, col)
        return tok, line, col

    def parse(self) -> list[tuple[ClassDef, int, int, list]]:
        out = []
        while self.peek()[0]:
            self.expect("class")
            qname, line, col = self.ident("class name", dotted=True)
            self.expect("{")
            atts, refs, positions, names = [], [], [], set()
            while True:
                tok, tline, tcol = self.peek()
                if tok == "}":
                    self.next()
                    break
                if tok not in ("att", "rel"):
                    raise MetaModelError(
                        f"unexpected {tok or 'end of input'!r}", tline, tcol, {"att", "rel", "}"}
                    )
                self.next()
                name, nline, ncol = self.ident("member name", dotted=False)
                if name in names:
                    raise MetaModelError(f"duplicate member {name!r} in {qname}", nline, ncol)
                if name == RULES_RELATION:
                    raise MetaModelError(f"member name {name!r} is reserved", nline, ncol)
                names.add(name)
                self.expect(":")
                if tok == "att":
                    vtype, vline, vcol = self.ident("value type", dotted=False)
                    if vtype not in VALUE_TYPES:
                        raise MetaModelError(f"unknown value type {vtype!r}", vline, vcol, VALUE_TYPES)
                    atts.append(AttributeDef(name, vtype))
                else:
                    target, tl, tc = self.ident("target class", dotted=True)
                    many = False
                    if self.peek()[0] == "*":
                        self.next()
                        many = True
                    refs.append(ReferenceDef(name, target, many))
                    positions.append((target, tl, tc))
            out.append((ClassDef(qname, tuple(atts), tuple(refs)), line, col, positions))
        return out


def parse_metamodel(text: str) -> MetaModel:
    """Parse the textual class definitions into a validated MetaModel."""
    parsed = _Parser(text).parse()
    seen: dict[str, ClassDef] = {}
    for cls, line, col, _ in parsed:
        if cls.qualified_name in seen:
            raise MetaModelError(f"duplicate class {cls.qualified_name!r}", line, col)
        if cls.qualified_name in RESERVED_KINDS:
            raise MetaModelError(f"class name {cls.qualified_name!r} is reserved", line, col)
        seen[cls.qualified_name] = cls
    for _, _, _, positions in parsed:
        for target, line, col in positions:
            if target not in seen:
                raise MetaModelError(f"unresolved reference target {target!r}", line, col)
    return MetaModel(tuple(c for c, *_ in parsed))


def format_metamodel(mm: MetaModel) -> str:
    blocks = []
    for cls in mm.classes:
        lines = [f"class {cls.qualified_name} {{"]
        lines += [f"    att {a.name}: {a.value_type}" for a in cls.attributes]
        lines += [
            f"    rel {r.name}: {r.target_class}{' *' if r.many else ''}" for r in cls.references
        ]
        lines.append("}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")
