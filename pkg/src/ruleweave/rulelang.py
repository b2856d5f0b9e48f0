"""Tokenizer, recursive-descent parser and printer for the when/then rule language.

Grammar::

    rules     := ruleDef*
    ruleDef   := 'rule' STRING condition action 'end'
    condition := 'when' 'not'? term op term
    term      := type '.' attribute | NUMBER | STRING
    op        := '==' | '>' | '>=' | '<' | '<=' | '!='
    type      := IDENT ('.' IDENT)*
    action    := 'then' task
    task      := operation ('.' operation)*
    operation := IDENT '(' (value (',' value)*)? ')'
    value     := STRING | '{' task '}'
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import RuleSyntaxError

KEYWORDS = frozenset({"rule", "when", "not", "then", "end"})

# Surface operator -> comparison kind name used by the condition graph.
OPERATORS = {"==": "Eq", "!=": "Neq", ">": "Gt", ">=": "Gte", "<": "Lt", "<=": "Lte"}
OPERATOR_SYMBOLS = {kind: sym for sym, kind in OPERATORS.items()}


@dataclass(frozen=True)
class AttributeRef:
    class_path: str
    attribute: str


@dataclass(frozen=True)
class NumberLit:
    value: Union[int, float]

    def __eq__(self, other):
        # 18 and 18.0 print differently, so they must not compare equal
        return (
            isinstance(other, NumberLit)
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    def __hash__(self):
        return hash((type(self.value), self.value))


@dataclass(frozen=True)
class StringLit:
    text: str


Term = Union[AttributeRef, NumberLit, StringLit]


@dataclass(frozen=True)
class Condition:
    negated: bool
    left: Term
    op: str  # one of the OPERATORS values: Eq, Neq, Gt, Gte, Lt, Lte
    right: Term


@dataclass(frozen=True)
class OperationCall:
    name: str
    # Each argument is a plain string or a nested ActionTask.
    args: tuple = ()


@dataclass(frozen=True)
class ActionTask:
    operations: tuple[OperationCall, ...]


@dataclass(frozen=True)
class RuleDef:
    name: str
    condition: Condition
    action: ActionTask


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>[+-]?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|>=|<=|>|<)
  | (?P<punct>[.(),{}])
  | (?P<quote>["'])
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "'": "'", "\\": "\\"}


@dataclass(frozen=True)
class Token:
    kind: str  # keyword, ident, number, string, op, punct, eof
    text: str
    line: int
    column: int
    value: object = None


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
            pos = m.end()
        elif kind in ("ws", "comment"):
            pos = m.end()
        elif kind == "quote":
            quote = m.group()
            start_line, chars = line, []
            pos += 1
            while True:
                if pos >= n:
                    raise RuleSyntaxError("unterminated string", start_line, col)
                ch = text[pos]
                if ch == quote:
                    pos += 1
                    break
                if ch == "\\":
                    esc = text[pos + 1 : pos + 2]
                    if esc not in _ESCAPES:
                        raise RuleSyntaxError(
                            f"invalid escape sequence \\{esc}", line, pos - line_start + 1
                        )
                    chars.append(_ESCAPES[esc])
                    pos += 2
                    continue
                if ch == "\n":
                    line += 1
                    line_start = pos + 1
                chars.append(ch)
                pos += 1
            value = "".join(chars)
            tokens.append(Token("string", text[m.start() : pos], start_line, col, value))
        else:
            word = m.group()
            if kind == "ident" and word in KEYWORDS:
                kind = "keyword"
            value = None
            if kind == "number":
                value = float(word) if any(c in word for c in ".eE") else int(word)
            tokens.append(Token(kind, word, line, col, value))
            pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "eof" else repr(tok.text)


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def fail(self, expected) -> RuleSyntaxError:
        tok = self.tok
        return RuleSyntaxError(f"unexpected {_describe(tok)}", tok.line, tok.column, expected)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("keyword", "op", "punct"):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.tok
        if not self.accept(text):
            raise self.fail({repr(text)})
        return tok

    def expect_kind(self, kind: str) -> Token:
        tok = self.tok
        if tok.kind != kind:
            raise self.fail({kind.upper()})
        self.pos += 1
        return tok

    def rules(self) -> list[RuleDef]:
        out = []
        while self.tok.kind != "eof":
            if self.tok.text != "rule" or self.tok.kind != "keyword":
                raise self.fail({"'rule'", "end of input"})
            out.append(self.rule_def())
        return out

    def rule_def(self) -> RuleDef:
        self.expect("rule")
        name_tok = self.expect_kind("string")
        if not name_tok.value:
            raise RuleSyntaxError("rule name must not be empty", name_tok.line, name_tok.column)
        condition = self.condition()
        self.expect("then")
        action = self.task()
        self.expect("end")
        return RuleDef(name_tok.value, condition, action)

    def condition(self) -> Condition:
        self.expect("when")
        negated = self.accept("not")
        left = self.term()
        tok = self.tok
        if tok.kind != "op":
            raise self.fail(set(map(repr, OPERATORS)))
        self.pos += 1
        right = self.term()
        return Condition(negated, left, OPERATORS[tok.text], right)

    def term(self) -> Term:
        tok = self.tok
        if tok.kind == "number":
            self.pos += 1
            return NumberLit(tok.value)
        if tok.kind == "string":
            self.pos += 1
            return StringLit(tok.value)
        if tok.kind != "ident":
            raise self.fail({"IDENT", "NUMBER", "STRING"})
        segments = [self.expect_kind("ident").text]
        while self.accept("."):
            segments.append(self.expect_kind("ident").text)
        if len(segments) < 2:
            raise self.fail({"'.'"})
        return AttributeRef(".".join(segments[:-1]), segments[-1])

    def task(self) -> ActionTask:
        ops = [self.operation()]
        while self.accept("."):
            ops.append(self.operation())
        return ActionTask(tuple(ops))

    def operation(self) -> OperationCall:
        name = self.expect_kind("ident").text
        self.expect("(")
        args = []
        if not self.accept(")"):
            args.append(self.value())
            while self.accept(","):
                args.append(self.value())
            if not self.accept(")"):
                raise self.fail({"','", "')'"})
        return OperationCall(name, tuple(args))

    def value(self):
        if self.tok.kind == "string":
            tok = self.tok
            self.pos += 1
            return tok.value
        if self.accept("{"):
            inner = self.task()
            self.expect("}")
            return inner
        raise self.fail({"STRING", "'{'"})


def parse_rules(text: str) -> list[RuleDef]:
    """Parse rule source text into RuleDefs, in declaration order."""
    return _Parser(text).rules()


def quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_term(term: Term) -> str:
    if isinstance(term, AttributeRef):
        return f"{term.class_path}.{term.attribute}"
    if isinstance(term, StringLit):
        return quote(term.text)
    return repr(term.value)


def format_task(task: ActionTask, indent: str = "") -> str:
    parts = []
    for op in task.operations:
        args = ", ".join(
            quote(a) if isinstance(a, str) else "{ " + format_task(a) + " }" for a in op.args
        )
        parts.append(f"{op.name}({args})")
    return f"\n{indent}.".join(parts)


def format_condition(cond: Condition) -> str:
    text = f"{format_term(cond.left)} {OPERATOR_SYMBOLS[cond.op]} {format_term(cond.right)}"
    return "not " + text if cond.negated else text


def pretty_print(rules: list[RuleDef]) -> str:
    blocks = []
    for r in rules:
        blocks.append(
            f"rule {quote(r.name)}\n"
            f"when\n    {format_condition(r.condition)}\n"
            f"then\n    {format_task(r.action, '    ')}\n"
            f"end\n"
        )
    return "\n".join(blocks)
