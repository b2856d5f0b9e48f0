"""Exception hierarchy shared by all ruleweave modules."""

from __future__ import annotations


class RuleweaveError(Exception):
    """Base class for every error raised by this package."""


class SourceError(RuleweaveError):
    """A diagnostic tied to a position in some source text."""

    def __init__(self, message: str, line: int = 0, column: int = 0, expected=()):
        self.message = message
        self.line = line
        self.column = column
        self.expected = tuple(sorted(expected))
        where = f"{line}:{column}: " if line else ""
        hint = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{where}{message}{hint}")


class MetaModelError(SourceError):
    pass


class RuleSyntaxError(SourceError):
    pass


class StoreError(RuleweaveError):
    pass


class UnknownClassError(StoreError):
    pass


class UnknownNodeError(StoreError):
    pass


class UndeclaredMemberError(StoreError):
    pass


class ValueTypeError(StoreError):
    pass


class ClassMismatchError(StoreError):
    pass


class CacheFullError(StoreError):
    """Every resident node is pinned and another one must be loaded."""


class StoreClosedError(StoreError):
    pass


class CodecError(StoreError):
    pass


class WeaveError(RuleweaveError):
    def __init__(self, message: str, rule: str | None = None):
        self.rule = rule
        super().__init__(f"rule {rule!r}: {message}" if rule else message)


class EvaluationError(RuleweaveError):
    """A condition could not be evaluated to a boolean."""


class ActionError(RuleweaveError):
    """An action pipeline failed at runtime."""


class CascadeError(RuleweaveError):
    """Rule actions re-triggered each other beyond the depth limit."""

    def __init__(self, depth: int, report=None):
        self.depth = depth
        self.report = report
        super().__init__(f"trigger cascade exceeded depth limit at depth {depth}")
