"""Condition evaluation and action execution over the live (lazily loaded) graph."""

from __future__ import annotations

from typing import Callable, Iterable

from .errors import ActionError, CascadeError, EvaluationError, RuleweaveError
from .metamodel import RULES_RELATION, MetaModel
from .reports import TriggerReport, WeaveReport
from .rulelang import parse_rules
from .store import UNSET, Store, check_value
from .weaver import ActionDictionary, ActionProgram, TriggerIndex, weave

MAX_CASCADE_DEPTH = 64

_NUMERIC = (int, float)


def _compare(kind: str, left, right) -> bool:
    if left is UNSET or right is UNSET:
        raise EvaluationError(f"{kind} over an unset attribute")
    lt, rt = type(left), type(right)
    if lt in _NUMERIC and rt in _NUMERIC:
        left, right = float(left), float(right)
    elif lt is not rt:
        raise EvaluationError(f"cannot compare {lt.__name__} with {rt.__name__} using {kind}")
    elif kind not in ("Eq", "Neq"):
        # strings and booleans support equality only
        raise EvaluationError(f"{lt.__name__} values only support == and !=")
    if kind == "Eq":
        return left == right
    if kind == "Neq":
        return left != right
    if kind == "Lt":
        return left < right
    if kind == "Lte":
        return left <= right
    if kind == "Gt":
        return left > right
    if kind == "Gte":
        return left >= right
    raise EvaluationError(f"unknown comparison {kind}")


def _as_bool(kind: str, value) -> bool:
    if type(value) is not bool:
        raise EvaluationError(f"{kind} operand is {value!r}, not a Bool")
    return value


def eval_condition(store: Store, root: int):
    """Evaluate a condition graph rooted at ``root`` by post-order recursion.

    Operator nodes stay pinned while their children are evaluated, so the
    path from the root to the current node cannot be evicted. And/Or
    short-circuit left to right.
    """
    record = store.resolve(root)
    kind = record.class_name
    if kind == "Const":
        return record.attributes.get("value", UNSET)
    if kind == "Ref":
        targets = record.relations.get("target", ())
        attribute = record.attributes.get("attribute")
        if len(targets) != 1 or attribute is None:
            raise EvaluationError(f"malformed Ref node {root}")
        value = store.get_attribute(targets[0], attribute)
        if value is UNSET:
            raise EvaluationError(f"attribute {attribute!r} of node {targets[0]} is unset")
        return value
    left = record.relations.get("left", ())
    right = record.relations.get("right", ())
    if kind == "Not":
        if len(left) != 1 or right:
            raise EvaluationError(f"malformed Not node {root}")
    elif len(left) != 1 or len(right) != 1:
        raise EvaluationError(f"malformed {kind} node {root}")
    left = left[0]
    right = right[0] if right else None
    store.pin(root)
    try:
        a = eval_condition(store, left)
        if kind == "Not":
            return not _as_bool(kind, a)
        if kind == "And":
            return _as_bool(kind, eval_condition(store, right)) if _as_bool(kind, a) else False
        if kind == "Or":
            return True if _as_bool(kind, a) else _as_bool(kind, eval_condition(store, right))
        return _compare(kind, a, eval_condition(store, right))
    finally:
        store.unpin(root)


def _dedupe(ids: Iterable[int]) -> list[int]:
    return list(dict.fromkeys(ids))


def parse_literal(value_type: str, text: str):
    """Parse a setAttribute argument against the attribute's declared type."""
    try:
        if value_type == "String":
            return text
        if value_type == "Bool":
            if text in ("true", "false"):
                return text == "true"
            raise ValueError(text)
        if value_type == "Int":
            return int(text)
        return float(text)
    except ValueError:
        raise ActionError(f"cannot read {text!r} as {value_type}") from None


class Engine:
    """A store with woven rules: owns the action dictionary and trigger index.

    Installing an engine replaces the store's trigger hook, so every
    ``store.set_attribute`` evaluates the rules keyed on that attribute.
    """

    def __init__(self, store: Store, dictionary: ActionDictionary | None = None,
                 index: TriggerIndex | None = None):
        self.store = store
        self.dictionary = dictionary if dictionary is not None else ActionDictionary()
        self.index = index if index is not None else TriggerIndex()
        self.callbacks: dict[str, Callable] = {}
        self._depth = 0
        store.trigger = self._trigger

    @property
    def metamodel(self) -> MetaModel:
        return self.store.metamodel

    def weave(self, rules) -> WeaveReport:
        if isinstance(rules, str):
            rules = parse_rules(rules)
        return weave(self.store, self.metamodel, rules, self.dictionary, self.index)

    def register_callback(self, name: str, callback: Callable) -> None:
        """Make ``call("name")`` invoke ``callback(frontier, store) -> frontier``."""
        if name in self.callbacks:
            raise RuleweaveError(f"callback {name!r} is already registered")
        self.callbacks[name] = callback

    # -- triggering -------------------------------------------------------

    def _trigger(self, store: Store, node_id: int, attribute: str, value) -> TriggerReport:
        return self.on_attribute_set(node_id, attribute, value)

    def on_attribute_set(self, node_id: int, attribute: str, new_value=None) -> TriggerReport:
        """Run every rule keyed on (class of node, attribute) for this node."""
        report = TriggerReport(cascade_depth=self._depth)
        templates = self.index.get(self.store.class_of(node_id), attribute)
        if not templates:
            return report
        rule_nodes = self._rule_nodes(node_id)
        for template in templates:
            rule_id = rule_nodes.get(template.name)
            if rule_id is not None:
                self._check_rule(template.name, rule_id, node_id, report)
        return report

    def _rule_nodes(self, node_id: int) -> dict[str, int]:
        out = {}
        for rule_id in self.store.get_relation(node_id, RULES_RELATION):
            out.setdefault(self.store.resolve(rule_id).attributes["name"], rule_id)
        return out

    def check_rules(self, node_id: int) -> TriggerReport:
        """Evaluate every rule instance attached to ``node_id`` (no update needed)."""
        report = TriggerReport(cascade_depth=self._depth)
        for name, rule_id in self._rule_nodes(node_id).items():
            self._check_rule(name, rule_id, node_id, report)
        return report

    def _check_rule(self, name: str, rule_id: int, context: int, report: TriggerReport) -> None:
        record = self.store.resolve(rule_id)
        root = record.relations["condition"][0]
        action_id = record.attributes["action_id"]
        report.evaluated += 1
        try:
            result = eval_condition(self.store, root)
            if type(result) is not bool:
                raise EvaluationError(f"condition evaluated to {result!r}, not a Bool")
        except EvaluationError as exc:
            report.errors.append({"rule": name, "node": context, "error": str(exc)})
            return
        if not result:
            return
        report.fired.append((name, context))
        try:
            report.merge(self.execute_action(action_id, context))
        except ActionError as exc:
            partial = getattr(exc, "report", None)
            if partial is not None:
                report.merge(partial)
            report.errors.append({"rule": name, "node": context, "error": str(exc)})
        except CascadeError as exc:
            # keep what the aborted cascade did so far
            if exc.report is not None and exc.report is not report:
                report.merge(exc.report)
            exc.report = report
            raise

    # -- actions ----------------------------------------------------------

    def execute_action(self, action_id: int, context: int) -> TriggerReport:
        """Run a compiled action with the frontier starting at ``context``."""
        try:
            program = self.dictionary[action_id]
        except KeyError:
            raise ActionError(f"unknown action id {action_id!r}") from None
        self.store.resolve(context)
        report = TriggerReport(cascade_depth=self._depth)
        self._depth += 1
        try:
            if self._depth > MAX_CASCADE_DEPTH:
                raise CascadeError(self._depth, report)
            self.run_program(program, [context], {}, report)
        except ActionError as exc:
            exc.report = report
            raise
        finally:
            self._depth -= 1
        return report

    def run_program(self, program: ActionProgram, frontier: list[int], variables: dict,
                    report: TriggerReport) -> list[int]:
        store = self.store
        for step in program.steps:
            op, args = step.op, step.args
            if op == "relation":
                targets = []
                for node_id in frontier:
                    try:
                        targets.extend(store.get_relation(node_id, args[0]))
                    except RuleweaveError as exc:
                        raise ActionError(str(exc)) from None
                frontier = sorted(set(targets))
            elif op == "setAttribute":
                for node_id in frontier:
                    self._set(node_id, args[0], args[1], report)
            elif op == "filter":
                frontier = [
                    n for n in frontier if self.run_program(args[0], [n], variables, report)
                ]
            elif op == "ifThen":
                if self.run_program(args[0], frontier, variables, report):
                    self.run_program(args[1], frontier, variables, report)
            elif op == "save":
                variables[args[0]] = list(frontier)
            elif op == "load":
                if args[0] not in variables:
                    raise ActionError(f"variable {args[0]!r} was never saved")
                frontier = list(variables[args[0]])
            elif op == "call":
                callback = self.callbacks.get(args[0])
                if callback is None:
                    raise ActionError(f"no callback registered as {args[0]!r}")
                frontier = _dedupe(callback(list(frontier), store))
            else:
                raise ActionError(f"unknown operation {op!r}")
        return frontier

    def _set(self, node_id: int, attribute: str, text: str, report: TriggerReport) -> None:
        store = self.store
        cls = store.metamodel.index.get(store.class_of(node_id))
        att = cls.attribute(attribute) if cls is not None else None
        if att is None:
            raise ActionError(f"node {node_id} has no attribute {attribute!r}")
        value = parse_literal(att.value_type, text)
        check_value(att.value_type, value)
        try:
            report.merge(store.set_attribute(node_id, attribute, value))
        except CascadeError as exc:
            if exc.report is not None and exc.report is not report:
                report.merge(exc.report)
            exc.report = report
            raise
