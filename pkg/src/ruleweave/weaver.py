"""Compile parsed rules into the node graph.

Weaving does three things:

* every action task is compiled into an :class:`ActionProgram` stored in an
  integer-keyed :class:`ActionDictionary`;
* every rule becomes a :class:`RuleTemplate` registered in a
  :class:`TriggerIndex` under its (context class, attribute) key, which is what
  ``Store.set_attribute`` consults instead of an overridden setter;
* every data node of a guarded class gets its own rule node plus a private
  condition graph (no sharing between rules or instances).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .errors import ClassMismatchError, UndeclaredMemberError, WeaveError
from .metamodel import RULES_RELATION, MetaModel
from .reports import WeaveReport
from .rulelang import ActionTask, AttributeRef, Condition, NumberLit, RuleDef, StringLit

RULE_KIND = "rule"
BOOLEAN_KINDS = ("And", "Or", "Not")
COMPARISON_KINDS = ("Eq", "Neq", "Gt", "Gte", "Lt", "Lte")
LEAF_KINDS = ("Const", "Ref")
CONDITION_KINDS = frozenset(BOOLEAN_KINDS + COMPARISON_KINDS + LEAF_KINDS)

# op name -> argument kinds ("str" or "task")
VOCABULARY = {
    "relation": ("str",),
    "traverse": ("str",),
    "setAttribute": ("str", "str"),
    "filter": ("task",),
    "ifThen": ("task", "task"),
    "save": ("str",),
    "load": ("str",),
    "call": ("str",),
}


@dataclass(frozen=True)
class Step:
    op: str
    args: tuple = ()


@dataclass(frozen=True)
class ActionProgram:
    steps: tuple[Step, ...]


def compile_program(task: ActionTask) -> ActionProgram:
    steps = []
    for call in task.operations:
        kinds = VOCABULARY.get(call.name)
        if kinds is None:
            raise WeaveError(f"unknown operation {call.name!r}")
        if len(call.args) != len(kinds):
            raise WeaveError(
                f"{call.name} takes {len(kinds)} argument(s), got {len(call.args)}"
            )
        args = []
        for kind, arg in zip(kinds, call.args):
            if kind == "str":
                if not isinstance(arg, str):
                    raise WeaveError(f"{call.name} expects a string argument, got a task")
                args.append(arg)
            else:
                if not isinstance(arg, ActionTask):
                    raise WeaveError(f"{call.name} expects a {{task}} argument, got a string")
                args.append(compile_program(arg))
        steps.append(Step("relation" if call.name == "traverse" else call.name, tuple(args)))
    return ActionProgram(tuple(steps))


class ActionDictionary:
    """Dense id -> ActionProgram table; identical programs share an id."""

    def __init__(self):
        self.entries: list[ActionProgram] = []
        self._ids: dict[ActionProgram, int] = {}

    def add(self, program: ActionProgram) -> int:
        action_id = self._ids.get(program)
        if action_id is None:
            action_id = len(self.entries)
            self.entries.append(program)
            self._ids[program] = action_id
        return action_id

    def __getitem__(self, action_id: int) -> ActionProgram:
        if not isinstance(action_id, int) or not 0 <= action_id < len(self.entries):
            raise KeyError(action_id)
        return self.entries[action_id]

    def __len__(self) -> int:
        return len(self.entries)


def compile_action(task: ActionTask, dictionary: ActionDictionary) -> int:
    return dictionary.add(compile_program(task))


@dataclass(frozen=True)
class CondTree:
    """Condition AST before materialization; mirrors the condition node kinds."""

    kind: str
    children: tuple["CondTree", ...] = ()
    value: object = None
    attribute: str | None = None

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def ref_attributes(self) -> set[str]:
        if self.kind == "Ref":
            return {self.attribute}
        out: set[str] = set()
        for child in self.children:
            out |= child.ref_attributes()
        return out


def const(value) -> CondTree:
    return CondTree("Const", value=value)


def ref(attribute: str) -> CondTree:
    return CondTree("Ref", attribute=attribute)


def node(kind: str, *children: CondTree) -> CondTree:
    return CondTree(kind, tuple(children))


def _lower_term(term, metamodel: MetaModel, refs: list) -> CondTree:
    if isinstance(term, AttributeRef):
        cls = metamodel.index.get(term.class_path)
        if cls is None:
            raise WeaveError(f"unknown class {term.class_path!r}")
        if cls.attribute(term.attribute) is None:
            raise WeaveError(f"{term.class_path} has no attribute {term.attribute!r}")
        refs.append(term)
        return ref(term.attribute)
    if isinstance(term, NumberLit):
        return const(term.value)
    if isinstance(term, StringLit):
        return const(term.text)
    raise WeaveError(f"unsupported term {term!r}")


def lower_condition(cond: Condition, metamodel: MetaModel) -> tuple[str, str, CondTree]:
    """Turn a surface condition into (context class, trigger attribute, tree)."""
    refs: list[AttributeRef] = []
    left = _lower_term(cond.left, metamodel, refs)
    right = _lower_term(cond.right, metamodel, refs)
    if not refs:
        raise WeaveError("condition references no attribute, so nothing can trigger it")
    if len({(r.class_path, r.attribute) for r in refs}) > 1:
        raise WeaveError("conditions may only reference a single attribute of one class")
    tree = node(cond.op, left, right)
    if cond.negated:
        tree = node("Not", tree)
    return refs[0].class_path, refs[0].attribute, tree


@dataclass(frozen=True)
class RuleTemplate:
    name: str
    context_class: str
    trigger_attribute: str
    condition: CondTree
    action_id: int


class TriggerIndex:
    """(class, attribute) -> templates, in declaration order."""

    def __init__(self):
        self.entries: dict[tuple[str, str], list[RuleTemplate]] = {}
        self.by_name: dict[str, RuleTemplate] = {}
        self.by_class: dict[str, list[RuleTemplate]] = {}

    def add(self, template: RuleTemplate) -> bool:
        """Register a template; False if an identical one is already present."""
        existing = self.by_name.get(template.name)
        if existing is not None:
            if existing == template:
                return False
            raise WeaveError("a different rule with this name is already woven", template.name)
        key = (template.context_class, template.trigger_attribute)
        self.entries.setdefault(key, []).append(template)
        self.by_class.setdefault(template.context_class, []).append(template)
        self.by_name[template.name] = template
        return True

    def get(self, class_name: str, attribute: str) -> list[RuleTemplate]:
        return self.entries.get((class_name, attribute), [])

    def __len__(self) -> int:
        return len(self.by_name)

    def instantiate_new(self, store, node_id: int, class_name: str) -> None:
        """Store create-hook: give a fresh data node its rule nodes."""
        for template in self.by_class.get(class_name, ()):
            instantiate_rule(store, template, node_id)


def _materialize(store, tree: CondTree, context: int) -> int:
    kind = tree.kind
    if kind == "Const":
        return store._create("Const", {"value": tree.value}, {})
    if kind == "Ref":
        return store._create("Ref", {"attribute": tree.attribute}, {"target": [context]})
    if kind == "Not":
        if len(tree.children) != 1:
            raise WeaveError("Not takes exactly one operand")
        return store._create("Not", {}, {"left": [_materialize(store, tree.children[0], context)]})
    if kind not in CONDITION_KINDS or len(tree.children) != 2:
        raise WeaveError(f"malformed condition node {kind} with {len(tree.children)} children")
    left = _materialize(store, tree.children[0], context)
    right = _materialize(store, tree.children[1], context)
    return store._create(kind, {}, {"left": [left], "right": [right]})


def build_condition_graph(
    store, cond: Union[Condition, CondTree], context: int
) -> int:
    """Create the condition nodes for one rule instance; returns the root id.

    Every Ref node gets a ``target`` relation to ``context``.
    """
    if isinstance(cond, Condition):
        context_class, _, tree = lower_condition(cond, store.metamodel)
        actual = store.class_of(context)
        if actual != context_class:
            raise ClassMismatchError(f"condition is on {context_class}, node is {actual}")
    else:
        tree = cond
        cls = store.metamodel.index.get(store.class_of(context))
        for attribute in tree.ref_attributes():
            if cls is None or cls.attribute(attribute) is None:
                raise UndeclaredMemberError(f"context node has no attribute {attribute!r}")
    return _materialize(store, tree, context)


def find_rule_node(store, data: int, rule_name: str) -> int | None:
    for rule_id in store.get_relation(data, RULES_RELATION):
        if store.resolve(rule_id).attributes.get("name") == rule_name:
            return rule_id
    return None


def instantiate_rule(store, template: RuleTemplate, data: int) -> int:
    """Attach one rule instance to ``data``; idempotent per (template, node)."""
    actual = store.class_of(data)
    if actual != template.context_class:
        raise ClassMismatchError(
            f"rule {template.name!r} guards {template.context_class}, node {data} is {actual}"
        )
    existing = find_rule_node(store, data, template.name)
    if existing is not None:
        return existing
    root = _materialize(store, template.condition, data)
    rule_id = store._create(
        RULE_KIND,
        {"action_id": template.action_id, "name": template.name},
        {"condition": [root], "context": [data]},
    )
    store._link(data, RULES_RELATION, rule_id)
    return rule_id


def make_template(rule: RuleDef, metamodel: MetaModel, dictionary: ActionDictionary) -> RuleTemplate:
    try:
        program = compile_program(rule.action)
        context_class, attribute, tree = lower_condition(rule.condition, metamodel)
    except WeaveError as exc:
        raise WeaveError(str(exc), rule.name) from None
    return RuleTemplate(rule.name, context_class, attribute, tree, dictionary.add(program))


def register_templates(store, templates, index: TriggerIndex, instantiate_existing: bool = True) -> WeaveReport:
    """Add templates to ``index``, hook future nodes, and optionally cover existing ones."""
    report = WeaveReport()
    first_id = store.last_id + 1
    existing_last = store.last_id
    added = []
    for template in templates:
        index.add(template)
        added.append(template)
        report.rules_woven.append(template.name)
    store.add_create_hook(index.instantiate_new)
    if instantiate_existing and added:
        by_class: dict[str, list[RuleTemplate]] = {}
        for template in added:
            by_class.setdefault(template.context_class, []).append(template)
        for node_id in range(1, existing_last + 1):
            for template in by_class.get(store.class_of(node_id), ()):
                before = store.last_id
                if instantiate_rule(store, template, node_id) > before:
                    report.rule_nodes_created += 1
    report.nodes_created = store.last_id + 1 - first_id
    return report


def weave(store, metamodel: MetaModel, rules: list[RuleDef], dictionary: ActionDictionary,
          index: TriggerIndex) -> WeaveReport:
    """Compile ``rules`` and instantiate them over existing and future nodes.

    All rules are checked before anything is written; if any of them fails, a
    WeaveError carrying the per-rule report is raised and neither the store
    nor the dictionary is modified.
    """
    errors = []
    checked = []
    names = set()
    for rule in rules:
        if rule.name in names:
            errors.append({"rule": rule.name, "error": "duplicate rule name"})
            continue
        names.add(rule.name)
        try:
            make_template(rule, metamodel, ActionDictionary())
            checked.append(rule)
        except WeaveError as exc:
            errors.append({"rule": rule.name, "error": str(exc)})
    if errors:
        exc = WeaveError("; ".join(e["error"] for e in errors))
        exc.report = WeaveReport(dictionary_size=len(dictionary), errors=errors)
        raise exc
    templates = []
    for rule in checked:
        template = make_template(rule, metamodel, dictionary)
        known = index.by_name.get(template.name)
        if known is not None and known != template:
            raise WeaveError("a different rule with this name is already woven", rule.name)
        templates.append(template)
    report = register_templates(store, templates, index)
    report.dictionary_size = len(dictionary)
    return report
