"""Rules woven into a lazily loaded, persistently backed graph model."""

from .errors import (
    ActionError,
    CascadeError,
    EvaluationError,
    MetaModelError,
    RuleSyntaxError,
    RuleweaveError,
    StoreError,
    WeaveError,
)
from .metamodel import MetaModel, format_metamodel, lookup_class, parse_metamodel
from .reports import TriggerReport, WeaveReport
from .rulelang import parse_rules, pretty_print
from .runtime import Engine, eval_condition
from .store import UNSET, Store, StoreStats, open_store
from .weaver import (
    ActionDictionary,
    TriggerIndex,
    build_condition_graph,
    compile_action,
    instantiate_rule,
    weave,
)

__all__ = [
    "ActionDictionary",
    "ActionError",
    "CascadeError",
    "Engine",
    "EvaluationError",
    "MetaModel",
    "MetaModelError",
    "RuleSyntaxError",
    "RuleweaveError",
    "Store",
    "StoreError",
    "StoreStats",
    "TriggerIndex",
    "TriggerReport",
    "UNSET",
    "WeaveError",
    "WeaveReport",
    "build_condition_graph",
    "compile_action",
    "eval_condition",
    "format_metamodel",
    "instantiate_rule",
    "lookup_class",
    "open_store",
    "parse_metamodel",
    "parse_rules",
    "pretty_print",
    "weave",
]
