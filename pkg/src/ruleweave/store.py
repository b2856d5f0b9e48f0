"""Persistent node graph behind a bounded LRU cache.

Nodes are loaded from the key-value backend the first time they are resolved
and written back (only if dirty) when they fall off the cache. Capacity is a
node count and covers every node kind: data, rule and condition nodes.
"""

from __future__ import annotations

import json
import os
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Callable

from . import codec
from .backends import LogBackend, MemoryBackend
from .errors import (
    CacheFullError,
    ClassMismatchError,
    StoreClosedError,
    StoreError,
    UndeclaredMemberError,
    UnknownClassError,
    UnknownNodeError,
    ValueTypeError,
)
from .metamodel import RESERVED_KINDS, RULES_RELATION, MetaModel
from .reports import TriggerReport

_PY_TYPES = {"Bool": bool, "Int": int, "Float": float, "String": str}
_INT_MIN, _INT_MAX = -(1 << 63), (1 << 63) - 1


class _Unset:
    __slots__ = ()

    def __repr__(self):
        return "UNSET"

    def __bool__(self):
        return False


UNSET = _Unset()


class NodeRecord:
    """One resident node. Only valid until the next store operation evicts it."""

    __slots__ = ("id", "class_name", "attributes", "relations")

    def __init__(self, node_id: int, class_name: str, attributes=None, relations=None):
        self.id = node_id
        self.class_name = class_name
        self.attributes: dict = attributes if attributes is not None else {}
        self.relations: dict[str, list[int]] = relations if relations is not None else {}

    def __repr__(self):
        return f"NodeRecord({self.id}, {self.class_name!r}, {self.attributes!r}, {self.relations!r})"


@dataclass
class StoreStats:
    loads: int = 0
    evictions: int = 0
    writes: int = 0
    resident_count: int = 0
    max_resident: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def check_value(value_type: str, value) -> None:
    if type(value) is not _PY_TYPES[value_type]:
        raise ValueTypeError(f"expected {value_type}, got {type(value).__name__} {value!r}")
    if value_type == "Int" and not _INT_MIN <= value <= _INT_MAX:
        raise ValueTypeError(f"Int {value} out of 64-bit range")


def _no_trigger(store, node_id, name, value) -> TriggerReport:
    return TriggerReport()


class Store:
    def __init__(self, backend, cache_capacity: int, metamodel: MetaModel):
        if not isinstance(cache_capacity, int) or cache_capacity < 1:
            raise StoreError(f"cache capacity must be a positive count, got {cache_capacity!r}")
        self.backend = backend
        self.capacity = cache_capacity
        self.metamodel = metamodel
        self._cache: OrderedDict[int, NodeRecord] = OrderedDict()
        self._dirty: set[int] = set()
        self._pins: dict[int, int] = {}
        self._stats = StoreStats()
        self._closed = False
        self._create_hooks: list[Callable] = []
        self.trigger: Callable = _no_trigger
        raw = backend.get(codec.meta_key())
        if raw is not None:
            self._next_id = codec.decode_uleb128(raw)[0]
        else:
            self._next_id = 1
            for key, _ in backend.iterate_prefix(bytes((codec.NODE_TAG,))):
                self._next_id = max(self._next_id, codec.key_id(key) + 1)
        self._persisted_next_id = self._next_id if raw is not None else None

    # -- cache management -------------------------------------------------

    def _check_open(self):
        if self._closed:
            raise StoreClosedError("store is closed")

    def _make_room(self) -> None:
        cache = self._cache
        while len(cache) >= self.capacity:
            pins = self._pins
            for victim in cache:
                if victim not in pins:
                    break
            else:
                raise CacheFullError(
                    f"all {len(cache)} resident nodes are pinned; cannot load another"
                )
            record = cache.pop(victim)
            if victim in self._dirty:
                self._dirty.discard(victim)
                self.backend.put(
                    codec.node_key(victim),
                    codec.encode_record(record.class_name, record.attributes, record.relations),
                )
                self._stats.writes += 1
            self._stats.evictions += 1

    def _admit(self, record: NodeRecord) -> None:
        self._make_room()
        self._cache[record.id] = record
        if len(self._cache) > self._stats.max_resident:
            self._stats.max_resident = len(self._cache)

    def resolve(self, node_id: int) -> NodeRecord:
        """Return the resident record for ``node_id``, loading it if needed."""
        self._check_open()
        record = self._cache.get(node_id)
        if record is not None:
            self._cache.move_to_end(node_id)
            return record
        if not isinstance(node_id, int) or not 0 < node_id < self._next_id:
            raise UnknownNodeError(f"unknown node id {node_id!r}")
        raw = self.backend.get(codec.node_key(node_id))
        if raw is None:
            raise UnknownNodeError(f"unknown node id {node_id!r}")
        self._stats.loads += 1
        record = NodeRecord(node_id, *codec.decode_record(raw))
        self._admit(record)
        return record

    def is_resident(self, node_id: int) -> bool:
        return node_id in self._cache

    def evict(self, node_id: int) -> bool:
        """Force one node out of the cache (writing it back if dirty)."""
        self._check_open()
        if node_id not in self._cache or node_id in self._pins:
            return False
        self._cache.move_to_end(node_id, last=False)
        saved, self.capacity = self.capacity, len(self._cache)
        try:
            self._make_room()
        finally:
            self.capacity = saved
        return True

    def evict_all(self) -> None:
        for node_id in list(self._cache):
            self.evict(node_id)

    def pin(self, node_id: int) -> None:
        self._check_open()
        if node_id not in self._pins and len(self._pins) >= self.capacity:
            raise CacheFullError(f"cannot pin more than {self.capacity} nodes")
        self.resolve(node_id)
        self._pins[node_id] = self._pins.get(node_id, 0) + 1

    def unpin(self, node_id: int) -> None:
        count = self._pins.get(node_id, 0)
        if count <= 1:
            self._pins.pop(node_id, None)
        else:
            self._pins[node_id] = count - 1

    @property
    def pinned_count(self) -> int:
        return len(self._pins)

    # -- node operations --------------------------------------------------

    def add_create_hook(self, hook: Callable) -> None:
        """Register ``hook(store, node_id, class_name)``, called after every create."""
        if hook not in self._create_hooks:
            self._create_hooks.append(hook)

    def create_node(self, class_name: str) -> int:
        self._check_open()
        if class_name not in self.metamodel.index and class_name not in RESERVED_KINDS:
            raise UnknownClassError(f"unknown class {class_name!r}")
        return self._create(class_name, {}, {})

    def _create(self, class_name: str, attributes: dict, relations: dict) -> int:
        node_id = self._next_id
        self._next_id += 1
        self._admit(NodeRecord(node_id, class_name, attributes, relations))
        self._dirty.add(node_id)
        for hook in self._create_hooks:
            hook(self, node_id, class_name)
        return node_id

    def _class_def(self, record: NodeRecord):
        return self.metamodel.index.get(record.class_name)

    def class_of(self, node_id: int) -> str:
        return self.resolve(node_id).class_name

    def get_attribute(self, node_id: int, name: str):
        record = self.resolve(node_id)
        cls = self._class_def(record)
        if cls is not None and cls.attribute(name) is None:
            raise UndeclaredMemberError(f"{record.class_name} has no attribute {name!r}")
        return record.attributes.get(name, UNSET)

    def set_attribute(self, node_id: int, name: str, value) -> TriggerReport:
        """Write an attribute, then run every rule keyed on (class, name)."""
        record = self.resolve(node_id)
        cls = self._class_def(record)
        if cls is None:
            raise UnknownClassError(f"{record.class_name!r} nodes have no declared attributes")
        att = cls.attribute(name)
        if att is None:
            raise UndeclaredMemberError(f"{record.class_name} has no attribute {name!r}")
        check_value(att.value_type, value)
        record.attributes[name] = value
        self._dirty.add(node_id)
        return self.trigger(self, node_id, name, value)

    def _set_raw(self, node_id: int, name: str, value) -> None:
        record = self.resolve(node_id)
        record.attributes[name] = value
        self._dirty.add(node_id)

    def _relation_many(self, record: NodeRecord, name: str) -> bool:
        cls = self._class_def(record)
        if cls is None:
            return True
        if name == RULES_RELATION:
            return True
        ref = cls.reference(name)
        if ref is None:
            raise UndeclaredMemberError(f"{record.class_name} has no relation {name!r}")
        return ref.many

    def add_relation(self, node_id: int, name: str, target: int) -> None:
        self._check_open()
        cls = self._class_def(self.resolve(node_id))
        if cls is not None and name != RULES_RELATION:
            ref = cls.reference(name)
            if ref is None:
                raise UndeclaredMemberError(f"{cls.qualified_name} has no relation {name!r}")
            target_class = self.class_of(target)
            if target_class != ref.target_class:
                raise ClassMismatchError(
                    f"{cls.qualified_name}.{name} expects {ref.target_class}, got {target_class}"
                )
        else:
            self.resolve(target)
        self._link(node_id, name, target)

    def _link(self, node_id: int, name: str, target: int) -> None:
        record = self.resolve(node_id)
        many = self._relation_many(record, name)
        targets = record.relations.get(name)
        if targets is None:
            record.relations[name] = [target]
        elif target in targets:
            return
        elif many:
            targets.append(target)
        else:
            targets[:] = [target]
        self._dirty.add(node_id)

    def remove_relation(self, node_id: int, name: str, target: int) -> None:
        record = self.resolve(node_id)
        self._relation_many(record, name)
        targets = record.relations.get(name)
        if targets and target in targets:
            targets.remove(target)
            if not targets:
                del record.relations[name]
            self._dirty.add(node_id)

    def get_relation(self, node_id: int, name: str) -> list[int]:
        """Target ids of a relation; the targets themselves are not loaded."""
        record = self.resolve(node_id)
        self._relation_many(record, name)
        return list(record.relations.get(name, ()))

    # -- persistence ------------------------------------------------------

    def flush(self) -> None:
        self._check_open()
        backend = self.backend
        for node_id in sorted(self._dirty):
            record = self._cache[node_id]
            backend.put(
                codec.node_key(node_id),
                codec.encode_record(record.class_name, record.attributes, record.relations),
            )
            self._stats.writes += 1
        self._dirty.clear()
        if self._persisted_next_id != self._next_id:
            backend.put(codec.meta_key(), codec.encode_uleb128(self._next_id))
            self._persisted_next_id = self._next_id
        backend.sync()

    def close(self) -> None:
        if self._closed:
            return
        self.flush()
        self.backend.close()
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def stats(self) -> StoreStats:
        s = self._stats
        return StoreStats(s.loads, s.evictions, s.writes, len(self._cache), s.max_resident)

    @property
    def last_id(self) -> int:
        return self._next_id - 1

    def node_ids(self) -> range:
        return range(1, self._next_id)


def open_store(backend="memory", cache_capacity: int = 10_000, metamodel: MetaModel | None = None) -> Store:
    """Open a store over ``backend``: a backend object, ``"memory"``, or a directory path."""
    if isinstance(backend, str) and backend == "memory":
        backend = MemoryBackend()
    elif isinstance(backend, (str, os.PathLike)):
        backend = LogBackend(backend)
    return Store(backend, cache_capacity, metamodel if metamodel is not None else MetaModel())
