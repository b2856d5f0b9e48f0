"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import random
import struct
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scenario import (  # noqa: E402
    METAMODEL_TEXT,
    make_scenario,
    random_condition,
    random_task,
    run_engine,
    run_oracle,
)

from ruleweave import Engine, eval_condition, open_store, parse_metamodel, parse_rules, pretty_print  # noqa: E402
from ruleweave.bench import (  # noqa: E402
    BUILDING_METAMODEL,
    SWITCH_ON_RULE,
    BenchConfig,
    bench_memory,
    bench_throughput,
)
from ruleweave.rulelang import (  # noqa: E402
    ActionTask,
    AttributeRef,
    Condition,
    NumberLit,
    OperationCall,
    RuleDef,
    StringLit,
)
from ruleweave.weaver import build_condition_graph, const, node, ref  # noqa: E402


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail

    return emit


def test_1_oracle_equivalence(verdict):
    start = time.perf_counter()
    mismatched = []
    updates = fired = 0
    for seed in range(100):
        sc = make_scenario(seed)
        assert len(sc.nodes) <= 1000 and len(sc.rules) <= 100 and len(sc.events) <= 5000
        got, want = run_engine(sc), run_oracle(sc)
        updates += len(sc.events)
        fired += sum(map(len, want.fired))
        same = (got.fired, got.errors, got.cascades, got.final) == (
            want.fired, want.errors, want.cascades, want.final
        )
        if not same:
            mismatched.append(seed)
    elapsed = time.perf_counter() - start
    verdict(
        1,
        not mismatched,
        f"100 scenarios (seeds 0-99), {updates} updates, {fired} firings, "
        f"mismatched seeds {mismatched}, {elapsed:.1f} s",
    )


def test_2_cache_capacity_invariance(verdict):
    sc = make_scenario(1000, budget=10_000)
    runs = {cap: run_engine(sc, cap) for cap in (16, 256, 10_000)}
    texts = {cap: "\n".join(out.reports).encode() for cap, out in runs.items()}
    finals = {cap: out.final for cap, out in runs.items()}
    ok = len(set(texts.values())) == 1 and finals[16] == finals[256] == finals[10_000]
    fired = sum(map(len, runs[16].fired))
    verdict(
        2,
        ok,
        f"seed 1000: {len(sc.nodes)} nodes, {len(sc.rules)} rules, {fired} firings, "
        f"{len(runs[16].cascades)} cascades; reports identical at 16/256/10000",
    )


@pytest.mark.slow
def test_3_memory_constant(verdict):
    reports = {}
    for size in (100_000, 1_000_000):
        reports[size] = bench_memory(BenchConfig(model_size=size, cache_capacity=10_000))
    maxima = {size: r.max_resident for size, r in reports.items()}
    rss = {size: max((s["rss_bytes"] or 0) for s in r.samples) // 2**20 for size, r in reports.items()}
    ok = all(r.ok for r in reports.values()) and all(m <= 10_000 for m in maxima.values())
    ok = ok and maxima[100_000] == maxima[1_000_000]
    verdict(3, ok, f"max resident {maxima} (cap 10000), peak RSS MiB {rss} (informational)")


@pytest.mark.slow
def test_4_throughput_ordering(verdict):
    tp = {}
    for size in (3, 31, 255):
        cfg = BenchConfig(model_size=100_000, cache_capacity=10_000, rule_count=10_000,
                          condition_size=size, repeats=5)
        tp[size] = bench_throughput(cfg).throughput
    ok = tp[3] > tp[31] > tp[255]
    shown = ", ".join(f"{k}: {v:,.0f}" for k, v in tp.items())
    verdict(4, ok, f"median rules/s {{{shown}}}; reference 70,028 / 58,788 / 41,152")


def test_5_switch_on_end_to_end(verdict):
    engine = Engine(open_store("memory", 100, parse_metamodel(BUILDING_METAMODEL)))
    engine.weave(parse_rules(SWITCH_ON_RULE))
    room = engine.store.create_node("building.Room")
    heating = engine.store.create_node("building.HeatingSystem")
    engine.store.add_relation(room, "heatingSystem", heating)
    engine.store.set_attribute(heating, "status", "off")
    cold = engine.store.set_attribute(room, "temperature", 17.0)
    status = engine.store.get_attribute(heating, "status")
    engine.store.set_attribute(heating, "status", "off")
    warm = engine.store.set_attribute(room, "temperature", 18.0)
    ok = (
        status == "on"
        and cold.fired == [("SwitchOnHeatingSystem", room)]
        and warm.fired == []
        and engine.store.get_attribute(heating, "status") == "off"
    )
    verdict(5, ok, f"17.0 -> status {status!r}, {len(cold.fired)} firing; 18.0 -> {len(warm.fired)} firings")


def _walk(store):
    out = []
    for node_id in store.node_ids():
        record = store.resolve(node_id)
        out.append((node_id, record.class_name, dict(record.attributes),
                    {k: list(v) for k, v in record.relations.items()}))
    return out


def _golden_log() -> bytes:
    def s(text):
        raw = text.encode()
        return bytes([len(raw)]) + raw

    def u64(n):
        return n.to_bytes(8, "big")

    records = {
        1: b"\x01" + s("building.Room") + b"\x01" + s("temperature") + b"\x03"
        + struct.pack("<d", 17.5) + b"\x01" + s("heatingSystem") + b"\x01" + u64(2),
        2: b"\x01" + s("building.HeatingSystem") + b"\x01" + s("status") + b"\x04" + s("off")
        + b"\x00",
        3: b"\x01" + s("building.Room") + b"\x00" + b"\x00",
    }
    log = b""
    for node_id, value in records.items():
        log += b"\x01" + b"\x01" + u64(node_id) + bytes([len(value)]) + value
    return log


def test_6_persistence_round_trip(verdict, tmp_path):
    rng = random.Random(6)
    mm = parse_metamodel(METAMODEL_TEXT)
    path = tmp_path / "random"
    store = open_store(str(path), 64, mm)
    engine = Engine(store)
    ids = []
    for _ in range(1000):
        cls = rng.choice(["demo.Sensor", "demo.Actuator"])
        node_id = store.create_node(cls)
        ids.append(node_id)
        if cls == "demo.Sensor":
            store.set_attribute(node_id, "level", rng.randint(-(2**63), 2**63 - 1))
            store.set_attribute(node_id, "ratio", rng.uniform(-1e9, 1e9))
            store.set_attribute(node_id, "label", rng.choice(["", "a", "ünï", "x" * 200]))
            store.set_attribute(node_id, "active", rng.random() < 0.5)
        else:
            store.set_attribute(node_id, "power", rng.randint(-5, 5))
    sensors = [n for n in ids if store.class_of(n) == "demo.Sensor"]
    actuators = [n for n in ids if store.class_of(n) == "demo.Actuator"]
    for n in sensors:
        store.add_relation(n, "peer", rng.choice(sensors))
        for _ in range(rng.randint(0, 3)):
            store.add_relation(n, "actuators", rng.choice(actuators))
    rules = [
        RuleDef(f"P{k}", random_condition(rng, cls := rng.choice(["demo.Sensor", "demo.Actuator"])),
                random_task(rng, cls, 100))
        for k in range(3)
    ]
    engine.weave(rules)
    total = store.last_id
    before = _walk(store)
    store.close()
    reopened = open_store(str(path), 64, mm)
    after = _walk(reopened)
    reopened.close()
    walk_ok = after == before and total <= 10_000

    fixture = tmp_path / "fixture"
    with open_store(str(fixture), 10, parse_metamodel(BUILDING_METAMODEL)) as small:
        r1 = small.create_node("building.Room")
        h = small.create_node("building.HeatingSystem")
        small.create_node("building.Room")
        small.set_attribute(r1, "temperature", 17.5)
        small.set_attribute(h, "status", "off")
        small.add_relation(r1, "heatingSystem", h)
    golden_ok = (fixture / "store.log").read_bytes() == _golden_log()
    verdict(6, walk_ok and golden_ok,
            f"{total} nodes (data, rule and condition) walk equal after reopen: {after == before}; "
            f"3-node golden bytes match: {golden_ok}")


_NAME_CHARS = "abcXYZ_09 '\"\\é-"
_IDENT_START = "abcdefghXYZ_"
_IDENT_REST = _IDENT_START + "0123456789"


def _ident(rng):
    while True:
        word = rng.choice(_IDENT_START) + "".join(
            rng.choice(_IDENT_REST) for _ in range(rng.randint(0, 6))
        )
        if word not in {"rule", "when", "not", "then", "end"}:
            return word


def _text(rng, min_size=0):
    return "".join(rng.choice(_NAME_CHARS) for _ in range(rng.randint(min_size, 10)))


def _term(rng):
    r = rng.random()
    if r < 0.4:
        path = ".".join(_ident(rng) for _ in range(rng.randint(1, 3)))
        return AttributeRef(path, _ident(rng))
    if r < 0.6:
        return NumberLit(rng.randint(-10**9, 10**9))
    if r < 0.8:
        return NumberLit(rng.choice([rng.uniform(-1e6, 1e6), rng.random() * 10 ** rng.randint(-30, 30)]))
    return StringLit(_text(rng))


def _task(rng, depth=0):
    ops = []
    for _ in range(rng.randint(1, 4)):
        args = []
        for _ in range(rng.randint(0, 2)):
            if depth < 2 and rng.random() < 0.25:
                args.append(_task(rng, depth + 1))
            else:
                args.append(_text(rng))
        ops.append(OperationCall(_ident(rng), tuple(args)))
    return ActionTask(tuple(ops))


def _rule(rng):
    cond = Condition(rng.random() < 0.3, _term(rng),
                     rng.choice(["Eq", "Neq", "Gt", "Gte", "Lt", "Lte"]), _term(rng))
    return RuleDef(_text(rng, 1), cond, _task(rng))


def test_7_parser_round_trip(verdict):
    rng = random.Random(7)
    failures = 0
    for _ in range(1000):
        rules = [_rule(rng) for _ in range(rng.randint(0, 5))]
        text = pretty_print(rules)
        parsed = parse_rules(text)
        if parsed != rules or pretty_print(parsed) != text:
            failures += 1
    documented = RuleDef(
        "SwitchOnHeatingSystem",
        Condition(False, AttributeRef("building.Room", "temperature"), "Lt", NumberLit(18)),
        ActionTask((OperationCall("relation", ("heatingSystem",)),
                    OperationCall("setAttribute", ("status", "on")))),
    )
    tree_ok = parse_rules(SWITCH_ON_RULE) == [documented]
    verdict(7, failures == 0 and tree_ok,
            f"1000 generated rule files, {failures} round-trip failures; switch-on tree matches: {tree_ok}")


def test_8_short_circuit_loads(verdict):
    mm = parse_metamodel(METAMODEL_TEXT)
    store = open_store("memory", 32, mm)
    sensors = [store.create_node("demo.Sensor") for _ in range(10)]
    for n in sensors:
        store.set_attribute(n, "level", 1)
    # right subtree: five Eq(Ref, Ref) comparisons, each over its own pair of sensors
    comparisons = []
    for a, b in zip(sensors[0::2], sensors[1::2]):
        cmp_id = build_condition_graph(store, node("Eq", ref("level"), const(1)), a)
        ref_b = build_condition_graph(store, ref("level"), b)
        store.remove_relation(cmp_id, "right", store.get_relation(cmp_id, "right")[0])
        store.add_relation(cmp_id, "right", ref_b)
        comparisons.append(cmp_id)
    right = comparisons[0]
    for cmp_id in comparisons[1:]:
        joined = store.create_node("And")
        store.add_relation(joined, "left", right)
        store.add_relation(joined, "right", cmp_id)
        right = joined
    left = build_condition_graph(store, const(True), sensors[0])
    root = store.create_node("Or")
    store.add_relation(root, "left", left)
    store.add_relation(root, "right", right)

    ref_nodes = [n for n in store.node_ids() if store.class_of(n) == "Ref"]
    targets = {store.get_relation(n, "target")[0] for n in ref_nodes}
    assert len(ref_nodes) == 10 and targets == set(sensors)
    # sanity: the right subtree alone evaluates true and does touch the targets
    assert eval_condition(store, right) is True

    store.evict_all()
    loaded = []
    original = store.backend.get
    store.backend.get = lambda key: (loaded.append(int.from_bytes(key[1:], "big")), original(key))[1]
    result = eval_condition(store, root)
    store.backend.get = original
    target_loads = sum(1 for n in loaded if n in targets)
    ok = result is True and target_loads == 0 and right not in loaded
    verdict(8, ok, f"Or(Const true, 10-Ref subtree) = {result}; loads {sorted(loaded)}, "
                   f"target loads {target_loads}")
