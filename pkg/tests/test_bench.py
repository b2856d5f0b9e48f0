import json

import pytest

from ruleweave import eval_condition, open_store
from ruleweave.bench import (
    HEATING,
    ROOM,
    BenchConfig,
    SplitMix64,
    bench_memory,
    bench_throughput,
    building_metamodel,
    generate_building,
    generate_condition_tree,
    main,
)
from ruleweave.weaver import build_condition_graph, const, node, ref


def test_splitmix64_reference_vector():
    rng = SplitMix64(1234567)
    assert [rng.next_u64() for _ in range(5)] == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]


def test_splitmix64_floats_in_range():
    rng = SplitMix64(0)
    values = [rng.uniform(10.0, 30.0) for _ in range(1000)]
    assert all(10.0 <= v < 30.0 for v in values)


def test_generate_building_layout():
    store = open_store("memory", 100, building_metamodel())
    summary = generate_building(store, 5, 1)
    assert (summary.rooms, summary.heating_systems, summary.relations) == (3, 2, 2)
    assert [store.class_of(n) for n in store.node_ids()] == [ROOM, HEATING, ROOM, HEATING, ROOM]
    assert store.get_relation(1, "heatingSystem") == [2]
    assert store.get_relation(5, "heatingSystem") == []
    assert store.get_attribute(2, "status") == "off"


def test_generate_building_temperatures():
    store = open_store("memory", 100, building_metamodel())
    summary = generate_building(store, 4, 1)
    temps = [store.get_attribute(r, "temperature") for r in summary.room_ids]
    assert temps == [21.33123150344562, 24.915635145254022]


def test_generate_building_is_deterministic_across_backends(tmp_path):
    a = open_store("memory", 7, building_metamodel())
    b = open_store(str(tmp_path), 3, building_metamodel())
    generate_building(a, 50, 9)
    generate_building(b, 50, 9)
    for n in a.node_ids():
        cls = a.class_of(n)
        att = "temperature" if cls == ROOM else "status"
        assert a.get_attribute(n, att) == b.get_attribute(n, att)


def test_condition_tree_size_seven():
    tree = generate_condition_tree(7)
    assert tree == node(
        "And", node("Lt", ref("temperature"), const(18)), node("Eq", const(1), const(1))
    )


@pytest.mark.parametrize("size", [3, 5, 7, 9, 15, 31, 33, 255])
def test_condition_tree_sizes_and_semantics(size):
    tree = generate_condition_tree(size)
    assert tree.size() == size
    store = open_store("memory", 16, building_metamodel())
    room = store.create_node(ROOM)
    root = build_condition_graph(store, tree, room)
    rng = SplitMix64(size)
    for _ in range(100 if size < 100 else 10):
        t = rng.uniform(10.0, 30.0)
        store.set_attribute(room, "temperature", t)
        assert eval_condition(store, root) is (t < 18)
    assert store.stats().max_resident <= 16


@pytest.mark.parametrize("size", [0, 1, 2, 4, 254])
def test_condition_tree_rejects(size):
    with pytest.raises(ValueError):
        generate_condition_tree(size)


def test_memory_bench_small():
    cfg = BenchConfig(model_size=1000, cache_capacity=10, backend="memory")
    report = bench_memory(cfg)
    assert report.ok
    assert report.max_resident <= 10
    assert report.rules_evaluated == 500
    assert report.samples and all(s["resident"] <= 10 for s in report.samples)
    again = bench_memory(BenchConfig(model_size=1000, cache_capacity=10, backend="file"))
    assert again.fired_digest == report.fired_digest


def test_throughput_bench_small():
    cfg = BenchConfig(model_size=400, cache_capacity=50, rule_count=100, condition_size=7,
                      backend="memory", repeats=2)
    report = bench_throughput(cfg)
    assert report.ok and report.max_resident <= 50
    assert report.rules_evaluated == 200
    assert len(report.throughput_runs) == 2 and report.throughput > 0
    assert bench_throughput(cfg).fired_digest == report.fired_digest


def test_throughput_zero_rules():
    cfg = BenchConfig(model_size=10, cache_capacity=5, rule_count=0, backend="memory")
    report = bench_throughput(cfg)
    assert report.rules_evaluated == 0 and report.throughput == 0.0


def test_throughput_too_many_rules():
    with pytest.raises(ValueError):
        bench_throughput(BenchConfig(model_size=10, rule_count=6, backend="memory"))


def test_cli_gen_weave_memory(tmp_path, capsys):
    model = tmp_path / "model"
    assert main(["gen", "--size", "20", "--seed", "3", "--out", str(model)]) == 0
    assert json.loads(capsys.readouterr().out)["rooms"] == 10
    rules = tmp_path / "r.rules"
    rules.write_text('rule "cold" when building.Room.temperature < 15 then save("v") end\n')
    assert main(["weave", "--model", str(model), "--rules", str(rules)]) == 0
    assert json.loads(capsys.readouterr().out)["rule_nodes_created"] == 10
    report = tmp_path / "mem.json"
    csv = tmp_path / "mem.csv"
    code = main(["memory", "--size", "2000", "--cache", "20", "--backend", "memory",
                 "--report", str(report), "--csv", str(csv)])
    assert code == 0
    assert json.loads(report.read_text())["max_resident"] <= 20
    assert csv.read_text().startswith("phase,op,resident,rss_bytes\n")


def test_cli_throughput_and_errors(tmp_path, capsys):
    code = main(["throughput", "--size", "200", "--cache", "30", "--rules", "50",
                 "--cond-size", "3,7", "--repeat", "1", "--backend", "memory",
                 "--report", str(tmp_path / "tp.json")])
    assert code == 0
    assert (tmp_path / "tp-3.json").exists() and (tmp_path / "tp-7.json").exists()
    capsys.readouterr()
    assert main(["throughput", "--size", "20", "--cond-size", "4", "--backend", "memory"]) == 1
    bad = tmp_path / "bad.rules"
    bad.write_text("rule oops")
    main(["gen", "--size", "4", "--out", str(tmp_path / "m")])
    assert main(["weave", "--model", str(tmp_path / "m"), "--rules", str(bad)]) == 1
