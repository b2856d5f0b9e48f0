"""Benchmarks over a synthetic smart-building model.

``memory``     constant-memory run: the resident node count must stay within
               the cache capacity while every rule of a large model is checked.
``throughput`` rules/second for condition trees of a given node count.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import resource
import statistics
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import RuleweaveError, StoreError
from .metamodel import parse_metamodel
from .runtime import Engine
from .store import Store, open_store
from .weaver import RuleTemplate, compile_action, const, instantiate_rule, node, ref, register_templates
from .rulelang import parse_rules

BUILDING_METAMODEL = """\
class building.Room {
    att temperature: Float
    rel heatingSystem: building.HeatingSystem
}

class building.HeatingSystem {
    att status: String
}
"""

SWITCH_ON_RULE = """\
rule "SwitchOnHeatingSystem"
when
	building.Room.temperature < 18
then
	relation('heatingSystem')
	.setAttribute("status","on")
end
"""

# Published reference throughputs (rules/s) by condition size; reported, never asserted.
REFERENCE_THROUGHPUT = {3: 70_028, 31: 58_788, 255: 41_152}

ROOM = "building.Room"
HEATING = "building.HeatingSystem"
SAMPLE_EVERY = 1_000
_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.next_float()


def building_metamodel():
    return parse_metamodel(BUILDING_METAMODEL)


@dataclass
class GenerationSummary:
    rooms: int
    heating_systems: int
    relations: int
    room_ids: list[int] = field(repr=False, default_factory=list)


def generate_building(store: Store, n: int, seed: int, on_node=None) -> GenerationSummary:
    """Populate an empty store with ceil(n/2) Rooms and floor(n/2) HeatingSystems.

    Room i is created, given a temperature drawn uniformly from [10, 30), then
    HeatingSystem i (status "off") is created and linked to it.
    """
    if n < 2:
        raise ValueError("model size must be at least 2")
    if store.last_id != 0:
        raise StoreError("generate_building needs an empty store")
    rng = SplitMix64(seed)
    rooms = math.ceil(n / 2)
    heating = n - rooms
    room_ids = []
    for i in range(rooms):
        room = store.create_node(ROOM)
        store.set_attribute(room, "temperature", rng.uniform(10.0, 30.0))
        room_ids.append(room)
        if i < heating:
            hs = store.create_node(HEATING)
            store.set_attribute(hs, "status", "off")
            store.add_relation(room, "heatingSystem", hs)
        if on_node is not None:
            on_node(i)
    return GenerationSummary(rooms, heating, heating, room_ids)


def generate_condition_tree(size: int, attribute: str = "temperature", threshold=18):
    """Full binary condition tree of exactly ``size`` nodes.

    Its value always equals ``attribute < threshold``: the comparison sits at
    the bottom of the left spine and every right branch is an always-true
    padding subtree joined with And.
    """
    if not isinstance(size, int) or size < 3 or size % 2 == 0:
        raise ValueError(f"condition size must be odd and >= 3, got {size!r}")

    def split(total):
        half = (total - 1) // 2
        return (half + 1, half - 1) if half % 2 == 0 else (half, half)

    def padding(m):
        if m == 1:
            return const(True)
        if m == 3:
            return node("Eq", const(1), const(1))
        a, b = split(m)
        return node("And", padding(a), padding(b))

    def build(m):
        if m == 3:
            return node("Lt", ref(attribute), const(threshold))
        a, b = split(m)
        return node("And", build(a), padding(b))

    return build(size)


@dataclass
class BenchConfig:
    model_size: int = 100_000
    cache_capacity: int = 10_000
    rule_count: int = 10_000
    condition_size: int = 3
    seed: int = 7
    backend: str = "file"  # "memory" or "file"
    path: str | None = None  # directory for the file backend; temporary if unset
    report_path: str | None = None
    repeats: int = 1

    def validate(self) -> None:
        if self.model_size < 2:
            raise ValueError("model_size must be >= 2")
        if self.cache_capacity < 1:
            raise ValueError("cache_capacity must be >= 1")
        if self.condition_size < 3 or self.condition_size % 2 == 0:
            raise ValueError("condition_size must be odd and >= 3")
        if self.backend not in ("memory", "file"):
            raise ValueError("backend must be 'memory' or 'file'")


@dataclass
class BenchReport:
    kind: str
    config: dict
    phases_ms: dict = field(default_factory=dict)
    rules_evaluated: int = 0
    rules_fired: int = 0
    throughput: float = 0.0
    throughput_runs: list[float] = field(default_factory=list)
    latency_histogram_us: dict = field(default_factory=dict)
    samples: list[dict] = field(default_factory=list)
    max_resident: int = 0
    store_stats: dict = field(default_factory=dict)
    fired_digest: str = ""
    reference: dict = field(default_factory=dict)
    ok: bool = True
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def write_samples_csv(self, path) -> None:
        keys = ["phase", "op", "resident", "rss_bytes"]
        lines = [",".join(keys)]
        lines += [",".join(str(s.get(k, "")) for k in keys) for s in self.samples]
        Path(path).write_text("\n".join(lines) + "\n")


def rss_bytes() -> int | None:
    """Current resident set size, best effort."""
    try:
        with open("/proc/self/statm") as fh:
            return int(fh.read().split()[1]) * os.sysconf("SC_PAGE_SIZE")
    except (OSError, ValueError, IndexError):
        try:
            peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
            return peak if sys.platform == "darwin" else peak * 1024
        except (OSError, ValueError):
            return None


class _Sampler:
    def __init__(self, store: Store, report: BenchReport):
        self.store = store
        self.report = report
        self.phase = ""
        self.ops = 0

    def tick(self, *_):
        self.ops += 1
        if self.ops % SAMPLE_EVERY == 0:
            self.sample()

    def sample(self):
        self.report.samples.append(
            {
                "phase": self.phase,
                "op": self.ops,
                "resident": self.store.stats().resident_count,
                "rss_bytes": rss_bytes(),
            }
        )


def _open(cfg: BenchConfig, tmp: str | None) -> Store:
    if cfg.backend == "memory":
        return open_store("memory", cfg.cache_capacity, building_metamodel())
    return open_store(cfg.path or tmp, cfg.cache_capacity, building_metamodel())


def _digest(fired) -> str:
    h = hashlib.sha256()
    for name, node_id in fired:
        h.update(f"{name}:{node_id};".encode())
    return h.hexdigest()


def bench_memory(cfg: BenchConfig) -> BenchReport:
    """Build, weave the heating rule, then check every rule once, sampling residency."""
    cfg.validate()
    report = BenchReport("memory", asdict(cfg))
    with tempfile.TemporaryDirectory(prefix="ruleweave-mem-") as tmp:
        store = _open(cfg, tmp)
        engine = Engine(store)
        sampler = _Sampler(store, report)
        store.add_create_hook(sampler.tick)

        t0 = time.perf_counter()
        sampler.phase = "generate"
        summary = generate_building(store, cfg.model_size, cfg.seed)
        t1 = time.perf_counter()
        sampler.phase = "weave"
        engine.weave(SWITCH_ON_RULE)
        t2 = time.perf_counter()
        sampler.phase = "check"
        digest = hashlib.sha256()
        for room in summary.room_ids:
            result = engine.check_rules(room)
            report.rules_evaluated += result.evaluated
            report.rules_fired += len(result.fired)
            for name, node_id in result.fired:
                digest.update(f"{name}:{node_id};".encode())
            sampler.tick()
        t3 = time.perf_counter()
        sampler.sample()
        stats = store.stats()
        store.close()
        t4 = time.perf_counter()

    report.phases_ms = {
        "generate": (t1 - t0) * 1e3,
        "weave": (t2 - t1) * 1e3,
        "check": (t3 - t2) * 1e3,
        "close": (t4 - t3) * 1e3,
    }
    report.throughput = report.rules_evaluated / (t3 - t2) if t3 > t2 else 0.0
    report.fired_digest = digest.hexdigest()
    report.max_resident = stats.max_resident
    report.store_stats = asdict(stats)
    report.reference = {"published_memory_bound_mb": 50, "published_cache_elements": 10_000}
    sampled_max = max((s["resident"] for s in report.samples), default=0)
    if max(sampled_max, stats.max_resident) > cfg.cache_capacity:
        report.ok = False
        report.message = (
            f"resident count {stats.max_resident} exceeded cache capacity {cfg.cache_capacity}"
        )
    return report


def _histogram(latencies_ns: list[int]) -> dict:
    """Power-of-two microsecond buckets: key is the bucket's upper bound."""
    buckets: dict[str, int] = {}
    for ns in latencies_ns:
        bound = 1
        us = ns / 1e3
        while bound < us:
            bound *= 2
        buckets[str(bound)] = buckets.get(str(bound), 0) + 1
    return dict(sorted(buckets.items(), key=lambda kv: int(kv[0])))


def bench_throughput(cfg: BenchConfig) -> BenchReport:
    """Attach ``rule_count`` rule instances, then time one triggering update per instance."""
    cfg.validate()
    report = BenchReport("throughput", asdict(cfg))
    report.reference = {"published_rules_per_second": REFERENCE_THROUGHPUT}
    with tempfile.TemporaryDirectory(prefix="ruleweave-tp-") as tmp:
        store = _open(cfg, tmp)
        engine = Engine(store)
        sampler = _Sampler(store, report)
        store.add_create_hook(sampler.tick)

        t0 = time.perf_counter()
        sampler.phase = "generate"
        summary = generate_building(store, cfg.model_size, cfg.seed)
        if cfg.rule_count > summary.rooms:
            raise ValueError(f"rule_count {cfg.rule_count} exceeds the {summary.rooms} rooms")
        t1 = time.perf_counter()

        sampler.phase = "weave"
        action_id = compile_action(parse_rules(SWITCH_ON_RULE)[0].action, engine.dictionary)
        template = RuleTemplate(
            f"Threshold{cfg.condition_size}",
            ROOM,
            "temperature",
            generate_condition_tree(cfg.condition_size),
            action_id,
        )
        register_templates(store, [template], engine.index, instantiate_existing=False)
        targets = summary.room_ids[: cfg.rule_count]
        for room in targets:
            instantiate_rule(store, template, room)
        t2 = time.perf_counter()

        sampler.phase = "evaluate"
        rng = SplitMix64(cfg.seed ^ 0x5DEECE66D)
        latencies: list[int] = []
        digest = hashlib.sha256()
        eval_ms = []
        for _ in range(max(1, cfg.repeats)):
            evaluated = fired = 0
            start = time.perf_counter()
            for room in targets:
                value = rng.uniform(10.0, 30.0)
                a = time.perf_counter_ns()
                result = store.set_attribute(room, "temperature", value)
                latencies.append(time.perf_counter_ns() - a)
                evaluated += result.evaluated
                fired += len(result.fired)
                for name, node_id in result.fired:
                    digest.update(f"{name}:{node_id};".encode())
                sampler.tick()
            elapsed = time.perf_counter() - start
            eval_ms.append(elapsed * 1e3)
            report.throughput_runs.append(evaluated / elapsed if evaluated and elapsed > 0 else 0.0)
            report.rules_evaluated += evaluated
            report.rules_fired += fired
        t3 = time.perf_counter()
        sampler.sample()
        stats = store.stats()
        store.close()

    report.phases_ms = {
        "generate": (t1 - t0) * 1e3,
        "weave": (t2 - t1) * 1e3,
        "evaluate": (t3 - t2) * 1e3,
        "evaluate_runs": eval_ms,
    }
    report.throughput = statistics.median(report.throughput_runs)
    report.latency_histogram_us = _histogram(latencies)
    report.fired_digest = digest.hexdigest()
    report.max_resident = stats.max_resident
    report.store_stats = asdict(stats)
    if stats.max_resident > cfg.cache_capacity:
        report.ok = False
        report.message = (
            f"resident count {stats.max_resident} exceeded cache capacity {cfg.cache_capacity}"
        )
    return report


def _emit(report: BenchReport, path: str | None, csv_path: str | None = None) -> int:
    if path:
        report.write(path)
    if csv_path:
        report.write_samples_csv(csv_path)
    summary = {
        k: v for k, v in report.to_dict().items() if k not in ("samples", "config")
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if report.ok else 2


def _cmd_gen(args) -> int:
    store = open_store(args.out, args.cache, building_metamodel())
    summary = generate_building(store, args.size, args.seed)
    store.close()
    print(json.dumps({"rooms": summary.rooms, "heating_systems": summary.heating_systems,
                      "relations": summary.relations, "nodes": args.size}))
    return 0


def _cmd_weave(args) -> int:
    mm = parse_metamodel(Path(args.metamodel).read_text()) if args.metamodel else building_metamodel()
    store = open_store(args.model, args.cache, mm)
    engine = Engine(store)
    try:
        report = engine.weave(Path(args.rules).read_text())
    except RuleweaveError as exc:
        store.close()
        weave_report = getattr(exc, "report", None)
        if weave_report is not None:
            print(weave_report.to_json())
        raise
    store.close()
    print(report.to_json())
    return 0


def _config(args, **extra) -> BenchConfig:
    return BenchConfig(
        model_size=args.size,
        cache_capacity=args.cache,
        seed=args.seed,
        backend=args.backend,
        path=args.dir,
        report_path=args.report,
        **extra,
    )


def _cmd_memory(args) -> int:
    return _emit(bench_memory(_config(args)), args.report, args.csv)


def _cmd_throughput(args) -> int:
    sizes = [int(s) for s in str(args.cond_size).split(",")]
    reports = []
    for size in sizes:
        cfg = _config(args, rule_count=args.rules, condition_size=size, repeats=args.repeat)
        reports.append(bench_throughput(cfg))
    code = 0
    for size, report in zip(sizes, reports):
        path = args.report
        if path and len(sizes) > 1:
            stem, ext = os.path.splitext(path)
            path = f"{stem}-{size}{ext or '.json'}"
        code = max(code, _emit(report, path))
    if len(sizes) > 1:
        ordered = [r.throughput for r in reports]
        print(json.dumps({"condition_sizes": sizes, "throughput": ordered,
                          "reference": {str(s): REFERENCE_THROUGHPUT.get(s) for s in sizes}}))
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a building model into a directory")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--cache", type=int, default=10_000)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("weave", help="weave a .rules file into a stored model")
    p.add_argument("--model", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--metamodel", help=".mm file (defaults to the building model)")
    p.add_argument("--cache", type=int, default=10_000)
    p.set_defaults(func=_cmd_weave)

    for name, func in (("memory", _cmd_memory), ("throughput", _cmd_throughput)):
        p = sub.add_parser(name, help=f"{name} benchmark")
        p.add_argument("--size", type=int, default=100_000)
        p.add_argument("--cache", type=int, default=10_000)
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--backend", choices=("memory", "file"), default="file")
        p.add_argument("--dir", help="backend directory (temporary if omitted)")
        p.add_argument("--report", help="write the JSON report here")
        if name == "memory":
            p.add_argument("--csv", help="also write memory samples as CSV")
        else:
            p.add_argument("--rules", type=int, default=10_000)
            p.add_argument("--cond-size", default="3", help="odd node count, or a comma list")
            p.add_argument("--repeat", type=int, default=5)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RuleweaveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
