"""Acceptance criteria, one test each, timed against their limits.

Every test appends a PASS/FAIL line that the terminal summary prints.
"""

from __future__ import annotations

import random
import time
from contextlib import contextmanager
from pathlib import Path

from conftest import ACCEPTANCE_LINES

from agentflow.cli import main
from agentflow.config import FINE, AgentConfig
from agentflow.dfg import ActorSpec, DataflowGraph, Operator, run_to_quiescence
from agentflow.errors import AgentBusy, ZeroVariance
from agentflow.fusion import FusionParams, ObservationWindow, closeness, confidence, correlation, run_fusion
from agentflow.packing import build_system, fine_partition, random_partition
from agentflow.reconfig import FORCED, apply_configuration, capture_image, isolation_violations
from agentflow.scenarios import (
    branch_of,
    build_control_flow_system,
    build_fine_grain_system,
    build_nondet_system,
    build_sequential_system,
    encode_event,
)
from agentflow.trace import DONE, FIRE, format_trace
from oracles import (
    count_firing_orders,
    enumerate_outcomes,
    fusion_oracle,
    nondet_audit,
    random_graph,
    random_inputs,
    scalar_correlation,
    sensor_trace,
)

SAMPLES = Path(__file__).resolve().parent.parent / "samples"
PLANS = {"Plan1", "Plan2", "Plan3", "Plan4"}


@contextmanager
def criterion(number: int, title: str, limit: float):
    """Time the body, enforce the limit and log one result line."""
    info: dict = {}
    start = time.perf_counter()
    ok = False
    try:
        yield info
        elapsed = time.perf_counter() - start
        assert elapsed < limit, f"took {elapsed:.2f}s, limit {limit}s"
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        detail = f" [{info['detail']}]" if "detail" in info else ""
        ACCEPTANCE_LINES.append(
            f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {title} ({elapsed:.2f}s, limit {limit:g}s){detail}")


def drain(system, rows, *, latest=400):
    for row in rows:
        system.step(row)
    while not system.is_quiescent():
        assert system.step_count < latest, "system did not settle"
        system.step()
    seqs: dict[str, list[float]] = {}
    for _, link, value in system.outputs:
        seqs.setdefault(link, []).append(value)
    return seqs


def binary_config(kind: str) -> AgentConfig:
    frag = DataflowGraph.from_actors([ActorSpec("u", Operator(kind), ("a", "b"), ("c",))], ["a", "b"], ["c"])
    return AgentConfig("X", FINE, frag, ("p", "q"), ("r",))


def test_ac01_firing_confluence():
    with criterion(1, "firing confluence over 200 graphs x 10 seeds", 60) as info:
        rng = random.Random(1)
        widest = 0
        for _ in range(200):
            g = random_graph(rng, 8, switch=True)
            inputs = random_inputs(rng, g)
            outcomes = enumerate_outcomes(g, inputs)
            assert len(outcomes) == 1
            (outcome,) = outcomes
            for seed in range(10):
                got = run_to_quiescence(g, inputs, seed).output_values
                assert tuple(sorted(got.items())) == outcome
            widest = max(widest, count_firing_orders(g, inputs))
        info["detail"] = f"up to {widest} firing orders per graph"


def test_ac02_correlation_oracle():
    with criterion(2, "correlation vs scalar oracle on 1000 windows", 5) as info:
        assert correlation(ObservationWindow.of([(1, 1), (2, 2), (3, 3)])) == 1.0
        assert correlation(ObservationWindow.of([(1, 5), (2, 3), (3, 1)])) == -1.0
        try:
            correlation(ObservationWindow.of([(1, 1), (2, 1), (3, 1)]))
            raise AssertionError("constant series did not raise")
        except ZeroVariance:
            pass
        rng = random.Random(2)
        worst = 0.0
        for i in range(1000):
            k = rng.randint(2, 32)
            if i % 4 == 0:
                pairs = [(float(rng.randint(-3, 3)), float(rng.randint(-3, 3))) for _ in range(k)]
            else:
                pairs = [(rng.uniform(-100, 100), rng.uniform(-100, 100)) for _ in range(k)]
            want = scalar_correlation(pairs)
            try:
                got = correlation(ObservationWindow.of(pairs))
            except ZeroVariance:
                got = None
            assert (got is None) == (want is None)
            if got is not None:
                worst = max(worst, abs(got - want))
        assert worst <= 1e-9
        info["detail"] = f"max |diff| {worst:.1e}"


def test_ac03_closeness_and_confidence():
    with criterion(3, "closeness and confidence identities", 5):
        rng = random.Random(3)
        for _ in range(1000):
            x, t = rng.uniform(-1e3, 1e3), rng.uniform(1e-3, 1e3)
            assert closeness(x, x, t) == (1.0, 1.0)
        for _ in range(10_000):
            history = [rng.uniform(-1, 1) ** 2 for _ in range(rng.randint(1, 5))]
            _, gamma = closeness(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0.1, 60))
            c = confidence(history, gamma)
            assert 0.0 <= c <= 1.0
            assert c == min(history) * gamma
            assert confidence(history[:1], gamma) == history[0] * gamma
            assert confidence(history, 1.0) == min(history)


def test_ac04_fusion_pipeline_matches_oracle():
    with criterion(4, "fusion pipeline vs oracle on 1000 rows", 10) as info:
        rows = sensor_trace(random.Random(7), 1000)
        p = FusionParams(window=8, closeness_threshold=2.0, confidence_threshold=0.6, rho=1.5, cap=12.0, history=3)
        results, _ = run_fusion(rows, p, seed=7)
        want = fusion_oracle(rows, window=8, closeness_threshold=2.0, confidence_threshold=0.6,
                             rho=1.5, cap=12.0, history=3)
        assert len(results) == len(want) == 125
        for got, w in zip(results, want):
            for key, value in w.items():
                actual = getattr(got, key)
                if isinstance(value, float):
                    assert abs(actual - value) <= 1e-9, (got.window_index, key)
                else:
                    assert actual == value, (got.window_index, key)
        thresholds = [r.closeness_threshold for r in results]
        assert thresholds == [w["closeness_threshold"] for w in want]
        assert len(set(thresholds)) > 2 and max(thresholds) == 12.0
        flags = {f: sum(r.flag == f for r in results) for f in ("ok", "low_confidence", "degraded")}
        assert all(flags.values())
        info["detail"] = ", ".join(f"{k} {v}" for k, v in flags.items())


def test_ac05_repacking_equivalence():
    with criterion(5, "repacking equivalence on 50 graphs x 2 partitions", 30) as info:
        rng = random.Random(5)
        checked_rows = 0
        for _ in range(50):
            g = random_graph(rng, 8)
            rows = [random_inputs(rng, g) for _ in range(4)]
            reference = drain(build_system(g, fine_partition(g)), rows)
            for _ in range(2):
                part = random_partition(g, rng)
                lat = {a: rng.randint(1, 3) for a in part}
                s = build_system(g, part, latencies=lat, seed=rng.randint(0, 999))
                assert drain(s, rows) == reference
            runs = [run_to_quiescence(g, row) for row in rows]
            if not any(r.errors for r in runs):
                for arc in g.env_outputs:
                    assert reference.get(arc, []) == [r.output_values[arc] for r in runs if arc in r.output_values]
                checked_rows += len(rows)
        info["detail"] = f"{checked_rows} rows also matched one-shot runs"


def test_ac06_reconfiguration_isolation():
    with criterion(6, "isolation over 100 quiescent swaps", 10) as info:
        rng = random.Random(6)
        images = [capture_image(binary_config(k)) for k in ("add", "sub", "mul", "min", "max", "avg2")]
        s = build_fine_grain_system(seed=6)
        swaps = refused = 0
        while swaps < 100:
            assert s.step_count < 2000
            if rng.random() < 0.5:
                agent = rng.choice(sorted(s.agents))
                before = s.snapshot()
                beliefs = dict(s.agents[agent].state.beliefs)
                try:
                    apply_configuration(s, agent, rng.choice(images))
                except AgentBusy:
                    refused += 1
                    assert s.snapshot() == before
                else:
                    swaps += 1
                    assert isolation_violations(before, s.snapshot(), s, agent) == []
                    assert s.agents[agent].state.beliefs == beliefs
            row = {f"I{i}": float(rng.randint(-4, 4)) for i in range(1, 5)} if rng.random() < 0.4 else None
            s.step(row)
        info["detail"] = f"{refused} busy refusals left the system untouched"


def test_ac07_handshake_conservation():
    with criterion(7, "conservation and one-step done pulses over 100 seeds", 30) as info:
        checked = 0
        for seed in range(100):
            rng = random.Random(seed)
            g = random_graph(rng, 8)
            part = random_partition(g, rng)
            s = build_system(g, part, latencies={a: rng.randint(1, 3) for a in part}, seed=seed)
            outs = [l.id for l in s.links.values() if l.env_output]
            for step in range(40):
                if rng.random() < 0.05:
                    agent = rng.choice(sorted(s.agents))
                    apply_configuration(s, agent, capture_image(s.agents[agent].config), FORCED)
                row = random_inputs(rng, g) if step < 12 and rng.random() < 0.7 else None
                out = s.step(row, env_ready={o for o in outs if rng.random() < 0.6})
                c = s.counters()
                assert c["injected"] == c["delivered"] + c["in_flight"] + c["reconfig_dropped"]
                pulsing = {a for a, ag in s.agents.items() if ag.state.done}
                assert pulsing == {e.subject for e in out.events if e.kind == DONE}
                checked += 1
            fires = sorted(e.subject for e in s.events if e.kind == FIRE)
            assert fires == sorted(e.subject for e in s.events if e.kind == DONE)
        info["detail"] = f"{checked} steps checked"


def test_ac08_control_exclusivity():
    with criterion(8, "control-flow exclusivity over 1000 sequences", 5):
        rng = random.Random(8)
        for seed in range(1000):
            events = [rng.choice("AB") for _ in range(rng.randint(1, 8))]
            data = [float(rng.randint(0, 99)) for _ in events]
            s = build_control_flow_system(seed=seed)
            out = drain(s, [{"data": d, "event": encode_event(b)} for d, b in zip(data, events)])
            fired = {a: sum(1 for e in s.events if e.kind == FIRE and e.subject == a) for a in ("A2", "A3")}
            assert fired == {"A2": events.count("A"), "A3": events.count("B")}
            values = out["out"]
            assert [branch_of(v) for v in values] == events
            assert values == [10 * d + (1 if b == "A" else 2) for d, b in zip(data, events)]


def test_ac09_nondeterminism_envelope():
    with criterion(9, "plans and timeouts over 1000 seeded runs", 10) as info:
        plans: set[str] = set()
        gaps = timeouts = 0
        for seed in range(1000):
            rng = random.Random(seed)
            timeout = 4 + seed % 5
            s = build_nondet_system(seed=seed, timeout=timeout)
            rate = rng.uniform(0.1, 0.6)
            steps = 50
            for i in range(steps):
                feed = i < steps - 12 and rng.random() < rate
                s.step({"percept": round(rng.uniform(0, 6), 2)} if feed else None)
            audit = nondet_audit(s.events, timeout, steps)
            assert audit["problems"] == [], (seed, audit["problems"])
            plans |= audit["plans"]
            gaps += audit["gaps"]
            timeouts += audit["timeouts"]
        assert plans <= PLANS and {"Plan1", "Plan2"} <= plans
        assert gaps > 0 and timeouts >= gaps
        info["detail"] = f"plans {sorted(plans)}, {gaps} gaps, {timeouts} timeouts"


def test_ac10_critical_path():
    with criterion(10, "first output at step 3 fine, step 5 sequential", 1) as info:
        row = {"I1": 1.0, "I2": 2.0, "I3": 3.0, "I4": 4.0}

        def first_output(system):
            for i in range(12):
                if system.step(row if i == 0 else None).outputs:
                    return system.step_count
            return None

        fine = first_output(build_fine_grain_system("sum"))
        seq = first_output(build_sequential_system("sum"))
        assert fine == 3 and seq is not None and seq >= 5
        info["detail"] = f"fine {fine}, sequential {seq}"


def test_ac11_replay(tmp_path):
    with criterion(11, "byte-identical traces on replay", 5) as info:
        runs = [["run", name, "--seed", "11"] for name in
                ("fig3-fine", "fig5-mixed", "fig6-control", "fig7-nondet", "fig8-fusion")]
        runs.append(["run", str(SAMPLES / "fig2.json"), "--inputs", str(SAMPLES / "fig2_inputs.csv")])
        runs.append(["reconfigure-run", str(SAMPLES / "fig2.json"), str(SAMPLES / "swap_a4.json"),
                     "--inputs", str(SAMPLES / "fig2_inputs.csv")])
        for i, argv in enumerate(runs):
            blobs = []
            for rep in range(2):
                trace, report = tmp_path / f"t{i}_{rep}.jsonl", tmp_path / f"r{i}_{rep}.json"
                assert main(argv + ["--trace-out", str(trace), "--report-out", str(report)]) == 0
                blobs.append((trace.read_bytes(), report.read_bytes()))
            assert blobs[0] == blobs[1]
        rng = random.Random(11)
        for _ in range(20):
            g = random_graph(rng, 8)
            part, seed = random_partition(g, rng), rng.randint(0, 99)
            rows = [random_inputs(rng, g) for _ in range(3)]
            traces = []
            for _ in range(2):
                s = build_system(g, part, seed=seed)
                drain(s, rows)
                traces.append(format_trace(s.events, {"seed": seed}))
            assert traces[0] == traces[1]
        info["detail"] = f"{len(runs)} CLI runs and 20 random systems"
