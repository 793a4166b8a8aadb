"""``agentflow`` command line.

Exit codes: 0 success, 1 I/O or parse failure, 2 validation failure,
3 step limit reached, 4 reconfiguration refused.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .config import AgentConfig, validate_config
from .dfg import DataflowGraph, report_errors, validate_graph
from .errors import (
    AgentBusy,
    AgentflowError,
    DescriptionError,
    DigestMismatch,
    InvalidThreshold,
    InvariantViolation,
    MissingBelief,
    PortMismatch,
    TooFewRows,
    UnknownAgent,
)
from .fusion import FusionParams, read_sensor_trace, run_fusion, write_results
from .hwagent import policy_from_dict
from .packing import agent_configs, boundary_links, fine_partition, owner_map
from .reconfig import (
    QUIESCENT,
    FORCED,
    ConfigurationImage,
    apply_configuration,
    capture_image,
    isolation_violations,
    load_image,
)
from .runtime import MultiAgentSystem, configure_agent
from .scenarios import SCENARIOS, get_scenario
from .schema import FORMAT_VERSION, check_fields, graph_from_dict
from .trace import format_trace

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_STEP_LIMIT, EXIT_REFUSED = 0, 1, 2, 3, 4
DEFAULT_MAX_STEPS = 10_000
RECONFIG_ERRORS = (AgentBusy, PortMismatch, MissingBelief, UnknownAgent, DigestMismatch)


class ValidationFailed(Exception):
    def __init__(self, lines: list[str]):
        self.lines = lines
        super().__init__("\n".join(lines))


# ---------------------------------------------------------------------------
# description files

@dataclass
class Description:
    graph: DataflowGraph
    partition: dict[str, list[str]]
    agents: dict[str, dict] = field(default_factory=dict)
    inputs: dict[str, tuple[str, ...]] | None = None
    beliefs: dict[str, dict[str, float]] = field(default_factory=dict)


def read_json(path: str | Path) -> Any:
    path = Path(path)
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DescriptionError(f"{path}:{exc.lineno}", exc.msg) from None


def parse_description(obj: Any, where: str = "graph") -> Description:
    check_fields(obj, where, {"version", "actors", "env_inputs", "env_outputs"},
                 {"arcs", "agents", "inputs", "params"})
    if obj["version"] != FORMAT_VERSION:
        raise DescriptionError(f"{where}.version", f"expected {FORMAT_VERSION}, got {obj['version']!r}")
    graph = graph_from_dict(obj, where, extra={"version", "agents", "inputs", "params"})
    agents: dict[str, dict] = {}
    if "agents" in obj:
        if not isinstance(obj["agents"], list):
            raise DescriptionError(f"{where}.agents", "expected a list")
        for i, a in enumerate(obj["agents"]):
            w = f"{where}.agents[{i}]"
            check_fields(a, w, {"id", "behavior"}, {"grain", "ports", "latency", "policy"})
            if not isinstance(a["behavior"], list) or not all(isinstance(x, str) for x in a["behavior"]):
                raise DescriptionError(f"{w}.behavior", "expected a list of actor ids")
            if a["id"] in agents:
                raise DescriptionError(f"{w}.id", f"duplicate agent {a['id']!r}")
            if "ports" in a:
                check_fields(a["ports"], f"{w}.ports", {"inputs", "outputs"})
            if "latency" in a and (not isinstance(a["latency"], int) or isinstance(a["latency"], bool)):
                raise DescriptionError(f"{w}.latency", "expected an integer")
            if "policy" in a:
                try:
                    policy_from_dict(a["policy"])
                except (TypeError, ValueError) as exc:
                    raise DescriptionError(f"{w}.policy", str(exc)) from None
            agents[a["id"]] = a
    partition = ({k: list(v["behavior"]) for k, v in agents.items()} if agents
                 else fine_partition(graph))
    inputs = None
    if "inputs" in obj:
        if not isinstance(obj["inputs"], dict):
            raise DescriptionError(f"{where}.inputs", "expected an object")
        inputs = {}
        for name, arcs in obj["inputs"].items():
            if not isinstance(arcs, list) or not all(isinstance(x, str) for x in arcs):
                raise DescriptionError(f"{where}.inputs.{name}", "expected a list of arc ids")
            inputs[name] = tuple(arcs)
    beliefs: dict[str, dict[str, float]] = {}
    if "params" in obj:
        params = check_fields(obj["params"], f"{where}.params", set(), {"beliefs"})
        for agent_id, bs in params.get("beliefs", {}).items():
            if not isinstance(bs, dict) or not all(isinstance(v, (int, float)) for v in bs.values()):
                raise DescriptionError(f"{where}.params.beliefs.{agent_id}", "expected name -> number")
            beliefs[agent_id] = {k: float(v) for k, v in bs.items()}
    return Description(graph, partition, agents, inputs, beliefs)


def load_description(path: str | Path) -> Description:
    return parse_description(read_json(path), str(path))


def description_problems(desc: Description) -> list[str]:
    """Errors that make the description unrunnable; warnings are prefixed WARNING."""
    lines = [str(v) for v in validate_graph(desc.graph)]
    if report_errors(validate_graph(desc.graph)):
        return lines
    try:
        owner = owner_map(desc.partition)
    except AgentflowError as exc:
        return lines + [f"ERROR Partition [agents]: {exc}"]
    missing = sorted(set(desc.graph.actors) - owner.keys())
    if missing:
        lines.append(f"ERROR Partition [agents]: actors not assigned to any agent: {missing}")
    unknown = sorted(owner.keys() - set(desc.graph.actors))
    if unknown:
        lines.append(f"ERROR Partition [agents]: unknown actors {unknown}")
    if missing or unknown:
        return lines
    for cfg in _configs(desc):
        try:
            validate_config(cfg)
        except AgentflowError as exc:
            lines.append(f"ERROR {type(exc).__name__} [{cfg.id}]: {exc}")
        meta = desc.agents.get(cfg.id, {})
        if "ports" in meta:
            declared = (tuple(meta["ports"]["inputs"]), tuple(meta["ports"]["outputs"]))
            if declared != (cfg.inputs, cfg.outputs):
                lines.append(f"ERROR PortMismatch [{cfg.id}]: declared ports {declared[0]}/{declared[1]} "
                             f"but the behavior needs {cfg.inputs}/{cfg.outputs}")
    return lines


def _configs(desc: Description) -> list[AgentConfig]:
    configs = agent_configs(
        desc.graph, desc.partition,
        latencies={k: v["latency"] for k, v in desc.agents.items() if "latency" in v},
        policies={k: policy_from_dict(v["policy"]) for k, v in desc.agents.items() if "policy" in v},
    )
    out = []
    for c in configs:
        grain = desc.agents.get(c.id, {}).get("grain")
        out.append(c if grain is None else AgentConfig(c.id, grain, c.behavior, c.inputs, c.outputs,
                                                       c.compute_latency, c.policy))
    return out


def system_from_description(desc: Description, seed: int | str = 0) -> MultiAgentSystem:
    errors = [l for l in description_problems(desc) if not l.startswith("WARNING")]
    if errors:
        raise ValidationFailed(errors)
    agents = [configure_agent(c, desc.beliefs.get(c.id)) for c in _configs(desc)]
    return MultiAgentSystem(agents, boundary_links(desc.graph, desc.partition),
                            input_bindings=desc.inputs, seed=seed, name="graph")


# ---------------------------------------------------------------------------
# input traces

def read_input_rows(fp, names: Sequence[str]) -> dict[int, dict[str, float]]:
    """Read a CSV of environment inputs keyed by step (1-based).

    Columns are input names plus an optional ``step`` column; without it
    row i feeds step i.  Empty cells mean no value that step.
    """
    reader = csv.reader(fp)
    header = next(reader, None)
    if header is None:
        raise DescriptionError("inputs:1", "empty file")
    header = [h.strip() for h in header]
    unknown = [h for h in header if h != "step" and h not in names]
    if unknown:
        raise DescriptionError("inputs:1", f"unknown input column(s) {unknown}; known: {list(names)}")
    rows: dict[int, dict[str, float]] = {}
    auto = 0
    for lineno, rec in enumerate(reader, start=2):
        if not rec or not "".join(rec).strip():
            continue
        if len(rec) != len(header):
            raise DescriptionError(f"inputs:{lineno}", f"expected {len(header)} columns, got {len(rec)}")
        cells = dict(zip(header, (c.strip() for c in rec)))
        try:
            if "step" in cells:
                step = int(cells.pop("step"))
            else:
                auto += 1
                step = auto
            values = {k: float(v) for k, v in cells.items() if v != ""}
        except ValueError as exc:
            raise DescriptionError(f"inputs:{lineno}", str(exc)) from None
        if step < 1 or step in rows:
            raise DescriptionError(f"inputs:{lineno}", f"bad or repeated step {step}")
        rows[step] = values
    return rows


def input_names(system: MultiAgentSystem) -> list[str]:
    return list(system.input_bindings)


# ---------------------------------------------------------------------------
# driving a run

@dataclass
class Swap:
    at_step: int
    agent: str
    image: str
    mode: str = QUIESCENT


@dataclass
class RunReport:
    source: str
    seed: int | str
    steps: int = 0
    firings: dict[str, int] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    critical_path: int | None = None
    exit_status: int = EXIT_OK
    outputs: list = field(default_factory=list)
    swaps: list = field(default_factory=list)
    refused: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def drive(
    system: MultiAgentSystem,
    rows: Mapping[int, Mapping[str, float]],
    *,
    max_steps: int = DEFAULT_MAX_STEPS,
    swaps: Sequence[Swap] = (),
    images: Mapping[str, ConfigurationImage] | None = None,
    source: str = "",
) -> RunReport:
    """Step until the inputs are exhausted and the system is quiescent.

    Swaps apply before their ``at_step`` runs.  A refused swap stops the
    run with exit status 4; running out of steps gives status 3.
    """
    report = RunReport(source, system.seed)
    last_input = max(rows, default=0)
    pending = sorted(swaps, key=lambda s: s.at_step)
    first_input = None
    status = EXIT_OK
    while True:
        step = system.step_count + 1
        while pending and pending[0].at_step <= step:
            sw = pending.pop(0)
            before = system.snapshot()
            try:
                apply_configuration(system, sw.agent, (images or {})[sw.image], sw.mode, image_name=sw.image)
            except RECONFIG_ERRORS as exc:
                report.refused = {"step": step, "agent": sw.agent, "image": sw.image,
                                  "error": type(exc).__name__, "detail": str(exc)}
                status = EXIT_REFUSED
                break
            leaked = isolation_violations(before, system.snapshot(), system, sw.agent)
            if leaked:
                raise InvariantViolation(f"swap of {sw.agent} at step {step} touched {leaked}")
            report.swaps.append({"step": step, "agent": sw.agent, "image": sw.image, "mode": sw.mode})
        if status != EXIT_OK:
            break
        if step > last_input and not pending and system.is_quiescent():
            break
        if system.step_count >= max_steps:
            status = EXIT_STEP_LIMIT
            break
        row = rows.get(step)
        if row and first_input is None:
            first_input = step
        system.step(row)
    report.steps = system.step_count
    report.firings = {a: ag.state.firings for a, ag in system.agents.items()}
    report.counters = system.counters()
    c = report.counters
    if c["injected"] != c["delivered"] + c["in_flight"] + c["reconfig_dropped"]:
        raise InvariantViolation(f"token conservation broken: {c}")
    report.outputs = [[s, n, v] for s, n, v in system.outputs]
    if system.outputs and first_input is not None:
        report.critical_path = system.outputs[0][0] - first_input + 1
    report.exit_status = status
    return report


def _write_outputs(system: MultiAgentSystem, report: RunReport, args) -> None:
    header = {"format": FORMAT_VERSION, "system": system.name, "seed": system.seed}
    if args.trace_out:
        Path(args.trace_out).write_text(format_trace(system.events, header))
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.report_out:
        Path(args.report_out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_rows(path: str | None, system: MultiAgentSystem, default: Sequence[Mapping[str, float]] = ()):
    if path is None:
        return {i + 1: dict(r) for i, r in enumerate(default)}
    with open(path, newline="") as fp:
        return read_input_rows(fp, input_names(system))


# ---------------------------------------------------------------------------
# commands

def default_seed() -> int:
    raw = os.environ.get("AGENTFLOW_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"AGENTFLOW_SEED must be an integer, got {raw!r}")


SCENARIO_INPUTS: dict[str, list[dict[str, float]]] = {
    "fig3-fine": [{"I1": 1.0, "I2": 2.0, "I3": 3.0, "I4": 4.0}],
    "fig5-mixed": [{"I1": 1.0, "I2": 2.0, "I3": 3.0, "I4": 4.0}],
    "fig6-control": [{"event": 1.0, "data": 3.0}, {"event": 0.0, "data": 4.0}],
    "fig7-nondet": [{"percept": 1.0}, {"percept": 9.0}],
    "fig8-fusion": [{"s1": float(i), "s2": float(i)} for i in range(1, 9)],
}


def cmd_validate(args) -> int:
    try:
        desc = load_description(args.graph)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DescriptionError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_IO
    lines = description_problems(desc)
    for line in lines:
        print(line)
    if any(not l.startswith("WARNING") for l in lines):
        return EXIT_INVALID
    print(f"ok: {len(desc.graph.actors)} actors, {len(desc.partition)} agents")
    return EXIT_OK


def _build_for_run(args) -> tuple[MultiAgentSystem, str, list]:
    if args.target in SCENARIOS:
        sc = get_scenario(args.target)
        kwargs: dict[str, Any] = {"seed": args.seed}
        if args.ops:
            if args.target != "fig3-fine":
                raise DescriptionError("--ops", "only fig3-fine takes an operator preset")
            kwargs["ops"] = args.ops
        return sc.build(**kwargs), args.target, SCENARIO_INPUTS.get(args.target, [])
    if args.ops:
        raise DescriptionError("--ops", "only fig3-fine takes an operator preset")
    return system_from_description(load_description(args.target), args.seed), args.target, []


def _guarded(fn):
    def wrapper(args) -> int:
        try:
            return fn(args)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        except DescriptionError as exc:
            print(f"parse error: {exc}", file=sys.stderr)
            return EXIT_IO
        except ValidationFailed as exc:
            print(exc, file=sys.stderr)
            return EXIT_INVALID
        except KeyError as exc:
            print(f"error: {exc.args[0]}", file=sys.stderr)
            return EXIT_IO
    wrapper.__name__ = fn.__name__
    return wrapper


@_guarded
def cmd_run(args) -> int:
    system, source, default_rows = _build_for_run(args)
    rows = _load_rows(args.inputs, system, default_rows)
    report = drive(system, rows, max_steps=args.max_steps, source=source)
    _write_outputs(system, report, args)
    return report.exit_status


def parse_script(obj: Any, base: Path, where: str = "script") -> tuple[list[Swap], dict[str, ConfigurationImage]]:
    check_fields(obj, where, {"version", "swaps"}, {"images"})
    if obj["version"] != FORMAT_VERSION:
        raise DescriptionError(f"{where}.version", f"expected {FORMAT_VERSION}, got {obj['version']!r}")
    images: dict[str, ConfigurationImage] = {}
    for name, ref in (obj.get("images") or {}).items():
        if isinstance(ref, str):
            images[name] = load_image(base / ref)
        else:
            images[name] = ConfigurationImage.from_dict(ref, f"{where}.images.{name}")
    if not isinstance(obj["swaps"], list):
        raise DescriptionError(f"{where}.swaps", "expected a list")
    swaps = []
    last = 0
    for i, s in enumerate(obj["swaps"]):
        w = f"{where}.swaps[{i}]"
        check_fields(s, w, {"at_step", "agent", "image"}, {"mode"})
        if not isinstance(s["at_step"], int) or s["at_step"] <= last:
            raise DescriptionError(f"{w}.at_step", "must be an integer, strictly increasing, >= 1")
        if s["image"] not in images:
            raise DescriptionError(f"{w}.image", f"unknown image {s['image']!r}")
        mode = s.get("mode", QUIESCENT)
        if mode not in (QUIESCENT, FORCED):
            raise DescriptionError(f"{w}.mode", f"expected quiescent or forced, got {mode!r}")
        last = s["at_step"]
        swaps.append(Swap(last, s["agent"], s["image"], mode))
    return swaps, images


@_guarded
def cmd_reconfigure_run(args) -> int:
    system = system_from_description(load_description(args.graph), args.seed)
    swaps, images = parse_script(read_json(args.script), Path(args.script).parent, str(args.script))
    rows = _load_rows(args.inputs, system)
    report = drive(system, rows, max_steps=args.max_steps, swaps=swaps, images=images, source=args.graph)
    _write_outputs(system, report, args)
    if report.refused:
        r = report.refused
        print(f"reconfiguration refused at step {r['step']}: {r['detail']}", file=sys.stderr)
    return report.exit_status


@_guarded
def cmd_capture(args) -> int:
    desc = load_description(args.graph)
    errors = [l for l in description_problems(desc) if not l.startswith("WARNING")]
    if errors:
        raise ValidationFailed(errors)
    configs = {c.id: c for c in _configs(desc)}
    if args.agent not in configs:
        raise DescriptionError("--agent", f"unknown agent {args.agent!r}; known: {sorted(configs)}")
    image = capture_image(configs[args.agent])
    if args.out:
        Path(args.out).write_text(image.dumps())
    else:
        sys.stdout.write(image.dumps())
    return EXIT_OK


def cmd_fusion(args) -> int:
    try:
        params = FusionParams(
            closeness_threshold=args.closeness_threshold, confidence_threshold=args.confidence_threshold,
            window=args.window, rho=args.rho,
            cap=args.cap if args.cap is not None else max(100.0, args.closeness_threshold),
            history=args.history,
        )
        with open(args.trace, newline="") as fp:
            rows = read_sensor_trace(fp, quantize=args.quantize)
        results, _ = run_fusion(rows, params, seed=args.seed)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidThreshold, TooFewRows) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        with open(args.out, "w", newline="") as fp:
            write_results(fp, results)
    else:
        write_results(sys.stdout, results)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agentflow", description="Multi-agent dataflow simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a graph description file")
    v.add_argument("graph")
    v.set_defaults(fn=cmd_validate)

    def run_options(sp):
        sp.add_argument("--inputs", help="CSV of environment inputs, one row per step")
        sp.add_argument("--seed", type=int, default=default_seed())
        sp.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
        sp.add_argument("--trace-out")
        sp.add_argument("--report-out")

    r = sub.add_parser("run", help="run a scenario or a graph description file")
    r.add_argument("target", help=f"scenario ({', '.join(SCENARIOS)}) or graph file")
    r.add_argument("--ops", help="operator preset for fig3-fine (default, sum)")
    run_options(r)
    r.set_defaults(fn=cmd_run)

    f = sub.add_parser("fusion", help="fuse a two-sensor trace")
    f.add_argument("--trace", required=True)
    f.add_argument("--window", type=int, default=8)
    f.add_argument("--closeness-threshold", type=float, default=20.0)
    f.add_argument("--confidence-threshold", type=float, default=0.5)
    f.add_argument("--rho", type=float, default=1.25)
    f.add_argument("--cap", type=float)
    f.add_argument("--history", type=int, default=3)
    f.add_argument("--quantize", action="store_true", help="round sensor values to integers")
    f.add_argument("--seed", type=int, default=default_seed())
    f.add_argument("--out")
    f.set_defaults(fn=cmd_fusion)

    rr = sub.add_parser("reconfigure-run", help="run a graph file with scripted behavior swaps")
    rr.add_argument("graph")
    rr.add_argument("script")
    run_options(rr)
    rr.set_defaults(fn=cmd_reconfigure_run)

    c = sub.add_parser("capture", help="write an agent's configuration image")
    c.add_argument("graph")
    c.add_argument("--agent", required=True)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_capture)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser", "drive", "RunReport", "Swap", "load_description", "parse_description",
           "description_problems", "system_from_description", "read_input_rows", "parse_script"]
