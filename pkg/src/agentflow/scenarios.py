"""The model systems: fine grain, mixed grain, control flow, non-deterministic.

The five-node topology shared by the deterministic scenarios::

    I1 I2   I2 I3   I3 I4
     \\ /     \\ /     \\ /
     N1      N2      N3
       \\    /        |
        N4          |
          \\        /
             N5 ---> out

Node operators are parameters; the default assignment is ``add``, ``sub``,
``mul`` on level 1, ``min`` on level 2 and ``avg2`` on level 3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .config import COARSE, FINE, AgentConfig
from .dfg import ActorSpec, DataflowGraph, Operator, register_operator
from .hwagent import Nondeterministic, hw_agent_step, timeout_action
from .packing import agent_configs, build_system, fine_partition, link_count
from .reconfig import QUIESCENT, apply_configuration, capture_image
from .runtime import HandshakeLink, MultiAgentSystem, configure_agent

__all__ = [
    "OPERATOR_PRESETS", "FIG2_INPUTS", "fig2_graph", "fig5_graph", "FIG5_PARTITION",
    "build_fine_grain_system", "build_sequential_system", "build_mixed_grain_system",
    "fine_counterpart", "build_control_flow_system", "encode_event", "branch_of",
    "build_nondet_system", "hw_agent_step", "timeout_action", "Scenario", "SCENARIOS", "get_scenario",
]

NODES = ("N1", "N2", "N3", "N4", "N5")
OPERATOR_PRESETS: dict[str, dict[str, str]] = {
    "default": {"N1": "add", "N2": "sub", "N3": "mul", "N4": "min", "N5": "avg2"},
    "sum": {n: "add" for n in NODES},
}
# environment input name -> env-facing arcs it drives
FIG2_INPUTS = {"I1": ("i1",), "I2": ("i2a", "i2b"), "I3": ("i3a", "i3b"), "I4": ("i4",)}
AGENT_IDS = ("A1", "A2", "A3", "A4", "A5")


def _ops(ops: str | Mapping[str, str] | None) -> dict[str, str]:
    if ops is None:
        return dict(OPERATOR_PRESETS["default"])
    if isinstance(ops, str):
        return dict(OPERATOR_PRESETS[ops])
    return {**OPERATOR_PRESETS["default"], **ops}


def fig2_graph(ops: str | Mapping[str, str] | None = None) -> DataflowGraph:
    k = _ops(ops)
    return DataflowGraph.from_actors(
        [
            ActorSpec("N1", Operator(k["N1"]), ("i1", "i2a"), ("x1",)),
            ActorSpec("N2", Operator(k["N2"]), ("i2b", "i3a"), ("x2",)),
            ActorSpec("N3", Operator(k["N3"]), ("i3b", "i4"), ("x3",)),
            ActorSpec("N4", Operator(k["N4"]), ("x1", "x2"), ("x4",)),
            ActorSpec("N5", Operator(k["N5"]), ("x4", "x3"), ("out",)),
        ],
        ["i1", "i2a", "i2b", "i3a", "i3b", "i4"],
        ["out"],
    )


def build_fine_grain_system(
    ops: str | Mapping[str, str] | None = None,
    *,
    seed: int | str = 0,
    latencies: Mapping[str, int] | None = None,
) -> MultiAgentSystem:
    """Five single-operation agents; A1-A3 face the environment, A5 drives ``out``."""
    g = fig2_graph(ops)
    return build_system(g, fine_partition(g, AGENT_IDS), latencies=latencies,
                        input_bindings=FIG2_INPUTS, seed=seed, name="fig3-fine")


def build_sequential_system(ops: str | Mapping[str, str] | None = None, *, seed: int | str = 0) -> MultiAgentSystem:
    """The same graph in one agent that spends one step per operation."""
    g = fig2_graph(ops)
    return build_system(g, {"A1": list(g.actors)}, latencies={"A1": len(g.actors)},
                        input_bindings=FIG2_INPUTS, seed=seed, name="sequential")


# ---------------------------------------------------------------------------
# mixed grain

FIG5_OPS = {"N1": "add", "N1b": "square", "N2": "sub", "N3": "mul", "N4": "min", "N5": "avg2", "N5b": "abs"}
FIG5_PARTITION = {"A1": ["N1", "N1b"], "A2": ["N2"], "A3": ["N3"], "A4": ["N4"], "A5": ["N5", "N5b"]}


def fig5_graph() -> DataflowGraph:
    """Seven operations; A1 and A5 each host a two-operation chain."""
    k = FIG5_OPS
    return DataflowGraph.from_actors(
        [
            ActorSpec("N1", Operator(k["N1"]), ("i1", "i2a"), ("y1",)),
            ActorSpec("N1b", Operator(k["N1b"]), ("y1",), ("x1",)),
            ActorSpec("N2", Operator(k["N2"]), ("i2b", "i3a"), ("x2",)),
            ActorSpec("N3", Operator(k["N3"]), ("i3b", "i4"), ("x3",)),
            ActorSpec("N4", Operator(k["N4"]), ("x1", "x2"), ("x4",)),
            ActorSpec("N5", Operator(k["N5"]), ("x4", "x3"), ("y5",)),
            ActorSpec("N5b", Operator(k["N5b"]), ("y5",), ("out",)),
        ],
        ["i1", "i2a", "i2b", "i3a", "i3b", "i4"],
        ["out"],
    )


def build_mixed_grain_system(*, seed: int | str = 0) -> MultiAgentSystem:
    """The fine-grain system with agents 1 and 5 reconfigured to coarse behaviors.

    Only agent behaviors change: the coarse images are captured from a
    packing of the seven-operation graph and applied onto the running
    five-agent harness, whose links stay as they are.
    """
    system = build_fine_grain_system({"N1": "add", "N2": "sub", "N3": "mul", "N4": "min", "N5": "avg2"}, seed=seed)
    configs = {c.id: c for c in agent_configs(fig5_graph(), FIG5_PARTITION)}
    for agent_id in ("A1", "A5"):
        apply_configuration(system, agent_id, capture_image(configs[agent_id]), QUIESCENT,
                            image_name=f"fig5-{agent_id}")
    system.name = "fig5-mixed"
    system.events.clear()
    return system


def fine_counterpart(*, seed: int | str = 0) -> MultiAgentSystem:
    """Seven fine-grain agents over the same seven-operation graph."""
    g = fig5_graph()
    return build_system(g, fine_partition(g), input_bindings=FIG2_INPUTS, seed=seed, name="fig5-fine")


# ---------------------------------------------------------------------------
# control flow

BRANCH_A, BRANCH_B = "A", "B"


def _tag(offset: float) -> Callable:
    def fn(values, ctx):
        return (10.0 * values[0] + offset,)
    return fn


register_operator("tag_a", _tag(1.0), 1, replace=True)
register_operator("tag_b", _tag(2.0), 1, replace=True)


def encode_event(branch: str) -> float:
    """Switch control value: nonzero routes to branch A."""
    if branch not in (BRANCH_A, BRANCH_B):
        raise ValueError(f"unknown branch {branch!r}")
    return 1.0 if branch == BRANCH_A else 0.0


def branch_of(output: float) -> str:
    """Recover the branch from a tagged output (integer data only)."""
    return BRANCH_A if round(output) % 10 == 1 else BRANCH_B


def build_control_flow_system(*, seed: int | str = 0) -> MultiAgentSystem:
    """A1 steers ``data`` to A2 or A3 per ``event`` and merges their results.

    Env inputs ``event`` and ``data`` go in together, one pair per event.
    A2 runs op1 -> op3 and A3 runs op2 -> op4; op3 and op4 tag their result
    (10x+1 and 10x+2) so the branch taken is visible in the output.
    """
    custom = lambda name: Operator("custom", name=name)  # noqa: E731
    g = DataflowGraph.from_actors(
        [
            ActorSpec("steer", Operator("switch"), ("data", "event"), ("to_a", "to_b")),
            ActorSpec("join", Operator("merge"), ("res_a", "res_b"), ("out",)),
            ActorSpec("op1", Operator("identity"), ("to_a",), ("mid_a",)),
            ActorSpec("op3", custom("tag_a"), ("mid_a",), ("res_a",)),
            ActorSpec("op2", Operator("identity"), ("to_b",), ("mid_b",)),
            ActorSpec("op4", custom("tag_b"), ("mid_b",), ("res_b",)),
        ],
        ["data", "event"],
        ["out"],
    )
    partition = {"A1": ["steer", "join"], "A2": ["op1", "op3"], "A3": ["op2", "op4"]}
    return build_system(g, partition, seed=seed, name="fig6-control")


# ---------------------------------------------------------------------------
# non-deterministic agent

def build_nondet_system(
    *,
    seed: int = 0,
    timeout: int = 8,
    low: float = 0.5,
    high: float = 4.0,
    op3: str = "sqrt",
    op1: str = "square",
    op2: str = "abs",
) -> MultiAgentSystem:
    """A1 decides which of A2 (OP1) and A3 (OP2) to activate per percept.

    Env input ``percept`` feeds A1; A1 emits on ``action``.  Subordinate
    results come back on ``result1``/``result2`` and A1 applies OP3.
    """
    policy = Nondeterministic(seed=seed, timeout=timeout, low=low, high=high)
    op3_frag = DataflowGraph.from_actors([ActorSpec("OP3", Operator(op3), ("op3_in",), ("op3_out",))],
                                         ["op3_in"], ["op3_out"])
    master = AgentConfig("A1", FINE, op3_frag, ("percept", "result1", "result2"),
                         ("activate1", "activate2", "action"), 1, policy)

    def subordinate(agent_id: str, op: str, inp: str, out: str) -> AgentConfig:
        frag = DataflowGraph.from_actors([ActorSpec(op.upper(), Operator(op), (inp,), (out,))], [inp], [out])
        return AgentConfig(agent_id, FINE, frag, (inp,), (out,))

    agents = [configure_agent(master),
              configure_agent(subordinate("A2", op1, "activate1", "result1")),
              configure_agent(subordinate("A3", op2, "activate2", "result2"))]
    links = [
        HandshakeLink("percept", "env", "A1"),
        HandshakeLink("activate1", "A1", "A2"),
        HandshakeLink("activate2", "A1", "A3"),
        HandshakeLink("result1", "A2", "A1"),
        HandshakeLink("result2", "A3", "A1"),
        HandshakeLink("action", "A1", "env"),
    ]
    return MultiAgentSystem(agents, links, seed=seed, name="fig7-nondet")


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class Scenario:
    name: str
    build: Callable[..., MultiAgentSystem]
    inputs: tuple[str, ...]
    description: str


def _fusion_build(*, seed: int | str = 0) -> MultiAgentSystem:
    from .fusion import build_fusion_system
    return build_fusion_system(seed=seed)


SCENARIOS: dict[str, Scenario] = {s.name: s for s in (
    Scenario("fig3-fine", build_fine_grain_system, ("I1", "I2", "I3", "I4"), "five fine-grain agents"),
    Scenario("fig5-mixed", build_mixed_grain_system, ("I1", "I2", "I3", "I4"),
             "agents 1 and 5 coarse, 2-4 fine"),
    Scenario("fig6-control", build_control_flow_system, ("data", "event"), "switch/merge control flow"),
    Scenario("fig7-nondet", build_nondet_system, ("percept",), "non-deterministic agent with plans and timeout"),
    Scenario("fig8-fusion", _fusion_build, ("s1", "s2"), "two-sensor data fusion"),
)}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None


def grain_flags(system: MultiAgentSystem) -> dict[str, str]:
    return {a: ag.config.grain for a, ag in system.agents.items()}


__all__ += ["grain_flags", "link_count", "COARSE", "FINE"]
