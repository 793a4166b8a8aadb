"""Agent configurations: the behavior image that partial reconfiguration swaps."""

from __future__ import annotations

from dataclasses import dataclass

from .dfg import DataflowGraph, report_errors, validate_graph
from .errors import ArityMismatch, GrainMismatch, InvalidBehavior
from .hwagent import DETERMINISTIC, Nondeterministic, Policy

FINE, COARSE = "fine", "coarse"


@dataclass(frozen=True, eq=False)
class AgentConfig:
    """What an agent computes and where its ports are wired.

    ``inputs[i]`` is the link feeding the behavior's i-th environment input
    (port RS_Agent[i] or an environment request/acknowledge pair) and
    ``outputs[j]`` the link driven by its j-th environment output (TR_Agent[j]
    or the environment output).

    A non-deterministic agent has the fixed port layout
    ``inputs = (percept, result1, result2)`` and
    ``outputs = (activate1, activate2, action)``; its behavior is the single
    OP3 actor.
    """

    id: str
    grain: str
    behavior: DataflowGraph
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    compute_latency: int = 1
    policy: Policy = DETERMINISTIC

    @property
    def nondeterministic(self) -> bool:
        return isinstance(self.policy, Nondeterministic)

    def required_beliefs(self) -> set[str]:
        return {b for a in self.behavior.actors.values() for b in a.op.required_beliefs}

    def with_ports(self, agent_id: str, inputs, outputs) -> "AgentConfig":
        return AgentConfig(agent_id, self.grain, self.behavior, tuple(inputs), tuple(outputs),
                           self.compute_latency, self.policy)


def validate_config(config: AgentConfig) -> None:
    """Raise if ``config`` cannot be loaded into an agent."""
    problems = report_errors(validate_graph(config.behavior))
    if problems:
        raise InvalidBehavior(f"agent {config.id}: behavior fails validation", problems)
    n_actors = len(config.behavior.actors)
    if config.grain == FINE and n_actors != 1:
        raise GrainMismatch(f"agent {config.id}: fine grain needs exactly 1 actor, has {n_actors}")
    if config.grain == COARSE and n_actors < 2:
        raise GrainMismatch(f"agent {config.id}: coarse grain needs at least 2 actors, has {n_actors}")
    if config.grain not in (FINE, COARSE):
        raise GrainMismatch(f"agent {config.id}: unknown grain {config.grain!r}")
    if config.compute_latency < 1:
        raise ArityMismatch(f"agent {config.id}: compute_latency must be >= 1")
    if len(set(config.inputs)) != len(config.inputs) or len(set(config.outputs)) != len(config.outputs):
        raise ArityMismatch(f"agent {config.id}: a link is bound to two ports")
    b = config.behavior
    if config.nondeterministic:
        if len(b.env_inputs) != 1 or len(b.env_outputs) != 1:
            raise ArityMismatch(f"agent {config.id}: OP3 behavior must be 1-in/1-out")
        if len(config.inputs) != 3 or len(config.outputs) != 3:
            raise ArityMismatch(f"agent {config.id}: non-deterministic agents have 3 input and 3 output ports")
        if config.compute_latency != 1:
            raise ArityMismatch(f"agent {config.id}: non-deterministic agents run with latency 1")
        return
    if len(config.inputs) != len(b.env_inputs):
        raise ArityMismatch(
            f"agent {config.id}: {len(config.inputs)} input ports for a behavior with {len(b.env_inputs)} inputs")
    if len(config.outputs) != len(b.env_outputs):
        raise ArityMismatch(
            f"agent {config.id}: {len(config.outputs)} output ports for a behavior with {len(b.env_outputs)} outputs")
