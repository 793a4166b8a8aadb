"""Grain packing: turning a partition of a dataflow graph into a multi-agent system.

Every arc that crosses a partition boundary (or touches the environment)
becomes a handshake link with the same id; arcs inside a part stay inside
that agent's behavior fragment.
"""

from __future__ import annotations

import random
from typing import Mapping, Sequence

from .config import COARSE, FINE, AgentConfig
from .dfg import ENV, DataflowGraph
from .errors import InvalidSystem
from .hwagent import DETERMINISTIC, Policy
from .runtime import HandshakeLink, MultiAgentSystem, configure_agent

Partition = Mapping[str, Sequence[str]]


def owner_map(partition: Partition) -> dict[str, str]:
    owner: dict[str, str] = {}
    for agent_id, actors in partition.items():
        for a in actors:
            if a in owner:
                raise InvalidSystem(f"actor {a} assigned to both {owner[a]} and {agent_id}")
            owner[a] = agent_id
    return owner


def agent_configs(
    graph: DataflowGraph,
    partition: Partition,
    *,
    latencies: Mapping[str, int] | None = None,
    policies: Mapping[str, Policy] | None = None,
) -> list[AgentConfig]:
    owner = owner_map(partition)
    missing = set(graph.actors) - owner.keys()
    if missing:
        raise InvalidSystem(f"actors not assigned to any agent: {sorted(missing)}")
    configs = []
    for agent_id, actors in partition.items():
        frag = graph.subgraph(actors)
        configs.append(AgentConfig(
            agent_id,
            FINE if len(frag.actors) == 1 else COARSE,
            frag,
            frag.env_inputs,
            frag.env_outputs,
            (latencies or {}).get(agent_id, 1),
            (policies or {}).get(agent_id, DETERMINISTIC),
        ))
    return configs


def boundary_links(graph: DataflowGraph, partition: Partition) -> list[HandshakeLink]:
    owner = owner_map(partition)
    links = []
    for arc in graph.arcs.values():
        producer = ENV if arc.producer == ENV else owner[arc.producer]
        consumer = ENV if arc.consumer == ENV else owner[arc.consumer]
        if producer != consumer or producer == ENV:
            links.append(HandshakeLink(arc.id, producer, consumer))
    return links


def build_system(
    graph: DataflowGraph,
    partition: Partition,
    *,
    latencies: Mapping[str, int] | None = None,
    policies: Mapping[str, Policy] | None = None,
    beliefs: Mapping[str, Mapping[str, float]] | None = None,
    input_bindings: Mapping[str, Sequence[str]] | None = None,
    output_names: Mapping[str, str] | None = None,
    seed: int | str = 0,
    name: str = "",
) -> MultiAgentSystem:
    """Pack ``graph`` into one agent per part of ``partition``."""
    configs = agent_configs(graph, partition, latencies=latencies, policies=policies)
    agents = [configure_agent(c, (beliefs or {}).get(c.id)) for c in configs]
    return MultiAgentSystem(
        agents, boundary_links(graph, partition),
        input_bindings=input_bindings, output_names=output_names, seed=seed, name=name,
    )


def fine_partition(graph: DataflowGraph, names: Sequence[str] | None = None) -> dict[str, list[str]]:
    """One agent per actor; agent ids default to the actor ids."""
    ids = list(names) if names is not None else list(graph.actors)
    return {agent: [actor] for agent, actor in zip(ids, graph.actors)}


def sequential_partition(graph: DataflowGraph, agent_id: str = "A1") -> dict[str, list[str]]:
    return {agent_id: list(graph.actors)}


def sequential_latency(graph: DataflowGraph) -> int:
    """Latency of a single agent that evaluates its actors one per step."""
    return len(graph.actors)


def quotient_is_acyclic(graph: DataflowGraph, partition: Partition) -> bool:
    owner = owner_map(partition)
    succ: dict[str, set[str]] = {a: set() for a in partition}
    for arc in graph.arcs.values():
        p, c = owner.get(arc.producer), owner.get(arc.consumer)
        if p and c and p != c:
            succ[p].add(c)
    state: dict[str, int] = {}

    def visit(n: str) -> bool:
        state[n] = 1
        for m in succ[n]:
            if state.get(m) == 1 or (m not in state and not visit(m)):
                return False
        state[n] = 2
        return True

    return all(visit(n) for n in partition if n not in state)


def random_partition(graph: DataflowGraph, rng: random.Random, max_parts: int | None = None) -> dict[str, list[str]]:
    """Cut a random topological order of ``graph`` into contiguous chunks.

    Contiguous chunks of a topological order always give an acyclic
    agent-level graph, so the packed system cannot deadlock on itself.
    """
    order = _random_topological_order(graph, rng)
    n = len(order)
    max_parts = min(max_parts or n, n)
    parts = rng.randint(1, max_parts)
    cuts = sorted(rng.sample(range(1, n), parts - 1)) if parts > 1 else []
    bounds = [0, *cuts, n]
    return {f"P{i + 1}": order[bounds[i]:bounds[i + 1]] for i in range(len(bounds) - 1)}


def _random_topological_order(graph: DataflowGraph, rng: random.Random) -> list[str]:
    indeg = {a: 0 for a in graph.actors}
    succ: dict[str, list[str]] = {a: [] for a in graph.actors}
    for arc in graph.arcs.values():
        if arc.producer in graph.actors and arc.consumer in graph.actors:
            succ[arc.producer].append(arc.consumer)
            indeg[arc.consumer] += 1
    ready = sorted(a for a, d in indeg.items() if d == 0)
    order = []
    while ready:
        a = ready.pop(rng.randrange(len(ready)))
        order.append(a)
        for b in succ[a]:
            indeg[b] -= 1
            if indeg[b] == 0:
                ready.append(b)
    if len(order) != len(graph.actors):
        raise ValueError("graph has a cycle")
    return order


def link_count(system: MultiAgentSystem) -> int:
    return len(system.links)
