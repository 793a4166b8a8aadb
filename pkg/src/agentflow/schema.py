"""Dict forms of graphs and agent configurations (JSON syntax on disk).

Parsing is strict: unknown fields raise :class:`DescriptionError` naming the
offending field path.
"""

from __future__ import annotations

from typing import Any

from .config import AgentConfig
from .dfg import ENV, ActorSpec, Arc, DataflowGraph, Operator
from .errors import DescriptionError, UnknownOperator
from .hwagent import policy_from_dict

FORMAT_VERSION = 1


def check_fields(obj: Any, where: str, required: set[str], optional: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise DescriptionError(where, f"expected an object, got {type(obj).__name__}")
    missing = required - obj.keys()
    if missing:
        raise DescriptionError(where, f"missing field(s) {sorted(missing)}")
    unknown = obj.keys() - required - set(optional)
    if unknown:
        raise DescriptionError(f"{where}.{sorted(unknown)[0]}", "unknown field")
    return obj


def _str_list(value: Any, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise DescriptionError(where, "expected a list of strings")
    return tuple(value)


def operator_to_dict(op: Operator) -> dict:
    d: dict[str, Any] = {"op": op.kind}
    if op.kind == "const":
        d["value"] = op.const
    if op.kind == "custom":
        d["name"] = op.name
    return d


def actor_to_dict(spec: ActorSpec) -> dict:
    return {"id": spec.id, **operator_to_dict(spec.op), "inputs": list(spec.inputs), "outputs": list(spec.outputs)}


def actor_from_dict(obj: Any, where: str) -> ActorSpec:
    check_fields(obj, where, {"id", "op", "inputs", "outputs"}, {"value", "name"})
    try:
        op = Operator.parse(obj["op"], const=obj.get("value"), name=obj.get("name"))
    except UnknownOperator as exc:
        raise DescriptionError(f"{where}.op", f"unknown operator {exc}") from None
    return ActorSpec(str(obj["id"]), op, _str_list(obj["inputs"], f"{where}.inputs"),
                     _str_list(obj["outputs"], f"{where}.outputs"))


def graph_to_dict(graph: DataflowGraph) -> dict:
    return {
        "actors": [actor_to_dict(a) for a in graph.actors.values()],
        "arcs": [{"id": a.id, "producer": a.producer, "consumer": a.consumer} for a in graph.arcs.values()],
        "env_inputs": list(graph.env_inputs),
        "env_outputs": list(graph.env_outputs),
    }


def graph_from_dict(obj: Any, where: str = "graph", *, extra: set[str] = frozenset()) -> DataflowGraph:
    """Parse the graph part of a description; ``extra`` names tolerated sibling fields."""
    check_fields(obj, where, {"actors", "env_inputs", "env_outputs"}, {"arcs"} | set(extra))
    if not isinstance(obj["actors"], list):
        raise DescriptionError(f"{where}.actors", "expected a list")
    actors = [actor_from_dict(a, f"{where}.actors[{i}]") for i, a in enumerate(obj["actors"])]
    env_in = _str_list(obj["env_inputs"], f"{where}.env_inputs")
    env_out = _str_list(obj["env_outputs"], f"{where}.env_outputs")
    derived = DataflowGraph.from_actors(actors, env_in, env_out)
    if "arcs" not in obj:
        return derived
    if not isinstance(obj["arcs"], list):
        raise DescriptionError(f"{where}.arcs", "expected a list")
    arcs: dict[str, Arc] = {}
    for i, a in enumerate(obj["arcs"]):
        w = f"{where}.arcs[{i}]"
        check_fields(a, w, {"id"}, {"producer", "consumer"})
        base = derived.arcs.get(a["id"])
        arcs[a["id"]] = Arc(
            a["id"],
            a.get("producer", base.producer if base else "?"),
            a.get("consumer", base.consumer if base else "?"),
        )
    # arcs referenced by actors but not declared are left out so validation reports them
    return DataflowGraph({s.id: s for s in actors}, arcs, env_in, env_out)


def config_to_dict(config: AgentConfig) -> dict:
    return {
        "id": config.id,
        "grain": config.grain,
        "behavior": list(config.behavior.actors),
        "fragment": graph_to_dict(config.behavior),
        "ports": {"inputs": list(config.inputs), "outputs": list(config.outputs)},
        "latency": config.compute_latency,
        "policy": config.policy.to_dict(),
    }


def config_from_dict(obj: Any, where: str = "agent", *, extra: set[str] = frozenset()) -> AgentConfig:
    check_fields(obj, where, {"id", "grain", "fragment", "ports"}, {"behavior", "latency", "policy"} | set(extra))
    behavior = graph_from_dict(obj["fragment"], f"{where}.fragment")
    if "behavior" in obj and list(_str_list(obj["behavior"], f"{where}.behavior")) != list(behavior.actors):
        raise DescriptionError(f"{where}.behavior", "does not match the fragment's actors")
    ports = check_fields(obj["ports"], f"{where}.ports", {"inputs", "outputs"})
    try:
        policy = policy_from_dict(obj.get("policy", "deterministic"))
    except (ValueError, TypeError) as exc:
        raise DescriptionError(f"{where}.policy", str(exc)) from None
    latency = obj.get("latency", 1)
    if not isinstance(latency, int) or isinstance(latency, bool):
        raise DescriptionError(f"{where}.latency", "expected an integer")
    return AgentConfig(
        str(obj["id"]), obj["grain"], behavior,
        _str_list(ports["inputs"], f"{where}.ports.inputs"),
        _str_list(ports["outputs"], f"{where}.ports.outputs"),
        latency, policy,
    )


__all__ = [
    "ENV", "FORMAT_VERSION", "check_fields", "graph_to_dict", "graph_from_dict",
    "config_to_dict", "config_from_dict", "actor_to_dict", "actor_from_dict",
]
