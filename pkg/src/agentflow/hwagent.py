"""Agent memory and the learning/decision loop of a non-deterministic agent.

The loop per percept is::

    memory <- update_mem(memory, percept)   # learn from the environment
    action <- take_decision(memory)         # decide from what is known
    memory <- update_mem(memory, action)    # learn from the action taken

A non-deterministic agent has two subordinates.  Its plans are

    Plan1  subordinate 1 runs OP1, the agent runs OP3 on the result
    Plan2  subordinate 2 runs OP2, the agent runs OP3 on the result
    Plan3  the agent runs OP3 on state kept in memory
    Plan4  the agent repeats its last output from memory
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import EmptyMemory

PLAN1, PLAN2, PLAN3, PLAN4 = "Plan1", "Plan2", "Plan3", "Plan4"
PLANS = (PLAN1, PLAN2, PLAN3, PLAN4)
SUBORDINATE_PLANS = (PLAN1, PLAN2)


@dataclass(frozen=True)
class Deterministic:
    kind: str = "deterministic"

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Nondeterministic:
    seed: int = 0
    timeout: int = 8
    memory_bound: int = 64
    low: float = 0.5
    high: float = 4.0
    decider: str = "threshold"
    kind: str = "nondeterministic"

    def __post_init__(self):
        if self.timeout < 1:
            raise ValueError("timeout must be >= 1")
        if self.memory_bound < 2:
            raise ValueError("memory_bound must be >= 2")
        if not 0 <= self.low <= self.high:
            raise ValueError("need 0 <= low <= high")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "seed": self.seed, "timeout": self.timeout,
            "memory_bound": self.memory_bound, "low": self.low, "high": self.high,
            "decider": self.decider,
        }


Policy = Deterministic | Nondeterministic
DETERMINISTIC = Deterministic()


def policy_from_dict(data: dict | str) -> Policy:
    if data == "deterministic" or (isinstance(data, dict) and data.get("kind") == "deterministic"):
        if isinstance(data, dict) and set(data) - {"kind"}:
            raise ValueError(f"unknown policy fields {sorted(set(data) - {'kind'})}")
        return DETERMINISTIC
    if isinstance(data, dict) and data.get("kind") == "nondeterministic":
        fields = {k: v for k, v in data.items() if k != "kind"}
        allowed = {"seed", "timeout", "memory_bound", "low", "high", "decider"}
        unknown = set(fields) - allowed
        if unknown:
            raise ValueError(f"unknown policy fields {sorted(unknown)}")
        return Nondeterministic(**fields)
    raise ValueError(f"unrecognised policy {data!r}")


# ---------------------------------------------------------------------------
# memory records

@dataclass(frozen=True)
class PerceptRecord:
    step: int
    source: str  # "environment" or a peer agent id
    values: dict

    def to_dict(self) -> dict:
        return {"type": "percept", "step": self.step, "source": self.source, "values": dict(self.values)}


@dataclass(frozen=True)
class ActionRecord:
    step: int
    plan: str
    value: float | None = None
    origin: str = "decision"  # decision | completion | timeout

    def __post_init__(self):
        if self.plan not in PLANS:
            raise ValueError(f"unknown plan {self.plan!r}")

    def to_dict(self) -> dict:
        return {"type": "action", "step": self.step, "plan": self.plan,
                "value": self.value, "origin": self.origin}


@dataclass(frozen=True)
class EmitRecord:
    """A deterministic agent's completed firing: what it consumed and sent."""

    step: int
    consumed: dict
    sent: dict

    def to_dict(self) -> dict:
        return {"type": "emit", "step": self.step, "consumed": dict(self.consumed), "sent": dict(self.sent)}


@dataclass
class AgentMemory:
    """Bounded record history plus a numeric state summary.

    Summary keys used here: ``last_percept``, ``op3_input``, ``last_output``.
    """

    bound: int = 64
    records: deque = field(default_factory=deque)
    summary: dict[str, float] = field(default_factory=dict)
    idle_steps: int = 0
    timed_out: bool = False

    def __post_init__(self):
        self.records = deque(self.records, maxlen=self.bound)

    def copy(self) -> "AgentMemory":
        return AgentMemory(self.bound, deque(self.records), dict(self.summary), self.idle_steps, self.timed_out)

    def remember(self, record) -> None:
        self.records.append(record)

    def percept_values(self) -> list[float]:
        return [r.values["value"] for r in self.records
                if isinstance(r, PerceptRecord) and "value" in r.values]

    def has_state(self) -> bool:
        return bool(self.summary)

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "records": [r.to_dict() for r in self.records],
            "summary": dict(sorted(self.summary.items())),
            "idle_steps": self.idle_steps,
            "timed_out": self.timed_out,
        }


# ---------------------------------------------------------------------------
# decision policies

Decider = Callable[[AgentMemory, Nondeterministic, random.Random], list[str]]


def threshold_decision(memory: AgentMemory, policy: Nondeterministic, rng: random.Random) -> list[str]:
    """Default take-decision rule.

    Novelty is the distance of the newest percept from the mean of the
    earlier ones held in memory.  Novel percepts engage both subordinates,
    moderately novel ones a single subordinate picked by ``rng``, familiar
    ones are answered from memory (Plan3 or Plan4, picked by ``rng``).
    """
    values = memory.percept_values()
    if not values:
        return [rng.choice(SUBORDINATE_PLANS)]
    history = values[:-1]
    novelty = math.inf if not history else abs(values[-1] - sum(history) / len(history))
    if novelty >= policy.high:
        return [PLAN1, PLAN2]
    from_memory = [p for p, ok in ((PLAN3, "op3_input" in memory.summary),
                                   (PLAN4, "last_output" in memory.summary)) if ok]
    if novelty >= policy.low or not from_memory:
        return [rng.choice(SUBORDINATE_PLANS)]
    return [rng.choice(from_memory)]


DECIDERS: dict[str, Decider] = {"threshold": threshold_decision}


def register_decider(name: str, fn: Decider) -> None:
    DECIDERS[name] = fn


# ---------------------------------------------------------------------------
# the agent function

def update_mem(memory: AgentMemory, item: PerceptRecord | ActionRecord) -> AgentMemory:
    memory.remember(item)
    if isinstance(item, PerceptRecord):
        if "value" in item.values:
            memory.summary["last_percept"] = float(item.values["value"])
        memory.idle_steps = 0
        memory.timed_out = False
    elif item.value is not None:
        memory.summary["last_output"] = float(item.value)
    return memory


def _decision_rng(policy: Nondeterministic, step: int) -> random.Random:
    return random.Random(f"{policy.seed}:{step}")


def take_decision(
    memory: AgentMemory,
    policy: Nondeterministic,
    op3: Callable[[float], float],
    step: int,
) -> list[ActionRecord]:
    plans = DECIDERS[policy.decider](memory, policy, _decision_rng(policy, step))
    actions = []
    for plan in sorted(set(plans)):
        if plan == PLAN3:
            actions.append(ActionRecord(step, PLAN3, op3(memory.summary["op3_input"])))
        elif plan == PLAN4:
            actions.append(ActionRecord(step, PLAN4, memory.summary["last_output"]))
        else:
            actions.append(ActionRecord(step, plan))
    return actions


def timeout_action(
    memory: AgentMemory,
    timeout: int,
    op3: Callable[[float], float],
    step: int = 0,
) -> ActionRecord:
    """Fallback action once ``timeout`` idle steps have passed.

    The value comes from memory only: OP3 on the remembered OP3 input when
    there is one (Plan3), else the last output (Plan4).
    """
    if memory.idle_steps < timeout:
        raise ValueError(f"idle for {memory.idle_steps} steps, timeout is {timeout}")
    if "op3_input" in memory.summary:
        return ActionRecord(step, PLAN3, op3(memory.summary["op3_input"]), origin="timeout")
    if "last_output" in memory.summary:
        return ActionRecord(step, PLAN4, memory.summary["last_output"], origin="timeout")
    raise EmptyMemory("no remembered state to act on")


def hw_agent_step(
    percept: PerceptRecord | None,
    memory: AgentMemory,
    policy: Nondeterministic,
    op3: Callable[[float], float],
    step: int | None = None,
) -> tuple[list[ActionRecord], AgentMemory]:
    """One call of the agent function; returns the actions taken and the new memory.

    With no percept the memory only ages; after ``policy.timeout`` idle calls a
    single timeout action is produced (raises EmptyMemory if nothing is
    remembered).  Tandem activation yields two actions, Plan1 then Plan2.
    """
    memory = memory.copy()
    if percept is None:
        memory.idle_steps += 1
        if memory.idle_steps >= policy.timeout and not memory.timed_out:
            memory.timed_out = True
            action = timeout_action(memory, policy.timeout, op3, step if step is not None else 0)
            update_mem(memory, action)
            return [action], memory
        return [], memory
    step = percept.step if step is None else step
    update_mem(memory, percept)
    actions = take_decision(memory, policy, op3, step)
    for action in actions:
        update_mem(memory, action)
    return actions, memory


def record_completion(memory: AgentMemory, plan: str, op3_input: float, value: float, step: int) -> ActionRecord:
    """Learn from a subordinate's result once OP3 has been applied to it.

    Idle accounting is left alone: only percepts end an input gap.
    """
    memory.summary["op3_input"] = float(op3_input)
    action = ActionRecord(step, plan, value, origin="completion")
    update_mem(memory, action)
    return action


def plans_in(records: Iterable) -> set[str]:
    return {r.plan for r in records if isinstance(r, ActionRecord)}
