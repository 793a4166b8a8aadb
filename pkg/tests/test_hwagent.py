from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentflow.errors import EmptyMemory
from agentflow.hwagent import (
    PLAN1,
    PLAN2,
    PLAN3,
    PLAN4,
    PLANS,
    ActionRecord,
    AgentMemory,
    Nondeterministic,
    PerceptRecord,
    hw_agent_step,
    policy_from_dict,
    register_decider,
    timeout_action,
)

op3 = math.sqrt


def percept(step, value):
    return PerceptRecord(step, "environment", {"value": value})


def test_action_record_rejects_unknown_plan():
    with pytest.raises(ValueError):
        ActionRecord(1, "Plan5")


def test_memory_is_bounded():
    m = AgentMemory(bound=3)
    for i in range(5):
        m.remember(percept(i, i))
    assert [r.step for r in m.records] == [2, 3, 4]


def test_percept_then_action_in_memory():
    actions, mem = hw_agent_step(percept(1, 2.0), AgentMemory(), Nondeterministic(seed=0), op3)
    assert len(actions) >= 1
    tail = list(mem.records)[-(len(actions) + 1):]
    assert isinstance(tail[0], PerceptRecord)
    assert all(isinstance(r, ActionRecord) for r in tail[1:])


def test_input_memory_not_mutated():
    mem = AgentMemory()
    hw_agent_step(percept(1, 2.0), mem, Nondeterministic(), op3)
    assert len(mem.records) == 0


def test_single_subordinate_selected():
    register_decider("test.plan1", lambda m, p, rng: [PLAN1])
    actions, _ = hw_agent_step(percept(1, 1.0), AgentMemory(), Nondeterministic(decider="test.plan1"), op3)
    assert [a.plan for a in actions] == [PLAN1]


def test_novel_percept_engages_both_subordinates():
    mem = AgentMemory()
    pol = Nondeterministic(seed=1, high=4.0)
    _, mem = hw_agent_step(percept(1, 1.0), mem, pol, op3)
    actions, _ = hw_agent_step(percept(2, 50.0), mem, pol, op3)
    assert [a.plan for a in actions] == [PLAN1, PLAN2]


def test_familiar_percept_answered_from_memory():
    pol = Nondeterministic(seed=0, low=0.5)
    seen = set()
    for step in range(40):
        mem = AgentMemory(summary={"last_output": 7.0, "op3_input": 16.0})
        mem.remember(percept(0, 3.0))
        (action,), _ = hw_agent_step(percept(step, 3.0), mem, pol, op3)
        assert (action.plan, action.value) in {(PLAN3, 4.0), (PLAN4, 7.0)}
        seen.add(action.plan)
    assert seen == {PLAN3, PLAN4}


def test_timeout_plan3_when_op3_state_present():
    mem = AgentMemory(summary={"last_output": 7.0, "op3_input": 16.0}, idle_steps=5)
    a = timeout_action(mem, 5, op3)
    assert (a.plan, a.value, a.origin) == (PLAN3, 4.0, "timeout")


def test_timeout_plan4_carries_last_output():
    mem = AgentMemory(summary={"last_output": 7.0}, idle_steps=5)
    a = timeout_action(mem, 5, op3)
    assert (a.plan, a.value) == (PLAN4, 7.0)


def test_timeout_with_empty_memory():
    with pytest.raises(EmptyMemory):
        timeout_action(AgentMemory(idle_steps=9), 5, op3)


def test_timeout_requires_idle_period():
    with pytest.raises(ValueError):
        timeout_action(AgentMemory(summary={"last_output": 1.0}, idle_steps=2), 5, op3)


def test_idle_calls_time_out_once():
    mem = AgentMemory(summary={"last_output": 7.0})
    pol = Nondeterministic(timeout=3)
    produced = []
    for step in range(1, 10):
        actions, mem = hw_agent_step(None, mem, pol, op3, step)
        produced += [(step, a.plan) for a in actions]
    assert produced == [(3, PLAN4)]


def test_seeded_decisions_replay():
    pol = Nondeterministic(seed=42)

    def run():
        mem, plans = AgentMemory(), []
        for i, v in enumerate([1, 1.2, 0.9, 3, 8, 1, 1.1]):
            actions, mem = hw_agent_step(percept(i, v), mem, pol, op3)
            plans.append(tuple(a.plan for a in actions))
        return plans

    assert run() == run()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=20))
def test_only_defined_plans(seed, values):
    mem = AgentMemory()
    pol = Nondeterministic(seed=seed)
    for i, v in enumerate(values):
        actions, mem = hw_agent_step(percept(i, v), mem, pol, op3)
        assert {a.plan for a in actions} <= set(PLANS)


def test_policy_round_trip():
    pol = Nondeterministic(seed=3, timeout=5)
    assert policy_from_dict(pol.to_dict()) == pol
    with pytest.raises((TypeError, ValueError)):
        policy_from_dict({"kind": "nondeterministic", "seed": 1, "bogus": 2})
