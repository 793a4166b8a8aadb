from __future__ import annotations

import pytest

from agentflow.bdi import RUNNING, DesireSet, Intention, select_intention, update_beliefs
from agentflow.errors import DesireConflict, UnknownBelief


def test_update_overwrites():
    assert update_beliefs({"s1": 0.0}, {"s1": 5}) == {"s1": 5.0}


def test_empty_percept_is_identity():
    b = {"s1": 1.0, "s2": 2.0}
    assert update_beliefs(b, {}) == b


def test_peer_revises_threshold():
    b = update_beliefs({"closeness_threshold": 20.0}, {"closeness_threshold": 30})
    assert b["closeness_threshold"] == 30.0


def test_update_returns_a_copy():
    b = {"s1": 0.0}
    update_beliefs(b, {"s1": 1})
    assert b == {"s1": 0.0}


def test_unknown_belief_needs_declaration():
    with pytest.raises(UnknownBelief):
        update_beliefs({}, {"x": 1})
    assert update_beliefs({}, {"x": 1}, declare_new=["x"]) == {"x": 1.0}


def test_conflicting_desires_rejected():
    with pytest.raises(DesireConflict):
        DesireSet.of("save-power", "max-throughput", conflicts=[("save-power", "max-throughput")])
    DesireSet.of("save-power", conflicts=[("save-power", "max-throughput")])


def test_single_intention_selected():
    assert select_intention({}, DesireSet.of("go"), [Intention(3, "only")]) == 3


def test_lowest_plan_id_wins():
    assert select_intention({}, DesireSet.of("go"), [Intention(5, "b"), Intention(2, "a")]) == 2


def test_all_guards_false():
    never = lambda b: False  # noqa: E731
    assert select_intention({}, DesireSet.of("go"), [Intention(1, "a", guard=never)]) is None


def test_running_intention_keeps_running():
    its = [Intention(1, "a"), Intention(2, "b", status=RUNNING)]
    assert select_intention({}, DesireSet.of("go"), its) == 2


def test_guard_reads_beliefs_and_desire_must_be_held():
    hot = Intention(1, "cool", guard=lambda b: b["temp"] > 50, serves="stay-cool")
    idle = Intention(2, "idle")
    ds = DesireSet.of("stay-cool")
    assert select_intention({"temp": 80}, ds, [hot, idle]) == 1
    assert select_intention({"temp": 20}, ds, [hot, idle]) == 2
    assert select_intention({"temp": 80}, DesireSet.of("other"), [hot, idle]) == 2
