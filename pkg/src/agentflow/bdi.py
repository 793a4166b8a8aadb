"""Reduced belief/desire/intention state for agents.

Beliefs are named numeric values.  Desires are named goals with a predicate
over beliefs; a static table lists goal pairs that may not coexist.
Intentions are plans guarded by a predicate over beliefs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import DesireConflict, UnknownBelief

Beliefs = dict[str, float]
Predicate = Callable[[Mapping[str, float]], bool]


def _always(_: Mapping[str, float]) -> bool:
    return True


def update_beliefs(
    beliefs: Mapping[str, float],
    percept: Mapping[str, float],
    *,
    declare_new: Iterable[str] = (),
) -> Beliefs:
    """Return a copy of ``beliefs`` with the percept's entries overwritten.

    Every percept name must already be a belief unless listed in
    ``declare_new``.
    """
    allowed = set(declare_new)
    for name in percept:
        if name not in beliefs and name not in allowed:
            raise UnknownBelief(name)
    new = dict(beliefs)
    new.update({k: float(v) for k, v in percept.items()})
    return new


@dataclass(frozen=True)
class Desire:
    name: str
    target: Predicate = _always


@dataclass
class DesireSet:
    goals: dict[str, Desire] = field(default_factory=dict)
    conflicts: frozenset[frozenset[str]] = frozenset()

    @classmethod
    def of(cls, *names: str, conflicts: Iterable[tuple[str, str]] = ()) -> "DesireSet":
        ds = cls({n: Desire(n) for n in names}, frozenset(frozenset(p) for p in conflicts))
        ds.check()
        return ds

    def check(self) -> None:
        for pair in self.conflicts:
            if pair <= self.goals.keys():
                a, b = sorted(pair)
                raise DesireConflict(f"desires {a!r} and {b!r} conflict")

    def satisfied(self, beliefs: Mapping[str, float]) -> dict[str, bool]:
        return {n: d.target(beliefs) for n, d in self.goals.items()}


INACTIVE, RUNNING, DONE = "inactive", "running", "done"


@dataclass
class Intention:
    plan_id: int
    name: str
    actions: tuple[str, ...] = ()
    guard: Predicate = _always
    serves: str | None = None
    status: str = INACTIVE


def select_intention(
    beliefs: Mapping[str, float],
    desires: DesireSet,
    intentions: list[Intention],
) -> int | None:
    """Pick the plan to run: the running one if any, else the lowest eligible plan id.

    A plan is eligible when its guard holds and the desire it serves (if any)
    is held.
    """
    running = [i for i in intentions if i.status == RUNNING]
    if len(running) > 1:
        raise ValueError("more than one intention is running")
    if running:
        return running[0].plan_id
    eligible = [
        i for i in intentions
        if (i.serves is None or i.serves in desires.goals) and i.guard(beliefs)
    ]
    if not eligible:
        return None
    return min(i.plan_id for i in eligible)
