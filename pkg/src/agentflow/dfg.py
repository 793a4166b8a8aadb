"""Dataflow graphs and token-firing semantics.

An actor is enabled when every input arc holds a token and every output arc
is empty.  Firing removes one token per input arc, applies the operator to
the values in declared arc order and places the result on the output arcs.
Arcs have capacity one.

Two operators bend the plain rule: ``switch`` routes its data input to
exactly one of its outputs, and ``merge`` is enabled by a token on *either*
input.  Graphs using ``merge`` are therefore not confluent in general.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import NotEnabled, OperatorError, StepLimitExceeded, UnknownActor, UnknownOperator

ENV = "env"
DEFAULT_MAX_STEPS = 10**6


@dataclass(frozen=True)
class Token:
    value: float
    seq: int


# ---------------------------------------------------------------------------
# operators

@dataclass
class OpContext:
    """Mutable context handed to custom operators.

    ``beliefs`` is the hosting agent's working belief set, ``scratch`` holds
    behavior-private state keyed by actor id, ``notes`` are copied into the
    trace, and ``feedback`` collects belief messages for peer agents.
    """

    beliefs: dict[str, float] = field(default_factory=dict)
    scratch: dict[str, dict] = field(default_factory=dict)
    notes: dict[str, Any] = field(default_factory=dict)
    feedback: dict[str, float] = field(default_factory=dict)
    actor_id: str = ""

    def state(self) -> dict:
        return self.scratch.setdefault(self.actor_id, {})


CustomFn = Callable[[tuple, OpContext], "Sequence[float | None] | None"]


@dataclass(frozen=True)
class CustomOperator:
    name: str
    fn: CustomFn
    n_in: int
    n_out: int
    beliefs: tuple[str, ...] = ()
    deterministic: bool = True


_REGISTRY: dict[str, CustomOperator] = {}


def register_operator(
    name: str,
    fn: CustomFn,
    n_in: int,
    n_out: int = 1,
    *,
    beliefs: Iterable[str] = (),
    deterministic: bool = True,
    replace: bool = False,
) -> CustomOperator:
    """Register a custom operator under ``name``.

    ``fn`` receives the input values and an :class:`OpContext` and returns one
    value per output (``None`` leaves that output empty) or ``None`` to absorb
    the inputs without producing anything.  ``beliefs`` lists the belief
    entries a hosting agent must define.
    """
    if name in _REGISTRY and not replace:
        raise ValueError(f"operator {name!r} already registered")
    op = CustomOperator(name, fn, n_in, n_out, tuple(beliefs), deterministic)
    _REGISTRY[name] = op
    return op


def lookup_operator(name: str) -> CustomOperator:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownOperator(name) from None


def registered_operators() -> list[str]:
    return sorted(_REGISTRY)


def _div(a: float, b: float) -> float:
    if b == 0:
        raise OperatorError("div", "division by zero")
    return a / b


def _sqrt(a: float) -> float:
    if a < 0:
        raise OperatorError("sqrt", "negative operand")
    return math.sqrt(a)


_BUILTIN: dict[str, tuple[int, int, Callable[..., float] | None]] = {
    "add": (2, 1, lambda a, b: a + b),
    "sub": (2, 1, lambda a, b: a - b),
    "mul": (2, 1, lambda a, b: a * b),
    "div": (2, 1, _div),
    "min": (2, 1, min),
    "max": (2, 1, max),
    "abs": (1, 1, abs),
    "square": (1, 1, lambda a: a * a),
    "sqrt": (1, 1, _sqrt),
    "avg2": (2, 1, lambda a, b: (a + b) / 2.0),
    "identity": (1, 1, lambda a: a),
    "const": (1, 1, None),
    "switch": (2, 2, None),
    "merge": (2, 1, None),
}

BUILTIN_KINDS = tuple(_BUILTIN) + ("custom",)


@dataclass(frozen=True)
class Operator:
    """An operator kind; ``const`` carries its value, ``custom`` its registry name."""

    kind: str
    const: float | None = None
    name: str | None = None

    @classmethod
    def parse(cls, kind: str, *, const: float | None = None, name: str | None = None) -> "Operator":
        if kind not in BUILTIN_KINDS:
            raise UnknownOperator(kind)
        if kind == "const" and const is None:
            raise UnknownOperator("const requires a value")
        if kind == "custom" and not name:
            raise UnknownOperator("custom requires a name")
        return cls(kind, float(const) if kind == "const" else None, name if kind == "custom" else None)

    @property
    def label(self) -> str:
        if self.kind == "const":
            return f"const({self.const!r})"
        if self.kind == "custom":
            return f"custom({self.name})"
        return self.kind

    def _custom(self) -> CustomOperator:
        return lookup_operator(self.name or "")

    @property
    def arity(self) -> tuple[int, int]:
        if self.kind == "custom":
            c = self._custom()
            return c.n_in, c.n_out
        n_in, n_out, _ = _BUILTIN[self.kind]
        return n_in, n_out

    @property
    def deterministic(self) -> bool:
        if self.kind == "merge":
            return False
        if self.kind == "custom":
            return self._custom().deterministic
        return True

    @property
    def required_beliefs(self) -> tuple[str, ...]:
        return self._custom().beliefs if self.kind == "custom" else ()

    def evaluate(self, values: Sequence[float], ctx: OpContext) -> tuple[float | None, ...] | None:
        """Return one entry per output (None = no token) or None when absorbed."""
        if self.kind == "const":
            out: tuple[float | None, ...] = (self.const,)
        elif self.kind == "switch":
            data, control = values
            out = (data, None) if control != 0 else (None, data)
        elif self.kind == "merge":
            out = (values[0],)
        elif self.kind == "custom":
            c = self._custom()
            try:
                res = c.fn(tuple(values), ctx)
            except OperatorError:
                raise
            except (ArithmeticError, ValueError) as exc:
                raise OperatorError(self.label, str(exc)) from exc
            if res is None:
                return None
            out = tuple(res)
            if len(out) != c.n_out:
                raise OperatorError(self.label, f"returned {len(out)} values, expected {c.n_out}")
        else:
            fn = _BUILTIN[self.kind][2]
            try:
                out = (fn(*values),)
            except OperatorError:
                raise
            except (ArithmeticError, ValueError) as exc:
                raise OperatorError(self.kind, str(exc)) from exc
        for v in out:
            if v is not None and not math.isfinite(v):
                raise OperatorError(self.label, "non-finite result")
        return tuple(None if v is None else float(v) for v in out)


# ---------------------------------------------------------------------------
# graph structure

@dataclass(frozen=True)
class Arc:
    id: str
    producer: str
    consumer: str


@dataclass(frozen=True)
class ActorSpec:
    id: str
    op: Operator
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]


@dataclass
class DataflowGraph:
    """Actors plus arcs.  ``actors`` and ``arcs`` keep declaration order."""

    actors: dict[str, ActorSpec]
    arcs: dict[str, Arc]
    env_inputs: tuple[str, ...]
    env_outputs: tuple[str, ...]

    @classmethod
    def from_actors(
        cls,
        actors: Iterable[ActorSpec],
        env_inputs: Sequence[str],
        env_outputs: Sequence[str],
    ) -> "DataflowGraph":
        """Build a graph, deriving each arc's endpoints from the actor specs.

        Arc order: environment inputs first, then actor outputs in actor order.
        """
        actors = list(actors)
        producer: dict[str, str] = {a: ENV for a in env_inputs}
        consumer: dict[str, str] = {a: ENV for a in env_outputs}
        order: list[str] = list(env_inputs)
        for spec in actors:
            for arc in spec.outputs:
                producer.setdefault(arc, spec.id)
                if arc not in order:
                    order.append(arc)
            for arc in spec.inputs:
                consumer.setdefault(arc, spec.id)
        for arc in list(consumer):
            if arc not in order:
                order.append(arc)
        arcs = {a: Arc(a, producer.get(a, "?"), consumer.get(a, "?")) for a in order}
        return cls({s.id: s for s in actors}, arcs, tuple(env_inputs), tuple(env_outputs))

    def producer_of(self, arc: str) -> str:
        return self.arcs[arc].producer

    def consumer_of(self, arc: str) -> str:
        return self.arcs[arc].consumer

    def is_deterministic(self) -> bool:
        return all(a.op.deterministic for a in self.actors.values())

    def topological_order(self) -> list[str]:
        """Kahn order over actor dependencies; raises ValueError on a cycle."""
        indeg = {a: 0 for a in self.actors}
        succ: dict[str, list[str]] = {a: [] for a in self.actors}
        for arc in self.arcs.values():
            if arc.producer in self.actors and arc.consumer in self.actors:
                succ[arc.producer].append(arc.consumer)
                indeg[arc.consumer] += 1
        ready = [a for a in self.actors if indeg[a] == 0]
        order: list[str] = []
        while ready:
            a = ready.pop(0)
            order.append(a)
            for b in succ[a]:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
        if len(order) != len(self.actors):
            raise ValueError("graph has a cycle")
        return order

    def subgraph(self, actor_ids: Iterable[str]) -> "DataflowGraph":
        """Induced fragment; arcs crossing the boundary become fragment env arcs."""
        keep = set(actor_ids)
        specs = [s for s in self.actors.values() if s.id in keep]
        inside_in = {a for s in specs for a in s.inputs}
        inside_out = {a for s in specs for a in s.outputs}
        env_in = tuple(a for a in self.arcs if a in inside_in and a not in inside_out)
        env_out = tuple(a for a in self.arcs if a in inside_out and a not in inside_in)
        return DataflowGraph.from_actors(specs, env_in, env_out)


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.severity.upper()} {self.code} [{self.subject}]: {self.message}"


def report_errors(report: Iterable[Violation]) -> list[Violation]:
    return [v for v in report if v.severity == "error"]


def validate_graph(graph: DataflowGraph) -> list[Violation]:
    """List every structural problem with ``graph``; an empty list means valid.

    Unreachable actors are reported with severity ``warning``.
    """
    out: list[Violation] = []
    if not graph.actors:
        out.append(Violation("NoActors", "graph", "graph has no actors"))

    producers: dict[str, list[str]] = {}
    consumers: dict[str, list[str]] = {}
    for a in graph.env_inputs:
        producers.setdefault(a, []).append(ENV)
    for a in graph.env_outputs:
        consumers.setdefault(a, []).append(ENV)

    for spec in graph.actors.values():
        try:
            n_in, n_out = spec.op.arity
        except UnknownOperator as exc:
            out.append(Violation("UnknownOperator", spec.id, f"unresolved operator {exc}"))
            n_in = n_out = None
        if n_in is not None and len(spec.inputs) != n_in:
            out.append(Violation("ArityMismatch", spec.id,
                                 f"{spec.op.label} takes {n_in} inputs, got {len(spec.inputs)}"))
        if n_out is not None and len(spec.outputs) != n_out:
            out.append(Violation("ArityMismatch", spec.id,
                                 f"{spec.op.label} has {n_out} outputs, got {len(spec.outputs)}"))
        for arc in spec.inputs:
            consumers.setdefault(arc, []).append(spec.id)
            if arc not in graph.arcs:
                out.append(Violation("MissingArc", spec.id, f"input arc {arc} is not declared"))
        for arc in spec.outputs:
            producers.setdefault(arc, []).append(spec.id)
            if arc not in graph.arcs:
                out.append(Violation("MissingArc", spec.id, f"output arc {arc} is not declared"))

    for arc_id, ps in producers.items():
        if len(ps) > 1:
            out.append(Violation("DuplicateProducer", arc_id, f"produced by {', '.join(ps)}"))
    for arc_id, cs in consumers.items():
        if len(cs) > 1:
            out.append(Violation("DuplicateConsumer", arc_id, f"consumed by {', '.join(cs)}"))

    for arc in graph.arcs.values():
        for role, end, listed in (("producer", arc.producer, producers), ("consumer", arc.consumer, consumers)):
            if end != ENV and end not in graph.actors:
                out.append(Violation("DanglingArc", arc.id, f"{role} {end!r} matches no actor"))
            elif arc.id not in listed:
                out.append(Violation("DanglingArc", arc.id, f"no {role} is wired to this arc"))
            elif end not in listed[arc.id]:
                out.append(Violation("DanglingArc", arc.id, f"declared {role} {end!r} is not wired to it"))

    reached: set[str] = set()
    frontier = [a for a in graph.env_inputs]
    seen_arcs = set(frontier)
    while frontier:
        arc_id = frontier.pop()
        for spec in graph.actors.values():
            if arc_id in spec.inputs and spec.id not in reached:
                reached.add(spec.id)
                for o in spec.outputs:
                    if o not in seen_arcs:
                        seen_arcs.add(o)
                        frontier.append(o)
    for spec in graph.actors.values():
        if spec.id not in reached:
            out.append(Violation("UnreachableActor", spec.id,
                                 "not reachable from any environment input", "warning"))
    return out


# ---------------------------------------------------------------------------
# runtime

@dataclass
class FireResult:
    actor: str
    consumed: dict[str, Token]
    produced: dict[str, Token]
    error: OperatorError | None = None
    absorbed: bool = False


class GraphState:
    """Arc slots and per-arc sequence counters for one graph run."""

    def __init__(self, graph: DataflowGraph, ctx: OpContext | None = None):
        self.graph = graph
        self.slots: dict[str, Token | None] = {a: None for a in graph.arcs}
        self.seq: dict[str, int] = {a: 0 for a in graph.arcs}
        self.ctx = ctx if ctx is not None else OpContext()

    def copy(self) -> "GraphState":
        new = GraphState.__new__(GraphState)
        new.graph = self.graph
        new.slots = dict(self.slots)
        new.seq = dict(self.seq)
        new.ctx = self.ctx
        return new

    def put(self, arc: str, value: float) -> Token:
        if self.slots[arc] is not None:
            raise ValueError(f"arc {arc} already holds a token")
        tok = Token(float(value), self.seq[arc])
        self.seq[arc] += 1
        self.slots[arc] = tok
        return tok

    def take(self, arc: str) -> Token | None:
        tok = self.slots[arc]
        self.slots[arc] = None
        return tok

    def token_count(self) -> int:
        return sum(t is not None for t in self.slots.values())

    def key(self) -> tuple:
        return tuple((a, None if t is None else t.value) for a, t in self.slots.items())


def _spec(state: GraphState, actor: str) -> ActorSpec:
    try:
        return state.graph.actors[actor]
    except KeyError:
        raise UnknownActor(actor) from None


def enabled(state: GraphState, actor: str) -> bool:
    spec = _spec(state, actor)
    if any(state.slots[o] is not None for o in spec.outputs):
        return False
    if spec.op.kind == "merge":
        return any(state.slots[i] is not None for i in spec.inputs)
    return all(state.slots[i] is not None for i in spec.inputs)


def enabled_actors(state: GraphState) -> list[str]:
    return [a for a in state.graph.actors if enabled(state, a)]


def fire(state: GraphState, actor: str) -> FireResult:
    """Fire ``actor`` in place.

    An operator failure still consumes the inputs; the result then carries
    ``error`` and no output token is placed.
    """
    if not enabled(state, actor):
        raise NotEnabled(actor)
    spec = state.graph.actors[actor]
    if spec.op.kind == "merge":
        arc = next(i for i in spec.inputs if state.slots[i] is not None)
        consumed = {arc: state.take(arc)}
    else:
        consumed = {i: state.take(i) for i in spec.inputs}
    values = [t.value for t in consumed.values()]
    state.ctx.actor_id = actor
    try:
        results = spec.op.evaluate(values, state.ctx)
    except OperatorError as err:
        return FireResult(actor, consumed, {}, error=err)
    if results is None:
        return FireResult(actor, consumed, {}, absorbed=True)
    produced = {arc: state.put(arc, v) for arc, v in zip(spec.outputs, results) if v is not None}
    return FireResult(actor, consumed, produced)


@dataclass
class QuiescenceResult:
    outputs: dict[str, Token]
    steps: int
    trace: list[FireResult]
    blocked: list[str]
    state: GraphState

    @property
    def output_values(self) -> dict[str, float]:
        return {a: t.value for a, t in self.outputs.items()}

    @property
    def errors(self) -> list[FireResult]:
        return [f for f in self.trace if f.error is not None]


def load_inputs(state: GraphState, inputs: Mapping[str, float]) -> None:
    for arc, value in inputs.items():
        if arc not in state.graph.env_inputs:
            raise KeyError(f"{arc} is not an environment input")
        state.put(arc, value)


def run_state(state: GraphState, rng: random.Random, max_steps: int = DEFAULT_MAX_STEPS) -> tuple[int, list[FireResult]]:
    """Fire enabled actors, chosen by ``rng``, until none is enabled."""
    trace: list[FireResult] = []
    steps = 0
    while True:
        ready = enabled_actors(state)
        if not ready:
            return steps, trace
        if steps >= max_steps:
            raise StepLimitExceeded(max_steps)
        trace.append(fire(state, ready[rng.randrange(len(ready))]))
        steps += 1


def run_to_quiescence(
    graph: DataflowGraph,
    inputs: Mapping[str, float],
    seed: int | str = 0,
    *,
    max_steps: int = DEFAULT_MAX_STEPS,
    ctx: OpContext | None = None,
) -> QuiescenceResult:
    """Run ``graph`` on one token per environment input until nothing is enabled.

    ``blocked`` lists actors that never fired.
    """
    state = GraphState(graph, ctx)
    load_inputs(state, inputs)
    steps, trace = run_state(state, random.Random(seed), max_steps)
    fired = {f.actor for f in trace}
    outputs = {a: state.slots[a] for a in graph.env_outputs if state.slots[a] is not None}
    blocked = [a for a in graph.actors if a not in fired]
    return QuiescenceResult(outputs, steps, trace, blocked, state)
