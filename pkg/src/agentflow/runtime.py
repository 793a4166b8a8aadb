"""Agents, handshake links and the synchronous system step.

Each link carries one data register plus three flags: ``strobe`` (producer
to consumer, data valid), ``request`` (consumer to producer, free and
ready) and ``ack`` (pulsed when an environment-facing input was consumed).

One system step:

1. the environment injects queued values on env-facing links whose request
   is set and whose register is empty;
2. every link with strobe and request set moves its token into the
   consumer's port buffer (strobe and request drop);
3. every agent steps against the post-transfer snapshot of link occupancy;
   results are committed in agent-id order, so the order agents are
   evaluated in is unobservable;
4. the environment collects strobed env-facing outputs.

Token accounting is kept per link: ``written`` (tokens placed on the link),
``consumed`` (taken by the consumer's firing or collected by the
environment), in-flight (on the register or sitting in the consumer's port
buffer) and ``dropped`` (discarded by a forced reconfiguration).
"""

from __future__ import annotations

import copy
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Container, Iterable, Mapping, Sequence

from .bdi import DONE as I_DONE
from .bdi import INACTIVE, RUNNING, DesireSet, Intention, select_intention, update_beliefs
from .config import AgentConfig, validate_config
from .dfg import ENV, GraphState, OpContext, Token, run_state, run_to_quiescence
from .errors import EmptyMemory, InvalidSystem, InvariantViolation, MissingBelief, OperatorError
from .hwagent import (
    PLAN1,
    PLAN2,
    PLAN3,
    PLAN4,
    AgentMemory,
    EmitRecord,
    Nondeterministic,
    PerceptRecord,
    hw_agent_step,
    record_completion,
)
from .schema import config_to_dict
from .trace import BELIEF, DONE, ERROR, FIRE, INJECT, STALL, TRANSFER, TraceEvent, dumps

IDLE, COMPUTING = "idle", "computing"
FRAGMENT_STEP_LIMIT = 10_000


@dataclass
class HandshakeLink:
    id: str
    producer: str
    consumer: str
    data: Token | None = None
    strobe: bool = False
    request: bool = True
    ack: bool = False
    seq: int = 0
    written: int = 0
    transferred: int = 0
    consumed: int = 0
    dropped: int = 0

    @property
    def free(self) -> bool:
        return self.data is None

    @property
    def env_input(self) -> bool:
        return self.producer == ENV

    @property
    def env_output(self) -> bool:
        return self.consumer == ENV

    def write(self, value: float) -> Token:
        if self.strobe or self.data is not None:
            raise InvariantViolation(f"link {self.id}: write while strobe is set")
        tok = Token(float(value), self.seq)
        self.seq += 1
        self.written += 1
        self.data = tok
        self.strobe = True
        return tok

    def to_dict(self) -> dict:
        return {
            "id": self.id, "producer": self.producer, "consumer": self.consumer,
            "data": None if self.data is None else [self.data.value, self.data.seq],
            "strobe": self.strobe, "request": self.request, "ack": self.ack, "seq": self.seq,
            "written": self.written, "transferred": self.transferred,
            "consumed": self.consumed, "dropped": self.dropped,
        }

    def snapshot(self) -> str:
        return dumps(self.to_dict())


def transfer(link: HandshakeLink) -> Token | None:
    """Hand the link's token to its consumer if strobe and request are both set."""
    if not (link.strobe and link.request):
        return None
    tok = link.data
    link.data = None
    link.strobe = False
    link.request = False
    link.transferred += 1
    return tok


# ---------------------------------------------------------------------------
# agents

@dataclass
class AgentState:
    beliefs: dict[str, float]
    desires: DesireSet
    intentions: list[Intention]
    memory: AgentMemory
    buffers: dict[str, Token | None]
    idle_steps: int = 0
    phase: str = IDLE
    countdown: int = 0
    done: bool = False
    scratch: dict = field(default_factory=dict)
    held: dict[str, float] = field(default_factory=dict)
    firings: int = 0
    received: bool = False

    def to_dict(self) -> dict:
        return {
            "beliefs": dict(sorted(self.beliefs.items())),
            "desires": sorted(self.desires.goals),
            "intentions": [[i.plan_id, i.name, i.status] for i in self.intentions],
            "memory": self.memory.to_dict(),
            "buffers": {k: None if t is None else [t.value, t.seq] for k, t in self.buffers.items()},
            "idle_steps": self.idle_steps,
            "phase": self.phase,
            "countdown": self.countdown,
            "done": self.done,
            "scratch": self.scratch,
            "held": dict(sorted(self.held.items())),
            "firings": self.firings,
        }


class Agent:
    def __init__(self, config: AgentConfig, state: AgentState):
        self.config = config
        self.state = state

    @property
    def id(self) -> str:
        return self.config.id

    @property
    def requests(self) -> dict[str, bool]:
        """Request flag this agent drives on each input port."""
        computing = self.state.phase == COMPUTING
        return {l: (t is None and not computing) for l, t in self.state.buffers.items()}

    def buffered(self) -> list[str]:
        return [l for l, t in self.state.buffers.items() if t is not None]

    def can_progress(self, step: int = 0, seed: int | str = 0, free: Container[str] | None = None) -> bool:
        """Whether stepping this agent could move a token; ``free`` limits usable outputs."""
        st = self.state
        if self.config.nondeterministic:
            return st.phase == COMPUTING or bool(self.buffered()) or not st.memory.timed_out
        if st.phase == COMPUTING and st.countdown > 0:
            return True
        if not self.buffered() and not st.held:
            return False
        return _run_fragment(self, step, seed, trial=True, free=free) is not None

    def snapshot(self) -> str:
        return dumps({"config": config_to_dict(self.config), "state": self.state.to_dict()})

    def __repr__(self) -> str:
        return f"Agent({self.id!r}, {self.config.grain}, actors={list(self.config.behavior.actors)})"


def default_intentions(config: AgentConfig) -> list[Intention]:
    return [Intention(1, "run-behavior", tuple(config.behavior.actors))]


def configure_agent(
    config: AgentConfig,
    beliefs: Mapping[str, float] | None = None,
    *,
    desires: DesireSet | None = None,
    intentions: list[Intention] | None = None,
    memory_bound: int = 64,
) -> Agent:
    """Load ``config`` into a fresh agent: idle, all input requests asserted."""
    validate_config(config)
    beliefs = {k: float(v) for k, v in (beliefs or {}).items()}
    missing = config.required_beliefs() - beliefs.keys()
    if missing:
        raise MissingBelief(f"agent {config.id}: missing beliefs {sorted(missing)}")
    desires = desires if desires is not None else DesireSet.of("process-inputs")
    desires.check()
    if isinstance(config.policy, Nondeterministic):
        memory_bound = config.policy.memory_bound
    state = AgentState(
        beliefs=beliefs,
        desires=desires,
        intentions=intentions if intentions is not None else default_intentions(config),
        memory=AgentMemory(memory_bound),
        buffers={l: None for l in config.inputs},
    )
    return Agent(config, state)


@dataclass
class AgentStepResult:
    agent: str
    sends: dict[str, float] = field(default_factory=dict)
    consumed: list[str] = field(default_factory=list)
    done: bool = False
    feedback: dict[str, float] = field(default_factory=dict)
    events: list[TraceEvent] = field(default_factory=list)


@dataclass
class _FragmentRun:
    consumed: list[str]
    sends: dict[str, float]
    fired: list[str]
    errors: list
    ctx: OpContext
    held: dict[str, float]


def _fragment_rng(agent: Agent, step: int, seed: int | str) -> random.Random:
    return random.Random(f"{seed}:{agent.id}:{step}")


def _run_fragment(
    agent: Agent,
    step: int,
    seed: int | str,
    *,
    trial: bool,
    free: Container[str] | None = None,
) -> _FragmentRun | None:
    """Run the behavior on the buffered and held tokens; None when nothing fires.

    Tokens left on internal arcs are held by the agent for its next run, so
    a coarse agent behaves like the sub-network it packs.  Output ports not
    in ``free`` count as occupied arcs.  Ports whose token is still on its
    fragment arc afterwards stay buffered.
    """
    cfg, st = agent.config, agent.state
    if not st.held and all(t is None for t in st.buffers.values()):
        return None
    frag = cfg.behavior
    scratch = copy.deepcopy(st.scratch) if trial else st.scratch
    ctx = OpContext(beliefs=dict(st.beliefs), scratch=scratch)
    gs = GraphState(frag, ctx)
    for arc, value in st.held.items():
        gs.put(arc, value)
    present = []
    for link, arc in zip(cfg.inputs, frag.env_inputs):
        tok = st.buffers[link]
        if tok is not None:
            gs.put(arc, tok.value)
            present.append((link, arc))
    occupied = set()
    if free is not None:
        for link, arc in zip(cfg.outputs, frag.env_outputs):
            if link not in free:
                gs.put(arc, 0.0)
                occupied.add(arc)
    _, fires = run_state(gs, _fragment_rng(agent, step, seed), FRAGMENT_STEP_LIMIT)
    if not fires:
        return None
    boundary = set(frag.env_inputs) | set(frag.env_outputs)
    held = {a: t.value for a, t in gs.slots.items() if a not in boundary and t is not None}
    consumed = [link for link, arc in present if gs.slots[arc] is None]
    sends = {cfg.outputs[j]: gs.slots[arc].value
             for j, arc in enumerate(frag.env_outputs) if gs.slots[arc] is not None and arc not in occupied}
    return _FragmentRun(consumed, sends, [f.actor for f in fires], [f for f in fires if f.error], ctx, held)


def _start_intention(st: AgentState) -> Intention | None:
    pid = select_intention(st.beliefs, st.desires, st.intentions)
    if pid is None:
        return None
    for i in st.intentions:
        if i.plan_id == pid:
            i.status = RUNNING
            return i
    return None


def _finish_intention(st: AgentState) -> None:
    for i in st.intentions:
        if i.status == RUNNING:
            i.status = I_DONE


def agent_step(agent: Agent, free_links: Container[str], step: int, seed: int | str = 0) -> AgentStepResult:
    """Advance one agent by one step.

    ``free_links`` is the set of links whose register is empty in the step
    snapshot; the agent never looks at anything else outside itself.
    Link writes are returned, not performed.
    """
    if agent.config.nondeterministic:
        return _nondet_step(agent, free_links, step)
    cfg, st = agent.config, agent.state
    res = AgentStepResult(agent.id)
    st.done = False

    if st.phase == COMPUTING and st.countdown > 0:
        st.countdown -= 1
        if st.countdown > 0:
            return res
    if st.phase == IDLE:
        if _run_fragment(agent, step, seed, trial=True) is None:
            if not st.received:
                st.idle_steps += 1
            return res
        for i in st.intentions:
            if i.status == I_DONE:
                i.status = INACTIVE
        _start_intention(st)
        st.phase = COMPUTING
        st.countdown = cfg.compute_latency - 1
        if st.countdown > 0:
            return res

    run = _run_fragment(agent, step, seed, trial=False, free=free_links)
    if run is None:
        if _run_fragment(agent, step, seed, trial=True) is not None:
            blocked = [o for o in cfg.outputs if o not in free_links]
            res.events.append(TraceEvent(step, STALL, agent.id, {"blocked": blocked}))
            return res
        st.phase = IDLE  # inputs were withdrawn by a forced reconfiguration
        _finish_intention(st)
        return res
    consumed_values = {l: st.buffers[l].value for l in run.consumed}
    for link in run.consumed:
        st.buffers[link] = None
    st.beliefs = run.ctx.beliefs
    st.held = run.held
    st.phase = IDLE
    st.countdown = 0
    st.done = True
    st.firings += 1
    st.idle_steps = 0
    _finish_intention(st)
    st.memory.remember(EmitRecord(step, consumed_values, dict(run.sends)))
    if run.sends:
        st.memory.summary["last_output"] = next(iter(run.sends.values()))

    res.sends = run.sends
    res.consumed = run.consumed
    res.done = True
    res.feedback = dict(run.ctx.feedback)
    data = {"ops": run.fired, "consumed": consumed_values, "sends": run.sends}
    if run.ctx.notes:
        data["notes"] = run.ctx.notes
    res.events.append(TraceEvent(step, FIRE, agent.id, data))
    for f in run.errors:
        res.events.append(TraceEvent(step, ERROR, agent.id, {
            "reason": "BehaviorError", "actor": f.actor, "operator": f.error.kind, "detail": f.error.detail}))
    res.events.append(TraceEvent(step, DONE, agent.id, {}))
    return res


def _op3(agent: Agent):
    frag = agent.config.behavior
    arc_in, arc_out = frag.env_inputs[0], frag.env_outputs[0]

    def op3(value: float) -> float:
        result = run_to_quiescence(frag, {arc_in: value}, max_steps=FRAGMENT_STEP_LIMIT)
        if result.errors:
            raise result.errors[0].error
        if arc_out not in result.outputs:
            raise OperatorError("op3", "produced no output")
        return result.outputs[arc_out].value

    return op3


def _nondet_step(agent: Agent, free_links: Container[str], step: int) -> AgentStepResult:
    cfg, st = agent.config, agent.state
    policy: Nondeterministic = cfg.policy
    percept_link, returns = cfg.inputs[0], cfg.inputs[1:]
    activations, action_link = cfg.outputs[:2], cfg.outputs[2]
    res = AgentStepResult(agent.id)
    st.done = False
    op3 = _op3(agent)

    def complete(event_data: dict) -> None:
        st.done = True
        st.firings += 1
        res.done = True
        for i in st.intentions:
            if i.status == I_DONE:
                i.status = INACTIVE
        _start_intention(st)
        _finish_intention(st)
        res.events.append(TraceEvent(step, FIRE, agent.id, event_data))
        res.events.append(TraceEvent(step, DONE, agent.id, {}))

    for plan, link in zip((PLAN1, PLAN2), returns):
        tok = st.buffers[link]
        if tok is None:
            continue
        if action_link not in free_links:
            res.events.append(TraceEvent(step, STALL, agent.id, {"blocked": [action_link]}))
            return res
        st.buffers[link] = None
        res.consumed = [link]
        try:
            value = op3(tok.value)
        except OperatorError as err:
            res.events.append(TraceEvent(step, ERROR, agent.id, {
                "reason": "BehaviorError", "operator": err.kind, "detail": err.detail}))
            st.idle_steps = 0
            return res
        action = record_completion(st.memory, plan, tok.value, value, step)
        if st.buffers[percept_link] is None:
            st.memory.idle_steps += 1
        res.sends = {action_link: value}
        st.idle_steps = 0
        complete({"plan": action.plan, "origin": action.origin, "consumed": {link: tok.value},
                  "sends": res.sends})
        return res

    tok = st.buffers[percept_link]
    if tok is not None:
        blocked = [o for o in cfg.outputs if o not in free_links]
        if blocked:
            res.events.append(TraceEvent(step, STALL, agent.id, {"blocked": blocked}))
            return res
        st.buffers[percept_link] = None
        res.consumed = [percept_link]
        percept = PerceptRecord(step, "environment", {"value": tok.value})
        try:
            actions, st.memory = hw_agent_step(percept, st.memory, policy, op3, step)
        except OperatorError as err:
            res.events.append(TraceEvent(step, ERROR, agent.id, {
                "reason": "BehaviorError", "operator": err.kind, "detail": err.detail}))
            st.memory.idle_steps = st.idle_steps = 0
            return res
        for a in actions:
            if a.plan == PLAN1:
                res.sends[activations[0]] = tok.value
            elif a.plan == PLAN2:
                res.sends[activations[1]] = tok.value
            else:
                res.sends[action_link] = a.value
        st.idle_steps = 0
        complete({"plans": [a.plan for a in actions], "origin": "decision",
                  "consumed": {percept_link: tok.value}, "sends": res.sends})
        return res

    mem = st.memory
    if mem.idle_steps + 1 >= policy.timeout and not mem.timed_out and action_link not in free_links:
        mem.idle_steps += 1
        st.idle_steps = 0 if st.received else st.idle_steps + 1
        res.events.append(TraceEvent(step, STALL, agent.id, {"blocked": [action_link]}))
        return res
    try:
        actions, st.memory = hw_agent_step(None, mem, policy, op3, step)
    except EmptyMemory:
        mem.idle_steps += 1
        mem.timed_out = True
        st.idle_steps = 0 if st.received else st.idle_steps + 1
        res.events.append(TraceEvent(step, ERROR, agent.id, {"reason": "EmptyMemory", "noop": True}))
        return res
    except OperatorError as err:
        mem.idle_steps += 1
        mem.timed_out = True
        st.idle_steps = 0 if st.received else st.idle_steps + 1
        res.events.append(TraceEvent(step, ERROR, agent.id, {
            "reason": "BehaviorError", "operator": err.kind, "detail": err.detail}))
        return res
    st.idle_steps = 0 if st.received else st.idle_steps + 1
    if actions:
        (a,) = actions
        res.sends = {action_link: a.value}
        complete({"plan": a.plan, "origin": a.origin, "sends": res.sends})
    return res


# ---------------------------------------------------------------------------
# the system

@dataclass
class StepOutcome:
    step: int
    outputs: dict[str, float]
    events: list[TraceEvent]


class MultiAgentSystem:
    """Agents wired by handshake links, stepped synchronously.

    ``input_bindings`` maps an environment input name to the env-facing
    links it drives (one name may fan out to several links);
    ``output_names`` names env-facing output links.
    """

    def __init__(
        self,
        agents: Iterable[Agent],
        links: Iterable[HandshakeLink],
        *,
        input_bindings: Mapping[str, Sequence[str]] | None = None,
        output_names: Mapping[str, str] | None = None,
        seed: int | str = 0,
        name: str = "",
        strict: bool = True,
    ):
        self.agents: dict[str, Agent] = {a.id: a for a in sorted(agents, key=lambda a: a.id)}
        self.links: dict[str, HandshakeLink] = {l.id: l for l in sorted(links, key=lambda l: l.id)}
        env_in = [l.id for l in self.links.values() if l.env_input]
        env_out = [l.id for l in self.links.values() if l.env_output]
        self.input_bindings = {k: tuple(v) for k, v in (input_bindings or {l: (l,) for l in env_in}).items()}
        self.output_names = dict(output_names or {l: l for l in env_out})
        self.seed = seed
        self.name = name
        self.strict = strict
        self.step_count = 0
        self.events: list[TraceEvent] = []
        self.queues: dict[str, deque] = {l: deque() for l in env_in}
        self.outputs: list[tuple[int, str, float]] = []
        problems = validate_system(self)
        if problems:
            raise InvalidSystem("; ".join(problems))
        self.refresh_requests()

    # -- structure -------------------------------------------------------
    def incoming(self, agent_id: str) -> list[HandshakeLink]:
        return [self.links[l] for l in self.agents[agent_id].config.inputs]

    def outgoing(self, agent_id: str) -> list[HandshakeLink]:
        return [self.links[l] for l in self.agents[agent_id].config.outputs]

    def incident_links(self, agent_id: str) -> set[str]:
        cfg = self.agents[agent_id].config
        return set(cfg.inputs) | set(cfg.outputs)

    def refresh_requests(self) -> None:
        for agent in self.agents.values():
            for link_id, req in agent.requests.items():
                self.links[link_id].request = req

    # -- environment -----------------------------------------------------
    def offer(self, inputs: Mapping[str, float]) -> None:
        """Queue environment values; a name fans out to every link bound to it."""
        for name, value in inputs.items():
            if value is None:
                continue
            if name in self.input_bindings:
                targets = self.input_bindings[name]
            elif name in self.queues:
                targets = (name,)
            else:
                raise KeyError(f"unknown environment input {name!r}")
            for link in targets:
                self.queues[link].append(float(value))

    def pending_inputs(self) -> int:
        return sum(len(q) for q in self.queues.values())

    # -- stepping --------------------------------------------------------
    def step(
        self,
        inputs: Mapping[str, float] | None = None,
        *,
        env_ready: Container[str] | None = None,
        order: Sequence[str] | None = None,
    ) -> StepOutcome:
        return system_step(self, inputs, env_ready=env_ready, order=order)

    def is_quiescent(self) -> bool:
        """True when no further step can move a token.

        Tokens stranded behind a full buffer (for example after an operator
        error starved an actor's sibling input) do not count as activity.
        """
        for link_id, queue in self.queues.items():
            link = self.links[link_id]
            if queue and link.data is None and link.request:
                return False
        for link in self.links.values():
            if link.data is not None and (link.env_output or link.request):
                return False
        free = {l.id for l in self.links.values() if l.data is None}
        return not any(a.can_progress(self.step_count + 1, self.seed, free) for a in self.agents.values())

    # -- accounting ------------------------------------------------------
    def in_flight(self, link: HandshakeLink) -> int:
        n = int(link.data is not None)
        if not link.env_output:
            n += int(self.agents[link.consumer].state.buffers.get(link.id) is not None)
        return n

    def counters(self) -> dict[str, int]:
        c = {"injected": 0, "delivered": 0, "in_flight": 0, "reconfig_dropped": 0}
        for l in self.links.values():
            c["injected"] += l.written
            c["delivered"] += l.consumed
            c["in_flight"] += self.in_flight(l)
            c["reconfig_dropped"] += l.dropped
        return c

    def check_invariants(self) -> None:
        for l in self.links.values():
            if l.written - l.transferred not in (0, 1):
                raise InvariantViolation(f"link {l.id}: written-transferred = {l.written - l.transferred}")
            if (l.data is not None) != l.strobe:
                raise InvariantViolation(f"link {l.id}: strobe does not match data presence")
            if l.written != l.consumed + self.in_flight(l) + l.dropped:
                raise InvariantViolation(f"link {l.id}: token conservation broken")

    def snapshot(self) -> dict[str, str]:
        snap = {f"agent:{a}": ag.snapshot() for a, ag in self.agents.items()}
        snap.update({f"link:{l}": lk.snapshot() for l, lk in self.links.items()})
        return snap


def validate_system(system: MultiAgentSystem) -> list[str]:
    problems = []
    bound: dict[str, str] = {}
    for agent in system.agents.values():
        for role, ids in (("input", agent.config.inputs), ("output", agent.config.outputs)):
            for l in ids:
                if l not in system.links:
                    problems.append(f"agent {agent.id}: {role} port bound to unknown link {l}")
                    continue
                link = system.links[l]
                end = link.consumer if role == "input" else link.producer
                if end != agent.id:
                    problems.append(f"link {l}: {role} end is {end}, but agent {agent.id} binds it")
                key = f"{role}:{l}"
                if key in bound:
                    problems.append(f"link {l} bound twice as {role}")
                bound[key] = agent.id
    for link in system.links.values():
        for role, end in (("producer", link.producer), ("consumer", link.consumer)):
            if end != ENV and end not in system.agents:
                problems.append(f"link {link.id}: {role} {end!r} is not an agent")
        if link.producer != ENV and f"output:{link.id}" not in bound:
            problems.append(f"link {link.id}: no output port drives it")
        if link.consumer != ENV and f"input:{link.id}" not in bound:
            problems.append(f"link {link.id}: no input port reads it")
    for name, targets in system.input_bindings.items():
        for l in targets:
            if l not in system.links or not system.links[l].env_input:
                problems.append(f"input {name!r} bound to non-environment link {l}")
    return problems


def system_step(
    system: MultiAgentSystem,
    inputs: Mapping[str, float] | None = None,
    *,
    env_ready: Container[str] | None = None,
    order: Sequence[str] | None = None,
) -> StepOutcome:
    """Run one synchronous step; see the module docstring for the phases.

    ``env_ready`` restricts which env-facing outputs the environment accepts
    this step (default: all).  ``order`` permutes agent evaluation, which
    must not change anything observable.
    """
    step = system.step_count + 1
    events: list[TraceEvent] = []
    for agent in system.agents.values():
        agent.state.received = False
    for link in system.links.values():
        link.ack = False

    # 1. environment injection
    if inputs:
        system.offer(inputs)
    for link_id, queue in system.queues.items():
        link = system.links[link_id]
        if queue and link.data is None and link.request:
            tok = link.write(queue.popleft())
            events.append(TraceEvent(step, INJECT, link.consumer, {"link": link_id, "value": tok.value, "seq": tok.seq}))

    # 2. transfers into consumer buffers
    for link in system.links.values():
        if link.env_output:
            continue
        tok = transfer(link)
        if tok is None:
            continue
        consumer = system.agents[link.consumer]
        consumer.state.buffers[link.id] = tok
        consumer.state.received = True
        consumer.state.idle_steps = 0
        events.append(TraceEvent(step, TRANSFER, link.consumer,
                                 {"link": link.id, "value": tok.value, "seq": tok.seq, "from": link.producer}))

    # 3. agents against the snapshot
    free = frozenset(l.id for l in system.links.values() if l.data is None)
    ids = list(order) if order is not None else list(system.agents)
    if sorted(ids) != sorted(system.agents):
        raise ValueError("order must be a permutation of the agent ids")
    results = {aid: agent_step(system.agents[aid], free, step, system.seed) for aid in ids}
    feedback: list[tuple[str, dict[str, float]]] = []
    for aid in sorted(results):
        res = results[aid]
        for link_id in res.consumed:
            link = system.links[link_id]
            link.consumed += 1
            if link.env_input:
                link.ack = True
        for link_id, value in res.sends.items():
            system.links[link_id].write(value)
        if res.feedback:
            feedback.append((aid, res.feedback))
        events.extend(res.events)
    for sender, message in feedback:
        for agent in system.agents.values():
            known = {k: v for k, v in message.items() if k in agent.state.beliefs}
            if known:
                agent.state.beliefs = update_beliefs(agent.state.beliefs, known)
                events.append(TraceEvent(step, BELIEF, agent.id, {"from": sender, "updates": known}))
    system.refresh_requests()

    # 4. environment collection
    outputs: dict[str, float] = {}
    for link in system.links.values():
        if not link.env_output:
            continue
        link.request = env_ready is None or link.id in env_ready
        tok = transfer(link)
        if tok is None:
            continue
        link.consumed += 1
        name = system.output_names.get(link.id, link.id)
        outputs[name] = tok.value
        system.outputs.append((step, name, tok.value))
        events.append(TraceEvent(step, TRANSFER, ENV,
                                 {"link": link.id, "value": tok.value, "seq": tok.seq, "from": link.producer,
                                  "output": name}))

    system.step_count = step
    system.events.extend(events)
    if system.strict:
        system.check_invariants()
    return StepOutcome(step, outputs, events)
