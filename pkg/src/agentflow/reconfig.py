"""Partial reconfiguration: capturing and swapping agent behavior images.

A swap only ever happens between system steps.  Beliefs and memory survive
it; the behavior, its private scratch state and its intentions do not.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from .config import AgentConfig, validate_config
from .errors import (
    AgentBusy,
    AgentflowError,
    DescriptionError,
    DigestMismatch,
    DuplicateImage,
    InvalidBehavior,
    MissingBelief,
    PortMismatch,
    UnknownAgent,
)
from .runtime import COMPUTING, IDLE, MultiAgentSystem, default_intentions
from .bdi import RUNNING
from .schema import FORMAT_VERSION, config_from_dict, config_to_dict
from .trace import RECONFIG, TraceEvent, dumps

QUIESCENT, FORCED = "quiescent", "forced"


def content_digest(content: Mapping) -> str:
    return "sha256:" + hashlib.sha256(dumps(content).encode()).hexdigest()


@dataclass(frozen=True)
class ConfigurationImage:
    content: dict = field(hash=False)
    digest: str = ""

    def to_config(self) -> AgentConfig:
        return config_from_dict(self.content, "image")

    def to_dict(self) -> dict:
        return {"version": FORMAT_VERSION, **self.content, "digest": self.digest}

    @classmethod
    def from_dict(cls, obj: dict, where: str = "image") -> "ConfigurationImage":
        if not isinstance(obj, dict):
            raise DescriptionError(where, "expected an object")
        obj = dict(obj)
        version = obj.pop("version", None)
        if version != FORMAT_VERSION:
            raise DescriptionError(f"{where}.version", f"expected {FORMAT_VERSION}, got {version!r}")
        digest = obj.pop("digest", None)
        if digest is None:
            raise DescriptionError(f"{where}.digest", "missing")
        config_from_dict(obj, where)  # strict field check
        if content_digest(obj) != digest:
            raise DigestMismatch(f"{where}: digest does not match content")
        return cls(obj, digest)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def capture_image(config: AgentConfig) -> ConfigurationImage:
    try:
        validate_config(config)
    except InvalidBehavior:
        raise
    except AgentflowError as exc:
        raise InvalidBehavior(str(exc)) from exc
    content = config_to_dict(config)
    return ConfigurationImage(content, content_digest(content))


def load_image(path: str | Path) -> ConfigurationImage:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DescriptionError(f"{path}:{exc.lineno}", exc.msg) from None
    return ConfigurationImage.from_dict(obj, str(path))


class ConfigurationStore:
    """Named images; names are unique."""

    def __init__(self, images: Mapping[str, ConfigurationImage] | None = None):
        self._images: dict[str, ConfigurationImage] = {}
        for name, img in (images or {}).items():
            self.add(name, img)

    def add(self, name: str, image: ConfigurationImage) -> None:
        if name in self._images:
            raise DuplicateImage(name)
        self._images[name] = image

    def __getitem__(self, name: str) -> ConfigurationImage:
        return self._images[name]

    def __contains__(self, name: str) -> bool:
        return name in self._images

    def __iter__(self) -> Iterator[str]:
        return iter(self._images)

    def __len__(self) -> int:
        return len(self._images)


def busy_reason(system: MultiAgentSystem, agent_id: str) -> str | None:
    agent = system.agents[agent_id]
    if agent.buffered():
        return f"buffered inputs on {agent.buffered()}"
    if agent.state.held:
        return f"tokens held on internal arcs {sorted(agent.state.held)}"
    strobed = [l.id for l in system.outgoing(agent_id) if l.strobe]
    if strobed:
        return f"strobe asserted on {strobed}"
    if agent.state.phase == COMPUTING or any(i.status == RUNNING for i in agent.state.intentions):
        return "intention running"
    return None


def apply_configuration(
    system: MultiAgentSystem,
    agent_id: str,
    image: ConfigurationImage,
    mode: str = QUIESCENT,
    *,
    beliefs: Mapping[str, float] | None = None,
    image_name: str | None = None,
) -> TraceEvent:
    """Swap ``agent_id``'s behavior for ``image`` between steps.

    The image's ports are rebound positionally onto the agent's existing
    links.  ``beliefs`` declares entries the new behavior needs that the
    agent does not hold yet; existing beliefs are kept as they are.
    """
    if agent_id not in system.agents:
        raise UnknownAgent(agent_id)
    if mode not in (QUIESCENT, FORCED):
        raise ValueError(f"unknown mode {mode!r}")
    agent = system.agents[agent_id]
    incoming = image.to_config()
    old = agent.config
    if len(incoming.inputs) != len(old.inputs) or len(incoming.outputs) != len(old.outputs):
        raise PortMismatch(
            f"image has {len(incoming.inputs)}/{len(incoming.outputs)} ports, "
            f"agent {agent_id} is wired with {len(old.inputs)}/{len(old.outputs)}")
    new = incoming.with_ports(agent_id, old.inputs, old.outputs)
    try:
        validate_config(new)
    except AgentflowError as exc:
        raise PortMismatch(str(exc)) from exc
    merged_beliefs = dict(agent.state.beliefs)
    for k, v in (beliefs or {}).items():
        merged_beliefs.setdefault(k, float(v))
    missing = new.required_beliefs() - merged_beliefs.keys()
    if missing:
        raise MissingBelief(f"agent {agent_id}: new behavior needs beliefs {sorted(missing)}")

    dropped = 0
    if mode == QUIESCENT:
        reason = busy_reason(system, agent_id)
        if reason:
            raise AgentBusy(agent_id, reason)
    else:
        for link_id in agent.buffered():
            agent.state.buffers[link_id] = None
            system.links[link_id].dropped += 1
            dropped += 1

    st = agent.state
    agent.config = new
    st.beliefs = merged_beliefs
    st.phase = IDLE
    st.countdown = 0
    st.idle_steps = 0
    st.scratch = {}
    held_dropped, st.held = len(st.held), {}
    st.intentions = default_intentions(new)
    for link_id, req in agent.requests.items():
        system.links[link_id].request = req

    event = TraceEvent(system.step_count, RECONFIG, agent_id, {
        "mode": mode, "digest": content_digest(config_to_dict(new)),
        "image": image_name or image.digest, "dropped": dropped, "held_dropped": held_dropped,
    })
    system.events.append(event)
    if system.strict:
        system.check_invariants()
    return event


def isolation_violations(
    before: Mapping[str, str],
    after: Mapping[str, str],
    system: MultiAgentSystem,
    agent_id: str,
) -> list[str]:
    """Snapshot entries that changed but belong neither to the agent nor its links."""
    own = {f"agent:{agent_id}"} | {f"link:{l}" for l in system.incident_links(agent_id)}
    return sorted(k for k in before.keys() | after.keys()
                  if k not in own and before.get(k) != after.get(k))
