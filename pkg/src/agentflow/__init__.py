"""Simulated hardware agents running dataflow behaviors.

A dataflow graph (``dfg``) is packed into agents (``packing``) that talk
over handshake links (``runtime``); behaviors can be swapped at runtime
(``reconfig``).  ``scenarios`` and ``fusion`` build the model systems.
"""

from __future__ import annotations

from .dfg import (
    ActorSpec,
    Arc,
    DataflowGraph,
    Operator,
    Token,
    fire,
    register_operator,
    run_to_quiescence,
    validate_graph,
)
from .errors import AgentflowError
from .reconfig import ConfigurationImage, apply_configuration, capture_image
from .runtime import HandshakeLink, MultiAgentSystem, agent_step, system_step
from .trace import TraceEvent, format_trace, read_trace

__version__ = "0.1.0"

__all__ = [
    "ActorSpec", "Arc", "DataflowGraph", "Operator", "Token", "fire", "register_operator",
    "run_to_quiescence", "validate_graph", "AgentflowError", "ConfigurationImage",
    "apply_configuration", "capture_image", "HandshakeLink", "MultiAgentSystem", "agent_step",
    "system_step", "TraceEvent", "format_trace", "read_trace",
]
