from .base import Agent, AgentSpec, EvidenceRecord
from .prompts import render_role_prompt
from .remote import RemoteAgent, RemoteEndpoint, execute_remote
from .simulated import ReliabilityProfile, SimulatedAgent, execute_simulated

__all__ = [
    "Agent",
    "AgentSpec",
    "EvidenceRecord",
    "ReliabilityProfile",
    "RemoteAgent",
    "RemoteEndpoint",
    "SimulatedAgent",
    "execute_remote",
    "execute_simulated",
    "render_role_prompt",
]
