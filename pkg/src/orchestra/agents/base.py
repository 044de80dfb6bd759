from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

from ..query import QueryItem
from ..similarity import Answer


@dataclass(frozen=True)
class EvidenceRecord:
    """One specialist's contribution to the evidence pool for a query."""

    agent_id: str
    role_id: str
    answer: Answer
    trace: str = ""
    latency: float = 0.0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None or not self.answer.valid

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "role_id": self.role_id,
            "answer": self.answer.to_json(),
            "trace": self.trace,
            "latency": self.latency,
            "error": self.error,
        }


class Agent(Protocol):
    agent_id: str

    def run(self, role: str, query: QueryItem, category: str) -> EvidenceRecord: ...


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    backend: str
    display_name: str = ""
    backend_config: dict = field(default_factory=dict)
