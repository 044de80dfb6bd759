"""Synthetic specialists with a known per-(role, category) accuracy."""

from __future__ import annotations

import random
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from ..errors import ConfigError, ContractError
from ..query import QueryItem
from ..similarity import Answer, AnswerKind
from .base import EvidenceRecord


@dataclass(frozen=True)
class ReliabilityProfile:
    accuracy: Mapping[tuple[str, str], float]
    distractor_count: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        for cell, p in self.accuracy.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"accuracy for {cell} must be in [0, 1], got {p}")
        if self.distractor_count < 1:
            raise ConfigError("distractor_count must be >= 1")

    def p(self, role: str, category: str) -> float:
        try:
            return self.accuracy[(role, category)]
        except KeyError:
            raise ConfigError(f"profile has no accuracy for role {role!r}, category {category!r}") from None

    @classmethod
    def uniform(
        cls,
        p: float,
        roles: Iterable[str],
        categories: Iterable[str],
        overrides: Mapping[tuple[str, str], float] | None = None,
        **kwargs,
    ) -> ReliabilityProfile:
        cats = list(categories)
        acc = {(r, c): p for r in roles for c in cats}
        acc.update(overrides or {})
        return cls(acc, **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping, roles: Iterable[str], categories: Iterable[str], seed: int) -> ReliabilityProfile:
        """Build from ``{"default": p, "accuracy": {role: {category: p}}}``.

        Without a ``default`` every (role, category) cell must be listed.
        """
        roles, cats = list(roles), list(categories)
        default = data.get("default")
        acc: dict[tuple[str, str], float] = {}
        if default is not None:
            acc = {(r, c): float(default) for r in roles for c in cats}
        for role, row in (data.get("accuracy") or {}).items():
            if role not in roles:
                raise ConfigError(f"profile names unknown role {role!r}")
            for cat, p in row.items():
                if cat not in cats:
                    raise ConfigError(f"profile names unknown category {cat!r}")
                acc[(role, cat)] = float(p)
        missing = [(r, c) for r in roles for c in cats if (r, c) not in acc]
        if missing:
            raise ConfigError(f"profile is missing cells {missing[:3]}{' ...' if len(missing) > 3 else ''}")
        return cls(acc, int(data.get("distractor_count", 3)), int(data.get("seed", seed)))


def query_rng(seed: int, query_id: str) -> random.Random:
    """Per-query stream; independent of processing order and thread timing."""
    return random.Random(f"{seed}:{query_id}")


def _wrong_answer(query: QueryItem, truth: Answer, profile: ReliabilityProfile, rng: random.Random) -> Answer:
    kind = query.answer_kind
    if kind is AnswerKind.CHOICE:
        wrong = [l for l in query.letters if l != truth.value]
        return Answer(kind, rng.choice(wrong))
    if kind is AnswerKind.NUMERIC:
        y = float(truth.value)  # type: ignore[arg-type]
        u = rng.uniform(0.3, 1.0) * rng.choice((-1.0, 1.0))
        return Answer(kind, y * (1.0 + u) if y != 0.0 else u)
    return Answer(kind, f"distractor {rng.randrange(profile.distractor_count)}")


def execute_simulated(
    profile: ReliabilityProfile, role: str, query: QueryItem, category: str, agent_id: str = "sim"
) -> EvidenceRecord:
    """Answer correctly with probability ``profile.p(role, category)``."""
    if query.ground_truth is None:
        raise ContractError(f"simulated agents need ground truth (query {query.query_id!r})")
    p = profile.p(role, category)
    rng = query_rng(profile.seed, query.query_id)
    truth = query.ground_truth
    correct = rng.random() < p
    answer = truth if correct else _wrong_answer(query, truth, profile, rng)
    trace = _trace(role, answer)
    return EvidenceRecord(agent_id, role, answer, trace)


def _trace(role: str, answer: Answer) -> str:
    if role == "explicit_3d":
        evidence = "## Tool 3.  Object Depth Values  (simulated)"
    elif role == "scene_graph":
        evidence = '## Scene Graph (JSON)\n{"nodes": [], "edges": []}'
    else:
        evidence = "occlusion cue applied (simulated)"
    return f"{evidence}\nAnswer: {answer}\nReason: simulated specialist output"


@dataclass
class SimulatedAgent:
    agent_id: str
    profile: ReliabilityProfile
    display_name: str = field(default="")

    def run(self, role: str, query: QueryItem, category: str) -> EvidenceRecord:
        return execute_simulated(self.profile, role, query, category, self.agent_id)
