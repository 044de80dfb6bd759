"""Adaptive role assignment: top-k selection, agent/role matching, role weights."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .errors import InputDomainError
from .trust import HyperParams, TrustStore

IMPLICIT_VISUAL = "implicit_visual"
EXPLICIT_3D = "explicit_3d"
SCENE_GRAPH = "scene_graph"


@dataclass(frozen=True)
class RoleSet:
    """Ordered roles. Position in ``roles`` is the final tie-breaker."""

    roles: tuple[str, ...] = (IMPLICIT_VISUAL, EXPLICIT_3D, SCENE_GRAPH)

    def __post_init__(self) -> None:
        if len(set(self.roles)) != len(self.roles):
            raise InputDomainError(f"duplicate roles in {self.roles}")

    def __iter__(self):
        return iter(self.roles)

    def __len__(self) -> int:
        return len(self.roles)

    def __contains__(self, role: object) -> bool:
        return role in self.roles

    def index(self, role: str) -> int:
        return self.roles.index(role)


DEFAULT_ROLES = RoleSet()


@dataclass(frozen=True)
class Assignment:
    agent_id: str
    role_id: str
    weight: float


@dataclass(frozen=True)
class RoutingPlan:
    category: str
    assignments: tuple[Assignment, ...]
    step: int

    @property
    def agents(self) -> list[str]:
        return [a.agent_id for a in self.assignments]

    def role_of(self, agent_id: str) -> str | None:
        for a in self.assignments:
            if a.agent_id == agent_id:
                return a.role_id
        return None

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "step": self.step,
            "assignments": [
                {"agent_id": a.agent_id, "role_id": a.role_id, "weight": a.weight}
                for a in self.assignments
            ],
        }


def aggregate_score(store: TrustStore, agent: str, category: str, roles: Iterable[str]) -> float:
    roles = list(roles)
    if not roles:
        raise InputDomainError("role set is empty")
    return sum(store.score(agent, k, category) for k in roles) / len(roles)


def select_topk(
    store: TrustStore, pool: Sequence[str], category: str, k: int, roles: Iterable[str] = DEFAULT_ROLES
) -> list[str]:
    """Highest aggregate scores first; equal scores fall back to agent-id order."""
    if k < 1:
        raise InputDomainError(f"k must be >= 1, got {k}")
    if not pool:
        raise InputDomainError("agent pool is empty")
    roles = list(roles)
    ranked = sorted(set(pool), key=lambda a: (-aggregate_score(store, a, category, roles), a))
    return ranked[:k]


def assign_roles(
    store: TrustStore, selected: Sequence[str], category: str, roles: Iterable[str] = DEFAULT_ROLES
) -> dict[str, str]:
    """Greedy global matching of agents to roles.

    Repeatedly takes the remaining (agent, role) pair with the highest
    score. Ties go to the higher aggregate score, then the smaller agent id,
    then the earlier role. Produces min(len(selected), len(roles)) pairs.
    """
    roles = list(roles)
    agg = {a: aggregate_score(store, a, category, roles) for a in selected}
    candidates = sorted(
        ((a, r) for a in selected for r in roles),
        key=lambda p: (-store.score(p[0], p[1], category), -agg[p[0]], p[0], roles.index(p[1])),
    )
    assignment: dict[str, str] = {}
    taken_roles: set[str] = set()
    limit = min(len(set(selected)), len(roles))
    for agent, role in candidates:
        if len(assignment) == limit:
            break
        if agent in assignment or role in taken_roles:
            continue
        assignment[agent] = role
        taken_roles.add(role)
    return assignment


def role_weights(
    store: TrustStore, agent: str, category: str, roles: Iterable[str], beta: float
) -> list[float]:
    """Softmax of the agent's role scores, sharpened by ``beta``."""
    if beta < 0:
        raise InputDomainError(f"beta must be >= 0, got {beta}")
    logits = [beta * store.score(agent, k, category) for k in roles]
    top = max(logits)
    exps = [math.exp(x - top) for x in logits]
    total = math.fsum(exps)
    return [e / total for e in exps]


def build_routing_plan(
    store: TrustStore,
    pool: Sequence[str],
    category: str,
    roles: RoleSet,
    params: HyperParams,
    count: bool = True,
) -> RoutingPlan:
    """Select agents, match them to roles and attach their role weights.

    With ``count`` set the category's query counter is incremented as part of
    the same critical section, so the current query is included in N_c.
    Frozen evaluation passes ``count=False``.
    """
    if not pool:
        raise InputDomainError("agent pool is empty")
    with store.lock:
        selected = select_topk(store, pool, category, params.top_k, roles)
        mapping = assign_roles(store, selected, category, roles)
        role_list = list(roles)
        assignments = []
        for agent in selected:
            role = mapping.get(agent)
            if role is None:
                continue
            w = role_weights(store, agent, category, role_list, params.beta)
            assignments.append(Assignment(agent, role, w[role_list.index(role)]))
        plan = RoutingPlan(category, tuple(assignments), store.step)
        if count:
            store.observe_category(category)
    return plan
