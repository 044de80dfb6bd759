"""Trust-weighted orchestration of heterogeneous answer-producing agents."""

from .orchestrator import Mode, Orchestrator, StepResult
from .query import CategoryTaxonomy, QueryItem
from .routing import RoleSet, RoutingPlan, build_routing_plan
from .similarity import Answer, AnswerKind, parse_answer, sim
from .trust import HyperParams, Stages, TrustEntry, TrustStore, apply_outcome

__all__ = [
    "Answer",
    "AnswerKind",
    "CategoryTaxonomy",
    "HyperParams",
    "Mode",
    "Orchestrator",
    "QueryItem",
    "RoleSet",
    "RoutingPlan",
    "Stages",
    "StepResult",
    "TrustEntry",
    "TrustStore",
    "apply_outcome",
    "build_routing_plan",
    "parse_answer",
    "sim",
]
