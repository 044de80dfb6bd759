"""Per-query pipeline: classify, route, run specialists, fuse, update trust."""

from __future__ import annotations

import enum
import logging
import re
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import httpx

from .agents.base import Agent, EvidenceRecord
from .agents.prompts import DEFAULT_TRACE_BUDGET, render_head_prompt, render_reasoning_prompt
from .agents.remote import RemoteEndpoint, build_messages, chat_completion
from .errors import ClassificationError, ContractError, OrchestraError, ParseError
from .query import (
    COUNTING,
    DISTANCE_DEPTH,
    ORIENTATION,
    SIZE,
    SPATIAL_RELATION,
    CategoryTaxonomy,
    QueryItem,
)
from .routing import RoleSet, RoutingPlan, build_routing_plan
from .similarity import Answer, AnswerKind, agrees, normalize_text, parse_answer, sim
from .trust import FULL_CHAIN, HyperParams, Stages, TrustStore, UpdateRecord, apply_outcome

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    OPTIMIZE = "optimize"
    EVALUATE = "evaluate"


# Checked in order; the first rule with a matching pattern wins.
KEYWORD_RULES: tuple[tuple[str, tuple[str, ...]], ...] = (
    (COUNTING, (r"\bhow many\b", r"\bcount\b", r"\bnumber of\b")),
    (
        DISTANCE_DEPTH,
        (
            r"\b(closer|closest|nearer|nearest|farther|farthest|further|furthest)\b",
            r"\bhow far\b", r"\bdistance\b", r"\bdepth\b", r"\bcamera\b", r"\bviewer\b",
        ),
    ),
    (
        SIZE,
        (
            r"\b(taller|tallest|shorter|shortest|bigger|biggest|larger|largest|smaller|smallest)\b",
            r"\b(wider|widest|narrower|longer|longest|size|height of|how (tall|big|large|wide|long))\b",
        ),
    ),
    (
        ORIENTATION,
        (
            r"\bfacing\b", r"\bface[sd]?\b", r"\bdirection\b", r"\borient", r"\bparallel\b",
            r"\bperpendicular\b", r"\bleft\b", r"\bright\b", r"\bin front\b", r"\bfront\b",
            r"\bbehind\b", r"\bangle\b",
        ),
    ),
    (
        SPATIAL_RELATION,
        (
            r"\b(higher|lower|above|below|beneath|under|underneath|on top|next to|between|beside|near)\b",
            r"\bwhere\b", r"\bposition\b",
        ),
    ),
)


class KeywordClassifier:
    """Deterministic offline stand-in for the head agent."""

    def __init__(self, rules=KEYWORD_RULES):
        self.rules = [(cat, [re.compile(p, re.IGNORECASE) for p in pats]) for cat, pats in rules]

    def __call__(self, query: QueryItem) -> str:
        for category, patterns in self.rules:
            if any(p.search(query.text) for p in patterns):
                return category
        raise ClassificationError(f"no keyword rule matches query {query.query_id!r}", "")


class RemoteClassifier:
    def __init__(self, endpoint: RemoteEndpoint, client: httpx.Client | None = None):
        self.endpoint = endpoint.for_head()
        self.client = client

    def __call__(self, query: QueryItem) -> str:
        messages = build_messages(render_head_prompt(query), query.text, query.image_ref)
        reply = chat_completion(self.endpoint, messages, self.client)
        label = normalize_text(reply).replace(" ", "_")
        return label


def classify(query: QueryItem, classifier, taxonomy: CategoryTaxonomy) -> tuple[str, bool]:
    """Return (category, flagged).

    A category hint on the query always wins. Unknown labels or classifier
    failures fall back to the taxonomy default and set ``flagged``.
    """
    if query.category_hint is not None:
        if query.category_hint not in taxonomy:
            raise ClassificationError(f"hint {query.category_hint!r} not in taxonomy", query.category_hint)
        return query.category_hint, False
    try:
        label = classifier(query)
    except OrchestraError as exc:
        log.warning("classifier failed on %s: %s", query.query_id, exc)
        return taxonomy.default, True
    if label not in taxonomy:
        log.warning("classifier produced %r for %s; using %s", label, query.query_id, taxonomy.default)
        return taxonomy.default, True
    return label, False


def weighted_vote(evidence: Sequence[EvidenceRecord], weights: Mapping[str, float], kind: AnswerKind) -> Answer:
    """Fuse specialist answers by reliability weight.

    Categorical answers go to the largest total weight, numeric ones to the
    weighted median. Ties resolve toward the single highest-weight agent,
    then toward plan order.
    """
    valid = [r for r in evidence if r.answer.valid]
    if not valid:
        return Answer.invalid(kind)
    order = {r.agent_id: i for i, r in enumerate(evidence)}
    ranked = sorted(valid, key=lambda r: (-weights.get(r.agent_id, 0.0), order[r.agent_id]))
    preference = {}
    for i, r in enumerate(ranked):
        preference.setdefault(r.answer.value, i)

    if kind is AnswerKind.NUMERIC:
        values = sorted({r.answer.value for r in valid})
        mass = {v: sum(weights.get(r.agent_id, 0.0) for r in valid if r.answer.value == v) for v in values}
        total = sum(mass.values())
        if total <= 0:
            return ranked[0].answer
        half = total / 2.0
        cum = 0.0
        for i, v in enumerate(values):
            cum += mass[v]
            if abs(cum - half) <= 1e-12 * max(1.0, total) and i + 1 < len(values):
                lo, hi = v, values[i + 1]
                return Answer(kind, lo if preference[lo] < preference[hi] else hi)
            if cum >= half:
                return Answer(kind, v)
        return Answer(kind, values[-1])

    totals: dict = {}
    for r in valid:
        totals[r.answer.value] = totals.get(r.answer.value, 0.0) + weights.get(r.agent_id, 0.0)
    winner = min(totals, key=lambda v: (-totals[v], preference[v]))
    return Answer(kind, winner)


class VoteReasoner:
    def __call__(self, query, category, plan, evidence) -> tuple[Answer, bool]:
        weights = {a.agent_id: a.weight for a in plan.assignments}
        return weighted_vote(evidence, weights, query.answer_kind), False


class RemoteReasoner:
    """Generative fusion through a remote model, falling back to the vote."""

    def __init__(
        self,
        endpoint: RemoteEndpoint,
        client: httpx.Client | None = None,
        trace_budget: int = DEFAULT_TRACE_BUDGET,
    ):
        self.endpoint = endpoint
        self.client = client
        self.trace_budget = trace_budget

    def __call__(self, query, category, plan, evidence) -> tuple[Answer, bool]:
        weights = {a.agent_id: a.weight for a in plan.assignments}
        prompt = render_reasoning_prompt(query, category, evidence, weights, self.trace_budget)
        try:
            reply = chat_completion(self.endpoint, build_messages(prompt, query.prompt_text(), query.image_ref), self.client)
            return parse_answer(reply, query.answer_kind, query.options), False
        except (ParseError, OrchestraError) as exc:
            log.warning("reasoner failed on %s (%s); using weighted vote", query.query_id, exc)
            return weighted_vote(evidence, weights, query.answer_kind), True


def aggregate(query: QueryItem, plan: RoutingPlan, evidence: Sequence[EvidenceRecord], reasoner=None, category: str | None = None) -> tuple[Answer, bool]:
    if not evidence:
        raise ContractError("cannot aggregate an empty evidence pool")
    reasoner = reasoner or VoteReasoner()
    return reasoner(query, category or plan.category, plan, evidence)


@dataclass
class StepResult:
    query_id: str
    category: str
    plan: RoutingPlan
    evidence: list[EvidenceRecord]
    final_answer: Answer
    agreement: bool | None = None
    per_agent_similarity: dict[str, float] | None = None
    final_similarity: float | None = None
    updates: list[UpdateRecord] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def correct(self) -> bool | None:
        return self.agreement


@dataclass
class Orchestrator:
    """Holds the agent pool and trust store and runs queries through them."""

    pool: Mapping[str, Agent]
    store: TrustStore = field(default_factory=TrustStore)
    roles: RoleSet = field(default_factory=RoleSet)
    taxonomy: CategoryTaxonomy = field(default_factory=CategoryTaxonomy)
    params: HyperParams = field(default_factory=HyperParams)
    classifier: object = field(default_factory=KeywordClassifier)
    reasoner: object = field(default_factory=VoteReasoner)
    stages: Stages = FULL_CHAIN
    parallelism: int = 1

    def __post_init__(self) -> None:
        if not self.pool:
            raise ContractError("agent pool is empty")
        self._executor = ThreadPoolExecutor(self.parallelism) if self.parallelism > 1 else None

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()

    def _execute(self, plan: RoutingPlan, query: QueryItem) -> list[EvidenceRecord]:
        def one(agent_id: str, role: str) -> EvidenceRecord:
            try:
                return self.pool[agent_id].run(role, query, plan.category)
            except OrchestraError as exc:
                log.warning("agent %s failed on %s: %s", agent_id, query.query_id, exc)
                return EvidenceRecord(agent_id, role, Answer.invalid(query.answer_kind), "", 0.0, str(exc))

        pairs = [(a.agent_id, a.role_id) for a in plan.assignments]
        if self._executor is None:
            return [one(*p) for p in pairs]
        futures = [self._executor.submit(one, *p) for p in pairs]
        return [f.result() for f in futures]

    def run_step(self, query: QueryItem, mode: Mode | str = Mode.OPTIMIZE) -> StepResult:
        mode = Mode(mode)
        optimize = mode is Mode.OPTIMIZE
        if optimize and query.ground_truth is None:
            raise ContractError(f"optimize mode needs ground truth (query {query.query_id!r})")
        flags = []
        category, flagged = classify(query, self.classifier, self.taxonomy)
        if flagged:
            flags.append("classification")
        plan = build_routing_plan(self.store, sorted(self.pool), category, self.roles, self.params, count=optimize)
        evidence = self._execute(plan, query)
        flags.extend(f"agent:{r.agent_id}" for r in evidence if r.error)
        final, fell_back = aggregate(query, plan, evidence, self.reasoner, category)
        if fell_back:
            flags.append("reasoner")
        result = StepResult(query.query_id, category, plan, evidence, final, flags=flags)

        truth = query.ground_truth
        if truth is not None:
            result.per_agent_similarity = {r.agent_id: sim(r.answer, truth) for r in evidence}
            result.final_similarity = sim(final, truth)
            result.agreement = agrees(final, truth)
        if optimize:
            result.updates = apply_outcome(
                self.store,
                plan,
                result.per_agent_similarity,
                result.final_similarity,
                result.agreement,
                self.params,
                self.stages,
            )
        return result

    def run_stream(self, queries, mode: Mode | str = Mode.OPTIMIZE) -> list[StepResult]:
        mode = Mode(mode)
        queries = list(queries)
        if mode is Mode.EVALUATE and self._executor is not None:
            # Frozen store: queries are independent, so they may overlap.
            with ThreadPoolExecutor(self.parallelism) as ex:
                return list(ex.map(lambda q: self.run_step(q, mode), queries))
        return [self.run_step(q, mode) for q in queries]
