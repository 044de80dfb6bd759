import random
from dataclasses import dataclass, field

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orchestra.agents.base import EvidenceRecord
from orchestra.agents.remote import RemoteEndpoint
from orchestra.agents.simulated import ReliabilityProfile, SimulatedAgent
from orchestra.errors import ClassificationError, ContractError, TransientError
from orchestra.experiments import synthetic_stream
from orchestra.orchestrator import (
    KeywordClassifier,
    Mode,
    Orchestrator,
    RemoteClassifier,
    RemoteReasoner,
    aggregate,
    classify,
    weighted_vote,
)
from orchestra.query import DEFAULT_CATEGORIES, CategoryTaxonomy, QueryItem
from orchestra.routing import DEFAULT_ROLES, Assignment, RoutingPlan
from orchestra.similarity import Answer, AnswerKind
from orchestra.trust import TrustStore

from .conftest import make_choice

C, N = AnswerKind.CHOICE, AnswerKind.NUMERIC
TAX = CategoryTaxonomy()


def ev(agent, value, kind=C):
    return EvidenceRecord(agent, "r", Answer(kind, value))


def sim_pool(p=0.5, ids=("a1", "a2", "a3", "a4")):
    return {
        a: SimulatedAgent(a, ReliabilityProfile.uniform(p, DEFAULT_ROLES, DEFAULT_CATEGORIES, seed=i))
        for i, a in enumerate(ids)
    }


@dataclass
class FlakyAgent:
    agent_id: str
    calls: list = field(default_factory=list)

    def run(self, role, query, category):
        self.calls.append(query.query_id)
        raise TransientError("endpoint down")


class TestClassify:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("How many chairs are to the left of the table?", "counting"),
            ("Which object is closer to the camera?", "distance_depth"),
            ("Which is taller, the lamp or the door?", "size"),
            ("Which way is the sofa facing?", "orientation"),
            ("Is the cup above the shelf?", "spatial_relation"),
        ],
    )
    def test_keywords(self, text, expected):
        assert classify(make_choice(text=text), KeywordClassifier(), TAX) == (expected, False)

    def test_hint_wins(self):
        q = make_choice(text="How many chairs?", category="size")
        assert classify(q, KeywordClassifier(), TAX) == ("size", False)

    def test_unknown_hint(self):
        with pytest.raises(ClassificationError):
            classify(make_choice(category="texture"), KeywordClassifier(), TAX)

    def test_no_rule_falls_back(self):
        q = make_choice(text="Describe the mood of the room.")
        assert classify(q, KeywordClassifier(), TAX) == ("spatial_relation", True)

    def test_label_outside_taxonomy(self):
        assert classify(make_choice(), lambda q: "colour", TAX) == ("spatial_relation", True)

    def test_remote_head(self, chat_server):
        chat_server.reply = lambda body: "Distance_Depth"
        ep = RemoteEndpoint(chat_server.base_url, "head", api_key_env_var=None)
        assert classify(make_choice(), RemoteClassifier(ep), TAX) == ("distance_depth", False)
        assert chat_server.requests[0]["body"]["max_tokens"] == 64


class TestVote:
    def test_weight_beats_count(self):
        recs = [ev("x", "A"), ev("y", "B"), ev("z", "B")]
        assert weighted_vote(recs, {"x": 0.6, "y": 0.3, "z": 0.1}, C).value == "A"

    def test_total_weight(self):
        recs = [ev("x", "A"), ev("y", "B"), ev("z", "A")]
        assert weighted_vote(recs, {"x": 0.4, "y": 0.4, "z": 0.2}, C).value == "A"

    def test_tie_to_heaviest_agent(self):
        recs = [ev("x", "A"), ev("y", "B"), ev("z", "A")]
        assert weighted_vote(recs, {"x": 0.25, "y": 0.5, "z": 0.25}, C).value == "B"

    def test_tie_to_plan_order(self):
        recs = [ev("x", "C"), ev("y", "D")]
        assert weighted_vote(recs, {"x": 0.5, "y": 0.5}, C).value == "C"

    def test_invalid_ignored(self):
        recs = [EvidenceRecord("x", "r", Answer.invalid(C)), ev("y", "D")]
        assert weighted_vote(recs, {"x": 0.9, "y": 0.1}, C).value == "D"

    def test_all_invalid(self):
        assert not weighted_vote([EvidenceRecord("x", "r", Answer.invalid(C))], {"x": 1}, C).valid

    def test_weighted_median(self):
        recs = [ev("x", 1.0, N), ev("y", 5.0, N), ev("z", 9.0, N)]
        assert weighted_vote(recs, {"x": 0.2, "y": 0.2, "z": 0.6}, N).value == 9.0
        assert weighted_vote(recs, {"x": 0.3, "y": 0.4, "z": 0.3}, N).value == 5.0

    def test_median_even_split(self):
        recs = [ev("x", 2.0, N), ev("y", 4.0, N)]
        assert weighted_vote(recs, {"x": 0.4, "y": 0.6}, N).value == 4.0
        assert weighted_vote(recs, {"x": 0.5, "y": 0.5}, N).value == 2.0

    @given(
        st.lists(st.sampled_from("ABCD"), min_size=1, max_size=5),
        st.lists(st.floats(0.01, 1.0), min_size=5, max_size=5),
    )
    def test_winner_has_max_weight(self, answers, ws):
        recs = [ev(f"a{i}", v) for i, v in enumerate(answers)]
        weights = {f"a{i}": w for i, w in enumerate(ws)}
        win = weighted_vote(recs, weights, C).value
        totals = {}
        for r in recs:
            totals[r.answer.value] = totals.get(r.answer.value, 0) + weights[r.agent_id]
        assert totals[win] == max(totals.values())
        if len(set(answers)) == 1:
            assert win == answers[0]

    def test_aggregate_empty(self):
        plan = RoutingPlan("size", (), 0)
        with pytest.raises(ContractError):
            aggregate(make_choice(), plan, [])

    def test_remote_reasoner_fallback(self, chat_server):
        chat_server.reply = lambda body: "cannot decide"
        ep = RemoteEndpoint(chat_server.base_url, "r", api_key_env_var=None)
        plan = RoutingPlan("size", (Assignment("x", "r", 0.7), Assignment("y", "r", 0.3)), 0)
        answer, fell_back = aggregate(make_choice(), plan, [ev("x", "C"), ev("y", "D")], RemoteReasoner(ep))
        assert (answer.value, fell_back) == ("C", True)
        prompt = chat_server.requests[0]["body"]["messages"][0]["content"]
        assert "## EVIDENCE POOL" in prompt and "w=0.7000" in prompt

    def test_remote_reasoner_answer(self, chat_server):
        chat_server.reply = lambda body: "Answer: (D)"
        ep = RemoteEndpoint(chat_server.base_url, "r", api_key_env_var=None)
        plan = RoutingPlan("size", (Assignment("x", "r", 0.7), Assignment("y", "r", 0.3)), 0)
        answer, fell_back = aggregate(make_choice(), plan, [ev("x", "C"), ev("y", "D")], RemoteReasoner(ep))
        assert (answer.value, fell_back) == ("D", False)


class TestRunStep:
    def test_optimize_counts_and_gates(self):
        orch = Orchestrator(sim_pool())
        res = orch.run_step(make_choice(category="size"), Mode.OPTIMIZE)
        assert orch.store.step == 1
        assert orch.store.count("size") == 1
        assert len(res.evidence) == len(res.plan.assignments) == 3
        assert set(orch.store.entries) == {(a.agent_id, a.role_id, "size") for a in res.plan.assignments}
        assert res.agreement is not None and set(res.per_agent_similarity) == set(res.plan.agents)

    def test_evaluate_is_frozen(self):
        orch = Orchestrator(sim_pool())
        for q in synthetic_stream(50, DEFAULT_CATEGORIES, 1):
            orch.run_step(q)
        before = orch.store.state()
        for q in synthetic_stream(50, DEFAULT_CATEGORIES, 2, prefix="e"):
            res = orch.run_step(q, Mode.EVALUATE)
            assert res.updates == []
        assert orch.store.state() == before

    def test_evaluate_without_truth(self):
        orch = Orchestrator(sim_pool())
        q = QueryItem("u1", "How many cups?", C, options=("1", "2"))
        with pytest.raises(ContractError):
            orch.run_step(q, Mode.OPTIMIZE)
        # Simulated agents need truth; they degrade to sentinels rather than abort.
        res = orch.run_step(q, Mode.EVALUATE)
        assert res.agreement is None and not res.final_answer.valid

    def test_failing_specialist_does_not_abort(self):
        pool = sim_pool(1.0, ("a1", "a2"))
        pool["a0"] = FlakyAgent("a0")
        orch = Orchestrator(pool)
        res = orch.run_step(make_choice(category="counting"), Mode.OPTIMIZE)
        assert res.final_answer.value == "B"
        assert res.per_agent_similarity["a0"] == 0.0
        assert "agent:a0" in res.flags

    def test_stratified_counts(self):
        orch = Orchestrator(sim_pool())
        orch.run_stream(synthetic_stream(150, DEFAULT_CATEGORIES, 0), Mode.OPTIMIZE)
        assert orch.store.category_counts == {c: 30 for c in DEFAULT_CATEGORIES}
        assert orch.store.step == 150

    @settings(max_examples=5, deadline=None)
    @given(st.integers(0, 10_000))
    def test_evaluate_permutation(self, seed):
        orch = Orchestrator(sim_pool(0.6))
        orch.run_stream(synthetic_stream(100, DEFAULT_CATEGORIES, seed), Mode.OPTIMIZE)
        stream = synthetic_stream(60, DEFAULT_CATEGORIES, seed, prefix="e")
        shuffled = stream[:]
        random.Random(seed).shuffle(shuffled)
        a = {r.query_id: r.final_answer for r in orch.run_stream(stream, Mode.EVALUATE)}
        b = {r.query_id: r.final_answer for r in orch.run_stream(shuffled, Mode.EVALUATE)}
        assert a == b

    def test_parallel_matches_serial(self):
        stream = synthetic_stream(100, DEFAULT_CATEGORIES, 3)
        serial = Orchestrator(sim_pool(0.6))
        parallel = Orchestrator(sim_pool(0.6), parallelism=4)
        try:
            serial.run_stream(stream)
            parallel.run_stream(stream)
            assert serial.store == parallel.store
            ev_stream = synthetic_stream(50, DEFAULT_CATEGORIES, 4, prefix="e")
            a = [r.final_answer for r in serial.run_stream(ev_stream, Mode.EVALUATE)]
            b = [r.final_answer for r in parallel.run_stream(ev_stream, Mode.EVALUATE)]
            assert a == b
        finally:
            parallel.close()

    def test_empty_pool(self):
        with pytest.raises(ContractError):
            Orchestrator({})

    def test_store_is_shared_state(self):
        store = TrustStore()
        orch = Orchestrator(sim_pool(), store=store)
        orch.run_step(make_choice(category="size"))
        assert store.step == 1
