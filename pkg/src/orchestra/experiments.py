"""Seeded desk-scale experiments over simulated pools.

Nothing in here talks to a network; every result is a pure function of the
config and the seed.
"""

from __future__ import annotations

import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from statistics import fmean

from .agents.simulated import SimulatedAgent
from .config import RunConfig
from .errors import ConfigError
from .orchestrator import Mode, Orchestrator, StepResult
from .persistence import TrajectoryRow
from .query import COUNTING, QueryItem
from .routing import EXPLICIT_3D, IMPLICIT_VISUAL, SCENE_GRAPH, RoutingPlan
from .similarity import Answer, AnswerKind
from .trust import ABLATION_LEVELS, Stages

ABLATION_ORDER = ("none", "reward_only", "scaling", "bayes", "full")
DEFAULT_SIZES = (50, 100, 150, 200, 300)


def synthetic_stream(
    n: int,
    categories: Sequence[str],
    seed: int,
    prefix: str = "q",
    n_options: int = 4,
    stratified: bool = True,
) -> list[QueryItem]:
    """Four-option choice queries with a category hint and a random truth.

    With ``stratified`` every category gets ``n // len(categories)`` items
    and the order is shuffled.
    """
    rng = random.Random(f"stream:{seed}:{prefix}")
    if stratified:
        if n % len(categories):
            raise ConfigError(f"{n} queries cannot be split evenly over {len(categories)} categories")
        cats = [c for c in categories for _ in range(n // len(categories))]
        rng.shuffle(cats)
    else:
        cats = [rng.choice(list(categories)) for _ in range(n)]
    options = tuple(f"option {i + 1}" for i in range(n_options))
    letters = [chr(ord("A") + i) for i in range(n_options)]
    return [
        QueryItem(
            query_id=f"{prefix}-{i:05d}",
            text=f"Synthetic {cat} question #{i}",
            answer_kind=AnswerKind.CHOICE,
            category_hint=cat,
            options=options,
            ground_truth=Answer(AnswerKind.CHOICE, rng.choice(letters)),
        )
        for i, cat in enumerate(cats)
    ]


def best_cells(orch: Orchestrator) -> dict[str, tuple[str, str]]:
    """Per category, the (agent, role) with the highest profile accuracy."""
    out = {}
    for cat in orch.taxonomy:
        cells = []
        for agent_id in sorted(orch.pool):
            agent = orch.pool[agent_id]
            if not isinstance(agent, SimulatedAgent):
                raise ConfigError("best-cell analysis needs a simulated pool")
            for role in orch.roles:
                cells.append((-agent.profile.p(role, cat), agent_id, orch.roles.index(role), role))
        _, agent_id, _, role = min(cells)
        out[cat] = (agent_id, role)
    return out


def routed_correctly(plan: RoutingPlan, best: dict[str, tuple[str, str]]) -> bool:
    agent, role = best[plan.category]
    return plan.role_of(agent) == role


def expected_single_agent_accuracy(orch: Orchestrator, categories: Iterable[str]) -> float:
    """Best single agent's accuracy on a uniform category mix, given its best role per category."""
    cats = list(categories)
    return max(
        fmean(max(orch.pool[a].profile.p(r, c) for r in orch.roles) for c in cats)  # type: ignore[attr-defined]
        for a in orch.pool
    )


def optimize(orch: Orchestrator, stream: Iterable[QueryItem]) -> tuple[list[StepResult], list[TrajectoryRow]]:
    results, rows = [], []
    for q in stream:
        res = orch.run_step(q, Mode.OPTIMIZE)
        results.append(res)
        rows.extend(TrajectoryRow.from_update(q.query_id, u) for u in res.updates)
    return results, rows


def accuracy(results: Sequence[StepResult]) -> float:
    scored = [r.agreement for r in results if r.agreement is not None]
    return fmean(scored) if scored else float("nan")


# -- canned pools --------------------------------------------------------------


def _sim_agent(agent_id: str, cells: dict[tuple[str, str], float], default: float) -> dict:
    acc: dict[str, dict[str, float]] = {}
    for (role, cat), p in cells.items():
        acc.setdefault(role, {})[cat] = p
    return {"agent_id": agent_id, "backend": "simulated", "profile": {"default": default, "accuracy": acc}}


def convergence_config(seed: int = 0, high: float = 0.9, base: float = 0.5) -> RunConfig:
    """Three agents; A is strong only on (implicit_visual, counting)."""
    pool = [
        _sim_agent("A", {(IMPLICIT_VISUAL, COUNTING): high}, base),
        _sim_agent("B", {}, base),
        _sim_agent("C", {}, base),
    ]
    return RunConfig.from_dict({"pool": pool, "seed": seed})


# Strongest (agent, role) per category in the specialization pool. None of
# these coincide with the cold-start assignment except by construction.
SPECIALISTS = {
    "spatial_relation": ("a4", SCENE_GRAPH),
    "counting": ("a3", IMPLICIT_VISUAL),
    "size": ("a5", SCENE_GRAPH),
    "distance_depth": ("a2", EXPLICIT_3D),
    "orientation": ("a5", EXPLICIT_3D),
}


def specialization_config(seed: int = 0, high: float = 0.9, base: float = 0.5) -> RunConfig:
    """Five agents, one strong (agent, role) cell per category, 0.5 elsewhere."""
    cells: dict[str, dict[tuple[str, str], float]] = {f"a{i}": {} for i in range(1, 6)}
    for cat, (agent, role) in SPECIALISTS.items():
        cells[agent][(role, cat)] = high
    pool = [_sim_agent(a, cells[a], base) for a in sorted(cells)]
    return RunConfig.from_dict({"pool": pool, "seed": seed})


# -- experiments ---------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceOutcome:
    seed: int
    target_score: float
    best_other: float
    routing_correctness: float

    @property
    def strictly_maximal(self) -> bool:
        return self.target_score > self.best_other


def convergence_trial(
    seed: int, steps: int = 200, category: str = COUNTING, target=("A", IMPLICIT_VISUAL)
) -> ConvergenceOutcome:
    cfg = convergence_config(seed)
    orch = cfg.build_orchestrator()
    stream = synthetic_stream(steps, [category], seed, prefix="conv")
    best = {category: target}
    correct = 0
    for q in stream:
        res = orch.run_step(q, Mode.OPTIMIZE)
        correct += routed_correctly(res.plan, best)
    target_score = orch.store.score(target[0], target[1], category)
    others = [
        orch.store.score(a, r, category)
        for a in sorted(orch.pool)
        for r in orch.roles
        if (a, r) != tuple(target)
    ]
    return ConvergenceOutcome(seed, target_score, max(others), correct / steps)


def _check_simulated(cfg: RunConfig) -> None:
    if not cfg.pool:
        raise ConfigError("simulation needs a pool")
    if not cfg.simulated_only:
        raise ConfigError("simulation supports simulated agents only")


def ablation_trial(cfg: RunConfig, level: str, seed: int, n_opt: int = 150, n_eval: int = 250) -> dict:
    trial_cfg = cfg.with_overrides(seed=seed)
    orch = trial_cfg.build_orchestrator(stages=Stages.ablation(level))
    best = best_cells(orch)
    cats = list(orch.taxonomy)
    opt_results, _ = optimize(orch, synthetic_stream(n_opt, cats, seed, prefix="opt"))
    eval_results = orch.run_stream(synthetic_stream(n_eval, cats, seed, prefix="eval"), Mode.EVALUATE)
    return {
        "routing_correctness": fmean(routed_correctly(r.plan, best) for r in opt_results),
        "optimize_accuracy": accuracy(opt_results),
        "eval_accuracy": accuracy(eval_results),
        "eval_routing_correctness": fmean(routed_correctly(r.plan, best) for r in eval_results),
    }


def ablation_study(
    cfg: RunConfig,
    seeds: Sequence[int],
    levels: Sequence[str] = ABLATION_ORDER,
    n_opt: int = 150,
    n_eval: int = 250,
) -> list[dict]:
    _check_simulated(cfg)
    rows = []
    for level in levels:
        if level not in ABLATION_LEVELS:
            raise ConfigError(f"unknown ablation level {level!r}")
        trials = [ablation_trial(cfg, level, s, n_opt, n_eval) for s in seeds]
        rows.append(
            {"level": level, "trials": len(trials)}
            | {k: fmean(t[k] for t in trials) for k in trials[0]}
        )
    return rows


def size_sweep(
    cfg: RunConfig,
    seeds: Sequence[int],
    sizes: Sequence[int] = DEFAULT_SIZES,
    n_eval: int = 250,
) -> list[dict]:
    _check_simulated(cfg)
    rows = []
    for size in sizes:
        trials = [ablation_trial(cfg, "full", s, size, n_eval) for s in seeds]
        rows.append(
            {"size": size, "trials": len(trials)}
            | {k: fmean(t[k] for t in trials) for k in trials[0]}
        )
    return rows

