"""Per-(agent, role, category) trust state and the test-time update chain.

One update for a selected agent runs, in order::

    reward -> clamp -> ramp scale -> Beta-Bernoulli counts -> dual EMA -> score

All arithmetic is plain double precision. Nothing here touches an agent's
parameters; only the bookkeeping below changes.
"""

from __future__ import annotations

import math
import threading
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

from .errors import ContractError, InputDomainError

if TYPE_CHECKING:
    from .routing import RoutingPlan

Key = tuple[str, str, str]

PRIOR_ALPHA = 1.0
PRIOR_BETA = 1.0
INITIAL_EMA_SHORT = 0.0
INITIAL_EMA_LONG = 0.5
INITIAL_SCORE = 0.5


@dataclass(frozen=True)
class HyperParams:
    kappa: float = 0.5
    mu: float = 0.3
    gamma: float = 0.3
    lambda_f: float = 0.3
    lambda_g: float = 0.1
    ramp_T: float = 5.0
    beta: float = 5.0
    top_k: int = 3

    def __post_init__(self) -> None:
        if not self.kappa > 0:
            raise InputDomainError(f"kappa must be > 0, got {self.kappa}")
        if not 0.0 <= self.mu <= 1.0:
            raise InputDomainError(f"mu must be in [0, 1], got {self.mu}")
        if not self.gamma >= 0:
            raise InputDomainError(f"gamma must be >= 0, got {self.gamma}")
        for name in ("lambda_f", "lambda_g"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise InputDomainError(f"{name} must be in (0, 1], got {value}")
        if not self.lambda_f > self.lambda_g:
            raise InputDomainError("lambda_f must exceed lambda_g (fast/slow timescales)")
        if not self.ramp_T > 0:
            raise InputDomainError(f"ramp_T must be > 0, got {self.ramp_T}")
        if not self.beta >= 0:
            raise InputDomainError(f"beta must be >= 0, got {self.beta}")
        if isinstance(self.top_k, bool) or not isinstance(self.top_k, int) or self.top_k < 1:
            raise InputDomainError(f"top_k must be a positive integer, got {self.top_k!r}")

    def to_dict(self) -> dict[str, float | int]:
        return {
            "kappa": self.kappa,
            "mu": self.mu,
            "gamma": self.gamma,
            "lambda_f": self.lambda_f,
            "lambda_g": self.lambda_g,
            "ramp_T": self.ramp_T,
            "beta": self.beta,
            "top_k": self.top_k,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> HyperParams:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputDomainError(f"unknown hyperparameters: {sorted(unknown)}")
        kwargs: dict = {}
        for name, value in data.items():
            kwargs[name] = int(value) if name == "top_k" else float(value)  # type: ignore[arg-type]
        return cls(**kwargs)


@dataclass(frozen=True)
class TrustEntry:
    pos_count: float = PRIOR_ALPHA
    neg_count: float = PRIOR_BETA
    ema_short: float = INITIAL_EMA_SHORT
    ema_long: float = INITIAL_EMA_LONG
    score: float = INITIAL_SCORE

    @property
    def posterior_mean(self) -> float:
        return self.pos_count / (self.pos_count + self.neg_count)


@dataclass(frozen=True)
class Reward:
    raw: float
    clamped: float
    scaled: float
    success_fraction: float


@dataclass(frozen=True)
class Stages:
    """Which parts of the update chain are active.

    A disabled stage is held at its neutral value: no scaling means a ramp
    factor of 1, no Bayes means a posterior mean pinned at 0.5, no dual EMA
    means the score is read straight off the remaining signal. With the
    reward stage off no entry is touched at all.
    """

    reward: bool = True
    scaling: bool = True
    bayes: bool = True
    dual_ema: bool = True

    @classmethod
    def ablation(cls, level: str) -> Stages:
        try:
            return ABLATION_LEVELS[level]
        except KeyError:
            raise InputDomainError(
                f"unknown ablation level {level!r}; expected one of {list(ABLATION_LEVELS)}"
            ) from None


FULL_CHAIN = Stages()

ABLATION_LEVELS: dict[str, Stages] = {
    "none": Stages(reward=False, scaling=False, bayes=False, dual_ema=False),
    "reward_only": Stages(scaling=False, bayes=False, dual_ema=False),
    "scaling": Stages(bayes=False, dual_ema=False),
    "bayes": Stages(dual_ema=False),
    "full": FULL_CHAIN,
}


@dataclass(frozen=True)
class UpdateRecord:
    """What one apply_outcome step did to one (agent, role, category) triple."""

    step: int
    agent_id: str
    role_id: str
    category: str
    reward: Reward
    posterior_mean: float
    entry: TrustEntry


@dataclass
class TrustStore:
    entries: dict[Key, TrustEntry] = field(default_factory=dict)
    category_counts: dict[str, int] = field(default_factory=dict)
    step: int = 0
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False, compare=False)

    def get(self, agent_id: str, role_id: str, category: str) -> TrustEntry:
        return self.entries.get((agent_id, role_id, category), _FRESH)

    def score(self, agent_id: str, role_id: str, category: str) -> float:
        return self.get(agent_id, role_id, category).score

    def count(self, category: str) -> int:
        return self.category_counts.get(category, 0)

    def observe_category(self, category: str) -> int:
        with self.lock:
            n = self.category_counts.get(category, 0) + 1
            self.category_counts[category] = n
            return n

    def keys(self) -> list[Key]:
        """Stored keys in (agent, role, category) order."""
        return sorted(self.entries)

    def items(self) -> Iterator[tuple[Key, TrustEntry]]:
        for key in self.keys():
            yield key, self.entries[key]

    def copy(self) -> TrustStore:
        return TrustStore(dict(self.entries), dict(self.category_counts), self.step)

    def state(self) -> tuple:
        """Comparable value snapshot (entries, counts, step)."""
        return (
            tuple(self.items()),
            tuple(sorted(self.category_counts.items())),
            self.step,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrustStore):
            return NotImplemented
        return self.state() == other.state()


_FRESH = TrustEntry()


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise InputDomainError(f"{name} must be in [0, 1], got {value}")


def compute_reward(sim_agent: float, sim_final: float, agreement: bool, kappa: float) -> float:
    """Soft reward for one specialist.

    When the fused answer is wrong, agents that did worse than it take an
    extra ``kappa * max(0, sim_final - sim_agent)`` penalty.
    """
    _check_unit("sim_agent", sim_agent)
    _check_unit("sim_final", sim_final)
    if not kappa > 0:
        raise InputDomainError(f"kappa must be > 0, got {kappa}")
    reward = 2.0 * sim_agent - 1.0
    if not agreement:
        reward -= kappa * max(0.0, sim_final - sim_agent)
    return reward


def clamp_reward(raw: float) -> float:
    return min(1.0, max(-1.0, raw))


def ramp_factor(category_count: int | float, ramp_T: float) -> float:
    if category_count < 0:
        raise InputDomainError(f"category_count must be >= 0, got {category_count}")
    if not ramp_T > 0:
        raise InputDomainError(f"ramp_T must be > 0, got {ramp_T}")
    return -math.expm1(-category_count / ramp_T)


def bayes_update(entry: TrustEntry, success_fraction: float) -> tuple[TrustEntry, float]:
    _check_unit("success_fraction", success_fraction)
    pos = entry.pos_count + success_fraction
    neg = entry.neg_count + (1.0 - success_fraction)
    updated = replace(entry, pos_count=pos, neg_count=neg)
    return updated, pos / (pos + neg)


def ema_update(
    entry: TrustEntry, scaled_reward: float, posterior_mean: float, params: HyperParams
) -> tuple[float, float]:
    f = (1.0 - params.lambda_f) * entry.ema_short + params.lambda_f * scaled_reward
    g = (1.0 - params.lambda_g) * entry.ema_long + params.lambda_g * posterior_mean
    return f, g


def final_score(ema_short: float, ema_long: float, scaled_reward: float, params: HyperParams) -> float:
    raw = params.mu * ema_short + (1.0 - params.mu) * ema_long + params.gamma * scaled_reward
    return min(1.0, max(0.0, raw))


def scale_reward(raw: float, category_count: int, params: HyperParams, stages: Stages = FULL_CHAIN) -> Reward:
    clamped = clamp_reward(raw)
    phi = ramp_factor(category_count, params.ramp_T) if stages.scaling else 1.0
    scaled = phi * clamped
    return Reward(raw=raw, clamped=clamped, scaled=scaled, success_fraction=(scaled + 1.0) / 2.0)


def update_entry(
    entry: TrustEntry, reward: Reward, params: HyperParams, stages: Stages = FULL_CHAIN
) -> tuple[TrustEntry, float]:
    """Run the count/EMA/score part of the chain for one entry.

    Returns the new entry and the posterior mean that fed the slow EMA.
    """
    if stages.bayes:
        entry, q = bayes_update(entry, reward.success_fraction)
    else:
        q = INITIAL_EMA_LONG
    if stages.dual_ema:
        f, g = ema_update(entry, reward.scaled, q, params)
        score = final_score(f, g, reward.scaled, params)
        return replace(entry, ema_short=f, ema_long=g, score=score), q
    # Without smoothing the score is the posterior itself, or the bare reward.
    score = q if stages.bayes else reward.success_fraction
    return replace(entry, score=score), q


def apply_outcome(
    store: TrustStore,
    plan: RoutingPlan,
    per_agent_similarity: Mapping[str, float],
    final_similarity: float,
    agreement: bool,
    params: HyperParams,
    stages: Stages = FULL_CHAIN,
) -> list[UpdateRecord]:
    """Fold one observed outcome into ``store``.

    Only the (agent, assigned role, plan category) triples of the plan are
    written. The step counter advances by one even for an empty plan.
    """
    category = plan.category
    missing = [a.agent_id for a in plan.assignments if a.agent_id not in per_agent_similarity]
    if missing:
        raise ContractError(f"no similarity supplied for selected agents {missing}")
    _check_unit("final_similarity", final_similarity)

    with store.lock:
        n_c = store.count(category)
        if plan.assignments and n_c < 1:
            raise ContractError(
                f"category {category!r} was never counted; build the plan with counting enabled"
            )
        step = store.step
        records = []
        for a in plan.assignments:
            key = (a.agent_id, a.role_id, category)
            raw = compute_reward(per_agent_similarity[a.agent_id], final_similarity, agreement, params.kappa)
            if not stages.reward:
                continue
            reward = scale_reward(raw, n_c, params, stages)
            entry, q = update_entry(store.get(*key), reward, params, stages)
            store.entries[key] = entry
            records.append(UpdateRecord(step + 1, a.agent_id, a.role_id, category, reward, q, entry))
        store.step = step + 1
    return records
