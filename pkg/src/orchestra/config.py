"""Run configuration: one JSON file, optionally overridden by CLI flags."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .agents.base import Agent, AgentSpec
from .agents.remote import RemoteAgent, RemoteEndpoint
from .agents.simulated import ReliabilityProfile, SimulatedAgent
from .errors import ConfigError, OrchestraError
from .orchestrator import KeywordClassifier, Mode, Orchestrator, RemoteClassifier, RemoteReasoner, VoteReasoner
from .query import CategoryTaxonomy
from .routing import RoleSet
from .trust import ABLATION_LEVELS, HyperParams, Stages, TrustStore

BACKENDS = ("simulated", "remote")


@dataclass
class RunConfig:
    pool: list[AgentSpec] = field(default_factory=list)
    roles: RoleSet = field(default_factory=RoleSet)
    taxonomy: CategoryTaxonomy = field(default_factory=CategoryTaxonomy)
    hyperparams: HyperParams = field(default_factory=HyperParams)
    classifier: dict = field(default_factory=lambda: {"type": "keyword"})
    reasoner: dict = field(default_factory=lambda: {"type": "vote"})
    mode: Mode = Mode.OPTIMIZE
    stream: str | None = None
    snapshot_in: str | None = None
    snapshot_out: str | None = None
    out_dir: str = "out"
    seed: int = 0
    parallelism: int = 1
    n_per_category: int | None = None
    trace_budget: int = 2048
    ablation: str = "full"
    simulate: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kw = dict(data)
            if "roles" in kw:
                kw["roles"] = RoleSet(tuple(kw["roles"]))
            if "taxonomy" in kw:
                tax = kw["taxonomy"]
                if isinstance(tax, list):
                    kw["taxonomy"] = CategoryTaxonomy(tuple(tax), tax[0])
                else:
                    cats = tuple(tax["categories"])
                    kw["taxonomy"] = CategoryTaxonomy(cats, tax.get("default", cats[0]))
            if "hyperparams" in kw:
                kw["hyperparams"] = HyperParams.from_dict(kw["hyperparams"])
            if "pool" in kw:
                kw["pool"] = [_agent_spec(a) for a in kw["pool"]]
            if "mode" in kw:
                kw["mode"] = Mode(kw["mode"])
            cfg = cls(**kw)
        except ConfigError:
            raise
        except (OrchestraError, ValueError, TypeError, KeyError, IndexError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> RunConfig:
        cfg = replace(self, **{k: v for k, v in overrides.items() if v is not None})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        ids = [a.agent_id for a in self.pool]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate agent ids in pool: {ids}")
        for spec in self.pool:
            if spec.backend not in BACKENDS:
                raise ConfigError(f"agent {spec.agent_id}: unknown backend {spec.backend!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.n_per_category is not None and self.n_per_category < 1:
            raise ConfigError("n_per_category must be >= 1")
        if self.ablation not in ABLATION_LEVELS:
            raise ConfigError(f"unknown ablation level {self.ablation!r}; expected one of {list(ABLATION_LEVELS)}")
        for name, section in (("classifier", self.classifier), ("reasoner", self.reasoner)):
            kind = section.get("type")
            allowed = ("keyword", "remote") if name == "classifier" else ("vote", "remote")
            if kind not in allowed:
                raise ConfigError(f"{name}.type must be one of {allowed}, got {kind!r}")
            if kind == "remote" and "endpoint" not in section:
                raise ConfigError(f"remote {name} needs an endpoint")

    @property
    def simulated_only(self) -> bool:
        return all(a.backend == "simulated" for a in self.pool)

    def build_agents(self) -> dict[str, Agent]:
        if not self.pool:
            raise ConfigError("config has an empty agent pool")
        agents: dict[str, Agent] = {}
        for spec in self.pool:
            if spec.backend == "simulated":
                seed = agent_seed(self.seed, spec.agent_id)
                profile = ReliabilityProfile.from_dict(
                    spec.backend_config, self.roles, self.taxonomy.categories, seed
                )
                agents[spec.agent_id] = SimulatedAgent(spec.agent_id, profile, spec.display_name)
            else:
                endpoint = RemoteEndpoint.from_dict(spec.backend_config)
                endpoint.headers()  # resolve credentials now, not on the first request
                agents[spec.agent_id] = RemoteAgent(spec.agent_id, endpoint, display_name=spec.display_name)
        return agents

    def build_orchestrator(self, store: TrustStore | None = None, stages: Stages | None = None) -> Orchestrator:
        if self.classifier["type"] == "remote":
            endpoint = RemoteEndpoint.from_dict(self.classifier["endpoint"])
            endpoint.headers()
            classifier = RemoteClassifier(endpoint)
        else:
            classifier = KeywordClassifier()
        if self.reasoner["type"] == "remote":
            endpoint = RemoteEndpoint.from_dict(self.reasoner["endpoint"])
            endpoint.headers()
            reasoner = RemoteReasoner(endpoint, trace_budget=self.trace_budget)
        else:
            reasoner = VoteReasoner()
        return Orchestrator(
            pool=self.build_agents(),
            store=store if store is not None else TrustStore(),
            roles=self.roles,
            taxonomy=self.taxonomy,
            params=self.hyperparams,
            classifier=classifier,
            reasoner=reasoner,
            stages=stages or Stages.ablation(self.ablation),
            parallelism=self.parallelism,
        )


def agent_seed(run_seed: int, agent_id: str) -> int:
    """Distinct, reproducible RNG seed per simulated agent."""
    return (run_seed * 1_000_003 + zlib.crc32(agent_id.encode("utf-8"))) % (2**32)


def _agent_spec(data: dict) -> AgentSpec:
    if "agent_id" not in data:
        raise ConfigError("pool entry without agent_id")
    backend = data.get("backend", "simulated")
    cfg = data.get("profile") if backend == "simulated" else data.get("endpoint")
    return AgentSpec(str(data["agent_id"]), backend, data.get("display_name", ""), dict(cfg or {}))
