"""Role, head and reasoner prompt templates shipped with the package."""

from __future__ import annotations

from collections.abc import Sequence
from functools import lru_cache
from importlib import resources

from ..errors import ConfigError
from ..query import QueryItem

ROLE_TEMPLATES = {
    "implicit_visual": "implicit_visual.txt",
    "explicit_3d": "explicit_3d.txt",
    "scene_graph": "scene_graph.txt",
}
HEAD_TEMPLATE = "head.txt"
REASONING_TEMPLATE = "reasoning.txt"
TOOL_TEMPLATES = {
    "explicit_3d": "explicit_3d_tools.txt",
    "scene_graph": "scene_graph_tools.txt",
}

# Bytes of each specialist trace handed to the reasoner.
DEFAULT_TRACE_BUDGET = 2048


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    try:
        return resources.files(__package__).joinpath("prompts", name).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"prompt template {name!r} is not shipped") from None


def render_role_prompt(role: str, query: QueryItem) -> str:
    try:
        name = ROLE_TEMPLATES[role]
    except KeyError:
        raise ConfigError(f"no prompt template for role {role!r}") from None
    # Tool templates contain literal braces, so no str.format here.
    return load_template(name).replace("{query}", query.prompt_text())


def render_head_prompt(query: QueryItem) -> str:
    return load_template(HEAD_TEMPLATE).replace("{query}", query.text)


def truncate_bytes(text: str, budget: int) -> str:
    data = text.encode("utf-8")
    if len(data) <= budget:
        return text
    return data[:budget].decode("utf-8", errors="ignore") + " [truncated]"


def render_reasoning_prompt(
    query: QueryItem,
    category: str,
    evidence: Sequence,
    weights: dict[str, float],
    trace_budget: int = DEFAULT_TRACE_BUDGET,
) -> str:
    """Reasoner system prompt followed by the evidence pool for this query."""
    fmt = "multiple_choice" if query.options else "open_ended"
    lines = [
        load_template(REASONING_TEMPLATE).rstrip("\n"),
        "",
        "## INPUT",
        f"  Question : {query.prompt_text()}",
        f"  Category : {category}",
        f"  Format   : {fmt}",
        "",
        "## EVIDENCE POOL",
    ]
    for rec in evidence:
        w = weights.get(rec.agent_id, 0.0)
        lines.append(f"### agent={rec.agent_id}  role={rec.role_id}  w={w:.4f}")
        lines.append(f"  Answer : {rec.answer}")
        trace = truncate_bytes(rec.trace, trace_budget).strip()
        if trace:
            lines.append("  Trace  :")
            lines.extend("    " + t for t in trace.splitlines())
    return "\n".join(lines) + "\n"
