"""Stream items and the category taxonomy."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

from .errors import ConfigError, InputDomainError
from .similarity import Answer, AnswerKind, option_letters

SPATIAL_RELATION = "spatial_relation"
COUNTING = "counting"
SIZE = "size"
DISTANCE_DEPTH = "distance_depth"
ORIENTATION = "orientation"

DEFAULT_CATEGORIES = (SPATIAL_RELATION, COUNTING, SIZE, DISTANCE_DEPTH, ORIENTATION)


@dataclass(frozen=True)
class CategoryTaxonomy:
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    default: str = SPATIAL_RELATION

    def __post_init__(self) -> None:
        if not self.categories:
            raise ConfigError("taxonomy has no categories")
        if len(set(self.categories)) != len(self.categories):
            raise ConfigError(f"duplicate categories in {self.categories}")
        if self.default not in self.categories:
            raise ConfigError(f"default category {self.default!r} is not in the taxonomy")

    def __contains__(self, category: object) -> bool:
        return category in self.categories

    def __iter__(self):
        return iter(self.categories)

    def __len__(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class QueryItem:
    query_id: str
    text: str
    answer_kind: AnswerKind = AnswerKind.CHOICE
    image_ref: str | None = None
    category_hint: str | None = None
    options: tuple[str, ...] | None = None
    ground_truth: Answer | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "answer_kind", AnswerKind(self.answer_kind))
        if self.options is not None:
            object.__setattr__(self, "options", tuple(self.options))
        if self.answer_kind is AnswerKind.CHOICE and not self.options:
            raise InputDomainError(f"choice query {self.query_id!r} has no options")
        gt = self.ground_truth
        if gt is not None:
            if gt.kind is not self.answer_kind:
                raise InputDomainError(
                    f"query {self.query_id!r}: truth kind {gt.kind.value} != {self.answer_kind.value}"
                )
            if not gt.valid:
                raise InputDomainError(f"query {self.query_id!r}: ground truth is empty")
            if self.answer_kind is AnswerKind.CHOICE and gt.value not in self.letters:
                raise InputDomainError(
                    f"query {self.query_id!r}: truth {gt.value!r} not among options {self.letters}"
                )

    @property
    def letters(self) -> list[str]:
        return option_letters(self.options) if self.options else []

    def prompt_text(self) -> str:
        """Question text with lettered options appended."""
        if not self.options:
            return self.text
        opts = "  ".join(f"({l}) {o}" for l, o in zip(self.letters, self.options))
        return f"{self.text}\n  Options  : {opts}"


def require_truth(items: Sequence[QueryItem]) -> None:
    missing = [q.query_id for q in items if q.ground_truth is None]
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise InputDomainError(f"{len(missing)} queries lack ground truth: {shown}")
