"""Answer representation, parsing of model output, and answer similarity."""

from __future__ import annotations

import enum
import math
import re
import string
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Union

from .errors import ContractError, InputDomainError, ParseError

NUMERIC_EPS = 1e-6
NUMERIC_AGREEMENT = 0.9


class AnswerKind(str, enum.Enum):
    CHOICE = "choice"
    NUMERIC = "numeric"
    TEXT = "text"


Payload = Union[str, float, None]


@dataclass(frozen=True)
class Answer:
    kind: AnswerKind
    value: Payload

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AnswerKind(self.kind))
        if self.value is None:
            return
        if self.kind is AnswerKind.NUMERIC:
            value = float(self.value)
            if not math.isfinite(value):
                raise InputDomainError(f"numeric answer must be finite, got {self.value!r}")
            object.__setattr__(self, "value", value)
        elif self.kind is AnswerKind.CHOICE:
            object.__setattr__(self, "value", str(self.value).strip().upper())
        else:
            object.__setattr__(self, "value", normalize_text(str(self.value)))

    @property
    def valid(self) -> bool:
        return self.value is not None

    @classmethod
    def invalid(cls, kind: AnswerKind | str) -> Answer:
        """Sentinel for an unusable answer; it scores zero against anything."""
        return cls(AnswerKind(kind), None)

    def to_json(self) -> Payload:
        return self.value

    def __str__(self) -> str:
        if self.value is None:
            return "<invalid>"
        if self.kind is AnswerKind.CHOICE:
            return f"({self.value})"
        return repr(self.value) if self.kind is AnswerKind.NUMERIC else str(self.value)


_PUNCT = str.maketrans({c: " " for c in string.punctuation})


def normalize_text(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT).split())


def _token_f1(a: str, b: str) -> float:
    ta, tb = a.split(), b.split()
    if not ta and not tb:
        return 1.0
    common = sum((Counter(ta) & Counter(tb)).values())
    if common == 0:
        return 0.0
    precision = common / len(ta)
    recall = common / len(tb)
    return 2 * precision * recall / (precision + recall)


def sim(answer: Answer, truth: Answer) -> float:
    """Similarity in [0, 1] between an answer and the reference answer.

    choice: exact match. numeric: ``1 - |a - y| / max(|y|, eps)`` floored at
    zero, so it is relative to the reference and not symmetric. text: token
    F1 after lowercasing and stripping punctuation.
    """
    if answer.kind is not truth.kind:
        raise ContractError(f"cannot compare {answer.kind.value} answer with {truth.kind.value} truth")
    if answer.value is None or truth.value is None:
        return 0.0
    if answer.kind is AnswerKind.CHOICE:
        return 1.0 if answer.value == truth.value else 0.0
    if answer.kind is AnswerKind.NUMERIC:
        a, y = float(answer.value), float(truth.value)  # type: ignore[arg-type]
        return max(0.0, 1.0 - abs(a - y) / max(abs(y), NUMERIC_EPS))
    return _token_f1(str(answer.value), str(truth.value))


def agrees(answer: Answer, truth: Answer) -> bool:
    """Whether a fused answer counts as matching the reference."""
    s = sim(answer, truth)
    if answer.kind is AnswerKind.NUMERIC:
        return s >= NUMERIC_AGREEMENT
    return s == 1.0


def option_letters(options: Sequence[str] | None) -> list[str]:
    if not options:
        return list("ABCD")
    return [chr(ord("A") + i) for i in range(len(options))]


_MARKER = re.compile(r"answer\s*[:：]\s*", re.IGNORECASE)
_NUMBER = re.compile(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?")


def _after_marker(text: str) -> str | None:
    m = _MARKER.search(text)
    if m is None:
        return None
    rest = text[m.end():]
    return rest.splitlines()[0].strip() if rest.strip() else ""


def parse_answer(
    raw_text: str, kind: AnswerKind | str, options: Sequence[str] | None = None
) -> Answer:
    """Pull a structured answer out of free-form model output.

    An ``Answer:`` marker is honoured first; otherwise the whole text is
    scanned. Raises ParseError when nothing usable is found.
    """
    kind = AnswerKind(kind)
    text = (raw_text or "").strip()
    if not text:
        raise ParseError("empty model output", raw_text or "")
    marked = _after_marker(text)
    regions = [marked, text] if marked else [text]

    if kind is AnswerKind.CHOICE:
        letters = option_letters(options)
        alternation = "".join(letters)
        paren = re.compile(rf"\(\s*([{alternation}])\s*\)", re.IGNORECASE)
        bare = re.compile(rf"(?<![A-Za-z])([{alternation}])(?![A-Za-z])")
        for region in regions:
            m = paren.search(region)
            if m:
                return Answer(kind, m.group(1).upper())
            m = bare.search(region)
            if m:
                return Answer(kind, m.group(1).upper())
        raise ParseError("no option letter found", raw_text)

    if kind is AnswerKind.NUMERIC:
        for region in regions:
            m = _NUMBER.search(region)
            if m:
                return Answer(kind, float(m.group(0)))
        raise ParseError("no number found", raw_text)

    value = marked if marked else text
    if not normalize_text(value):
        raise ParseError("no text answer found", raw_text)
    return Answer(kind, value)
