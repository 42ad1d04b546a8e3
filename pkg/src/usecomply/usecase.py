"""Use case, user story, app description and legal provision types.

A use case is the unit every stage operates on: an ordered flow of steps
bracketed by pre- and post-conditions. Conditions are conjunctive, so two
use cases whose condition lists hold the same strings in a different order
compare equal and serialize to the same canonical JSON.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any

__all__ = [
    "AppDescription",
    "LegalProvision",
    "UseCase",
    "UseCaseError",
    "MalformedJSONError",
    "MissingKeyError",
    "ShapeError",
    "UseCaseValidationError",
    "UserStory",
    "Violation",
    "parse_use_case",
    "serialize_use_case",
    "use_case_from_dict",
    "use_case_to_dict",
    "validate",
]

LIST_FIELDS = ("preconditions", "flow", "postconditions")


class UseCaseError(ValueError):
    """Base class for use case parse and validation failures."""


class MalformedJSONError(UseCaseError):
    pass


class MissingKeyError(UseCaseError):
    def __init__(self, key: str) -> None:
        super().__init__(f"missing required key {key!r}")
        self.key = key


class ShapeError(UseCaseError):
    pass


class UseCaseValidationError(UseCaseError):
    def __init__(self, violations: list[Violation]) -> None:
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        suffix = f": {self.detail}" if self.detail else ""
        return f"{self.field}/{self.rule}{suffix}"


@dataclass(frozen=True, eq=False)
class UseCase:
    id: str = ""
    preconditions: tuple[str, ...] = ()
    flow: tuple[str, ...] = ()
    postconditions: tuple[str, ...] = ()
    title: str | None = None

    def __post_init__(self) -> None:
        for name in LIST_FIELDS:
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def _key(self) -> tuple:
        return (
            self.id,
            self.title,
            frozenset(self.preconditions),
            self.flow,
            frozenset(self.postconditions),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UseCase):
            return NotImplemented
        # Duplicate conditions are invalid, so set comparison loses nothing
        # for valid use cases; the length check keeps invalid ones honest.
        return (
            self._key() == other._key()
            and len(self.preconditions) == len(other.preconditions)
            and len(self.postconditions) == len(other.postconditions)
        )

    def __hash__(self) -> int:
        return hash(self._key())

    def replace(self, **changes: Any) -> UseCase:
        data = {
            "id": self.id,
            "preconditions": self.preconditions,
            "flow": self.flow,
            "postconditions": self.postconditions,
            "title": self.title,
        }
        data.update(changes)
        return UseCase(**data)


_STORY_RE = re.compile(
    r"^\s*as\s+(?:an?|the)?\s*(?P<actor>.+?),\s*I\s+want\s+(?:to\s+)?(?P<action>.+?)"
    r"\s*(?:,\s*)?(?:so\s+that|for\s+the\s+purpose\s+of)\s+(?P<goal>.+?)\s*[.!]?\s*$",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class UserStory:
    raw_text: str
    actor: str = ""
    action: str = ""
    goal: str = ""

    @property
    def parsed(self) -> bool:
        return bool(self.actor and self.action and self.goal)

    @classmethod
    def from_text(cls, text: str) -> UserStory:
        """Split an "As a <actor>, I want <action> so that <goal>" sentence.

        Sentences that do not follow the template keep their text in
        ``raw_text`` with empty structured fields.
        """
        text = text.strip()
        if not text:
            raise ValueError("user story text is empty")
        m = _STORY_RE.match(text)
        if m is None:
            return cls(raw_text=text)
        return cls(
            raw_text=text,
            actor=m["actor"].strip(),
            action=m["action"].strip(),
            goal=m["goal"].strip(),
        )


@dataclass(frozen=True)
class AppDescription:
    app_id: str
    full_text: str
    summary: str

    def __post_init__(self) -> None:
        if not self.full_text.strip():
            raise ValueError(f"app {self.app_id!r}: full_text is empty")
        if "\n" in self.summary.strip():
            raise ValueError(f"app {self.app_id!r}: summary must be a single line")


@dataclass(frozen=True)
class LegalProvision:
    provision_id: str
    citation: str
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"provision {self.provision_id!r}: text is empty")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> LegalProvision:
        try:
            return cls(data["provision_id"], data.get("citation", ""), data["text"])
        except KeyError as exc:
            raise MissingKeyError(exc.args[0]) from None


def validate(uc: UseCase) -> list[Violation]:
    """Return every invariant violation in ``uc``; empty when valid."""
    violations: list[Violation] = []
    if not uc.flow:
        violations.append(Violation("flow", "flow-empty"))
    for name in LIST_FIELDS:
        seen: set[str] = set()
        for i, item in enumerate(getattr(uc, name)):
            if not isinstance(item, str):
                violations.append(Violation(name, "not-a-string", f"index {i}"))
                continue
            if not item.strip():
                violations.append(Violation(name, "empty-string", f"index {i}"))
                continue
            if name != "flow":
                if item in seen:
                    violations.append(Violation(name, "duplicate-condition", item))
                seen.add(item)
    return violations


def use_case_from_dict(data: Any, use_case_id: str | None = None) -> UseCase:
    """Build a validated UseCase from decoded JSON.

    Strings are trimmed; list order is kept as given. An ``id`` key in the
    document is used unless ``use_case_id`` overrides it, and ``title`` is
    carried along as opaque metadata.
    """
    if not isinstance(data, dict):
        raise ShapeError(f"use case must be a JSON object, got {type(data).__name__}")
    lists: dict[str, tuple[str, ...]] = {}
    for key in LIST_FIELDS:
        if key not in data:
            raise MissingKeyError(key)
        value = data[key]
        if not isinstance(value, list):
            raise ShapeError(f"{key!r} must be a list, got {type(value).__name__}")
        for i, item in enumerate(value):
            if not isinstance(item, str):
                raise ShapeError(f"{key}[{i}] must be a string, got {type(item).__name__}")
        lists[key] = tuple(s.strip() for s in value)

    title = data.get("title")
    if title is not None and not isinstance(title, str):
        raise ShapeError("'title' must be a string")
    doc_id = data.get("id", "")
    if not isinstance(doc_id, str):
        raise ShapeError("'id' must be a string")

    uc = UseCase(id=use_case_id if use_case_id is not None else doc_id, title=title, **lists)
    violations = validate(uc)
    if violations:
        raise UseCaseValidationError(violations)
    return uc


def parse_use_case(json_text: str | bytes, use_case_id: str | None = None) -> UseCase:
    if isinstance(json_text, bytes):
        json_text = json_text.decode("utf-8")
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise MalformedJSONError(str(exc)) from None
    return use_case_from_dict(data, use_case_id)


def use_case_to_dict(uc: UseCase, *, metadata: bool = True) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if metadata:
        if uc.id:
            out["id"] = uc.id
        if uc.title is not None:
            out["title"] = uc.title
    out["preconditions"] = sorted(uc.preconditions)
    out["flow"] = list(uc.flow)
    out["postconditions"] = sorted(uc.postconditions)
    return out


def serialize_use_case(uc: UseCase, *, metadata: bool = True) -> str:
    """Canonical single-line JSON for ``uc``.

    Keys come out as id, title, preconditions, flow, postconditions (id and
    title only when set, and only with ``metadata``). Condition lists are
    sorted so that equal use cases produce identical bytes.
    """
    return json.dumps(use_case_to_dict(uc, metadata=metadata), ensure_ascii=False)
