"""Extract structured answers from free-form model output."""

from __future__ import annotations

import ast
import json
import re
from collections.abc import Iterator
from typing import Any

__all__ = [
    "InvalidAnswerError",
    "MissingAnswerError",
    "NoJSONFoundError",
    "OutputParseError",
    "extract_json_object",
    "iter_brace_regions",
    "parse_selection",
    "split_story_lines",
]


class OutputParseError(ValueError):
    """Model output could not be turned into the expected structure."""


class NoJSONFoundError(OutputParseError):
    pass


class MissingAnswerError(OutputParseError):
    pass


class InvalidAnswerError(OutputParseError):
    def __init__(self, value: Any) -> None:
        super().__init__(f"answer must be yes or no, got {value!r}")
        self.value = value


_FENCE_RE = re.compile(r"```[ \t]*[\w-]*[ \t]*\n(.*?)```", re.DOTALL)


def iter_brace_regions(text: str) -> Iterator[str]:
    """Yield balanced ``{...}`` regions in order of their opening brace.

    Braces inside single- or double-quoted strings do not count. An opening
    brace that never closes yields nothing and scanning resumes after it.
    """
    start = text.find("{")
    while start != -1:
        depth = 0
        quote: str | None = None
        escaped = False
        end = None
        for i in range(start, len(text)):
            ch = text[i]
            if quote:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == quote:
                    quote = None
                continue
            if ch in "\"'":
                # an apostrophe inside a bare word is not a quote
                if ch == "'" and i > 0 and text[i - 1].isalnum():
                    continue
                quote = ch
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    end = i
                    break
        if end is not None:
            yield text[start : end + 1]
        start = text.find("{", start + 1)


def _load_object(candidate: str) -> dict | None:
    try:
        value = json.loads(candidate)
    except json.JSONDecodeError:
        try:
            # answers often mirror the single-quoted format in the prompt
            value = ast.literal_eval(candidate)
        except (ValueError, TypeError, SyntaxError, MemoryError, RecursionError):
            return None
    return value if isinstance(value, dict) else None


def extract_json_object(text: str) -> dict:
    """Return the first JSON object embedded in ``text``.

    Balanced brace regions are tried first, in order; if none decodes, the
    contents of fenced code blocks are tried whole.
    """
    for region in iter_brace_regions(text):
        obj = _load_object(region)
        if obj is not None:
            return obj
    for block in _FENCE_RE.findall(text):
        obj = _load_object(block.strip())
        if obj is not None:
            return obj
    raise NoJSONFoundError("no JSON object found in model output")


def _lookup(obj: dict, key: str) -> tuple[bool, Any]:
    for k, v in obj.items():
        if isinstance(k, str) and k.strip().casefold() == key:
            return True, v
    return False, None


def parse_selection(raw_text: str, mode: str) -> tuple[str, str | None]:
    """Read ``(answer, rationale)`` from a selection response.

    ``answer`` is ``"yes"`` or ``"no"``. ``rationale`` is None in ``yes_no``
    mode and the model's rationale string in ``cot`` mode.
    """
    if mode not in ("yes_no", "cot"):
        raise ValueError(f"unknown selection mode {mode!r}")
    obj = extract_json_object(raw_text)
    found, value = _lookup(obj, "answer")
    if not found:
        raise MissingAnswerError("response has no 'Answer' key")
    if not isinstance(value, str) or value.strip().casefold() not in ("yes", "no"):
        raise InvalidAnswerError(value)
    answer = value.strip().casefold()
    if mode == "yes_no":
        return answer, None
    found, rationale = _lookup(obj, "rationale")
    if not found or not isinstance(rationale, str) or not rationale.strip():
        raise MissingAnswerError("cot response has no 'Rationale'")
    return answer, rationale.strip()


_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)]|\(\d+\))\s+")


def split_story_lines(raw_text: str) -> list[str]:
    """Candidate user-story lines from a model response.

    Accepts a JSON list of strings, or one story per line with optional
    bullets or numbering. Header lines ending in a colon and bare prose
    that is neither a list item nor an "As a ..." sentence are skipped.
    """
    stripped = raw_text.strip()
    fenced = _FENCE_RE.search(stripped)
    body = fenced.group(1).strip() if fenced else stripped
    if body.startswith("["):
        try:
            data = json.loads(body)
        except json.JSONDecodeError:
            data = None
        if isinstance(data, list) and all(isinstance(s, str) for s in data):
            return [s.strip() for s in data if s.strip()]

    lines = []
    for line in raw_text.splitlines():
        if not line.strip() or line.strip().startswith("```"):
            continue
        is_item = bool(_BULLET_RE.match(line))
        text = _BULLET_RE.sub("", line).strip().strip("*").strip()
        if not text or text.endswith(":"):
            continue
        if is_item or text.casefold().startswith("as a"):
            lines.append(text)
    return lines
